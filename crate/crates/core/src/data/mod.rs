//! Labeled image datasets and discrete toy joints.

mod discrete;
mod idx;
mod synthetic;

pub use discrete::{sample_discrete, DiscreteJoint};
pub use idx::{
    export_dataset, load_idx, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels,
    IdxImages, IMAGE_MAGIC, LABEL_MAGIC,
};
pub use synthetic::{digit_template, make_synthetic_digits};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;
use crate::teacher::TeacherModel;
use crate::tensor::Tensor;
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceTag {
    IdxFile,
    SyntheticDigits,
    ZeroInfo,
    TeacherReconstructed,
    DiscreteToy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub source: SourceTag,
    pub side: usize,
    pub seed: Option<u64>,
}

/// Images (`[n, d]`, pixels in `[0, 1]`) with labels in `0..num_classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub meta: DatasetMeta,
}

impl LabeledDataset {
    pub fn new(
        images: Tensor,
        labels: Vec<usize>,
        num_classes: usize,
        meta: DatasetMeta,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            images,
            labels,
            num_classes,
            meta,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Checks count consistency, the pixel range and the label range.
    pub fn validate(&self) -> Result<()> {
        if self.images.shape().len() != 2 {
            return Err(Error::Invalid(format!(
                "images must be [n, d], got {:?}",
                self.images.shape()
            )));
        }
        if self.images.rows() != self.labels.len() {
            return Err(Error::Invalid(format!(
                "{} images but {} labels",
                self.images.rows(),
                self.labels.len()
            )));
        }
        if let Some(p) = self
            .images
            .data()
            .iter()
            .find(|p| !(0.0..=1.0).contains(*p))
        {
            return Err(Error::Invalid(format!("pixel value {p} outside [0, 1]")));
        }
        if let Some(&y) = self.labels.iter().find(|&&y| y >= self.num_classes) {
            return Err(Error::Invalid(format!(
                "label {y} outside 0..{}",
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.images.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            images: self.images.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            meta: self.meta.clone(),
        }
    }

    /// First `n` examples (or all of them when fewer).
    pub fn head(&self, n: usize) -> LabeledDataset {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn label_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.num_classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Block-average pooling by `factor`, dropping any remainder rows/columns.
    pub fn average_pool(&self, factor: usize) -> Result<LabeledDataset> {
        let side = self.meta.side;
        if factor == 0 || side * side != self.dim() || factor > side {
            return Err(Error::Invalid(format!(
                "cannot pool side {side} (d = {}) by {factor}",
                self.dim()
            )));
        }
        let out_side = side / factor;
        let n = self.len();
        let mut out = Tensor::zeros(&[n, out_side * out_side]);
        let norm = 1.0 / (factor * factor) as f64;
        for i in 0..n {
            let src = self.images.row(i);
            let dst = out.row_mut(i);
            for r in 0..out_side {
                for c in 0..out_side {
                    let mut acc = 0.0;
                    for dr in 0..factor {
                        for dc in 0..factor {
                            acc += src[(r * factor + dr) * side + c * factor + dc];
                        }
                    }
                    dst[r * out_side + c] = acc * norm;
                }
            }
        }
        let mut meta = self.meta.clone();
        meta.side = out_side;
        LabeledDataset::new(out, self.labels.clone(), self.num_classes, meta)
    }
}

/// Keeps the images of `base` and draws labels uniformly at random,
/// independent of the image content.
pub fn make_zero_info(base: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    if base.is_empty() {
        return Err(Error::Invalid(
            "zero-info dataset needs a non-empty base".into(),
        ));
    }
    let mut rng = stream_rng(seed, "zero-info-labels", 0);
    let labels = (0..base.len())
        .map(|_| rng.random_range(0..base.num_classes))
        .collect();
    LabeledDataset::new(
        base.images.clone(),
        labels,
        base.num_classes,
        DatasetMeta {
            source: SourceTag::ZeroInfo,
            side: base.meta.side,
            seed: Some(seed),
        },
    )
}

/// Replaces every image by the teacher's deterministic reconstruction
/// (decoder mean at the posterior mean); labels are kept.
pub fn teacher_relabel(
    teacher: &TeacherModel,
    base: &LabeledDataset,
    seed: u64,
) -> Result<LabeledDataset> {
    if base.dim() != teacher.data_dim() {
        return Err(Error::shape(
            "teacher_relabel",
            &[teacher.data_dim()],
            &[base.dim()],
        ));
    }
    let images = teacher.reconstruct(&base.images)?;
    // Gaussian decoders can leave [0, 1].
    let images = images.map(|v| v.clamp(0.0, 1.0));
    LabeledDataset::new(
        images,
        base.labels.clone(),
        base.num_classes,
        DatasetMeta {
            source: SourceTag::TeacherReconstructed,
            side: base.meta.side,
            seed: Some(seed),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validator_rejects_bad_data() {
        let meta = DatasetMeta {
            source: SourceTag::DiscreteToy,
            side: 1,
            seed: None,
        };
        let img = Tensor::matrix(2, 1, vec![0.0, 1.5]).unwrap();
        assert!(LabeledDataset::new(img, vec![0, 1], 2, meta.clone()).is_err());
        let img = Tensor::matrix(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(LabeledDataset::new(img.clone(), vec![0], 2, meta.clone()).is_err());
        assert!(LabeledDataset::new(img.clone(), vec![0, 2], 2, meta.clone()).is_err());
        assert!(LabeledDataset::new(img, vec![0, 1], 2, meta).is_ok());
    }

    #[test]
    fn zero_info_keeps_images_and_balances_labels() {
        let base = make_synthetic_digits(300, 8, 0.2, 4).unwrap();
        let z = make_zero_info(&base, 9).unwrap();
        z.validate().unwrap();
        assert_eq!(z.images, base.images);
        assert_eq!(z.meta.source, SourceTag::ZeroInfo);
        let n = z.len() as f64;
        let sigma = (n * 0.1 * 0.9).sqrt();
        for c in z.label_counts() {
            assert!((c as f64 - n * 0.1).abs() < 3.0 * sigma, "count {c}");
        }
    }

    #[test]
    fn zero_info_labels_independent_of_class() {
        // Chi-square independence test between the original class (which
        // determines the image template) and the new label.
        let base = make_synthetic_digits(500, 8, 0.2, 4).unwrap();
        let z = make_zero_info(&base, 21).unwrap();
        let mut table = vec![vec![0.0; 10]; 10];
        for (a, b) in base.labels.iter().zip(&z.labels) {
            table[*a][*b] += 1.0;
        }
        let n = z.len() as f64;
        let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
        let cols: Vec<f64> = (0..10).map(|j| table.iter().map(|r| r[j]).sum()).collect();
        let mut chi2 = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                let e = rows[i] * cols[j] / n;
                chi2 += (table[i][j] - e).powi(2) / e;
            }
        }
        // 99th percentile of chi-square with 81 degrees of freedom.
        assert!(chi2 < 113.51, "chi2 = {chi2}");
    }

    #[test]
    fn pooling_averages_blocks() {
        let data: Vec<f64> = (0..16).map(|v| v as f64 / 15.0).collect();
        let ds = LabeledDataset::new(
            Tensor::matrix(1, 16, data).unwrap(),
            vec![0],
            1,
            DatasetMeta {
                source: SourceTag::IdxFile,
                side: 4,
                seed: None,
            },
        )
        .unwrap();
        let p = ds.average_pool(2).unwrap();
        assert_eq!(p.meta.side, 2);
        let expected = [
            (1 + 4 + 5),
            (2 + 3 + 6 + 7),
            (8 + 9 + 12 + 13),
            (10 + 11 + 14 + 15),
        ];
        for (v, e) in p.images.data().iter().zip(expected) {
            assert!((v - e as f64 / 60.0).abs() < 1e-15);
        }
    }
}
