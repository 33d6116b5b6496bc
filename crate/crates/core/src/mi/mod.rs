//! Mutual-information estimators, all in nats.

mod teacher_bound;

pub use teacher_bound::{
    draw_bound_noise, mi_xz_teacher_upper, teacher_bound_graph, teacher_bound_objective,
    BoundGraph, BoundNoise, InferenceNet, InnerStep, ObjectiveValue, SampleMode,
    TeacherBoundConfig, TeacherBoundOutcome,
};

use serde::{Deserialize, Serialize};

use crate::data::{DiscreteJoint, LabeledDataset};
use crate::distributions::DiagGaussian;
use crate::error::{Error, Result};
use crate::rng::{normal_tensor, stream_rng};
use crate::student::StudentModel;
use crate::tensor::Tensor;

pub const DEFAULT_BINS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateKind {
    Exact,
    Binned,
    ZyLower,
    XzDirectUpper,
    XzTeacherUpper,
    CombinedMin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimateNote {
    /// One input was non-finite and was dropped.
    Degraded,
    /// Both inputs had the same value.
    Tie,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MIEstimate {
    pub value: f64,
    pub kind: EstimateKind,
    pub sample_count: usize,
    pub std_error: Option<f64>,
    pub note: Option<EstimateNote>,
}

impl MIEstimate {
    fn new(
        value: f64,
        kind: EstimateKind,
        sample_count: usize,
        std_error: Option<f64>,
    ) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::Estimation(format!(
                "{kind:?} estimate is not finite ({value})"
            )));
        }
        Ok(MIEstimate {
            value,
            kind,
            sample_count,
            std_error,
            note: None,
        })
    }
}

/// `(mean, standard error of the mean)`.
pub(crate) fn mean_and_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn xlogx_ratio(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

pub fn mi_discrete_exact(joint: &DiscreteJoint) -> Result<MIEstimate> {
    let px = joint.marginal_x();
    let py = joint.marginal_y();
    let mut mi = 0.0;
    for (i, row) in joint.table().iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            mi += xlogx_ratio(p, px[i] * py[j]);
        }
    }
    // Rounding can leave a tiny negative on independent tables.
    let (nx, ny) = joint.shape();
    MIEstimate::new(mi.max(0.0), EstimateKind::Exact, nx * ny, None)
}

/// Plug-in entropy of the empirical label distribution.
pub fn label_entropy(ds: &LabeledDataset) -> Result<f64> {
    if ds.is_empty() {
        return Err(Error::Invalid("label entropy of an empty dataset".into()));
    }
    let n = ds.len() as f64;
    Ok(ds
        .label_counts()
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum())
}

/// `H(Y) + E log q(y|z)` with `n_z_samples` encoder draws per example.
pub fn mi_zy_lower(
    student: &StudentModel,
    ds: &LabeledDataset,
    n_z_samples: usize,
    seed: u64,
) -> Result<MIEstimate> {
    if ds.num_classes != student.num_classes() {
        return Err(Error::shape(
            "mi_zy_lower",
            &[student.num_classes()],
            &[ds.num_classes],
        ));
    }
    if n_z_samples == 0 {
        return Err(Error::Invalid(
            "mi_zy_lower needs at least one z sample".into(),
        ));
    }
    let h_y = label_entropy(ds)?;
    let (mean, lv) = student.encode(&ds.images)?;
    let sd = lv.map(|v| (0.5 * v).exp());
    let mut per_example = vec![0.0; ds.len()];
    for s in 0..n_z_samples {
        let eps = normal_tensor(
            &mut stream_rng(seed, "zy-lower-noise", s as u64),
            mean.shape(),
        );
        let scaled = sd.zip_map(&eps, |a, b| a * b)?;
        let z = mean.zip_map(&scaled, |m, e| m + e)?;
        let lq = student.decode_log_probs(&z)?;
        for (i, acc) in per_example.iter_mut().enumerate() {
            *acc += lq.row(i)[ds.labels[i]] / n_z_samples as f64;
        }
    }
    let (m, se) = mean_and_se(&per_example);
    MIEstimate::new(
        h_y + m,
        EstimateKind::ZyLower,
        ds.len() * n_z_samples,
        Some(se),
    )
}

/// `E_x KL(p(z|x) || r(z))`, closed form per example.
pub fn mi_xz_direct_upper(student: &StudentModel, images: &Tensor) -> Result<MIEstimate> {
    if images.rows() == 0 {
        return Err(Error::Invalid(
            "mi_xz_direct_upper on an empty batch".into(),
        ));
    }
    let (mean, lv) = student.encode(images)?;
    let r = student.marginal();
    let kls = (0..mean.rows())
        .map(|i| DiagGaussian::new(mean.row(i).to_vec(), lv.row(i).to_vec())?.kl(r))
        .collect::<Result<Vec<f64>>>()?;
    let (m, se) = mean_and_se(&kls);
    MIEstimate::new(m, EstimateKind::XzDirectUpper, kls.len(), Some(se))
}

/// Joint bin index of each row, equal-width bins per column over the observed range.
fn bin_rows(t: &Tensor, bins: usize) -> Result<(Vec<usize>, usize)> {
    let (n, d) = (t.rows(), t.cols());
    if d == 0 || d > 2 {
        return Err(Error::Invalid(format!(
            "binning supports 1 or 2 dimensions, got {d}; the joint grid grows as bins^d"
        )));
    }
    let mut idx = vec![0usize; n];
    for c in 0..d {
        let col: Vec<f64> = (0..n).map(|i| t.row(i)[c]).collect();
        if col.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite value passed to binning".into()));
        }
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (i, &v) in col.iter().enumerate() {
            let b = if hi > lo {
                (((v - lo) * bins as f64 / (hi - lo)).floor() as usize).min(bins - 1)
            } else {
                0
            };
            idx[i] = idx[i] * bins + b;
        }
    }
    Ok((idx, bins.pow(d as u32)))
}

/// Plug-in MI of the binned joint of paired samples (`[n, dx]`, `[n, dz]`).
pub fn mi_binned(x: &Tensor, z: &Tensor, bins: usize) -> Result<MIEstimate> {
    if x.shape().len() != 2 || z.shape().len() != 2 || x.rows() != z.rows() {
        return Err(Error::shape("mi_binned", x.shape(), z.shape()));
    }
    if x.rows() == 0 {
        return Err(Error::Invalid("mi_binned on empty samples".into()));
    }
    if bins < 2 {
        return Err(Error::Invalid(format!("bins must be >= 2, got {bins}")));
    }
    let (bx, kx) = bin_rows(x, bins)?;
    let (bz, kz) = bin_rows(z, bins)?;
    let pairs: Vec<(usize, usize)> = bx.into_iter().zip(bz).collect();
    let joint = DiscreteJoint::from_samples(&pairs, kx, kz)?;
    let mut est = mi_discrete_exact(&joint)?;
    est.kind = EstimateKind::Binned;
    est.sample_count = pairs.len();
    Ok(est)
}

/// Minimum of two upper bounds on the same quantity, skipping non-finite ones.
pub fn combine_estimates(direct: &MIEstimate, teacher: &MIEstimate) -> Result<MIEstimate> {
    let (a, b) = (direct.value.is_finite(), teacher.value.is_finite());
    let (pick, note) = match (a, b) {
        (false, false) => {
            return Err(Error::Estimation("both upper bounds are non-finite".into()));
        }
        (true, false) => (direct, Some(EstimateNote::Degraded)),
        (false, true) => (teacher, Some(EstimateNote::Degraded)),
        (true, true) if direct.value == teacher.value => (direct, Some(EstimateNote::Tie)),
        (true, true) if direct.value < teacher.value => (direct, None),
        (true, true) => (teacher, None),
    };
    Ok(MIEstimate {
        value: pick.value,
        kind: EstimateKind::CombinedMin,
        sample_count: pick.sample_count,
        std_error: pick.std_error,
        note,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_discrete, DatasetMeta, SourceTag};
    use crate::nn::{Activation, Mlp};
    use crate::rng::uniform_tensor;

    fn joint(t: &[&[f64]]) -> DiscreteJoint {
        DiscreteJoint::new(t.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn labeled(labels: Vec<usize>, k: usize, images: Tensor) -> LabeledDataset {
        let meta = DatasetMeta {
            source: SourceTag::DiscreteToy,
            side: 0,
            seed: None,
        };
        LabeledDataset::new(images, labels, k, meta).unwrap()
    }

    #[test]
    fn exact_mi_examples() {
        let v = |t: &[&[f64]]| mi_discrete_exact(&joint(t)).unwrap().value;
        assert_eq!(v(&[&[0.25, 0.25], &[0.25, 0.25]]), 0.0);
        assert!((v(&[&[0.5, 0.0], &[0.0, 0.5]]) - 2f64.ln()).abs() < 1e-15);
        // 0.8·ln(0.4/0.25) + 0.2·ln(0.1/0.25)
        let oracle = 0.8 * 1.6f64.ln() + 0.2 * 0.4f64.ln();
        let got = v(&[&[0.4, 0.1], &[0.1, 0.4]]);
        assert!((got - oracle).abs() < 1e-15);
        assert!((got - 0.19274).abs() < 1e-5);
    }

    #[test]
    fn exact_mi_is_symmetric_and_nonnegative() {
        let mut rng = stream_rng(4, "tables", 0);
        for _ in 0..20 {
            let raw = uniform_tensor(&mut rng, &[3, 4], 0.0, 1.0);
            let s = raw.sum();
            let t: Vec<Vec<f64>> = (0..3)
                .map(|i| raw.row(i).iter().map(|v| v / s).collect())
                .collect();
            let j = DiscreteJoint::new(t).unwrap();
            let a = mi_discrete_exact(&j).unwrap().value;
            let b = mi_discrete_exact(&j.transpose()).unwrap().value;
            assert!(a >= 0.0);
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn label_entropy_examples() {
        let img = |n| Tensor::zeros(&[n, 1]);
        let balanced = labeled((0..100).map(|i| i % 10).collect(), 10, img(100));
        assert!((label_entropy(&balanced).unwrap() - 10f64.ln()).abs() < 1e-12);
        assert_eq!(
            label_entropy(&labeled(vec![3; 7], 10, img(7))).unwrap(),
            0.0
        );
        let skew = labeled(vec![0, 0, 0, 1], 2, img(4));
        let oracle = -0.75 * 0.75f64.ln() - 0.25 * 0.25f64.ln();
        assert!((label_entropy(&skew).unwrap() - oracle).abs() < 1e-15);
        assert!((oracle - 0.5623).abs() < 1e-4);
    }

    /// Student whose encoder is `mean = x·w_enc`, `logvar = lv` and whose
    /// decoder is linear with weights `w_dec`.
    fn linear_student(w_enc: Tensor, lv: f64, w_dec: Tensor) -> StudentModel {
        let (d, k) = (w_enc.rows(), w_enc.cols());
        let c = w_dec.cols();
        let mut w = Tensor::zeros(&[d, 2 * k]);
        for i in 0..d {
            w.row_mut(i)[..k].copy_from_slice(w_enc.row(i));
        }
        let mut b = Tensor::zeros(&[2 * k]);
        b.data_mut()[k..].fill(lv);
        let enc = Mlp::from_params(&[d, 2 * k], Activation::Relu, vec![w, b]).unwrap();
        let dec =
            Mlp::from_params(&[k, c], Activation::Relu, vec![w_dec, Tensor::zeros(&[c])]).unwrap();
        StudentModel::from_parts(enc, dec, 0.0).unwrap()
    }

    #[test]
    fn zy_lower_uniform_decoder_is_zero() {
        let s = linear_student(Tensor::eye(3), 0.0, Tensor::zeros(&[3, 10]));
        let images = uniform_tensor(&mut stream_rng(1, "x", 0), &[50, 3], 0.0, 1.0);
        let ds = labeled((0..50).map(|i| i % 10).collect(), 10, images);
        let est = mi_zy_lower(&s, &ds, 8, 2).unwrap();
        assert!(est.value.abs() < 1e-12);
        assert_eq!(est.kind, EstimateKind::ZyLower);
    }

    #[test]
    fn zy_lower_matches_exact_on_noiseless_channel() {
        // Four input symbols, label = symbol mod 2, z = one-hot(symbol).
        let n = 400;
        let symbols: Vec<usize> = sample_discrete(&joint(&[&[0.1, 0.2, 0.3, 0.4]]), n, 9)
            .into_iter()
            .map(|(_, s)| s)
            .collect();
        let mut images = Tensor::zeros(&[n, 4]);
        for (i, &s) in symbols.iter().enumerate() {
            images.row_mut(i)[s] = 1.0;
        }
        let labels: Vec<usize> = symbols.iter().map(|s| s % 2).collect();
        let mut w_dec = Tensor::zeros(&[4, 2]);
        for s in 0..4 {
            w_dec.row_mut(s)[s % 2] = 60.0;
        }
        let student = linear_student(Tensor::eye(4), -40.0, w_dec);
        let ds = labeled(labels.clone(), 2, images);
        let est = mi_zy_lower(&student, &ds, 8, 3).unwrap();
        let pairs: Vec<(usize, usize)> =
            symbols.iter().zip(&labels).map(|(&s, &y)| (s, y)).collect();
        let exact = mi_discrete_exact(&DiscreteJoint::from_samples(&pairs, 4, 2).unwrap()).unwrap();
        assert!(
            (est.value - exact.value).abs() < 1e-6,
            "{} vs {}",
            est.value,
            exact.value
        );
    }

    #[test]
    fn direct_upper_examples() {
        let x = uniform_tensor(&mut stream_rng(5, "x", 0), &[30, 2], -1.0, 1.0);
        let pinned = linear_student(Tensor::zeros(&[2, 3]), 0.0, Tensor::zeros(&[3, 2]));
        assert_eq!(mi_xz_direct_upper(&pinned, &x).unwrap().value, 0.0);

        let w = Tensor::matrix(2, 3, vec![1.0, 0.5, -0.3, 0.2, -1.0, 0.7]).unwrap();
        let mut last = f64::NEG_INFINITY;
        for lv in [0.0, -0.5, -1.0, -2.0, -4.0] {
            let s = linear_student(w.clone(), lv, Tensor::zeros(&[3, 2]));
            let v = mi_xz_direct_upper(&s, &x).unwrap().value;
            assert!(v > last);
            last = v;
        }
    }

    #[test]
    fn binned_deterministic_map_gives_ln_alphabet() {
        let n = 400;
        let x = Tensor::matrix(n, 1, (0..n).map(|i| (i % 4) as f64).collect()).unwrap();
        let est = mi_binned(&x, &x, DEFAULT_BINS).unwrap();
        assert!((est.value - 4f64.ln()).abs() < 1e-12);
        assert_eq!(est.kind, EstimateKind::Binned);
    }

    #[test]
    fn binned_independent_is_small() {
        let x = uniform_tensor(&mut stream_rng(6, "a", 0), &[10_000, 1], 0.0, 1.0);
        let z = uniform_tensor(&mut stream_rng(6, "b", 0), &[10_000, 1], 0.0, 1.0);
        assert!(mi_binned(&x, &z, 10).unwrap().value < 0.05);
    }

    #[test]
    fn binned_matches_exact_on_discrete_support() {
        let j = joint(&[&[0.1, 0.05, 0.05], &[0.0, 0.3, 0.1], &[0.2, 0.1, 0.1]]);
        let pairs = sample_discrete(&j, 2000, 11);
        let x = Tensor::matrix(2000, 1, pairs.iter().map(|p| p.0 as f64).collect()).unwrap();
        let z = Tensor::matrix(2000, 1, pairs.iter().map(|p| p.1 as f64).collect()).unwrap();
        let empirical =
            mi_discrete_exact(&DiscreteJoint::from_samples(&pairs, 3, 3).unwrap()).unwrap();
        for bins in [3, 7, 30] {
            let b = mi_binned(&x, &z, bins).unwrap();
            assert!((b.value - empirical.value).abs() < 1e-9);
        }
    }

    #[test]
    fn binned_rejects_bad_input() {
        let x = Tensor::zeros(&[5, 3]);
        assert!(mi_binned(&x, &x, 10).is_err());
        let y = Tensor::zeros(&[5, 1]);
        assert!(mi_binned(&y, &y, 1).is_err());
        assert!(mi_binned(&Tensor::zeros(&[0, 1]), &Tensor::zeros(&[0, 1]), 10).is_err());
    }

    fn est(value: f64) -> MIEstimate {
        MIEstimate {
            value,
            kind: EstimateKind::XzDirectUpper,
            sample_count: 10,
            std_error: None,
            note: None,
        }
    }

    #[test]
    fn combine_examples() {
        let c = combine_estimates(&est(0.5), &est(0.7)).unwrap();
        assert_eq!(
            (c.value, c.note, c.kind),
            (0.5, None, EstimateKind::CombinedMin)
        );
        let c = combine_estimates(&est(f64::NAN), &est(0.7)).unwrap();
        assert_eq!((c.value, c.note), (0.7, Some(EstimateNote::Degraded)));
        let c = combine_estimates(&est(0.3), &est(0.3)).unwrap();
        assert_eq!((c.value, c.note), (0.3, Some(EstimateNote::Tie)));
        assert!(combine_estimates(&est(f64::NAN), &est(f64::INFINITY)).is_err());
    }
}
