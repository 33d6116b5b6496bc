//! Procedural digit images.
//!
//! Each class has a 5×7 bitmap glyph which is rendered into a `side × side`
//! image by exact area averaging, so every stroke survives at small sizes.

use super::{DatasetMeta, LabeledDataset, SourceTag};
use crate::error::{Error, Result};
use crate::rng::{stream_rng, uniform_tensor};
use crate::tensor::Tensor;

const GLYPHS: [[&str; 7]; 10] = [
    [
        ".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###.",
    ],
    [
        "..#..", ".##..", "..#..", "..#..", "..#..", "..#..", ".###.",
    ],
    [
        ".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####",
    ],
    [
        "#####", "...#.", "..#..", "...#.", "....#", "#...#", ".###.",
    ],
    [
        "...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#.",
    ],
    [
        "#####", "#....", "####.", "....#", "....#", "#...#", ".###.",
    ],
    [
        "..##.", ".#...", "#....", "####.", "#...#", "#...#", ".###.",
    ],
    [
        "#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#...",
    ],
    [
        ".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###.",
    ],
    [
        ".###.", "#...#", "#...#", ".####", "....#", "...#.", ".##..",
    ],
];

fn overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> f64 {
    (a1.min(b1) - a0.max(b0)).max(0.0)
}

/// Noise-free image of `digit` at `side × side`, row-major, values in `[0, 1]`.
pub fn digit_template(digit: usize, side: usize) -> Result<Vec<f64>> {
    if digit >= 10 {
        return Err(Error::Invalid(format!("no template for digit {digit}")));
    }
    if side < 8 {
        return Err(Error::Invalid(format!(
            "side must be at least 8, got {side}"
        )));
    }
    let s = side as f64;
    let margin = (s / 8.0).floor();
    let (top, bottom) = (margin, s - margin);
    let width = (bottom - top) * 5.0 / 7.0;
    let left = (s - width) / 2.0;
    let cell_h = (bottom - top) / 7.0;
    let cell_w = width / 5.0;

    let glyph = &GLYPHS[digit];
    let mut out = vec![0.0; side * side];
    for r in 0..side {
        for c in 0..side {
            let (y0, y1) = (r as f64, r as f64 + 1.0);
            let (x0, x1) = (c as f64, c as f64 + 1.0);
            let mut cover = 0.0;
            for (gr, line) in glyph.iter().enumerate() {
                let gy0 = top + gr as f64 * cell_h;
                let oy = overlap(y0, y1, gy0, gy0 + cell_h);
                if oy == 0.0 {
                    continue;
                }
                for (gc, ch) in line.bytes().enumerate() {
                    if ch == b'#' {
                        let gx0 = left + gc as f64 * cell_w;
                        cover += oy * overlap(x0, x1, gx0, gx0 + cell_w);
                    }
                }
            }
            out[r * side + c] = cover.min(1.0);
        }
    }
    Ok(out)
}

/// `n_per_class` noisy copies of each of the 10 templates, labels cycling
/// `0, 1, …, 9`. Noise is iid `U(-1, 1)·noise_level`, then clamped to `[0, 1]`.
pub fn make_synthetic_digits(
    n_per_class: usize,
    side: usize,
    noise_level: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    let templates = (0..10)
        .map(|d| digit_template(d, side))
        .collect::<Result<Vec<_>>>()?;
    let n = 10 * n_per_class;
    let d = side * side;
    let mut rng = stream_rng(seed, "synthetic-digits", 0);
    let noise = uniform_tensor(&mut rng, &[n, d], -1.0, 1.0);
    let mut images = Tensor::zeros(&[n, d]);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let y = i % 10;
        labels.push(y);
        let row = images.row_mut(i);
        for ((p, t), e) in row.iter_mut().zip(&templates[y]).zip(noise.row(i)) {
            *p = (t + e * noise_level).clamp(0.0, 1.0);
        }
    }
    LabeledDataset::new(
        images,
        labels,
        10,
        DatasetMeta {
            source: SourceTag::SyntheticDigits,
            side,
            seed: Some(seed),
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn templates_are_distinct_and_in_range() {
        for side in [8, 12, 28] {
            let t: Vec<Vec<f64>> = (0..10).map(|d| digit_template(d, side).unwrap()).collect();
            for a in 0..10 {
                assert!(t[a].iter().all(|p| (0.0..=1.0).contains(p)));
                assert!(t[a].iter().sum::<f64>() > 1.0);
                for b in 0..a {
                    let dist: f64 = t[a].iter().zip(&t[b]).map(|(x, y)| (x - y).powi(2)).sum();
                    assert!(
                        dist > 0.5,
                        "digits {a} and {b} too similar at side {side}: {dist}"
                    );
                }
            }
        }
        assert!(digit_template(3, 7).is_err());
    }

    #[test]
    fn zero_noise_reproduces_templates() {
        let ds = make_synthetic_digits(3, 8, 0.0, 1).unwrap();
        for i in 0..ds.len() {
            assert_eq!(
                ds.images.row(i),
                digit_template(ds.labels[i], 8).unwrap().as_slice()
            );
        }
    }

    #[test]
    fn seed_determinism() {
        let a = make_synthetic_digits(10, 8, 0.2, 5).unwrap();
        let b = make_synthetic_digits(10, 8, 0.2, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            a.images,
            make_synthetic_digits(10, 8, 0.2, 6).unwrap().images
        );
        a.validate().unwrap();
    }
}
