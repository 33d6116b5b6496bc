//! Linear-Gaussian models where every information quantity has a closed form.
//!
//! Teacher: `z_v ~ N(0, 1)`, `x = c·z_v + s·ε` with `s² = 1 - c²`, so `x ~ N(0, 1)`.
//! Student: `z = a·x + σ·η`. Then `z ~ N(0, a² + σ²)` and
//! `I(X;Z) = ½ ln(1 + a²/σ²)`.

use crate::distributions::HALF_LN_2PI;
use crate::error::Result;
use crate::nn::{Activation, Mlp};
use crate::rng::{normal_tensor, stream_rng};
use crate::student::StudentModel;
use crate::teacher::{ObservationModel, TeacherModel};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearGaussian {
    /// Student gain.
    pub a: f64,
    /// Student noise standard deviation.
    pub sigma: f64,
    /// Teacher loading; `0 < c < 1`.
    pub c: f64,
}

fn linear(w: f64, bias: &[f64]) -> Result<Mlp> {
    let out = bias.len();
    let mut wt = Tensor::zeros(&[1, out]);
    wt.data_mut()[0] = w;
    Mlp::from_params(
        &[1, out],
        Activation::Relu,
        vec![wt, Tensor::vector(bias.to_vec())],
    )
}

impl LinearGaussian {
    pub fn new(a: f64, sigma: f64, c: f64) -> Self {
        LinearGaussian { a, sigma, c }
    }

    pub fn obs_variance(&self) -> f64 {
        1.0 - self.c * self.c
    }

    pub fn truth(&self) -> f64 {
        0.5 * (1.0 + self.a * self.a / (self.sigma * self.sigma)).ln()
    }

    pub fn marginal_variance(&self) -> f64 {
        self.a * self.a + self.sigma * self.sigma
    }

    /// Analytic `log p(z)`.
    pub fn log_marginal(&self, z: f64) -> f64 {
        let v = self.marginal_variance();
        -HALF_LN_2PI - 0.5 * v.ln() - 0.5 * z * z / v
    }

    /// Student with `p(z|x) = N(a·x, σ²)` and a two-class zero decoder.
    pub fn student(&self) -> Result<StudentModel> {
        let enc = linear(self.a, &[0.0, (self.sigma * self.sigma).ln()])?;
        let dec = Mlp::from_params(
            &[1, 2],
            Activation::Relu,
            vec![Tensor::zeros(&[1, 2]), Tensor::zeros(&[2])],
        )?;
        StudentModel::from_parts(enc, dec, 0.0)
    }

    /// Teacher with linear decoder `c·z_v`, Gaussian observation noise `1 - c²`
    /// and the exact posterior `N(c·x, 1 - c²)` as its encoder.
    pub fn teacher(&self) -> Result<TeacherModel> {
        let s2 = self.obs_variance();
        let enc = linear(self.c, &[0.0, s2.ln()])?;
        let dec = linear(self.c, &[0.0])?;
        TeacherModel::from_parts(enc, dec, ObservationModel::Gaussian { variance: s2 })
    }

    /// `n` standard-normal inputs rescaled so their second moment is exactly 1.
    pub fn inputs(n: usize, seed: u64) -> Tensor {
        let x = normal_tensor(&mut stream_rng(seed, "linear-gaussian-x", 0), &[n, 1]);
        let scale = (x.norm_sq() / n as f64).sqrt();
        x.map(|v| v / scale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        let f = LinearGaussian::new(1.0, 1.0, 0.9);
        assert!((f.truth() - 0.5 * 2f64.ln()).abs() < 1e-15);
        assert!((f.truth() - 0.3466).abs() < 1e-4);
        let x = LinearGaussian::inputs(100, 1);
        assert!((x.norm_sq() / 100.0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn models_match_the_formulas() {
        let f = LinearGaussian::new(0.7, 0.5, 0.8);
        let x = Tensor::matrix(2, 1, vec![1.5, -2.0]).unwrap();
        let (m, lv) = f.student().unwrap().encode(&x).unwrap();
        assert_eq!(m.data(), &[0.7 * 1.5, 0.7 * -2.0]);
        assert!((lv.data()[0] - 0.25f64.ln()).abs() < 1e-15);
        let t = f.teacher().unwrap();
        let mean = t
            .decode_mean(&Tensor::matrix(1, 1, vec![2.0]).unwrap())
            .unwrap();
        assert!((mean.data()[0] - 1.6).abs() < 1e-15);
    }
}
