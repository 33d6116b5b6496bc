//! Diagonal Gaussians, categoricals and Bernoulli pixel likelihoods.
//!
//! Value-level types ([`DiagGaussian`], [`Categorical`]) evaluate closed forms
//! on plain vectors. The `*_rows` functions build the same quantities on a
//! [`Tape`] for a batch, one distribution per row, returning an `[n]` vector.
//!
//! All quantities are in nats.

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Bernoulli probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
pub const PROB_CLAMP: f64 = 1e-7;

/// Logit equivalent of [`PROB_CLAMP`]: `ln((1 - c) / c)`.
pub fn logit_clamp() -> f64 {
    ((1.0 - PROB_CLAMP) / PROB_CLAMP).ln()
}

/// Gaussian with diagonal covariance, parameterized by log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagGaussian {
    mean: Vec<f64>,
    log_var: Vec<f64>,
}

impl DiagGaussian {
    pub fn new(mean: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mean.len() != log_var.len() {
            return Err(Error::shape(
                "diag_gaussian",
                &[mean.len()],
                &[log_var.len()],
            ));
        }
        Ok(DiagGaussian { mean, log_var })
    }

    /// `N(0, I)` in `dim` dimensions.
    pub fn standard(dim: usize) -> Self {
        DiagGaussian {
            mean: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn log_var(&self) -> &[f64] {
        &self.log_var
    }

    pub fn variance(&self) -> Vec<f64> {
        self.log_var.iter().map(|v| v.exp()).collect()
    }

    fn check_dim(&self, op: &'static str, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::shape(op, &[self.dim()], &[n]));
        }
        Ok(())
    }

    pub fn log_prob(&self, x: &[f64]) -> Result<f64> {
        self.check_dim("gauss_log_prob", x.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(x)
            .map(|((m, lv), xi)| -HALF_LN_2PI - 0.5 * lv - 0.5 * (xi - m).powi(2) * (-lv).exp())
            .sum())
    }

    pub fn entropy(&self) -> f64 {
        self.log_var
            .iter()
            .map(|lv| 0.5 + HALF_LN_2PI + 0.5 * lv)
            .sum()
    }

    /// `KL(self || other)` in closed form.
    pub fn kl(&self, other: &DiagGaussian) -> Result<f64> {
        self.check_dim("gauss_kl", other.dim())?;
        let mut total = 0.0;
        for i in 0..self.dim() {
            let (lp, lq) = (self.log_var[i], other.log_var[i]);
            let d = self.mean[i] - other.mean[i];
            total += 0.5 * (lq - lp + ((lp - lq).exp() + d * d * (-lq).exp()) - 1.0);
        }
        // Rounding can leave a -1e-17 residue for identical arguments.
        Ok(total.max(0.0))
    }

    /// Reparameterized draw `μ + exp(logvar / 2) ⊙ noise`.
    pub fn sample(&self, noise: &[f64]) -> Result<Vec<f64>> {
        self.check_dim("gauss_sample", noise.len())?;
        Ok(self
            .mean
            .iter()
            .zip(&self.log_var)
            .zip(noise)
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect())
    }

    /// Log-determinant of the covariance, `Σ_i logvar_i`.
    pub fn log_det_cov(&self) -> f64 {
        self.log_var.iter().sum()
    }
}

/// Distribution over `K` classes stored as normalized log-probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Categorical {
    log_probs: Vec<f64>,
}

impl Categorical {
    pub fn from_logits(logits: &[f64]) -> Result<Self> {
        if logits.is_empty() {
            return Err(Error::Invalid(
                "categorical needs at least one class".into(),
            ));
        }
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        Ok(Categorical {
            log_probs: logits.iter().map(|l| l - lse).collect(),
        })
    }

    /// Takes log-probabilities that already normalize (checked to 1e-9).
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self> {
        let lse = log_sum_exp(&log_probs);
        if lse.abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "log-probabilities sum to exp({lse})"
            )));
        }
        Ok(Categorical { log_probs })
    }

    pub fn uniform(k: usize) -> Self {
        Categorical {
            log_probs: vec![-(k as f64).ln(); k],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.log_probs.len()
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, label: usize) -> Result<f64> {
        self.log_probs.get(label).copied().ok_or_else(|| {
            Error::Invalid(format!(
                "label {label} out of range for {} classes",
                self.num_classes()
            ))
        })
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.log_probs.iter().enumerate() {
            if v > self.log_probs[best] {
                best = i;
            }
        }
        best
    }
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `Σ_i x_i ln p_i + (1 - x_i) ln(1 - p_i)` with clamped probabilities.
pub fn bernoulli_log_prob(probs: &[f64], x: &[f64]) -> Result<f64> {
    if probs.len() != x.len() {
        return Err(Error::shape(
            "bernoulli_log_prob",
            &[probs.len()],
            &[x.len()],
        ));
    }
    Ok(probs
        .iter()
        .zip(x)
        .map(|(&p, &xi)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            xi * p.ln() + (1.0 - xi) * (1.0 - p).ln()
        })
        .sum())
}

/// Isotropic Gaussian observation log-density `log N(x | mean, variance·I)`.
pub fn gaussian_obs_log_prob(mean: &[f64], variance: f64, x: &[f64]) -> Result<f64> {
    if mean.len() != x.len() {
        return Err(Error::shape(
            "gaussian_obs_log_prob",
            &[mean.len()],
            &[x.len()],
        ));
    }
    let lv = variance.ln();
    Ok(mean
        .iter()
        .zip(x)
        .map(|(m, xi)| -HALF_LN_2PI - 0.5 * lv - 0.5 * (xi - m).powi(2) / variance)
        .sum())
}

/// Batched diagonal Gaussian on a tape: `mean` and `log_var` are `[n, d]`.
#[derive(Clone, Copy, Debug)]
pub struct GaussianVars {
    pub mean: Var,
    pub log_var: Var,
}

impl GaussianVars {
    /// Splits an `[n, 2d]` head into mean (first `d` columns) and log-variance.
    pub fn from_head(tape: &mut Tape, head: Var, dim: usize) -> Result<Self> {
        let cols = tape.value(head).cols();
        if cols != 2 * dim {
            return Err(Error::shape("gaussian_head", &[2 * dim], &[cols]));
        }
        Ok(GaussianVars {
            mean: tape.slice_cols(head, 0, dim)?,
            log_var: tape.slice_cols(head, dim, 2 * dim)?,
        })
    }

    /// Row `i` as a value-level distribution.
    pub fn row(&self, tape: &Tape, i: usize) -> DiagGaussian {
        DiagGaussian {
            mean: tape.value(self.mean).row(i).to_vec(),
            log_var: tape.value(self.log_var).row(i).to_vec(),
        }
    }
}

/// Per-row `log N(x_i | μ_i, diag(exp(logvar_i)))`.
pub fn gauss_log_prob_rows(tape: &mut Tape, dist: GaussianVars, x: Var) -> Result<Var> {
    let diff = tape.sub(x, dist.mean)?;
    let sq = tape.square(diff)?;
    let neg_lv = tape.neg(dist.log_var)?;
    let prec = tape.exp(neg_lv)?;
    let maha = tape.mul(sq, prec)?;
    let inner = tape.add(maha, dist.log_var)?;
    let s = tape.sum_cols(inner)?;
    let d = tape.value(dist.mean).cols() as f64;
    let scaled = tape.scale(s, -0.5)?;
    tape.add_scalar(scaled, -d * HALF_LN_2PI)
}

/// Per-row `KL(N(μ_i, exp(logvar_i)) || N(0, I))`.
pub fn kl_standard_rows(tape: &mut Tape, dist: GaussianVars) -> Result<Var> {
    let var = tape.exp(dist.log_var)?;
    let mu2 = tape.square(dist.mean)?;
    let a = tape.add(var, mu2)?;
    let b = tape.sub(a, dist.log_var)?;
    let s = tape.sum_cols(b)?;
    let d = tape.value(dist.mean).cols() as f64;
    let c = tape.add_scalar(s, -d)?;
    tape.scale(c, 0.5)
}

/// Per-row `KL(p_i || r)` against a fixed diagonal Gaussian `r`.
pub fn kl_rows(tape: &mut Tape, p: GaussianVars, r: &DiagGaussian) -> Result<Var> {
    let d = tape.value(p.mean).cols();
    if r.dim() != d {
        return Err(Error::shape("kl_rows", &[d], &[r.dim()]));
    }
    if r.mean.iter().all(|&m| m == 0.0) && r.log_var.iter().all(|&v| v == 0.0) {
        return kl_standard_rows(tape, p);
    }
    let r_mean = tape.constant(Tensor::vector(r.mean.clone()));
    let r_prec = tape.constant(Tensor::vector(
        r.log_var.iter().map(|v| (-v).exp()).collect(),
    ));
    let r_lv_sum: f64 = r.log_var.iter().sum();
    let var = tape.exp(p.log_var)?;
    let diff = tape.sub(p.mean, r_mean)?;
    let d2 = tape.square(diff)?;
    let num = tape.add(var, d2)?;
    let ratio = tape.mul(num, r_prec)?;
    let t = tape.sub(ratio, p.log_var)?;
    let s = tape.sum_cols(t)?;
    let c = tape.add_scalar(s, r_lv_sum - d as f64)?;
    tape.scale(c, 0.5)
}

/// Reparameterized batch sample `μ + exp(logvar / 2) ⊙ noise`.
pub fn reparam_sample(tape: &mut Tape, dist: GaussianVars, noise: Var) -> Result<Var> {
    let half = tape.scale(dist.log_var, 0.5)?;
    let std = tape.exp(half)?;
    let scaled = tape.mul(std, noise)?;
    tape.add(dist.mean, scaled)
}

/// Per-row Bernoulli log-likelihood from logits, probabilities clamped as in
/// [`bernoulli_log_prob`].
pub fn bernoulli_logits_log_prob_rows(tape: &mut Tape, logits: Var, x: Var) -> Result<Var> {
    let c = logit_clamp();
    let l = tape.clamp(logits, -c, c)?;
    // ln p = -softplus(-l), ln(1 - p) = -softplus(l)
    let neg_l = tape.neg(l)?;
    let sp_neg = tape.softplus(neg_l)?;
    let sp_pos = tape.softplus(l)?;
    // x ln p + (1-x) ln(1-p) = -sp_pos + x (sp_pos - sp_neg)
    let delta = tape.sub(sp_pos, sp_neg)?;
    let xd = tape.mul(delta, x)?;
    let per = tape.sub(xd, sp_pos)?;
    tape.sum_cols(per)
}

/// Per-row isotropic Gaussian observation log-density.
pub fn gaussian_obs_log_prob_rows(
    tape: &mut Tape,
    mean: Var,
    x: Var,
    variance: f64,
) -> Result<Var> {
    let diff = tape.sub(x, mean)?;
    let sq = tape.square(diff)?;
    let s = tape.sum_cols(sq)?;
    let d = tape.value(mean).cols() as f64;
    let scaled = tape.scale(s, -0.5 / variance)?;
    tape.add_scalar(scaled, -d * (HALF_LN_2PI + 0.5 * variance.ln()))
}

/// Per-row `log q(y_i | ·)` from logits and integer labels.
pub fn categorical_log_prob_rows(tape: &mut Tape, logits: Var, labels: &[usize]) -> Result<Var> {
    let (n, k) = {
        let v = tape.value(logits);
        (v.rows(), v.cols())
    };
    if labels.len() != n {
        return Err(Error::shape("categorical_log_prob", &[n], &[labels.len()]));
    }
    let mut onehot = Tensor::zeros(&[n, k]);
    for (i, &y) in labels.iter().enumerate() {
        if y >= k {
            return Err(Error::Invalid(format!(
                "label {y} out of range for {k} classes"
            )));
        }
        onehot.data_mut()[i * k + y] = 1.0;
    }
    let ls = tape.log_softmax(logits)?;
    let mask = tape.constant(onehot);
    let picked = tape.mul(ls, mask)?;
    tape.sum_cols(picked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_tensor, stream_rng};

    const LN_2PI_HALF: f64 = HALF_LN_2PI;

    #[test]
    fn log_prob_examples() {
        let std1 = DiagGaussian::standard(1);
        assert!((std1.log_prob(&[0.0]).unwrap() + LN_2PI_HALF).abs() < 1e-15);
        let std40 = DiagGaussian::standard(40);
        assert!((std40.log_prob(&[0.0; 40]).unwrap() - (-36.757_541_328_186_9)).abs() < 1e-9);
        let g = DiagGaussian::new(vec![1.0], vec![4f64.ln()]).unwrap();
        // -0.5 ln 2π - 0.5 ln 4 - 0.5 · 4/4
        let expected = -LN_2PI_HALF - 0.5 * 4f64.ln() - 0.5;
        assert!((g.log_prob(&[3.0]).unwrap() - expected).abs() < 1e-14);
        assert!((expected + 2.1121).abs() < 1e-4);
        assert!(g.log_prob(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn entropy_examples() {
        assert!((DiagGaussian::standard(1).entropy() - 1.418_938_533_204_672_7).abs() < 1e-14);
        assert!((DiagGaussian::standard(2).entropy() - 2.837_877_066_409_345_5).abs() < 1e-14);
    }

    #[test]
    fn entropy_matches_monte_carlo() {
        let g = DiagGaussian::new(vec![0.3, -1.0], vec![0.5, -0.7]).unwrap();
        let mut rng = stream_rng(11, "entropy-mc", 0);
        let noise = normal_tensor(&mut rng, &[100_000, 2]);
        let n = noise.rows();
        let mc = -(0..n)
            .map(|i| g.log_prob(&g.sample(noise.row(i)).unwrap()).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!(
            (mc - g.entropy()).abs() < 0.01,
            "mc {mc} vs {}",
            g.entropy()
        );
    }

    #[test]
    fn kl_examples() {
        let p = DiagGaussian::new(vec![0.4, -2.0], vec![0.1, 1.3]).unwrap();
        assert_eq!(p.kl(&p).unwrap(), 0.0);
        let n1 = DiagGaussian::new(vec![1.0], vec![0.0]).unwrap();
        assert!((n1.kl(&DiagGaussian::standard(1)).unwrap() - 0.5).abs() < 1e-12);
        let wide = DiagGaussian::new(vec![0.0], vec![4f64.ln()]).unwrap();
        let expected = 0.5 * (4.0 - 1.0 - 4f64.ln());
        assert!((wide.kl(&DiagGaussian::standard(1)).unwrap() - expected).abs() < 1e-14);
        assert!((expected - 0.80685).abs() < 1e-5);
    }

    #[test]
    fn kl_matches_monte_carlo() {
        for (mean, lv, expected) in [(1.0, 0.0, 0.5), (0.0, 4f64.ln(), 0.806_852_819_440_054_7)] {
            let p = DiagGaussian::new(vec![mean], vec![lv]).unwrap();
            let q = DiagGaussian::standard(1);
            let mut rng = stream_rng(5, "kl-mc", 0);
            let noise = normal_tensor(&mut rng, &[100_000, 1]);
            let vals: Vec<f64> = (0..noise.rows())
                .map(|i| {
                    let x = p.sample(noise.row(i)).unwrap();
                    p.log_prob(&x).unwrap() - q.log_prob(&x).unwrap()
                })
                .collect();
            let n = vals.len() as f64;
            let m = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert!(
                (m - expected).abs() < 3.0 * sd / n.sqrt(),
                "{m} vs {expected}"
            );
        }
    }

    #[test]
    fn sample_examples() {
        let g = DiagGaussian::new(vec![1.5, -0.2], vec![0.3, -40.0]).unwrap();
        assert_eq!(g.sample(&[0.0, 0.0]).unwrap(), vec![1.5, -0.2]);
        let s = g.sample(&[1.0, 1.0]).unwrap();
        assert!((s[1] + 0.2).abs() < 1e-8);
        assert!(g.sample(&[0.0]).is_err());
    }

    #[test]
    fn sample_moments() {
        let g = DiagGaussian::new(vec![2.0], vec![0.5f64.ln()]).unwrap();
        let mut rng = stream_rng(9, "sample-moments", 0);
        let noise = normal_tensor(&mut rng, &[100_000, 1]);
        let xs: Vec<f64> = (0..noise.rows())
            .map(|i| g.sample(noise.row(i)).unwrap()[0])
            .collect();
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
        assert!((m / 2.0 - 1.0).abs() < 0.02);
        assert!((v / 0.5 - 1.0).abs() < 0.02);
    }

    #[test]
    fn categorical_examples() {
        let u = Categorical::uniform(10);
        assert!((u.log_prob(3).unwrap() + 10f64.ln()).abs() < 1e-15);
        let mut logits = vec![0.0; 10];
        logits[0] = 100.0;
        assert!(
            Categorical::from_logits(&logits)
                .unwrap()
                .log_prob(0)
                .unwrap()
                .abs()
                < 1e-40
        );
        let c = Categorical::from_logits(&[1.0, 2.0]).unwrap();
        // -softplus(-1) = -ln(1 + e^-1)
        assert!((c.log_prob(1).unwrap() + (1.0 + (-1f64).exp()).ln()).abs() < 1e-15);
        assert!((c.log_prob(1).unwrap() + 0.3133).abs() < 1e-4);
        assert!(c.log_prob(2).is_err());
        assert!(log_sum_exp(c.log_probs()).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_examples() {
        let half = vec![0.5; 6];
        let x = [0.0, 1.0, 0.3, 0.9, 1.0, 0.0];
        assert!((bernoulli_log_prob(&half, &x).unwrap() + 6.0 * 2f64.ln()).abs() < 1e-14);
        let b = [1.0, 0.0, 1.0];
        assert!(bernoulli_log_prob(&b, &b).unwrap().abs() < 1e-6);
        let v = bernoulli_log_prob(&[0.9, 0.1], &[1.0, 0.0]).unwrap();
        assert!((v - 2.0 * 0.9f64.ln()).abs() < 1e-15);
        assert!((v + 0.2107).abs() < 1e-4);
        assert!(bernoulli_log_prob(&[0.5], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn tape_versions_match_closed_forms() {
        let mut t = Tape::new();
        let mean = Tensor::matrix(2, 2, vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let lv = Tensor::matrix(2, 2, vec![0.5, -0.7, 0.0, 1.2]).unwrap();
        let x = Tensor::matrix(2, 2, vec![1.0, 0.0, -0.5, 0.4]).unwrap();
        let g = GaussianVars {
            mean: t.constant(mean.clone()),
            log_var: t.constant(lv.clone()),
        };
        let xv = t.constant(x.clone());
        let lp = gauss_log_prob_rows(&mut t, g, xv).unwrap();
        let kl = kl_standard_rows(&mut t, g).unwrap();
        let r = DiagGaussian::new(vec![0.5, -0.5], vec![0.3, -0.2]).unwrap();
        let klr = kl_rows(&mut t, g, &r).unwrap();
        for i in 0..2 {
            let d = g.row(&t, i);
            assert!((t.value(lp).data()[i] - d.log_prob(x.row(i)).unwrap()).abs() < 1e-12);
            let k0 = d.kl(&DiagGaussian::standard(2)).unwrap();
            assert!((t.value(kl).data()[i] - k0).abs() < 1e-12);
            assert!((t.value(klr).data()[i] - d.kl(&r).unwrap()).abs() < 1e-12);
        }

        let logits = Tensor::matrix(1, 3, vec![2.0, -1.0, 0.0]).unwrap();
        let px = Tensor::matrix(1, 3, vec![1.0, 0.0, 0.25]).unwrap();
        let probs: Vec<f64> = logits
            .data()
            .iter()
            .map(|&l| crate::autodiff::sigmoid(l))
            .collect();
        let lv = t.constant(logits);
        let xv = t.constant(px.clone());
        let b = bernoulli_logits_log_prob_rows(&mut t, lv, xv).unwrap();
        let expected = bernoulli_log_prob(&probs, px.data()).unwrap();
        assert!((t.value(b).data()[0] - expected).abs() < 1e-12);
    }
}
