use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::stream_rng;

/// Joint probability table `p(x, y)` over `K_x × K_y` outcomes.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteJoint {
    table: Vec<Vec<f64>>,
}

impl DiscreteJoint {
    pub fn new(table: Vec<Vec<f64>>) -> Result<Self> {
        let cols = table.first().map_or(0, Vec::len);
        if table.is_empty() || cols == 0 || table.iter().any(|r| r.len() != cols) {
            return Err(Error::Invalid(
                "joint table must be a non-empty rectangle".into(),
            ));
        }
        if table.iter().flatten().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Invalid(
                "joint table has negative or non-finite entries".into(),
            ));
        }
        let total: f64 = table.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "joint table sums to {total}, not 1"
            )));
        }
        Ok(DiscreteJoint { table })
    }

    /// Empirical joint of paired samples.
    pub fn from_samples(pairs: &[(usize, usize)], kx: usize, ky: usize) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::Invalid("no samples".into()));
        }
        let mut counts = vec![vec![0usize; ky]; kx];
        for &(x, y) in pairs {
            if x >= kx || y >= ky {
                return Err(Error::Invalid(format!(
                    "sample ({x}, {y}) outside {kx}×{ky}"
                )));
            }
            counts[x][y] += 1;
        }
        let n = pairs.len() as f64;
        let table = counts
            .into_iter()
            .map(|r| r.into_iter().map(|c| c as f64 / n).collect())
            .collect();
        // Counts divided by n can miss 1 by a few ulps.
        Ok(DiscreteJoint { table })
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.table.len(), self.table[0].len())
    }

    pub fn marginal_x(&self) -> Vec<f64> {
        self.table.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn marginal_y(&self) -> Vec<f64> {
        let (_, ky) = self.shape();
        (0..ky)
            .map(|j| self.table.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn transpose(&self) -> DiscreteJoint {
        let (kx, ky) = self.shape();
        DiscreteJoint {
            table: (0..ky)
                .map(|j| (0..kx).map(|i| self.table[i][j]).collect())
                .collect(),
        }
    }
}

/// `n` iid draws `(x, y)` from the table.
pub fn sample_discrete(joint: &DiscreteJoint, n: usize, seed: u64) -> Vec<(usize, usize)> {
    let (_, ky) = joint.shape();
    let mut cdf = Vec::new();
    let mut acc = 0.0;
    for (i, row) in joint.table.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                acc += p;
                cdf.push((acc, i * ky + j));
            }
        }
    }
    let mut rng = stream_rng(seed, "discrete-joint", 0);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&(c, _)| c <= u).min(cdf.len() - 1);
            let cell = cdf[k].1;
            (cell / ky, cell % ky)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_invalid_tables() {
        assert!(DiscreteJoint::new(vec![vec![0.5, 0.6]]).is_err());
        assert!(DiscreteJoint::new(vec![vec![-0.1, 1.1]]).is_err());
        assert!(DiscreteJoint::new(vec![vec![0.5], vec![0.25, 0.25]]).is_err());
        assert!(DiscreteJoint::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).is_ok());
    }

    #[test]
    fn point_mass_always_hits_its_cell() {
        let j = DiscreteJoint::new(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        assert!(sample_discrete(&j, 1000, 3).iter().all(|&p| p == (1, 0)));
    }

    #[test]
    fn uniform_frequencies() {
        let j = DiscreteJoint::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]]).unwrap();
        let s = sample_discrete(&j, 100_000, 8);
        let e = DiscreteJoint::from_samples(&s, 2, 2).unwrap();
        for p in e.table().iter().flatten() {
            assert!((p - 0.25).abs() < 0.01);
        }
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let j = DiscreteJoint::new(vec![vec![0.1, 0.2], vec![0.3, 0.4]]).unwrap();
        assert_eq!(sample_discrete(&j, 500, 42), sample_discrete(&j, 500, 42));
        assert_ne!(sample_discrete(&j, 500, 42), sample_discrete(&j, 500, 43));
    }
}
