use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Mixture of `K` unit-variance Gaussians that differ only on the first `q` features:
/// group 1 has mean `+μ` there, group 2 has `−μ`, every other group has mean 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub k: usize,
    pub mu: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self { n: 30, p: 25, q: 5, k: 3, mu: 1.7, seed: 0 }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.k == 0 || self.q > self.p {
            return Err(Error::InvalidInput(format!(
                "simulation needs n, p, K >= 1 and q <= p, got n={}, p={}, q={}, K={}",
                self.n, self.p, self.q, self.k
            )));
        }
        if !(self.mu >= 0.0) || !self.mu.is_finite() {
            return Err(Error::InvalidInput(format!("mu must be finite and >= 0, got {}", self.mu)));
        }
        Ok(())
    }

    fn mean(&self, group: usize, feature: usize) -> f64 {
        if feature >= self.q {
            return 0.0;
        }
        match group {
            0 => self.mu,
            1 => -self.mu,
            _ => 0.0,
        }
    }
}

/// Draw a dataset from `spec` with ChaCha8.
///
/// Labels come from stream 0. The noise for feature `j` of observations in group `g`
/// comes from stream `1 + g·p + j`, consumed in observation order, so every
/// (seed, group, feature) cell is reproducible on its own.
pub fn simulate(spec: &SimSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut label_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    label_rng.set_stream(0);
    let labels: Vec<usize> = (0..spec.n).map(|_| label_rng.random_range(0..spec.k)).collect();

    let mut y = DMatrix::zeros(spec.n, spec.p);
    for g in 0..spec.k {
        let members: Vec<usize> = (0..spec.n).filter(|&i| labels[i] == g).collect();
        for j in 0..spec.p {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 + (g * spec.p + j) as u64);
            let m = spec.mean(g, j);
            for &i in &members {
                y[(i, j)] = m + rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(Dataset {
        y,
        feature_names: Some((1..=spec.p).map(|j| format!("x{j}")).collect()),
        labels: Some(labels),
    })
}
