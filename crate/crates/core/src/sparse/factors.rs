use nalgebra::DMatrix;

use crate::em::SoftPartition;
use crate::error::{Error, Result};

/// Square-root factors of the soft scatter matrices: `H_W H_Wᵗ = S_W`, `H_B H_Bᵗ = S_B`.
#[derive(Debug, Clone)]
pub struct SoftFactorPair {
    /// `p×(nK)`: column `(i, k)` is `√(t_ik/n)·(y_i − m_k)`.
    pub h_w: DMatrix<f64>,
    /// `p×K`: column `k` is `√(n_k/n)·(m_k − ȳ)`.
    pub h_b: DMatrix<f64>,
}

/// Build the factor pair. `H_W` carries one column per (observation, group) pair, which
/// keeps `H_W H_Wᵗ = S_W` exact for soft as well as hard partitions.
pub fn soft_factors(y: &DMatrix<f64>, part: &SoftPartition) -> Result<SoftFactorPair> {
    let (n, p) = y.shape();
    if part.n() != n || part.soft_means.nrows() != p {
        return Err(Error::InvalidInput("partition does not match the data".into()));
    }
    let k = part.k();
    let nf = n as f64;
    let mean = y.row_mean().transpose();
    let mut h_w = DMatrix::zeros(p, n * k);
    for g in 0..k {
        let mk = part.soft_means.column(g);
        for i in 0..n {
            let w = (part.posteriors[(i, g)] / nf).sqrt();
            let mut col = h_w.column_mut(g * n + i);
            for j in 0..p {
                col[j] = w * (y[(i, j)] - mk[j]);
            }
        }
    }
    let mut h_b = DMatrix::zeros(p, k);
    for g in 0..k {
        let w = (part.soft_counts[g] / nf).sqrt();
        h_b.set_column(g, &((part.soft_means.column(g) - &mean) * w));
    }
    Ok(SoftFactorPair { h_w, h_b })
}
