use nalgebra::{DMatrix, DVector};

use super::partition::SoftPartition;
use crate::error::{Error, Result};

/// Soft scatter matrices of a partition. All covariances use the `1/n` (or `1/n_k`)
/// normalization, so `S = S_W + S_B` holds exactly for any row-stochastic partition.
#[derive(Debug, Clone)]
pub struct ScatterSet {
    /// Global mean `ȳ`.
    pub mean: DVector<f64>,
    /// Total covariance `S`.
    pub total: DMatrix<f64>,
    /// Soft within covariance `S_W = (1/n) Σ_k n_k C_k`.
    pub within: DMatrix<f64>,
    /// Soft between covariance `S_B = (1/n) Σ_k n_k (m_k − ȳ)(m_k − ȳ)ᵗ`.
    pub between: DMatrix<f64>,
    /// Per-group soft covariances `C_k`.
    pub group_covs: Vec<DMatrix<f64>>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

pub(crate) fn center_rows(y: &DMatrix<f64>, mean: &DVector<f64>) -> DMatrix<f64> {
    let mut c = y.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    c
}

pub fn compute_scatter(y: &DMatrix<f64>, part: &SoftPartition) -> Result<ScatterSet> {
    let (n, p) = y.shape();
    if part.n() != n || part.soft_means.nrows() != p {
        return Err(Error::InvalidInput("partition does not match the data".into()));
    }
    crate::numerics::ensure_finite(y, "data")?;
    let nf = n as f64;
    let mean = y.row_mean().transpose();
    let centered = center_rows(y, &mean);
    let mut total = centered.transpose() * &centered / nf;
    symmetrize(&mut total);

    let mut within = DMatrix::zeros(p, p);
    let mut between = DMatrix::zeros(p, p);
    let mut group_covs = Vec::with_capacity(part.k());
    for g in 0..part.k() {
        let nk = part.soft_counts[g];
        let mk = part.soft_means.column(g);
        if nk <= 0.0 {
            group_covs.push(DMatrix::zeros(p, p));
            continue;
        }
        let mut weighted = y.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row -= mk.transpose();
            row *= part.posteriors[(i, g)].sqrt();
        }
        let mut ck = weighted.transpose() * &weighted / nk;
        symmetrize(&mut ck);
        within += &ck * (nk / nf);
        let dm = mk - &mean;
        between += &dm * dm.transpose() * (nk / nf);
        group_covs.push(ck);
    }
    symmetrize(&mut within);
    symmetrize(&mut between);
    Ok(ScatterSet { mean, total, within, between, group_covs })
}
