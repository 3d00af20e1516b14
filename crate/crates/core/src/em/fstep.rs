use nalgebra::{DMatrix, DVector};

use super::scatter::ScatterSet;
use crate::error::{Error, Result};
use crate::numerics::linalg::{normalize_sign, orthonormal_basis};
use crate::numerics::{safe_cholesky, sym_eigen_ordered};

/// Generalized eigenvalues below this are treated as zero when counting the rank of `S_B`.
const RANK_TOL: f64 = 1e-10;
/// Squared pivot ratio under which the total covariance is regularized.
const CONDITION_TOL: f64 = 1e-12;

/// Output of the orientation update.
#[derive(Debug, Clone)]
pub struct FStep {
    /// Orthonormal orientation `U`, `p×d_eff`.
    pub orientation: DMatrix<f64>,
    /// Generalized eigenvectors of `(S_B, S)` before orthonormalization.
    pub directions: DMatrix<f64>,
    /// Matching generalized eigenvalues (descending, in `[0, 1]`).
    pub eigenvalues: DVector<f64>,
    pub requested_d: usize,
    /// `min(d, rank(S_B))`.
    pub effective_d: usize,
    /// Ridge actually added to `S` (0 unless it was ill-conditioned).
    pub ridge_gamma: f64,
}

/// Upper-triangular factor of `S`, ridged by `gamma` only when `S` is ill-conditioned.
pub(crate) fn total_factor(total: &DMatrix<f64>, gamma: f64) -> Result<(DMatrix<f64>, f64)> {
    if let Ok(r) = safe_cholesky(total, 0.0) {
        let diag = r.diagonal();
        let (lo, hi) = (diag.min(), diag.max());
        if (lo / hi).powi(2) >= CONDITION_TOL {
            return Ok((r, 0.0));
        }
    }
    if gamma <= 0.0 {
        return Err(Error::Singular(
            "total covariance is ill-conditioned; try a larger regularization gamma".into(),
        ));
    }
    Ok((safe_cholesky(total, gamma)?, gamma))
}

/// `R⁻ᵗ M R⁻¹` for upper-triangular `R`, symmetrized.
pub(crate) fn whiten(r: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let rt = r.transpose();
    let left = rt.solve_lower_triangular(m).expect("nonsingular factor");
    let both = rt.solve_lower_triangular(&left.transpose()).expect("nonsingular factor");
    (&both + both.transpose()) * 0.5
}

/// Orientation maximizing the Fisher criterion `tr((UᵗSU)⁻¹ UᵗS_B U)` over orthonormal `U`.
///
/// The criterion only depends on `span(U)`, so the leading generalized eigenvectors of
/// `S_B w = λ S w` are optimal. They are orthonormalized in order by Gram-Schmidt.
pub fn f_step(scatter: &ScatterSet, d: usize, ridge_gamma: f64) -> Result<FStep> {
    let p = scatter.total.nrows();
    if d >= p {
        return Err(Error::InvalidInput(format!("d={d} must be smaller than p={p}")));
    }
    if d == 0 {
        return Ok(FStep {
            orientation: DMatrix::zeros(p, 0),
            directions: DMatrix::zeros(p, 0),
            eigenvalues: DVector::zeros(0),
            requested_d: 0,
            effective_d: 0,
            ridge_gamma: 0.0,
        });
    }
    let (r, used_gamma) = total_factor(&scatter.total, ridge_gamma)?;
    let eig = sym_eigen_ordered(&whiten(&r, &scatter.between))?;
    let rank = eig.values.iter().filter(|&&v| v > RANK_TOL).count();
    let eff = d.min(rank);
    if eff == 0 {
        return Err(Error::DegenerateModel("between-group scatter vanished".into()));
    }
    if eff < d {
        log::warn!("between-group scatter has rank {rank}; using d={eff} instead of {d}");
    }
    let z = eig.vectors.columns(0, eff).into_owned();
    let directions = r.solve_upper_triangular(&z).expect("nonsingular factor");
    let mut orientation = orthonormal_basis(&directions);
    if orientation.ncols() != eff {
        return Err(Error::DegenerateModel("discriminative directions are collinear".into()));
    }
    for j in 0..eff {
        let mut col = orientation.column(j).into_owned();
        normalize_sign(&mut col);
        orientation.set_column(j, &col);
    }
    Ok(FStep {
        orientation,
        directions,
        eigenvalues: eig.values.rows(0, eff).into_owned(),
        requested_d: d,
        effective_d: eff,
        ridge_gamma: used_gamma,
    })
}

/// `tr((UᵗSU)⁻¹ UᵗS_B U)`.
pub fn fisher_criterion(scatter: &ScatterSet, u: &DMatrix<f64>) -> Result<f64> {
    if u.ncols() == 0 {
        return Ok(0.0);
    }
    let st = u.transpose() * &scatter.total * u;
    let sb = u.transpose() * &scatter.between * u;
    let chol = st
        .cholesky()
        .ok_or_else(|| Error::Singular("projected total covariance is singular".into()))?;
    Ok(chol.solve(&sb).trace())
}
