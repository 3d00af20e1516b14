use nalgebra::DMatrix;

use super::linalg::ensure_finite;
use crate::error::{Error, Result};

const RANK_TOL: f64 = 1e-10;

/// Nearest matrix with orthonormal columns to `m` in Frobenius norm.
///
/// With the thin SVD `m = u·Λ·vᵗ` the minimizer is `u·vᵗ`. A rank-deficient input has
/// no unique projection and is rejected with the detected rank.
pub fn nearest_orthogonal(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(m, "procrustes input")?;
    let (p, d) = m.shape();
    if p < d {
        return Err(Error::InvalidInput(format!(
            "nearest orthogonal projection needs rows >= cols, got {p}x{d}"
        )));
    }
    if d == 0 {
        return Ok(DMatrix::zeros(p, 0));
    }
    let svd = m.clone().svd(true, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * smax && s > 0.0).count();
    if rank < d {
        return Err(Error::DegenerateInput { rank, expected: d });
    }
    let u = svd.u.expect("requested u");
    let v_t = svd.v_t.expect("requested v_t");
    Ok(u * v_t)
}
