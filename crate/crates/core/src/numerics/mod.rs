//! Numerical kernels used by the F-steps: ℓ1-penalized least squares, the
//! orthogonal Procrustes projection, the penalized rank-one SVD and a few
//! guarded dense factorizations.
//!
//! Every function here is a pure function of its inputs.

mod lasso;
pub(crate) mod linalg;
mod pmd;
mod procrustes;

pub use lasso::{lasso_solve, lasso_solve_with, L1Level, LassoOptions, LassoProblem, PenaltySpec, RatioSolution};
pub use linalg::{
    ensure_finite, frobenius, principal_angles, safe_cholesky, sym_eigen_ordered, SymEigen,
};
pub use pmd::{penalized_rank1, penalized_rank1_with, PmdOptions, Rank1};
pub use procrustes::nearest_orthogonal;

/// Soft-thresholding operator `sign(x)·max(|x| − t, 0)`.
#[inline]
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}
