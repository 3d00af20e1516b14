//! Sparse F-steps and the two-phase sparse fitting driver.
//!
//! Phase 1 runs plain Fisher-EM to convergence. Phase 2 continues the same E/F/M loop
//! from the phase-1 posteriors with a sparse F-step that zeroes whole rows of the
//! orientation, which removes those variables from the discriminative subspace.

mod factors;
mod steps;

pub use factors::{soft_factors, SoftFactorPair};
pub use steps::{
    ratio_to_bound, regression_a_update, sparse_fstep_1, sparse_fstep_2, sparse_fstep_3, RegressionOptions,
    SparseFStep,
};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use steps::{fstep_1_at, fstep_2_at, ColumnLevel};

use crate::em::{compute_scatter, finish, fit_fisher_em, run_em, FitConfig, FitResult, Method, ScatterSet, SoftPartition};
use crate::error::{Error, Result};
use crate::numerics::{L1Level, LassoOptions, PenaltySpec, PmdOptions};

/// The three sparse F-steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SparseKind {
    /// Plain orientation followed by per-column lasso regressions.
    Sfem1,
    /// Alternating penalized regression on the between/within factors.
    Sfem2,
    /// Penalized rank-one decompositions of the between scatter.
    Sfem3,
}

impl From<SparseKind> for Method {
    fn from(k: SparseKind) -> Self {
        match k {
            SparseKind::Sfem1 => Method::Sfem1,
            SparseKind::Sfem2 => Method::Sfem2,
            SparseKind::Sfem3 => Method::Sfem3,
        }
    }
}

impl TryFrom<Method> for SparseKind {
    type Error = Error;

    fn try_from(m: Method) -> Result<Self> {
        match m {
            Method::Sfem1 => Ok(SparseKind::Sfem1),
            Method::Sfem2 => Ok(SparseKind::Sfem2),
            Method::Sfem3 => Ok(SparseKind::Sfem3),
            Method::Fem => Err(Error::InvalidInput("fem is not a sparse method".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseMethod {
    pub kind: SparseKind,
    pub penalty: PenaltySpec,
    /// Cap on the alternating loop of `Sfem2`.
    pub inner_iters: usize,
    /// Relative change of the loadings that ends the alternating loop.
    pub inner_tol: f64,
    /// Cholesky ridge on `S_W` for `Sfem2`.
    pub gamma: f64,
    /// Rescale features by `diag(S)^(−1/2)` before the penalized SVD (`Sfem3` only).
    pub whiten: bool,
}

impl SparseMethod {
    pub fn new(kind: SparseKind, penalty: PenaltySpec) -> Self {
        Self { kind, penalty, inner_iters: 50, inner_tol: 1e-4, gamma: 1e-3, whiten: false }
    }

    pub fn validate(&self) -> Result<()> {
        self.penalty.validate()?;
        if self.inner_iters == 0 || !(self.inner_tol > 0.0) || !(self.gamma >= 0.0) {
            return Err(Error::InvalidInput("inner_iters must be >= 1, inner_tol > 0 and gamma >= 0".into()));
        }
        Ok(())
    }

    /// Run this method's F-step on one scatter set.
    pub fn f_step(&self, scatter: &ScatterSet, n: usize, d: usize, ridge_gamma: f64) -> Result<SparseFStep> {
        self.validate()?;
        self.f_step_at(scatter, n, d, ridge_gamma, None)
    }

    /// F-step with per-column λ values fixed in advance (lasso-based kinds only).
    fn f_step_at(&self, scatter: &ScatterSet, n: usize, d: usize, ridge_gamma: f64, fixed: Option<&[ColumnLevel]>) -> Result<SparseFStep> {
        let uniform = [ColumnLevel::Level(self.penalty.level)];
        let levels = fixed.filter(|l| !l.is_empty()).unwrap_or(&uniform);
        let rho = self.penalty.rho_ridge;
        match self.kind {
            SparseKind::Sfem1 => fstep_1_at(scatter, n, d, levels, rho, ridge_gamma, &LassoOptions::default()),
            SparseKind::Sfem2 => {
                let ropts = RegressionOptions {
                    gamma: self.gamma,
                    inner_iters: self.inner_iters,
                    inner_tol: self.inner_tol,
                    init_gamma: ridge_gamma,
                };
                fstep_2_at(scatter, d, levels, rho, &ropts, &LassoOptions::default())
            }
            SparseKind::Sfem3 => sparse_fstep_3(scatter, d, &self.penalty, self.whiten, &PmdOptions::default()),
        }
    }
}

/// Two-phase sparse fit: Fisher-EM to convergence, then the sparse iterations.
pub fn fit_sparse_fem(y: &DMatrix<f64>, config: &FitConfig, method: &SparseMethod) -> Result<FitResult> {
    method.validate()?;
    let phase1 = fit_fisher_em(y, config)?;
    fit_sparse_from(y, &phase1, config, method)
}

fn phase2_failure(e: Error) -> Error {
    match e {
        Error::EmptyCluster { .. } | Error::DegenerateModel(_) => Error::FitFailure { restarts: 0, last: Box::new(e) },
        other => other,
    }
}

/// Phase 2 only, started from a finished Fisher-EM fit. Lets several penalties share
/// one phase-1 run.
pub fn fit_sparse_from(y: &DMatrix<f64>, phase1: &FitResult, config: &FitConfig, method: &SparseMethod) -> Result<FitResult> {
    method.validate()?;
    if phase1.posteriors.nrows() != y.nrows() || phase1.params.p() != y.ncols() {
        return Err(Error::InvalidInput("phase-1 fit does not match the data".into()));
    }
    let n = y.nrows();
    let d = config.latent_dim();
    let start = SoftPartition::from_posteriors(y, phase1.posteriors.clone())?;
    // For the lasso-based steps a ratio is resolved once, on the phase-1 partition, into
    // an absolute ℓ1 budget per column that then stays fixed. Re-resolving the ratio, or
    // holding λ fixed, keeps shrinking the loadings as the groups sharpen along the
    // retained variables and drives them toward a single variable.
    let fixed: Option<Vec<ColumnLevel>> = match (method.kind, method.penalty.level) {
        (SparseKind::Sfem1 | SparseKind::Sfem2, L1Level::Ratio(r)) if r < 1.0 => {
            let scatter = compute_scatter(y, &start)?;
            let first = method.f_step_at(&scatter, n, d, config.ridge_gamma, None).map_err(phase2_failure)?;
            Some(first.loadings.column_iter().map(|c| ColumnLevel::Budget(c.lp_norm(1))).collect())
        }
        _ => None,
    };
    let mut run = run_em(y, start, config, |ctx| {
        let step = method.f_step_at(ctx.scatter, n, d, config.ridge_gamma, fixed.as_deref())?;
        if !step.converged {
            ctx.diagnostics.inner_nonconvergence += 1;
        }
        Ok(step.orientation)
    })
    .map_err(phase2_failure)?;
    let p1 = &phase1.diagnostics;
    let diag = &mut run.diagnostics;
    diag.max_orthonormality_error = diag.max_orthonormality_error.max(p1.max_orthonormality_error);
    diag.max_row_sum_error = diag.max_row_sum_error.max(p1.max_row_sum_error);
    diag.orthonormality_violations += p1.orthonormality_violations;
    diag.row_sum_violations += p1.row_sum_violations;
    diag.clamped_noise += p1.clamped_noise;
    diag.ridged_iterations += p1.ridged_iterations;
    finish(method.kind.into(), run, phase1.restarts, Some(method.penalty), d, n)
}
