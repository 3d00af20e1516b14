use nalgebra::{DMatrix, DVector};

use crate::em::{f_step, ScatterSet};
use crate::error::{Error, Result};
use crate::numerics::{
    nearest_orthogonal, penalized_rank1_with, safe_cholesky, sym_eigen_ordered, L1Level, LassoOptions, LassoProblem,
    PenaltySpec, PmdOptions,
};

/// Result of a sparse F-step.
#[derive(Debug, Clone)]
pub struct SparseFStep {
    /// Orthonormal, row-sparse orientation.
    pub orientation: DMatrix<f64>,
    /// Sparse loadings before the orthogonal projection.
    pub loadings: DMatrix<f64>,
    /// Penalty weight (λ or ℓ1 bound) used for each column.
    pub levels: Vec<f64>,
    pub inner_iterations: usize,
    pub converged: bool,
}

/// Penalty of one lasso column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ColumnLevel {
    Level(L1Level),
    /// Absolute ℓ1 budget; inactive when the unpenalized solution already fits.
    Budget(f64),
}

/// Solve one penalized column. Returns the solution and its λ.
fn solve_column(problem: &LassoProblem, level: ColumnLevel, rho: f64, warm: Option<&DVector<f64>>, opts: &LassoOptions) -> Result<(DVector<f64>, f64)> {
    match level {
        ColumnLevel::Level(L1Level::Lambda(lambda)) => Ok((problem.solve(lambda, rho, warm, opts)?, lambda)),
        ColumnLevel::Level(L1Level::Ratio(r)) => {
            let sol = problem.solve_ratio(r, rho, opts)?;
            Ok((sol.beta, sol.lambda))
        }
        ColumnLevel::Budget(t) => {
            let full = problem.solve(0.0, rho, None, opts)?.lp_norm(1);
            let r = if full > 0.0 { (t / full).min(1.0) } else { 1.0 };
            if !(r > 0.0) {
                return Err(Error::InvalidInput(format!("l1 budget must be positive, got {t}")));
            }
            let sol = problem.solve_ratio(r, rho, opts)?;
            Ok((sol.beta, sol.lambda))
        }
        ColumnLevel::Level(L1Level::Bound(_)) => Err(Error::InvalidInput(
            "an l1 bound applies to the penalized SVD step only; use a lambda or a ratio".into(),
        )),
    }
}

/// Two-step sparse F-step: plain Fisher orientation, then one lasso per column that
/// regresses the projected data on the centered data, then the orthogonal projection.
///
/// The regressions are solved in Gram form with `G = n·S` and `c = G·û_j`, whose
/// unpenalized solution is `û_j` itself.
pub fn sparse_fstep_1(scatter: &ScatterSet, n: usize, d: usize, penalty: &PenaltySpec, ridge_gamma: f64, opts: &LassoOptions) -> Result<SparseFStep> {
    penalty.validate()?;
    fstep_1_at(scatter, n, d, &[ColumnLevel::Level(penalty.level)], penalty.rho_ridge, ridge_gamma, opts)
}

/// Level of column `j`; a short list repeats its last entry.
fn level_at(levels: &[ColumnLevel], j: usize) -> ColumnLevel {
    levels[j.min(levels.len() - 1)]
}

/// `sparse_fstep_1` with one level per column.
pub(crate) fn fstep_1_at(
    scatter: &ScatterSet,
    n: usize,
    d: usize,
    levels_in: &[ColumnLevel],
    rho: f64,
    ridge_gamma: f64,
    opts: &LassoOptions,
) -> Result<SparseFStep> {
    let plain = f_step(scatter, d, ridge_gamma)?;
    let u_hat = plain.orientation;
    let gram = &scatter.total * n as f64;
    let mut loadings = DMatrix::zeros(u_hat.nrows(), u_hat.ncols());
    let mut levels = Vec::with_capacity(u_hat.ncols());
    for j in 0..u_hat.ncols() {
        let c = &gram * u_hat.column(j);
        let problem = LassoProblem::from_gram(gram.clone(), c)?;
        let warm = u_hat.column(j).into_owned();
        let (beta, lambda) = solve_column(&problem, level_at(levels_in, j), rho, Some(&warm), opts)?;
        loadings.set_column(j, &beta);
        levels.push(lambda);
    }
    let orientation = nearest_orthogonal(&loadings)?;
    Ok(SparseFStep { orientation, loadings, levels, inner_iterations: 1, converged: true })
}

/// Settings of the alternating penalized-regression step.
#[derive(Debug, Clone, Copy)]
pub struct RegressionOptions {
    /// Ridge γ added to `S_W` before its Cholesky factorization.
    pub gamma: f64,
    pub inner_iters: usize,
    pub inner_tol: f64,
    /// Ridge γ used for the generalized eigenvectors that start the loop.
    pub init_gamma: f64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self { gamma: 1e-3, inner_iters: 50, inner_tol: 1e-4, init_gamma: 1e-3 }
    }
}

/// `A = polar(R_W⁻ᵗ S_B B)`, the maximizer of `tr(BᵗS_B R_W⁻¹ A)` over orthonormal `A`.
pub fn regression_a_update(r_w: &DMatrix<f64>, between: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = r_w.transpose().solve_lower_triangular(&(between * b)).expect("nonsingular factor");
    nearest_orthogonal(&m)
}

/// Penalized-regression sparse F-step: alternate `d` elastic-net regressions for `B`
/// given `A` with a Procrustes update of `A` given `B`, and return `polar(B)`.
/// The ridge ρ is `penalty.rho_ridge`, or `1e−2·tr(S_W)/p` when that is zero.
///
/// Each regression minimizes `βᵗ(S_B + ρR_WᵗR_W)β − 2(S_B R_W⁻¹α_j)ᵗβ + λ|β|₁`, the Gram
/// form of the stacked design `W = [H_Bᵗ; √ρ·R_W]` with response `[H_BᵗR_W⁻¹α_j; 0_p]`.
pub fn sparse_fstep_2(scatter: &ScatterSet, d: usize, penalty: &PenaltySpec, ropts: &RegressionOptions, opts: &LassoOptions) -> Result<SparseFStep> {
    penalty.validate()?;
    fstep_2_at(scatter, d, &[ColumnLevel::Level(penalty.level)], penalty.rho_ridge, ropts, opts)
}

/// `sparse_fstep_2` with one level per column.
pub(crate) fn fstep_2_at(
    scatter: &ScatterSet,
    d: usize,
    levels_in: &[ColumnLevel],
    rho_ridge: f64,
    ropts: &RegressionOptions,
    opts: &LassoOptions,
) -> Result<SparseFStep> {
    if ropts.inner_iters == 0 || !(ropts.inner_tol > 0.0) {
        return Err(Error::InvalidInput("inner_iters must be >= 1 and inner_tol > 0".into()));
    }
    let p = scatter.total.nrows();
    let r_w = safe_cholesky(&scatter.within, ropts.gamma)?;
    let rho = if rho_ridge > 0.0 {
        rho_ridge
    } else {
        1e-2 * scatter.within.trace() / p as f64
    };
    if !(rho > 0.0) {
        return Err(Error::InvalidInput("ridge rho must be positive".into()));
    }
    let init = f_step(scatter, d, ropts.init_gamma)?;
    let d_eff = init.effective_d;
    let mut b = init.directions;
    let mut a = regression_a_update(&r_w, &scatter.between, &b)?;
    let gram = &scatter.between + r_w.transpose() * &r_w * rho;

    let mut levels = vec![0.0; d_eff];
    let mut converged = false;
    let mut iterations = 0;
    let mut warm: Vec<Option<DVector<f64>>> = vec![None; d_eff];
    for _ in 0..ropts.inner_iters {
        iterations += 1;
        let mut b_new = DMatrix::zeros(p, d_eff);
        for j in 0..d_eff {
            let target = r_w.solve_upper_triangular(&a.column(j).into_owned()).expect("nonsingular factor");
            let c = &scatter.between * target;
            let problem = LassoProblem::from_gram(gram.clone(), c)?;
            let (beta, lambda) = solve_column(&problem, level_at(levels_in, j), 0.0, warm[j].as_ref(), opts)?;
            b_new.set_column(j, &beta);
            warm[j] = Some(beta);
            levels[j] = lambda;
        }
        let change = (&b_new - &b).norm() / b_new.norm().max(f64::MIN_POSITIVE);
        b = b_new;
        a = regression_a_update(&r_w, &scatter.between, &b)?;
        if change < ropts.inner_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("penalized regression F-step stopped after {iterations} inner iterations");
    }
    let orientation = nearest_orthogonal(&b)?;
    Ok(SparseFStep { orientation, loadings: b, levels, inner_iterations: iterations, converged })
}

/// ℓ1 bound on a unit vector for a sparsity ratio: `1 + r·(√p − 1)`.
pub fn ratio_to_bound(ratio: f64, p: usize) -> f64 {
    1.0 + ratio * ((p as f64).sqrt() - 1.0)
}

/// Penalized-SVD sparse F-step: successive penalized rank-one factors of `S_B` with
/// deflation, then the orthogonal projection.
///
/// With `whiten`, `S_B` is first rescaled to `D S_B D` with `D = diag(S)^(−1/2)` and the
/// factors are mapped back through `D`, which keeps their zero pattern.
pub fn sparse_fstep_3(scatter: &ScatterSet, d: usize, penalty: &PenaltySpec, whiten: bool, opts: &PmdOptions) -> Result<SparseFStep> {
    penalty.validate()?;
    let p = scatter.between.nrows();
    let bound = match penalty.level {
        L1Level::Bound(b) => b,
        L1Level::Ratio(r) => ratio_to_bound(r, p),
        L1Level::Lambda(_) => {
            return Err(Error::InvalidInput("the penalized SVD step takes an l1 bound or a ratio, not lambda".into()))
        }
    };
    let scale: DVector<f64> = if whiten {
        scatter.total.diagonal().map(|v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 })
    } else {
        DVector::from_element(p, 1.0)
    };
    let mut m = DMatrix::from_fn(p, p, |i, j| scale[i] * scatter.between[(i, j)] * scale[j]);
    let eig = sym_eigen_ordered(&m)?;
    let top = eig.values[0].max(0.0);
    let rank = eig.values.iter().filter(|&&v| v > 1e-10 * top).count();
    let d_eff = d.min(rank);
    if d_eff == 0 {
        return Err(Error::DegenerateModel("between-group scatter vanished".into()));
    }
    let start_norm = m.amax();
    let mut cols = Vec::with_capacity(d_eff);
    let mut levels = Vec::with_capacity(d_eff);
    for _ in 0..d_eff {
        if m.amax() <= 1e-12 * start_norm {
            log::warn!("deflated between scatter vanished after {} factors", cols.len());
            break;
        }
        let r1 = penalized_rank1_with(&m, bound, opts)?;
        m -= &r1.u * r1.v.transpose() * r1.sigma;
        cols.push(r1.u.component_mul(&scale));
        levels.push(bound);
    }
    let loadings = DMatrix::from_columns(&cols);
    let orientation = nearest_orthogonal(&loadings)?;
    Ok(SparseFStep { orientation, loadings, levels, inner_iterations: 1, converged: true })
}
