use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::linalg::ensure_finite;
use super::soft_threshold;
use crate::error::{Error, Result};

/// How strongly the ℓ1 penalty acts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum L1Level {
    /// Absolute penalty weight λ.
    Lambda(f64),
    /// Target ratio `|β(λ)|₁ / |β(0)|₁` in (0, 1]; λ is found by bisection.
    Ratio(f64),
    /// Direct ℓ1 bound on a unit vector (penalized SVD only).
    Bound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub level: L1Level,
    /// Ridge weight ρ; zero means plain lasso.
    pub rho_ridge: f64,
}

impl PenaltySpec {
    pub fn lambda(lambda: f64) -> Self {
        Self { level: L1Level::Lambda(lambda), rho_ridge: 0.0 }
    }

    pub fn ratio(ratio: f64) -> Self {
        Self { level: L1Level::Ratio(ratio), rho_ridge: 0.0 }
    }

    pub fn bound(bound: f64) -> Self {
        Self { level: L1Level::Bound(bound), rho_ridge: 0.0 }
    }

    pub fn with_ridge(mut self, rho: f64) -> Self {
        self.rho_ridge = rho;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rho_ridge >= 0.0) || !self.rho_ridge.is_finite() {
            return Err(Error::InvalidInput(format!("ridge weight must be >= 0, got {}", self.rho_ridge)));
        }
        match self.level {
            L1Level::Lambda(l) if !(l >= 0.0) || !l.is_finite() => {
                Err(Error::InvalidInput(format!("lambda must be >= 0, got {l}")))
            }
            L1Level::Ratio(r) if !(r > 0.0 && r <= 1.0) => {
                Err(Error::InvalidInput(format!("sparsity ratio must lie in (0, 1], got {r}")))
            }
            L1Level::Bound(c) if !(c > 0.0) || !c.is_finite() => {
                Err(Error::InvalidInput(format!("l1 bound must be > 0, got {c}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LassoOptions {
    /// Tolerance on the subgradient optimality conditions.
    pub kkt_tol: f64,
    /// Maximum number of full coordinate-descent sweeps.
    pub max_cd_iters: usize,
    /// Relative tolerance on the ℓ1-norm ratio when resolving a sparsity ratio.
    pub ratio_tol: f64,
    pub max_bisection_iters: usize,
}

impl Default for LassoOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            max_cd_iters: 10_000,
            ratio_tol: 1e-4,
            max_bisection_iters: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RatioSolution {
    pub beta: DVector<f64>,
    pub lambda: f64,
}

/// An ℓ1/ℓ2-penalized least-squares problem in Gram form.
///
/// The objective is `‖y − Xβ‖² + λ|β|₁ + ρ‖β‖²`, stored through `G = XᵗX` and `c = Xᵗy`
/// so that repeated solves along a λ path cost `O(p²)` per sweep.
#[derive(Debug, Clone)]
pub struct LassoProblem {
    gram: DMatrix<f64>,
    xty: DVector<f64>,
}

impl LassoProblem {
    pub fn from_design(design: &DMatrix<f64>, response: &DVector<f64>) -> Result<Self> {
        if design.nrows() == 0 || design.ncols() == 0 {
            return Err(Error::InvalidInput("lasso design must have at least one row and column".into()));
        }
        if design.nrows() != response.len() {
            return Err(Error::InvalidInput(format!(
                "design has {} rows but response has {} entries",
                design.nrows(),
                response.len()
            )));
        }
        ensure_finite(design, "lasso design")?;
        if !response.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("lasso response"));
        }
        Ok(Self {
            gram: design.transpose() * design,
            xty: design.transpose() * response,
        })
    }

    pub fn from_gram(gram: DMatrix<f64>, xty: DVector<f64>) -> Result<Self> {
        if !gram.is_square() || gram.nrows() != xty.len() || xty.is_empty() {
            return Err(Error::InvalidInput("gram matrix and cross-product sizes disagree".into()));
        }
        ensure_finite(&gram, "lasso gram")?;
        if !xty.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("lasso cross-product"));
        }
        Ok(Self { gram, xty })
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }

    /// Smallest λ at which the zero vector is optimal.
    pub fn lambda_max(&self) -> f64 {
        2.0 * self.xty.amax()
    }

    /// Largest violation of the optimality conditions at `beta`.
    pub fn kkt_violation(&self, beta: &DVector<f64>, lambda: f64, rho: f64) -> f64 {
        let g = &self.xty - &self.gram * beta;
        self.violation_from_residual(&g, beta, lambda, rho)
    }

    fn violation_from_residual(&self, g: &DVector<f64>, beta: &DVector<f64>, lambda: f64, rho: f64) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..self.dim() {
            let grad = -2.0 * g[j] + 2.0 * rho * beta[j];
            let v = if beta[j] == 0.0 {
                (grad.abs() - lambda).max(0.0)
            } else {
                (grad + lambda * beta[j].signum()).abs()
            };
            worst = worst.max(v);
        }
        worst
    }

    pub fn solve(&self, lambda: f64, rho: f64, warm: Option<&DVector<f64>>, opts: &LassoOptions) -> Result<DVector<f64>> {
        if !(lambda >= 0.0) || !(rho >= 0.0) {
            return Err(Error::InvalidInput(format!("penalties must be >= 0 (lambda={lambda}, rho={rho})")));
        }
        let start = match warm {
            Some(w) if w.len() == self.dim() => w.clone(),
            _ if lambda == 0.0 => self.direct_solve(rho).unwrap_or_else(|| DVector::zeros(self.dim())),
            _ => DVector::zeros(self.dim()),
        };
        self.coordinate_descent(start, lambda, rho, opts)
    }

    /// Unpenalized (ridge-only) solution on the non-degenerate columns, if the system is
    /// positive definite there.
    fn direct_solve(&self, rho: f64) -> Option<DVector<f64>> {
        let active: Vec<usize> = (0..self.dim()).filter(|&j| self.gram[(j, j)] > 0.0).collect();
        let mut beta = DVector::zeros(self.dim());
        if active.is_empty() {
            return Some(beta);
        }
        let m = active.len();
        let a = DMatrix::from_fn(m, m, |i, j| {
            self.gram[(active[i], active[j])] + if i == j { rho } else { 0.0 }
        });
        let b = DVector::from_fn(m, |i, _| self.xty[active[i]]);
        let sol = a.cholesky()?.solve(&b);
        if !sol.iter().all(|v| v.is_finite()) {
            return None;
        }
        for (i, &j) in active.iter().enumerate() {
            beta[j] = sol[i];
        }
        Some(beta)
    }

    fn coordinate_descent(&self, mut beta: DVector<f64>, lambda: f64, rho: f64, opts: &LassoOptions) -> Result<DVector<f64>> {
        let p = self.dim();
        for j in 0..p {
            if self.gram[(j, j)] <= 0.0 {
                beta[j] = 0.0;
            }
        }
        let mut g = &self.xty - &self.gram * &beta;
        for sweep in 0..opts.max_cd_iters {
            if sweep % 64 == 0 {
                g = &self.xty - &self.gram * &beta;
            }
            if self.violation_from_residual(&g, &beta, lambda, rho) <= opts.kkt_tol {
                g = &self.xty - &self.gram * &beta;
                if self.violation_from_residual(&g, &beta, lambda, rho) <= opts.kkt_tol {
                    return Ok(beta);
                }
            }
            if sweep % 8 == 7 {
                if let Some(polished) = self.polish(&beta, lambda, rho, opts.kkt_tol) {
                    return Ok(polished);
                }
            }
            for j in 0..p {
                let gjj = self.gram[(j, j)];
                if gjj <= 0.0 {
                    continue;
                }
                let old = beta[j];
                let z = g[j] + gjj * old;
                let new = soft_threshold(2.0 * z, lambda) / (2.0 * (gjj + rho));
                if new != old {
                    g.axpy(-(new - old), &self.gram.column(j), 1.0);
                    beta[j] = new;
                }
            }
        }
        g = &self.xty - &self.gram * &beta;
        if self.violation_from_residual(&g, &beta, lambda, rho) <= opts.kkt_tol {
            return Ok(beta);
        }
        Err(Error::Convergence {
            solver: "lasso coordinate descent",
            iterations: opts.max_cd_iters,
            last: Some(beta.as_slice().to_vec()),
        })
    }

    /// Exact solve on the current support and signs: `(G_AA + ρI)β_A = c_A − λ/2·s_A`.
    /// Accepted only if the signs survive and the full optimality check passes.
    fn polish(&self, beta: &DVector<f64>, lambda: f64, rho: f64, tol: f64) -> Option<DVector<f64>> {
        let active: Vec<usize> = (0..self.dim()).filter(|&j| beta[j] != 0.0).collect();
        let mut out = DVector::zeros(self.dim());
        if !active.is_empty() {
            let m = active.len();
            let a = DMatrix::from_fn(m, m, |i, j| {
                self.gram[(active[i], active[j])] + if i == j { rho } else { 0.0 }
            });
            let b = DVector::from_fn(m, |i, _| self.xty[active[i]] - 0.5 * lambda * beta[active[i]].signum());
            let sol = a.cholesky()?.solve(&b);
            for (i, &j) in active.iter().enumerate() {
                if !sol[i].is_finite() || sol[i].signum() != beta[j].signum() {
                    return None;
                }
                out[j] = sol[i];
            }
        }
        (self.kkt_violation(&out, lambda, rho) <= tol).then_some(out)
    }

    /// Solve at the λ whose solution has ℓ1 norm `ratio·|β(0)|₁`.
    pub fn solve_ratio(&self, ratio: f64, rho: f64, opts: &LassoOptions) -> Result<RatioSolution> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(Error::InvalidInput(format!("sparsity ratio must lie in (0, 1], got {ratio}")));
        }
        let full = self.solve(0.0, rho, None, opts)?;
        let full_norm = full.lp_norm(1);
        if ratio >= 1.0 || full_norm == 0.0 {
            return Ok(RatioSolution { beta: full, lambda: 0.0 });
        }
        let target = ratio * full_norm;
        // |β(λ)|₁ is continuous, nonincreasing and piecewise linear in λ, so false position
        // with the Illinois weight update converges in a handful of solves.
        let (mut lo, mut hi) = (0.0, self.lambda_max());
        let (mut f_lo, mut f_hi) = (full_norm - target, -target);
        let mut side = 0i8;
        let mut warm = full;
        let mut best = RatioSolution { beta: DVector::zeros(self.dim()), lambda: hi };
        let mut best_gap = target;
        for it in 0..opts.max_bisection_iters {
            let secant = hi - f_hi * (hi - lo) / (f_hi - f_lo);
            let mid = if it % 4 == 3 || !(secant > lo && secant < hi) { 0.5 * (lo + hi) } else { secant };
            let beta = self.solve(mid, rho, Some(&warm), opts)?;
            let f = beta.lp_norm(1) - target;
            if f.abs() < best_gap {
                best_gap = f.abs();
                best = RatioSolution { beta: beta.clone(), lambda: mid };
            }
            if f.abs() <= opts.ratio_tol * full_norm {
                break;
            }
            if f > 0.0 {
                lo = mid;
                f_lo = f;
                if side == 1 {
                    f_hi *= 0.5;
                }
                side = 1;
            } else {
                hi = mid;
                f_hi = f;
                if side == -1 {
                    f_lo *= 0.5;
                }
                side = -1;
            }
            warm = beta;
        }
        Ok(best)
    }
}

/// Minimize `‖response − design·β‖² + λ|β|₁ (+ ρ‖β‖²)` with default options.
pub fn lasso_solve(design: &DMatrix<f64>, response: &DVector<f64>, penalty: &PenaltySpec) -> Result<DVector<f64>> {
    lasso_solve_with(design, response, penalty, &LassoOptions::default())
}

pub fn lasso_solve_with(
    design: &DMatrix<f64>,
    response: &DVector<f64>,
    penalty: &PenaltySpec,
    opts: &LassoOptions,
) -> Result<DVector<f64>> {
    penalty.validate()?;
    let problem = LassoProblem::from_design(design, response)?;
    match penalty.level {
        L1Level::Lambda(lambda) => problem.solve(lambda, penalty.rho_ridge, None, opts),
        L1Level::Ratio(ratio) => Ok(problem.solve_ratio(ratio, penalty.rho_ridge, opts)?.beta),
        L1Level::Bound(_) => Err(Error::InvalidInput("an l1 bound is not a regression penalty".into())),
    }
}
