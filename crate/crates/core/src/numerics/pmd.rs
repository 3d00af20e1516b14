use nalgebra::{DMatrix, DVector};

use super::linalg::ensure_finite;
use super::soft_threshold;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct PmdOptions {
    pub max_pmd_iters: usize,
    /// Stop once successive `u` and `v` iterates differ by less than this (max norm).
    pub tol: f64,
    pub bisection_iters: usize,
    pub bisection_tol: f64,
}

impl Default for PmdOptions {
    fn default() -> Self {
        Self {
            max_pmd_iters: 1_000,
            tol: 1e-9,
            bisection_iters: 60,
            bisection_tol: 1e-12,
        }
    }
}

/// A sparse rank-one factor `σ·u·vᵗ`.
#[derive(Debug, Clone)]
pub struct Rank1 {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub sigma: f64,
}

pub fn penalized_rank1(m: &DMatrix<f64>, l1_bound_u: f64) -> Result<Rank1> {
    penalized_rank1_with(m, l1_bound_u, &PmdOptions::default())
}

/// Maximize `uᵗMv` subject to `‖u‖₂ ≤ 1`, `‖v‖₂ ≤ 1` and `|u|₁ ≤ l1_bound_u`.
///
/// Alternating updates: `v ← Mᵗu/‖Mᵗu‖` and `u ← S(Mv, Δ)/‖S(Mv, Δ)‖` where the
/// threshold Δ is found by bisection. `v` starts at the leading right singular vector.
pub fn penalized_rank1_with(m: &DMatrix<f64>, l1_bound_u: f64, opts: &PmdOptions) -> Result<Rank1> {
    ensure_finite(m, "penalized svd input")?;
    if m.nrows() == 0 || m.ncols() == 0 || m.amax() == 0.0 {
        return Err(Error::InvalidInput("penalized svd needs a nonzero matrix".into()));
    }
    if !(l1_bound_u > 0.0) || !l1_bound_u.is_finite() {
        return Err(Error::InvalidInput(format!("l1 bound must be positive, got {l1_bound_u}")));
    }
    let bound = if l1_bound_u < 1.0 {
        log::warn!("l1 bound {l1_bound_u} < 1 admits no unit vector; clamping to 1");
        1.0
    } else {
        l1_bound_u
    };

    let svd = m.clone().svd(false, true);
    let lead = svd.singular_values.imax();
    let mut v: DVector<f64> = svd.v_t.expect("requested v_t").row(lead).transpose();
    let mut u = constrained_direction(&(m * &v), bound, opts);
    if u.iter().all(|&x| x == 0.0) {
        return Err(Error::InvalidInput("penalized svd started from a null direction".into()));
    }

    for _ in 0..opts.max_pmd_iters {
        let mtu = m.transpose() * &u;
        let norm = mtu.norm();
        if norm == 0.0 {
            break;
        }
        let v_new = mtu / norm;
        let u_new = constrained_direction(&(m * &v_new), bound, opts);
        let du = (&u_new - &u).amax();
        let dv = (&v_new - &v).amax();
        u = u_new;
        v = v_new;
        if du < opts.tol && dv < opts.tol {
            let sigma = u.dot(&(m * &v));
            return Ok(Rank1 { u, v, sigma });
        }
    }
    Err(Error::Convergence {
        solver: "penalized rank-one svd",
        iterations: opts.max_pmd_iters,
        last: Some(u.as_slice().to_vec()),
    })
}

/// Unit vector `S(a, Δ)/‖S(a, Δ)‖` with the smallest Δ ≥ 0 meeting `|·|₁ ≤ bound`.
fn constrained_direction(a: &DVector<f64>, bound: f64, opts: &PmdOptions) -> DVector<f64> {
    let norm = a.norm();
    if norm == 0.0 {
        return a.clone();
    }
    let ratio = |x: &DVector<f64>| {
        let n = x.norm();
        if n == 0.0 {
            0.0
        } else {
            x.lp_norm(1) / n
        }
    };
    if ratio(a) <= bound {
        return a / norm;
    }
    let amax = a.amax();
    let (mut lo, mut hi) = (0.0, amax * (1.0 - 1e-12));
    let mut best = a.map(|x| soft_threshold(x, hi));
    for _ in 0..opts.bisection_iters {
        let mid = 0.5 * (lo + hi);
        let cand = a.map(|x| soft_threshold(x, mid));
        let r = ratio(&cand);
        if r <= bound {
            hi = mid;
            best = cand;
            if bound - r <= opts.bisection_tol {
                break;
            }
        } else {
            lo = mid;
        }
    }
    let n = best.norm();
    best / n
}
