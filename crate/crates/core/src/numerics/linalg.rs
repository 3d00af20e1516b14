use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;

pub fn ensure_finite(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn ensure_symmetric(s: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if !s.is_square() {
        return Err(Error::InvalidInput(format!(
            "{what} must be square, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    ensure_finite(s, what)?;
    let scale = s.amax().max(1.0);
    let n = s.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (s[(i, j)] - s[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::InvalidInput(format!(
                    "{what} is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    Ok(())
}

/// Upper-triangular `R` with `RᵗR = S + (γ/p)·trace(S)·I`.
pub fn safe_cholesky(s: &DMatrix<f64>, gamma: f64) -> Result<DMatrix<f64>> {
    ensure_symmetric(s, "cholesky input")?;
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
    }
    let p = s.nrows();
    let mut a = s.clone();
    if gamma > 0.0 && p > 0 {
        let shift = gamma / p as f64 * s.trace();
        for i in 0..p {
            a[(i, i)] += shift;
        }
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Singular(format!("{p}x{p} matrix is not positive definite (gamma = {gamma})"))
    })?;
    let r = chol.l().transpose();
    if (0..p).any(|i| !(r[(i, i)] > 0.0) || !r[(i, i)].is_finite()) {
        return Err(Error::Singular(format!(
            "{p}x{p} factor has a non-positive pivot (gamma = {gamma})"
        )));
    }
    Ok(r)
}

#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in descending order.
    pub values: DVector<f64>,
    /// Orthonormal eigenvectors stored column-wise, matching `values`.
    pub vectors: DMatrix<f64>,
}

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude entry is positive.
pub fn sym_eigen_ordered(s: &DMatrix<f64>) -> Result<SymEigen> {
    ensure_symmetric(s, "eigen input")?;
    let p = s.nrows();
    let eig = nalgebra::SymmetricEigen::new(s.clone());
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = DVector::from_iterator(p, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(p, p);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).into_owned();
        normalize_sign(&mut col);
        vectors.set_column(dst, &col);
    }
    Ok(SymEigen { values, vectors })
}

pub(crate) fn normalize_sign(v: &mut DVector<f64>) {
    let mut best = 0.0f64;
    let mut sign = 1.0;
    for &x in v.iter() {
        if x.abs() > best + 1e-12 {
            best = x.abs();
            sign = x.signum();
        }
    }
    if sign < 0.0 {
        v.neg_mut();
    }
}

/// Orthonormal basis of the column space of `m` (modified Gram-Schmidt, rank-revealing).
pub(crate) fn orthonormal_basis(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut cols: Vec<DVector<f64>> = Vec::new();
    let scale = m.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    for c in m.column_iter() {
        let mut v = c.into_owned();
        for _ in 0..2 {
            for q in &cols {
                let proj = q.dot(&v);
                v.axpy(-proj, q, 1.0);
            }
        }
        let norm = v.norm();
        if norm > 1e-12 * scale.max(f64::MIN_POSITIVE) {
            cols.push(v / norm);
        }
    }
    if cols.is_empty() {
        DMatrix::zeros(m.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Principal angles (radians, ascending) between the column spaces of `a` and `b`.
///
/// The angles are computed from the singular values of `(I − QaQaᵗ)Qb`, which keeps
/// small angles accurate. Both inputs must have the same column rank.
pub fn principal_angles(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Vec<f64> {
    let qa = orthonormal_basis(a);
    let qb = orthonormal_basis(b);
    if qb.ncols() == 0 {
        return Vec::new();
    }
    let residual = &qb - &qa * (qa.transpose() * &qb);
    let sv = residual.singular_values();
    let mut angles: Vec<f64> = sv.iter().map(|s| s.clamp(0.0, 1.0).asin()).collect();
    angles.sort_by(f64::total_cmp);
    angles
}
