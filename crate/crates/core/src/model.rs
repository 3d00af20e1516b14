//! The discriminative latent mixture (DLM) model family.
//!
//! Observations live in `R^p` and are modeled as `y = ȳ + U·x + ε` where `U` is a
//! `p×d` matrix with orthonormal columns, the latent `x` follows a `K`-component
//! Gaussian mixture in `R^d`, and `ε` is isotropic noise confined to the orthogonal
//! complement of `span(U)`. In the rotated basis `W = [U, V]` the group covariance is
//! block diagonal: `Σ_k` on the latent block and `β_k·I` on the remaining `p − d`
//! directions. Twelve sub-models constrain `Σ_k` and `β_k`.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_mat;

/// Loadings smaller than this in absolute value count as zero.
pub const ZERO_LOADING_TOL: f64 = 1e-8;

const LN_2PI: f64 = 1.837_877_066_409_345_5;
const MIN_NOISE: f64 = 1e-12;

/// Structure of the latent covariance matrices `Σ_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LatentCov {
    /// Full `Σ_k`, one per group.
    FullPerGroup,
    /// Full `Σ`, shared.
    FullCommon,
    /// Diagonal `diag(α_k1..α_kd)` per group.
    DiagPerGroup,
    /// Spherical `α_k·I` per group.
    SphericalPerGroup,
    /// Diagonal `diag(α_1..α_d)`, shared.
    DiagCommon,
    /// Spherical `α·I`, shared.
    SphericalCommon,
}

/// Structure of the noise variances `β_k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseModel {
    PerGroup,
    Common,
}

/// One of the twelve DLM sub-models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelVariant {
    pub latent_cov: LatentCov,
    pub noise: NoiseModel,
}

impl ModelVariant {
    pub const fn new(latent_cov: LatentCov, noise: NoiseModel) -> Self {
        Self { latent_cov, noise }
    }

    /// All sub-models, from the most general `DkBk` to the most constrained `AB`.
    pub const ALL: [ModelVariant; 12] = {
        use LatentCov::*;
        use NoiseModel::*;
        [
            Self::new(FullPerGroup, PerGroup),
            Self::new(FullPerGroup, Common),
            Self::new(FullCommon, PerGroup),
            Self::new(FullCommon, Common),
            Self::new(DiagPerGroup, PerGroup),
            Self::new(DiagPerGroup, Common),
            Self::new(SphericalPerGroup, PerGroup),
            Self::new(SphericalPerGroup, Common),
            Self::new(DiagCommon, PerGroup),
            Self::new(DiagCommon, Common),
            Self::new(SphericalCommon, PerGroup),
            Self::new(SphericalCommon, Common),
        ]
    };

    /// Short code: `D` = full, `Akj`/`Ak`/`Aj`/`A` = diagonal or spherical, trailing `Bk`/`B`
    /// for the noise.
    pub fn code(&self) -> &'static str {
        use LatentCov::*;
        use NoiseModel::*;
        match (self.latent_cov, self.noise) {
            (FullPerGroup, PerGroup) => "DkBk",
            (FullPerGroup, Common) => "DkB",
            (FullCommon, PerGroup) => "DBk",
            (FullCommon, Common) => "DB",
            (DiagPerGroup, PerGroup) => "AkjBk",
            (DiagPerGroup, Common) => "AkjB",
            (SphericalPerGroup, PerGroup) => "AkBk",
            (SphericalPerGroup, Common) => "AkB",
            (DiagCommon, PerGroup) => "AjBk",
            (DiagCommon, Common) => "AjB",
            (SphericalCommon, PerGroup) => "ABk",
            (SphericalCommon, Common) => "AB",
        }
    }

    /// Number of free parameters in the latent covariances.
    fn cov_terms(&self, k: usize, d: usize) -> usize {
        match self.latent_cov {
            LatentCov::FullPerGroup => k * d * (d + 1) / 2,
            LatentCov::FullCommon => d * (d + 1) / 2,
            LatentCov::DiagPerGroup => k * d,
            LatentCov::SphericalPerGroup => k,
            LatentCov::DiagCommon => d,
            LatentCov::SphericalCommon => 1,
        }
    }

    fn noise_terms(&self, k: usize) -> usize {
        match self.noise {
            NoiseModel::PerGroup => k,
            NoiseModel::Common => 1,
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for ModelVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ModelVariant::ALL
            .iter()
            .copied()
            .find(|v| v.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let codes: Vec<_> = ModelVariant::ALL.iter().map(|v| v.code()).collect();
                Error::InvalidInput(format!("unknown model '{s}', expected one of {}", codes.join(", ")))
            })
    }
}

impl Serialize for ModelVariant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.code())
    }
}

impl<'de> Deserialize<'de> for ModelVariant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let code = String::deserialize(d)?;
        code.parse().map_err(serde::de::Error::custom)
    }
}

fn check_dims(k: usize, p: usize, d: usize) -> Result<()> {
    if k == 0 || k - 1 >= p || d > k - 1 {
        return Err(Error::InvalidInput(format!(
            "dimensions must satisfy d <= K-1 < p, got K={k}, p={p}, d={d}"
        )));
    }
    Ok(())
}

/// Free parameters of a DLM sub-model:
/// `(K−1) + Kd + [dp − d(d+1)/2] + covariance terms + noise terms`.
pub fn param_count(variant: ModelVariant, k: usize, p: usize, d: usize) -> Result<usize> {
    check_dims(k, p, d)?;
    Ok((k - 1) + k * d + (d * p - d * (d + 1) / 2) + variant.cov_terms(k, d) + variant.noise_terms(k))
}

/// Parameter count reduced by the number of zero entries in the loading matrix.
pub fn effective_param_count(variant: ModelVariant, k: usize, p: usize, d: usize, zero_loadings: usize) -> Result<usize> {
    let full = param_count(variant, k, p, d)?;
    if zero_loadings > d * p {
        return Err(Error::InvalidInput(format!(
            "{zero_loadings} zero loadings exceed the {p}x{d} loading matrix"
        )));
    }
    Ok(full - zero_loadings)
}

/// Fitted or user-specified parameters of a DLM model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlmParameters {
    pub variant: ModelVariant,
    /// Mixing proportions `π_k`.
    #[serde(with = "serde_mat::vector")]
    pub proportions: DVector<f64>,
    /// Latent means `μ_k`, one column per group (`d×K`).
    #[serde(with = "serde_mat::matrix")]
    pub latent_means: DMatrix<f64>,
    /// Latent covariances `Σ_k` (`d×d` each).
    #[serde(with = "serde_mat::matrices")]
    pub latent_covs: Vec<DMatrix<f64>>,
    /// Noise variances `β_k`.
    #[serde(with = "serde_mat::vector")]
    pub noise_vars: DVector<f64>,
    /// Orientation `U` (`p×d`), called loadings in reports.
    #[serde(rename = "loadings", with = "serde_mat::matrix")]
    pub orientation: DMatrix<f64>,
    /// Global mean used to center the data.
    #[serde(with = "serde_mat::vector")]
    pub center: DVector<f64>,
}

impl DlmParameters {
    pub fn k(&self) -> usize {
        self.proportions.len()
    }

    pub fn p(&self) -> usize {
        self.orientation.nrows()
    }

    pub fn d(&self) -> usize {
        self.orientation.ncols()
    }

    /// Count of loadings with `|u_jl| <= ZERO_LOADING_TOL`.
    pub fn zero_loadings(&self) -> usize {
        self.orientation.iter().filter(|v| v.abs() <= ZERO_LOADING_TOL).count()
    }

    /// Indices of variables whose row in `U` has at least one nonzero loading.
    pub fn selected_variables(&self) -> Vec<usize> {
        (0..self.p())
            .filter(|&j| self.orientation.row(j).iter().any(|v| v.abs() > ZERO_LOADING_TOL))
            .collect()
    }

    /// Check the structural invariants of the parameter set.
    pub fn validate(&self) -> Result<()> {
        let (k, p, d) = (self.k(), self.p(), self.d());
        check_dims(k, p, d)?;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.latent_means.shape() != (d, k) && !(d == 0 && self.latent_means.is_empty()) {
            return bad(format!("latent means must be {d}x{k}"));
        }
        if self.latent_covs.len() != k || self.noise_vars.len() != k || self.center.len() != p {
            return bad("parameter lengths disagree with K and p".into());
        }
        if self.proportions.iter().any(|&pi| !(pi > 0.0)) || (self.proportions.sum() - 1.0).abs() > 1e-8 {
            return bad("proportions must be positive and sum to 1".into());
        }
        if self.noise_vars.iter().any(|&b| !(b > 0.0)) {
            return bad("noise variances must be positive".into());
        }
        let gram = self.orientation.transpose() * &self.orientation;
        if (gram - DMatrix::identity(d, d)).amax() > 1e-8 {
            return bad("orientation columns are not orthonormal".into());
        }
        for (g, s) in self.latent_covs.iter().enumerate() {
            if s.shape() != (d, d) {
                return bad(format!("latent covariance {g} must be {d}x{d}"));
            }
            if (s - s.transpose()).amax() > 1e-10 * s.amax().max(1.0) {
                return bad(format!("latent covariance {g} is not symmetric"));
            }
        }
        Ok(())
    }

    /// Precompute per-group factorizations for repeated density evaluation.
    pub fn evaluator(&self) -> Result<DensityEvaluator<'_>> {
        DensityEvaluator::new(self)
    }
}

struct GroupTerms {
    chol: Option<Cholesky<f64, Dyn>>,
    log_det: f64,
    beta: f64,
}

/// Evaluates component log-densities through the block structure of the covariance:
/// `S_k⁻¹ = UΣ_k⁻¹Uᵗ + (I − UUᵗ)/β_k` and `|S_k| = |Σ_k|·β_k^(p−d)`.
pub struct DensityEvaluator<'a> {
    params: &'a DlmParameters,
    groups: Vec<GroupTerms>,
}

impl<'a> DensityEvaluator<'a> {
    fn new(params: &'a DlmParameters) -> Result<Self> {
        let d = params.d();
        let groups = (0..params.k())
            .map(|g| {
                let beta = params.noise_vars[g];
                if !(beta >= MIN_NOISE) {
                    return Err(Error::DegenerateModel(format!("noise variance of group {g} is {beta:e}")));
                }
                if d == 0 {
                    return Ok(GroupTerms { chol: None, log_det: 0.0, beta });
                }
                let chol = params.latent_covs[g].clone().cholesky().ok_or_else(|| {
                    Error::DegenerateModel(format!("latent covariance of group {g} is singular"))
                })?;
                let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                if !log_det.is_finite() {
                    return Err(Error::DegenerateModel(format!("latent covariance of group {g} is singular")));
                }
                Ok(GroupTerms { chol: Some(chol), log_det, beta })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { params, groups })
    }

    /// Log-densities of every observation under every group, `n×K`.
    ///
    /// `centered` holds observations minus the model center, one per row.
    pub fn log_densities_centered(&self, centered: &DMatrix<f64>) -> DMatrix<f64> {
        let params = self.params;
        let (n, p, d, k) = (centered.nrows(), params.p(), params.d(), params.k());
        let latent = centered * &params.orientation;
        let back = &latent * params.orientation.transpose();
        let residual: Vec<f64> = (0..n)
            .map(|i| {
                (0..p)
                    .map(|j| {
                        let r = centered[(i, j)] - back[(i, j)];
                        r * r
                    })
                    .sum()
            })
            .collect();
        let mut out = DMatrix::zeros(n, k);
        for (g, terms) in self.groups.iter().enumerate() {
            let constant = terms.log_det + (p - d) as f64 * terms.beta.ln() + p as f64 * LN_2PI;
            for i in 0..n {
                let maha = match &terms.chol {
                    Some(chol) => {
                        let diff = latent.row(i).transpose() - params.latent_means.column(g);
                        let z = chol.l_dirty().solve_lower_triangular(&diff).expect("nonsingular factor");
                        z.norm_squared()
                    }
                    None => 0.0,
                };
                out[(i, g)] = -0.5 * (maha + residual[i] / terms.beta + constant);
            }
        }
        out
    }

    pub fn log_density(&self, y: &DVector<f64>, k: usize) -> f64 {
        let diff = y - &self.params.center;
        let centered = DMatrix::from_row_slice(1, diff.len(), diff.as_slice());
        self.log_densities_centered(&centered)[(0, k)]
    }
}

/// `log φ(y; m_k, S_k)` for group `k`.
pub fn log_component_density(y: &DVector<f64>, k: usize, params: &DlmParameters) -> Result<f64> {
    if y.len() != params.p() {
        return Err(Error::InvalidInput(format!("observation has {} entries, model has p={}", y.len(), params.p())));
    }
    if k >= params.k() {
        return Err(Error::InvalidInput(format!("group index {k} out of range for K={}", params.k())));
    }
    if !y.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("observation"));
    }
    Ok(params.evaluator()?.log_density(y, k))
}

/// Per-row `log Σ_k exp(a_ik)`.
pub(crate) fn log_sum_exp_rows(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        a.nrows(),
        a.row_iter().map(|row| {
            let m = row.max();
            if m == f64::NEG_INFINITY {
                return m;
            }
            m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
        }),
    )
}

/// Matrix of `log π_k + log φ(y_i; m_k, S_k)`.
pub(crate) fn weighted_log_densities(y: &DMatrix<f64>, params: &DlmParameters) -> Result<DMatrix<f64>> {
    if y.ncols() != params.p() {
        return Err(Error::InvalidInput(format!("data has {} columns, model has p={}", y.ncols(), params.p())));
    }
    crate::numerics::ensure_finite(y, "data")?;
    let mut centered = y.clone();
    for mut row in centered.row_iter_mut() {
        row -= params.center.transpose();
    }
    let mut logs = params.evaluator()?.log_densities_centered(&centered);
    for g in 0..params.k() {
        let lp = params.proportions[g].ln();
        logs.column_mut(g).add_scalar_mut(lp);
    }
    Ok(logs)
}

/// Observed-data log-likelihood `Σ_i log Σ_k π_k φ(y_i; m_k, S_k)`.
pub fn log_likelihood(y: &DMatrix<f64>, params: &DlmParameters) -> Result<f64> {
    if y.nrows() == 0 {
        return Err(Error::InvalidInput("log-likelihood needs at least one observation".into()));
    }
    let logs = weighted_log_densities(y, params)?;
    Ok(log_sum_exp_rows(&logs).sum())
}
