use nalgebra::{DMatrix, DVector};

use super::partition::SoftPartition;
use super::scatter::ScatterSet;
use crate::error::{Error, Result};
use crate::model::{DlmParameters, LatentCov, ModelVariant, NoiseModel};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Noise variances are floored at this fraction of the average total variance.
pub const NOISE_FLOOR_REL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct MStep {
    pub params: DlmParameters,
    /// Number of noise variances raised to the floor.
    pub clamped_noise: usize,
}

fn diag_only(m: &DMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&m.diagonal())
}

fn spherical(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d = m.nrows();
    DMatrix::identity(d, d) * (m.trace() / d as f64)
}

/// Closed-form maximizers of the expected complete log-likelihood for fixed `U`.
pub fn m_step(scatter: &ScatterSet, part: &SoftPartition, u: &DMatrix<f64>, variant: ModelVariant) -> Result<MStep> {
    let (p, d) = u.shape();
    let k = part.k();
    if p != scatter.total.nrows() || scatter.group_covs.len() != k {
        return Err(Error::InvalidInput("orientation, scatter and partition disagree".into()));
    }
    if d >= p {
        return Err(Error::InvalidInput(format!("d={d} must be smaller than p={p}")));
    }
    let n = part.n() as f64;
    let weights: Vec<f64> = part.soft_counts.iter().map(|&c| c / n).collect();
    let proportions = DVector::from_vec(weights.clone());

    let mut latent_means = DMatrix::zeros(d, k);
    for g in 0..k {
        let e = part.soft_means.column(g) - &scatter.mean;
        latent_means.set_column(g, &(u.transpose() * e));
    }

    let projected: Vec<DMatrix<f64>> = scatter
        .group_covs
        .iter()
        .map(|c| {
            let m = u.transpose() * c * u;
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let pooled = projected
        .iter()
        .zip(&weights)
        .fold(DMatrix::zeros(d, d), |acc, (m, &w)| acc + m * w);

    let latent_covs: Vec<DMatrix<f64>> = projected
        .iter()
        .map(|pk| match variant.latent_cov {
            LatentCov::FullPerGroup => pk.clone(),
            LatentCov::FullCommon => pooled.clone(),
            LatentCov::DiagPerGroup => diag_only(pk),
            LatentCov::SphericalPerGroup => spherical(pk),
            LatentCov::DiagCommon => diag_only(&pooled),
            LatentCov::SphericalCommon => spherical(&pooled),
        })
        .collect();

    // The model puts every group mean in ȳ + span(U), so the part of m_k − ȳ outside
    // span(U) is noise too and enters β_k alongside the residual variance of C_k.
    let resid = (p - d) as f64;
    let raw: Vec<f64> = (0..k)
        .map(|g| {
            let e = part.soft_means.column(g) - &scatter.mean;
            let outside = (&e - u * latent_means.column(g)).norm_squared();
            (scatter.group_covs[g].trace() - projected[g].trace() + outside) / resid
        })
        .collect();
    let mut noise: Vec<f64> = match variant.noise {
        NoiseModel::PerGroup => raw,
        NoiseModel::Common => {
            let b = raw.iter().zip(&weights).map(|(b, w)| b * w).sum::<f64>();
            vec![b; k]
        }
    };
    let floor = (NOISE_FLOOR_REL * scatter.total.trace() / p as f64).max(1e-300);
    let mut clamped_noise = 0;
    for b in noise.iter_mut() {
        if !(*b >= floor) {
            log::warn!("noise variance {b:e} raised to floor {floor:e}");
            *b = floor;
            clamped_noise += 1;
        }
    }

    let params = DlmParameters {
        variant,
        proportions,
        latent_means,
        latent_covs,
        noise_vars: DVector::from_vec(noise),
        orientation: u.clone(),
        center: scatter.mean.clone(),
    };
    Ok(MStep { params, clamped_noise })
}

/// Expected complete-data log-likelihood `Σ_i Σ_k t_ik [log π_k + log φ(y_i; θ_k)]`,
/// evaluated from the partition's sufficient statistics for arbitrary parameters.
pub fn q_value(scatter: &ScatterSet, part: &SoftPartition, params: &DlmParameters) -> Result<f64> {
    let (p, d) = (params.p(), params.d());
    let u = &params.orientation;
    let mut total = 0.0;
    for g in 0..part.k() {
        let nk = part.soft_counts[g];
        if nk == 0.0 {
            continue;
        }
        let ck = &scatter.group_covs[g];
        let e = part.soft_means.column(g) - &params.center;
        let latent = u.transpose() * &e;
        let outside = (&e - u * &latent).norm_squared();
        let pk = u.transpose() * ck * u;
        let beta = params.noise_vars[g];
        let (quad, log_det) = if d == 0 {
            (0.0, 0.0)
        } else {
            let chol = params.latent_covs[g]
                .clone()
                .cholesky()
                .ok_or_else(|| Error::DegenerateModel(format!("latent covariance of group {g} is singular")))?;
            let delta = latent - params.latent_means.column(g);
            let second = pk + &delta * delta.transpose();
            let log_det = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
            (chol.solve(&second).trace(), log_det)
        };
        let noise_part = (ck.trace() - (u.transpose() * ck * u).trace() + outside) / beta;
        let inner = quad + noise_part + log_det + (p - d) as f64 * beta.ln() + p as f64 * LN_2PI;
        total += nk * (params.proportions[g].ln() - 0.5 * inner);
    }
    Ok(total)
}
