use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{log_sum_exp_rows, weighted_log_densities, DlmParameters};

/// Posterior group memberships with their soft counts and soft means.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftPartition {
    /// `t_ik`, one row per observation.
    pub posteriors: DMatrix<f64>,
    /// `n_k = Σ_i t_ik`.
    pub soft_counts: DVector<f64>,
    /// `m_k = Σ_i t_ik y_i / n_k`, one column per group (`p×K`).
    pub soft_means: DMatrix<f64>,
}

impl SoftPartition {
    pub fn from_posteriors(y: &DMatrix<f64>, posteriors: DMatrix<f64>) -> Result<Self> {
        if posteriors.nrows() != y.nrows() || posteriors.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "posteriors are {}x{} for {} observations",
                posteriors.nrows(),
                posteriors.ncols(),
                y.nrows()
            )));
        }
        crate::numerics::ensure_finite(&posteriors, "posteriors")?;
        if posteriors.iter().any(|&t| t < 0.0) {
            return Err(Error::InvalidInput("posteriors must be nonnegative".into()));
        }
        let soft_counts = DVector::from_iterator(posteriors.ncols(), posteriors.column_iter().map(|c| c.sum()));
        let column_means = y.row_mean().transpose();
        let weighted = y.transpose() * &posteriors;
        let mut soft_means = DMatrix::zeros(y.ncols(), posteriors.ncols());
        for g in 0..posteriors.ncols() {
            if soft_counts[g] > 0.0 {
                soft_means.set_column(g, &(weighted.column(g) / soft_counts[g]));
            } else {
                soft_means.set_column(g, &column_means);
            }
        }
        Ok(Self { posteriors, soft_counts, soft_means })
    }

    /// Hard partition as one-hot posteriors. Labels are 0-based group indices.
    pub fn from_labels(y: &DMatrix<f64>, labels: &[usize], k: usize) -> Result<Self> {
        if labels.len() != y.nrows() {
            return Err(Error::InvalidInput(format!(
                "{} labels for {} observations",
                labels.len(),
                y.nrows()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidInput(format!("label {bad} out of range for K={k}")));
        }
        let mut t = DMatrix::zeros(y.nrows(), k);
        for (i, &l) in labels.iter().enumerate() {
            t[(i, l)] = 1.0;
        }
        Self::from_posteriors(y, t)
    }

    pub fn n(&self) -> usize {
        self.posteriors.nrows()
    }

    pub fn k(&self) -> usize {
        self.posteriors.ncols()
    }

    /// Maximum a posteriori labels; ties go to the lowest group index.
    pub fn hard_labels(&self) -> Vec<usize> {
        self.posteriors
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for g in 1..row.len() {
                    if row[g] > row[best] {
                        best = g;
                    }
                }
                best
            })
            .collect()
    }

    /// Largest `|Σ_k t_ik − 1|` over observations.
    pub fn max_row_sum_error(&self) -> f64 {
        self.posteriors.row_iter().map(|r| (r.sum() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// Default lower bound on a group's soft count: `1e−3·n/K`.
pub fn default_min_group_mass(n: usize, k: usize) -> f64 {
    1e-3 * n as f64 / k as f64
}

/// E-step: posterior probabilities `t_ik ∝ π_k φ(y_i; θ_k)` in log space.
///
/// Returns the partition together with the observed-data log-likelihood at `params`.
pub fn e_step(y: &DMatrix<f64>, params: &DlmParameters, min_group_mass: Option<f64>) -> Result<(SoftPartition, f64)> {
    let logs = weighted_log_densities(y, params)?;
    let lse = log_sum_exp_rows(&logs);
    let mut t = DMatrix::zeros(logs.nrows(), logs.ncols());
    for i in 0..logs.nrows() {
        let mut total = 0.0;
        for g in 0..logs.ncols() {
            let v = (logs[(i, g)] - lse[i]).exp();
            t[(i, g)] = v;
            total += v;
        }
        for g in 0..logs.ncols() {
            t[(i, g)] /= total;
        }
    }
    let loglik = lse.sum();
    if !loglik.is_finite() {
        return Err(Error::DegenerateModel("log-likelihood is not finite".into()));
    }
    let part = SoftPartition::from_posteriors(y, t)?;
    let min_mass = min_group_mass.unwrap_or_else(|| default_min_group_mass(part.n(), part.k()));
    for (g, &mass) in part.soft_counts.iter().enumerate() {
        if mass < min_mass {
            return Err(Error::EmptyCluster { group: g, mass, min_mass });
        }
    }
    Ok((part, loglik))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelVariant;
    use approx::assert_abs_diff_eq;

    fn two_symmetric_groups() -> DlmParameters {
        DlmParameters {
            variant: ModelVariant::ALL[0],
            proportions: DVector::from_vec(vec![0.5, 0.5]),
            latent_means: DMatrix::from_row_slice(1, 2, &[-2.0, 2.0]),
            latent_covs: vec![DMatrix::identity(1, 1); 2],
            noise_vars: DVector::from_vec(vec![1.0, 1.0]),
            orientation: DMatrix::from_column_slice(3, 1, &[1.0, 0.0, 0.0]),
            center: DVector::zeros(3),
        }
    }

    #[test]
    fn equidistant_point_splits_evenly() {
        let params = two_symmetric_groups();
        let y = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, -1.0, -2.0, 0.0, 0.0, 2.0, 0.0, 0.0]);
        let (part, _) = e_step(&y, &params, Some(0.0)).unwrap();
        assert_abs_diff_eq!(part.posteriors[(0, 0)], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(part.posteriors[(0, 1)], 0.5, epsilon = 1e-15);
        assert!(part.max_row_sum_error() <= 1e-10);
        assert_eq!(part.hard_labels(), vec![0, 0, 1]);
    }

    #[test]
    fn single_group_gets_all_mass() {
        let mut params = two_symmetric_groups();
        params.proportions = DVector::from_element(1, 1.0);
        params.latent_means = DMatrix::zeros(0, 1);
        params.latent_covs = vec![DMatrix::zeros(0, 0)];
        params.noise_vars = DVector::from_element(1, 1.0);
        params.orientation = DMatrix::zeros(3, 0);
        let y = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.0, 4.0]);
        let (part, _) = e_step(&y, &params, None).unwrap();
        assert!(part.posteriors.iter().all(|&t| t == 1.0));
    }

    #[test]
    fn starved_group_is_reported() {
        let params = two_symmetric_groups();
        let y = DMatrix::from_row_slice(2, 3, &[-30.0, 0.0, 0.0, -31.0, 0.0, 0.0]);
        match e_step(&y, &params, None) {
            Err(Error::EmptyCluster { group, .. }) => assert_eq!(group, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_build_one_hot_partition() {
        let y = DMatrix::from_row_slice(4, 1, &[0.0, 2.0, 10.0, 12.0]);
        let part = SoftPartition::from_labels(&y, &[0, 0, 1, 1], 2).unwrap();
        assert_eq!(part.soft_counts.as_slice(), &[2.0, 2.0]);
        assert_eq!(part.soft_means.as_slice(), &[1.0, 11.0]);
        assert!(SoftPartition::from_labels(&y, &[0, 0, 2, 1], 2).is_err());
    }
}
