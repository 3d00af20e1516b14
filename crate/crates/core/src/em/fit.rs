use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::fstep::f_step;
use super::mstep::m_step;
use super::partition::{e_step, SoftPartition};
use super::scatter::{compute_scatter, ScatterSet};
use crate::error::{Error, Result};
use crate::model::{effective_param_count, DlmParameters, ModelVariant};
use crate::numerics::PenaltySpec;
use crate::serde_mat;

/// Orthonormality and row-sum errors above this count as violations.
pub const INVARIANT_TOL: f64 = 1e-10;

/// Convergence rule for the EM loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    /// Stop when successive Aitken-extrapolated log-likelihoods differ by less than `conv_tol·n`.
    Aitken,
    /// Stop when `|ℓ_q − ℓ_{q−1}| < conv_tol·|ℓ_q|`.
    RelativeLoglik,
}

/// Starting partition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Init {
    /// Uniformly random labels, redrawn until no group is empty.
    RandomPartition,
    /// Lloyd's k-means from k-means++ seeds.
    KMeans,
    /// A user supplied 0-based labeling.
    Given(Vec<usize>),
}

impl FromStr for Init {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" | "random_partition" => Ok(Init::RandomPartition),
            "kmeans" | "k-means" => Ok(Init::KMeans),
            _ => Err(Error::InvalidInput(format!("unknown init '{s}', expected random or kmeans"))),
        }
    }
}

/// Which F-step produced a fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fem,
    Sfem1,
    Sfem2,
    Sfem3,
}

impl Method {
    pub fn code(&self) -> &'static str {
        match self {
            Method::Fem => "fem",
            Method::Sfem1 => "sfem1",
            Method::Sfem2 => "sfem2",
            Method::Sfem3 => "sfem3",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fem" => Ok(Method::Fem),
            "sfem1" => Ok(Method::Sfem1),
            "sfem2" => Ok(Method::Sfem2),
            "sfem3" => Ok(Method::Sfem3),
            _ => Err(Error::InvalidInput(format!("unknown method '{s}', expected fem, sfem1, sfem2 or sfem3"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub variant: ModelVariant,
    pub k: usize,
    /// Latent dimension; `None` means `K − 1`.
    pub d: Option<usize>,
    pub max_iters: usize,
    pub conv_tol: f64,
    pub stopping: Stopping,
    /// Ridge `γ` added to ill-conditioned covariances as `(γ/p)·tr(S)·I`.
    pub ridge_gamma: f64,
    pub seed: u64,
    pub init: Init,
    /// Fresh random starts allowed after a group empties.
    pub max_restarts: usize,
    /// Minimum soft count per group; `None` means `1e−3·n/K`.
    pub min_group_mass: Option<f64>,
    /// Independent starts; the one with the highest final log-likelihood is kept.
    pub n_starts: usize,
}

impl FitConfig {
    pub fn new(variant: ModelVariant, k: usize) -> Self {
        Self {
            variant,
            k,
            d: None,
            max_iters: 200,
            conv_tol: 1e-6,
            stopping: Stopping::Aitken,
            ridge_gamma: 1e-3,
            seed: 0,
            init: Init::RandomPartition,
            max_restarts: 10,
            min_group_mass: None,
            n_starts: 1,
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.d.unwrap_or(self.k.saturating_sub(1))
    }

    pub(crate) fn validate(&self, n: usize, p: usize) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if n <= self.k {
            return bad(format!("need more observations than groups, got n={n}, K={}", self.k));
        }
        if self.k - 1 >= p {
            return bad(format!("K-1 must be smaller than p, got K={}, p={p}", self.k));
        }
        if self.latent_dim() > self.k - 1 {
            return bad(format!("d must be at most K-1={}, got {}", self.k - 1, self.latent_dim()));
        }
        if self.max_iters == 0 || self.n_starts == 0 {
            return bad("max_iters and n_starts must be positive".into());
        }
        if !(self.conv_tol > 0.0) || !(self.ridge_gamma >= 0.0) {
            return bad("conv_tol must be positive and ridge_gamma nonnegative".into());
        }
        if let Init::Given(labels) = &self.init {
            if labels.len() != n {
                return bad(format!("{} initial labels for {n} observations", labels.len()));
            }
        }
        Ok(())
    }
}

/// Run-time checks recorded over every iteration of a fit.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Largest `‖UᵗU − I‖_max` seen.
    pub max_orthonormality_error: f64,
    /// Largest `|Σ_k t_ik − 1|` seen.
    pub max_row_sum_error: f64,
    pub orthonormality_violations: usize,
    pub row_sum_violations: usize,
    /// Inner sparse solvers that stopped at their iteration cap.
    pub inner_nonconvergence: usize,
    /// Noise variances raised to their floor.
    pub clamped_noise: usize,
    /// Iterations where `S` needed a ridge.
    pub ridged_iterations: usize,
}

impl Diagnostics {
    pub(crate) fn record_orientation(&mut self, u: &DMatrix<f64>) {
        let d = u.ncols();
        let err = (u.transpose() * u - DMatrix::<f64>::identity(d, d)).amax();
        self.max_orthonormality_error = self.max_orthonormality_error.max(err);
        if err > INVARIANT_TOL {
            self.orthonormality_violations += 1;
        }
    }

    pub(crate) fn record_partition(&mut self, part: &SoftPartition) {
        let err = part.max_row_sum_error();
        self.max_row_sum_error = self.max_row_sum_error.max(err);
        if err > INVARIANT_TOL {
            self.row_sum_violations += 1;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    pub method: Method,
    pub params: DlmParameters,
    #[serde(with = "serde_mat::matrix")]
    pub posteriors: DMatrix<f64>,
    /// MAP labels, 0-based.
    pub partition: Vec<usize>,
    pub loglik: f64,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub restarts: usize,
    pub penalty: Option<PenaltySpec>,
    pub requested_d: usize,
    pub zero_loadings: usize,
    pub selected_variables: Vec<usize>,
    pub effective_params: usize,
    /// `ℓ − γ_e/2·ln n`; larger is better.
    pub bic: f64,
    pub diagnostics: Diagnostics,
}

impl FitResult {
    pub fn n(&self) -> usize {
        self.posteriors.nrows()
    }
}

/// State carried between EM iterations, handed to an F-step.
pub(crate) struct FContext<'a> {
    pub scatter: &'a ScatterSet,
    pub diagnostics: &'a mut Diagnostics,
}

pub(crate) struct EmRun {
    pub params: DlmParameters,
    pub partition: SoftPartition,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub diagnostics: Diagnostics,
}

fn aitken_limit(l: &[f64]) -> f64 {
    let q = l.len() - 1;
    let (a2, a1, a0) = (l[q - 2], l[q - 1], l[q]);
    let denom = a1 - a2;
    if denom == 0.0 {
        return a0;
    }
    let a = (a0 - a1) / denom;
    if !(a < 1.0) || !a.is_finite() || (1.0 - a).abs() < 1e-12 {
        return a0;
    }
    a1 + (a0 - a1) / (1.0 - a)
}

/// Whether the log-likelihood trace has converged under `stopping`.
pub(crate) fn has_converged(trace: &[f64], stopping: Stopping, conv_tol: f64, n: usize) -> bool {
    let q = trace.len();
    if q < 2 {
        return false;
    }
    let step = trace[q - 1] - trace[q - 2];
    match stopping {
        Stopping::RelativeLoglik => step.abs() < conv_tol * trace[q - 1].abs(),
        Stopping::Aitken => {
            let tol = conv_tol * n as f64;
            if step.abs() < tol {
                return true;
            }
            if q < 4 {
                return false;
            }
            (aitken_limit(trace) - aitken_limit(&trace[..q - 1])).abs() < tol
        }
    }
}

/// The alternating loop scatter → F → M → E shared by every F-step.
pub(crate) fn run_em<F>(y: &DMatrix<f64>, start: SoftPartition, config: &FitConfig, mut fstep: F) -> Result<EmRun>
where
    F: FnMut(&mut FContext<'_>) -> Result<DMatrix<f64>>,
{
    let n = y.nrows();
    let mut diagnostics = Diagnostics::default();
    let mut partition = start;
    let mut trace = Vec::new();
    let mut converged = false;
    let mut params = None;
    for _ in 0..config.max_iters {
        let scatter = compute_scatter(y, &partition)?;
        let u = fstep(&mut FContext { scatter: &scatter, diagnostics: &mut diagnostics })?;
        diagnostics.record_orientation(&u);
        let m = m_step(&scatter, &partition, &u, config.variant)?;
        diagnostics.clamped_noise += m.clamped_noise;
        let (next, loglik) = e_step(y, &m.params, config.min_group_mass)?;
        diagnostics.record_partition(&next);
        partition = next;
        params = Some(m.params);
        trace.push(loglik);
        if has_converged(&trace, config.stopping, config.conv_tol, n) {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("EM stopped after {} iterations without converging", config.max_iters);
    }
    Ok(EmRun { params: params.expect("at least one iteration"), partition, trace, converged, diagnostics })
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    loop {
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let mut seen = vec![false; k];
        labels.iter().for_each(|&l| seen[l] = true);
        if seen.iter().all(|&s| s) {
            return labels;
        }
    }
}

fn sq_dist(y: &DMatrix<f64>, i: usize, c: &DVector<f64>) -> f64 {
    y.row(i).iter().zip(c.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// k-means seedings tried per call; the lowest within-group sum of squares wins.
const KMEANS_SEEDINGS: usize = 10;

/// Lloyd's k-means from the best of several k-means++ seedings. Returns 0-based labels
/// with no empty group.
pub fn kmeans_labels(y: &DMatrix<f64>, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<(Vec<usize>, f64)> = None;
    for _ in 0..KMEANS_SEEDINGS {
        let (labels, inertia) = kmeans_once(y, k, &mut rng);
        if best.as_ref().is_none_or(|(_, b)| inertia < *b) {
            best = Some((labels, inertia));
        }
    }
    best.expect("at least one seeding").0
}

fn kmeans_once(y: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> (Vec<usize>, f64) {
    let n = y.nrows();
    let mut centers: Vec<DVector<f64>> = vec![y.row(rng.random_range(0..n)).transpose()];
    while centers.len() < k {
        let d2: Vec<f64> = (0..n)
            .map(|i| centers.iter().map(|c| sq_dist(y, i, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    idx = i;
                    break;
                }
                target -= w;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centers.push(y.row(pick).transpose());
    }
    let mut labels = vec![0; n];
    for _ in 0..100 {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (g, c) in centers.iter().enumerate() {
                let d = sq_dist(y, i, c);
                if d < best_d {
                    best_d = d;
                    best = g;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        let mut counts = vec![0usize; k];
        let mut sums = vec![DVector::zeros(y.ncols()); k];
        for i in 0..n {
            counts[labels[i]] += 1;
            sums[labels[i]] += y.row(i).transpose();
        }
        for g in 0..k {
            if counts[g] == 0 {
                // Move the point farthest from its center into the empty group.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        sq_dist(y, a, &centers[labels[a]]).total_cmp(&sq_dist(y, b, &centers[labels[b]]))
                    })
                    .expect("n > 0");
                centers[g] = y.row(far).transpose();
                labels[far] = g;
                changed = true;
            } else {
                centers[g] = &sums[g] / counts[g] as f64;
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = (0..n).map(|i| sq_dist(y, i, &centers[labels[i]])).sum();
    (labels, inertia)
}

/// Labels for start `start` and attempt `attempt`; attempts past the first are random.
pub(crate) fn initial_labels(y: &DMatrix<f64>, config: &FitConfig, start: usize, attempt: usize) -> Result<Vec<usize>> {
    let n = y.nrows();
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream((start as u64) << 32 | attempt as u64);
    if attempt > 0 {
        return Ok(random_labels(&mut rng, n, k));
    }
    match &config.init {
        Init::RandomPartition => Ok(random_labels(&mut rng, n, k)),
        Init::KMeans => Ok(kmeans_labels(y, k, rng.random())),
        Init::Given(labels) => {
            let mut seen = vec![false; k];
            for &l in labels {
                if l >= k {
                    return Err(Error::InvalidInput(format!("initial label {l} out of range for K={k}")));
                }
                seen[l] = true;
            }
            if let Some(g) = seen.iter().position(|&s| !s) {
                return Err(Error::EmptyCluster { group: g, mass: 0.0, min_mass: 1.0 });
            }
            Ok(labels.clone())
        }
    }
}

fn restartable(e: &Error) -> bool {
    matches!(e, Error::EmptyCluster { .. } | Error::DegenerateModel(_))
}

/// Run `attempt_fn` from fresh starts, restarting on empty or degenerate groups.
/// Returns the best run over `n_starts` starts and the total restarts used.
pub(crate) fn with_restarts<F>(y: &DMatrix<f64>, config: &FitConfig, mut attempt_fn: F) -> Result<(EmRun, usize)>
where
    F: FnMut(SoftPartition) -> Result<EmRun>,
{
    let mut best: Option<EmRun> = None;
    let mut restarts = 0;
    for start in 0..config.n_starts {
        let mut attempt = 0;
        let run = loop {
            let labels = initial_labels(y, config, start, attempt)?;
            let part = SoftPartition::from_labels(y, &labels, config.k)?;
            match attempt_fn(part) {
                Ok(run) => break run,
                Err(e) if restartable(&e) && attempt < config.max_restarts => {
                    log::info!("restarting after: {e}");
                    attempt += 1;
                    restarts += 1;
                }
                Err(e) if restartable(&e) => {
                    return Err(Error::FitFailure { restarts: attempt, last: Box::new(e) });
                }
                Err(e) => return Err(e),
            }
        };
        let better = best.as_ref().is_none_or(|b| run.trace.last() > b.trace.last());
        if better {
            best = Some(run);
        }
    }
    Ok((best.expect("n_starts > 0"), restarts))
}

pub(crate) fn finish(
    method: Method,
    run: EmRun,
    restarts: usize,
    penalty: Option<PenaltySpec>,
    requested_d: usize,
    n: usize,
) -> Result<FitResult> {
    let params = run.params;
    let zero_loadings = params.zero_loadings();
    let effective_params = effective_param_count(params.variant, params.k(), params.p(), params.d(), zero_loadings)?;
    let loglik = *run.trace.last().expect("non-empty trace");
    let bic = loglik - effective_params as f64 / 2.0 * (n as f64).ln();
    Ok(FitResult {
        method,
        partition: run.partition.hard_labels(),
        posteriors: run.partition.posteriors,
        selected_variables: params.selected_variables(),
        params,
        loglik,
        iterations: run.trace.len(),
        loglik_trace: run.trace,
        converged: run.converged,
        restarts,
        penalty,
        requested_d,
        zero_loadings,
        effective_params,
        bic,
        diagnostics: run.diagnostics,
    })
}

/// Fisher-EM: alternate the discriminative F-step with the usual M- and E-steps.
pub fn fit_fisher_em(y: &DMatrix<f64>, config: &FitConfig) -> Result<FitResult> {
    crate::numerics::ensure_finite(y, "data")?;
    config.validate(y.nrows(), y.ncols())?;
    let d = config.latent_dim();
    let (run, restarts) = with_restarts(y, config, |start| {
        run_em(y, start, config, |ctx| {
            let f = f_step(ctx.scatter, d, config.ridge_gamma)?;
            if f.ridge_gamma > 0.0 {
                ctx.diagnostics.ridged_iterations += 1;
            }
            Ok(f.orientation)
        })
    })?;
    finish(Method::Fem, run, restarts, None, d, y.nrows())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    fn three_groups(seed: u64, n: usize, p: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let y = DMatrix::from_fn(n, p, |i, j| {
            let m = if j < 2 { [0.0, 4.0, -4.0][labels[i]] * if j == 0 { 1.0 } else { -0.5 } } else { 0.0 };
            m + rng.sample::<f64, _>(StandardNormal)
        });
        (y, labels)
    }

    #[test]
    fn aitken_rule_on_geometric_sequence() {
        // ℓ_q = 10 − 0.5^q has Aitken limit exactly 10 from the third term on.
        let trace: Vec<f64> = (0..4).map(|q| 10.0 - 0.5f64.powi(q)).collect();
        assert!((aitken_limit(&trace[..3]) - 10.0).abs() < 1e-12);
        assert!(has_converged(&trace, Stopping::Aitken, 1e-6, 10));
        assert!(!has_converged(&trace[..3], Stopping::Aitken, 1e-6, 10));
        assert!(has_converged(&[1.0, 1.0], Stopping::Aitken, 1e-6, 10));
        assert!(!has_converged(&[-100.0, -99.0], Stopping::RelativeLoglik, 1e-6, 10));
    }

    #[test]
    fn recovers_well_separated_groups() {
        let (y, truth) = three_groups(1, 150, 6);
        let mut config = FitConfig::new("DkBk".parse().unwrap(), 3);
        config.seed = 3;
        config.init = Init::KMeans;
        let fit = fit_fisher_em(&y, &config).unwrap();
        let err = crate::data::clustering_error(&fit.partition, &truth, 3).unwrap();
        assert!(err < 0.05, "error {err}");
        assert!(fit.converged);
        assert_eq!(fit.diagnostics.orthonormality_violations, 0);
        assert_eq!(fit.diagnostics.row_sum_violations, 0);
        assert_eq!(fit.zero_loadings, 0);
    }

    #[test]
    fn every_variant_fits_and_keeps_invariants() {
        let (y, _) = three_groups(2, 90, 5);
        for v in ModelVariant::ALL {
            let mut config = FitConfig::new(v, 3);
            config.seed = 11;
            let fit = fit_fisher_em(&y, &config).unwrap();
            assert!(fit.loglik.is_finite(), "{v}");
            assert_eq!(fit.diagnostics.orthonormality_violations, 0, "{v}");
            assert_eq!(fit.diagnostics.row_sum_violations, 0, "{v}");
            fit.params.validate().unwrap();
        }
    }

    #[test]
    fn distant_pair_is_separated_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let truth: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let y = DMatrix::from_fn(100, 5, |i, j| {
            let m = if j == 0 { if truth[i] == 0 { 10.0 } else { -10.0 } } else { 0.0 };
            m + rng.sample::<f64, _>(StandardNormal)
        });
        let fit = fit_fisher_em(&y, &FitConfig::new(ModelVariant::ALL[0], 2)).unwrap();
        assert_eq!(crate::data::clustering_error(&fit.partition, &truth, 2).unwrap(), 0.0);
    }

    #[test]
    fn single_group_fits_without_orientation() {
        let (y, _) = three_groups(3, 30, 4);
        let fit = fit_fisher_em(&y, &FitConfig::new(ModelVariant::ALL[0], 1)).unwrap();
        assert_eq!(fit.params.d(), 0);
        assert!(fit.partition.iter().all(|&l| l == 0));
        assert!(fit.converged && fit.iterations <= 3);
    }

    #[test]
    fn same_seed_same_result() {
        let (y, _) = three_groups(4, 60, 5);
        let mut config = FitConfig::new("AkB".parse().unwrap(), 3);
        config.seed = 99;
        let a = fit_fisher_em(&y, &config).unwrap();
        let b = fit_fisher_em(&y, &config).unwrap();
        assert_eq!(a.loglik_trace, b.loglik_trace);
        assert_eq!(a.partition, b.partition);
    }

    #[test]
    fn bad_configurations_are_rejected() {
        let (y, _) = three_groups(5, 20, 3);
        let mut config = FitConfig::new(ModelVariant::ALL[0], 3);
        config.d = Some(3);
        assert!(matches!(fit_fisher_em(&y, &config), Err(Error::InvalidInput(_))));
        let config = FitConfig::new(ModelVariant::ALL[0], 4);
        assert!(matches!(fit_fisher_em(&y, &config), Err(Error::InvalidInput(_))));
        let mut config = FitConfig::new(ModelVariant::ALL[0], 2);
        config.init = Init::Given(vec![0; 20]);
        assert!(matches!(fit_fisher_em(&y, &config), Err(Error::EmptyCluster { .. })));
    }
}
