//! Penalized BIC and the grid searches over sparsity levels and sub-models.
//!
//! The BIC here is `ℓ − γ_e/2·ln n` (larger is better), where `γ_e` is the parameter
//! count minus the number of zero loadings.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::clustering_error;
use crate::em::{fit_fisher_em, FitConfig, FitResult, Method};
use crate::error::{Error, Result};
use crate::model::{effective_param_count, param_count, ModelVariant};
use crate::numerics::PenaltySpec;
use crate::sparse::{fit_sparse_from, SparseKind, SparseMethod};

/// BIC values closer than this are ties.
pub const BIC_TIE_TOL: f64 = 1e-9;

/// `ℓ − γ/2·ln n`.
pub fn bic_value(loglik: f64, effective_params: usize, n: usize) -> f64 {
    loglik - effective_params as f64 / 2.0 * (n as f64).ln()
}

/// BIC of a fit with the effective parameter count implied by its zero loadings.
pub fn penalized_bic(result: &FitResult, n: usize) -> Result<f64> {
    let p = &result.params;
    let gamma = effective_param_count(p.variant, p.k(), p.p(), p.d(), result.zero_loadings)?;
    Ok(bic_value(result.loglik, gamma, n))
}

/// Default sparsity grid `{0.05, 0.10, …, 1.0}`.
pub fn default_ratio_grid() -> Vec<f64> {
    (1..=20).map(|i| i as f64 * 0.05).collect()
}

#[derive(Debug, Clone)]
pub struct SelectionOptions {
    /// Sparsity ratios to try; ignored for plain Fisher-EM.
    pub ratio_grid: Vec<f64>,
    /// Replications; replication `r` uses seed `config.seed + r`.
    pub replications: usize,
    /// Worker threads; 0 uses rayon's default.
    pub jobs: usize,
    /// Template for the sparse method; its penalty is replaced by each grid ratio.
    pub inner_iters: usize,
    pub inner_tol: f64,
    pub gamma: f64,
    pub rho: f64,
    pub whiten: bool,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            ratio_grid: default_ratio_grid(),
            replications: 1,
            jobs: 0,
            inner_iters: 50,
            inner_tol: 1e-4,
            gamma: 1e-3,
            rho: 0.0,
            whiten: false,
        }
    }
}

impl SelectionOptions {
    pub(crate) fn validate(&self, method: Method) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidInput("replications must be >= 1".into()));
        }
        if method != Method::Fem {
            if self.ratio_grid.is_empty() {
                return Err(Error::InvalidInput("ratio grid is empty".into()));
            }
            if let Some(r) = self.ratio_grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
                return Err(Error::InvalidInput(format!("grid ratio {r} outside (0, 1]")));
            }
        }
        Ok(())
    }

    fn method(&self, kind: SparseKind, ratio: f64) -> SparseMethod {
        let mut m = SparseMethod::new(kind, PenaltySpec::ratio(ratio).with_ridge(self.rho));
        m.inner_iters = self.inner_iters;
        m.inner_tol = self.inner_tol;
        m.gamma = self.gamma;
        m.whiten = self.whiten;
        m
    }

    pub(crate) fn pool(&self) -> Result<rayon::ThreadPool> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.jobs)
            .build()
            .map_err(|e| Error::InvalidInput(format!("cannot start {} worker threads: {e}", self.jobs)))
    }
}

/// One fit in a search. Flat so that it serializes to one CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub variant: ModelVariant,
    pub method: Method,
    /// Sparsity ratio; empty for plain Fisher-EM.
    pub ratio: Option<f64>,
    pub replication: usize,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub loglik: Option<f64>,
    pub param_count: Option<usize>,
    pub effective_params: Option<usize>,
    pub zero_loadings: Option<usize>,
    pub selected_variables: Option<usize>,
    pub bic: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    /// Misclassification rate against reference labels, when supplied.
    pub clustering_error: Option<f64>,
    /// Iterations that broke orthonormality or posterior normalization.
    pub invariant_violations: Option<usize>,
}

impl CandidateRecord {
    fn failed(variant: ModelVariant, method: Method, ratio: Option<f64>, replication: usize, seed: u64, e: &Error) -> Self {
        Self {
            variant,
            method,
            ratio,
            replication,
            seed,
            ok: false,
            error: Some(e.to_string()),
            loglik: None,
            param_count: None,
            effective_params: None,
            zero_loadings: None,
            selected_variables: None,
            bic: None,
            iterations: None,
            converged: None,
            clustering_error: None,
            invariant_violations: None,
        }
    }

    fn from_fit(fit: &FitResult, ratio: Option<f64>, replication: usize, seed: u64, truth: Option<&[usize]>) -> Result<Self> {
        let p = &fit.params;
        let k = p.k();
        let err = match truth {
            Some(t) => {
                let kk = k.max(t.iter().max().map_or(0, |m| m + 1));
                Some(clustering_error(&fit.partition, t, kk)?)
            }
            None => None,
        };
        Ok(Self {
            variant: p.variant,
            method: fit.method,
            ratio,
            replication,
            seed,
            ok: true,
            error: None,
            loglik: Some(fit.loglik),
            param_count: Some(param_count(p.variant, k, p.p(), p.d())?),
            effective_params: Some(fit.effective_params),
            zero_loadings: Some(fit.zero_loadings),
            selected_variables: Some(fit.selected_variables.len()),
            bic: Some(fit.bic),
            iterations: Some(fit.iterations),
            converged: Some(fit.converged),
            clustering_error: err,
            invariant_violations: Some(fit.diagnostics.orthonormality_violations + fit.diagnostics.row_sum_violations),
        })
    }
}

/// Aggregate over the replications at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSummary {
    pub variant: ModelVariant,
    pub method: Method,
    pub ratio: Option<f64>,
    pub successes: usize,
    pub failures: usize,
    pub mean_bic: Option<f64>,
    pub mean_zero_loadings: Option<f64>,
    pub mean_selected_variables: Option<f64>,
    pub mean_clustering_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Winner {
    pub variant: ModelVariant,
    pub method: Method,
    pub ratio: Option<f64>,
    /// Index into `candidates` of the best fit at the winning grid point.
    pub candidate: usize,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub replications: usize,
    pub candidates: Vec<CandidateRecord>,
    pub grid: Vec<GridSummary>,
    pub winner: Winner,
    /// Stage-1 sub-model comparison, present for model searches.
    pub model_stage: Option<Vec<GridSummary>>,
}

fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn summarize(records: &[CandidateRecord], variant: ModelVariant, method: Method, ratio: Option<f64>) -> GridSummary {
    let at: Vec<&CandidateRecord> =
        records.iter().filter(|r| r.variant == variant && r.method == method && r.ratio == ratio).collect();
    let ok: Vec<&&CandidateRecord> = at.iter().filter(|r| r.ok).collect();
    GridSummary {
        variant,
        method,
        ratio,
        successes: ok.len(),
        failures: at.len() - ok.len(),
        mean_bic: mean(ok.iter().filter_map(|r| r.bic)),
        mean_zero_loadings: mean(ok.iter().filter_map(|r| r.zero_loadings.map(|z| z as f64))),
        mean_selected_variables: mean(ok.iter().filter_map(|r| r.selected_variables.map(|z| z as f64))),
        mean_clustering_error: mean(ok.iter().filter_map(|r| r.clustering_error)),
    }
}

/// Whether `(bic, zeros, params)` beats the incumbent: higher BIC, then more zero
/// loadings, then fewer parameters.
fn better(a: (f64, f64, usize), b: (f64, f64, usize)) -> bool {
    if (a.0 - b.0).abs() > BIC_TIE_TOL {
        return a.0 > b.0;
    }
    if a.1 != b.1 {
        return a.1 > b.1;
    }
    a.2 < b.2
}

fn best_candidate<'a>(records: impl Iterator<Item = (usize, &'a CandidateRecord)>) -> Option<usize> {
    let mut best: Option<(usize, (f64, f64, usize))> = None;
    for (i, r) in records {
        let (Some(bic), Some(z), Some(pc)) = (r.bic, r.zero_loadings, r.param_count) else { continue };
        let key = (bic, z as f64, pc);
        if best.is_none_or(|(_, b)| better(key, b)) {
            best = Some((i, key));
        }
    }
    best.map(|(i, _)| i)
}

impl SelectionReport {
    fn build(replications: usize, candidates: Vec<CandidateRecord>, points: &[(ModelVariant, Method, Option<f64>)]) -> Result<Self> {
        let grid: Vec<GridSummary> = points.iter().map(|&(v, m, r)| summarize(&candidates, v, m, r)).collect();
        let winner_idx = if replications == 1 {
            best_candidate(candidates.iter().enumerate())
        } else {
            let mut best: Option<(usize, (f64, f64, usize))> = None;
            for (g, s) in grid.iter().enumerate() {
                let (Some(bic), Some(z)) = (s.mean_bic, s.mean_zero_loadings) else { continue };
                let pc = candidates
                    .iter()
                    .find(|r| r.ok && r.variant == s.variant && r.ratio == s.ratio)
                    .and_then(|r| r.param_count)
                    .unwrap_or(usize::MAX);
                if best.is_none_or(|(_, b)| better((bic, z, pc), b)) {
                    best = Some((g, (bic, z, pc)));
                }
            }
            best.and_then(|(g, _)| {
                let s = &grid[g];
                best_candidate(
                    candidates
                        .iter()
                        .enumerate()
                        .filter(|(_, r)| r.variant == s.variant && r.method == s.method && r.ratio == s.ratio),
                )
            })
        };
        let idx = winner_idx.ok_or(Error::SelectionFailure)?;
        let c = &candidates[idx];
        let bic = if replications == 1 {
            c.bic.expect("winner succeeded")
        } else {
            grid.iter()
                .find(|s| s.variant == c.variant && s.method == c.method && s.ratio == c.ratio)
                .and_then(|s| s.mean_bic)
                .expect("winner grid point succeeded")
        };
        let winner = Winner { variant: c.variant, method: c.method, ratio: c.ratio, candidate: idx, bic };
        Ok(Self { replications, candidates, grid, winner, model_stage: None })
    }

    /// The highest-BIC successful candidate of each replication.
    pub fn trial_winners(&self) -> Vec<&CandidateRecord> {
        (0..self.replications)
            .filter_map(|rep| {
                best_candidate(self.candidates.iter().enumerate().filter(|(_, r)| r.replication == rep))
                    .map(|i| &self.candidates[i])
            })
            .collect()
    }

    pub fn winner_record(&self) -> &CandidateRecord {
        &self.candidates[self.winner.candidate]
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One CSV row per candidate fit.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.candidates {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn run_candidates(
    y: &DMatrix<f64>,
    config: &FitConfig,
    variant: ModelVariant,
    method: Method,
    ratios: &[f64],
    opts: &SelectionOptions,
    truth: Option<&[usize]>,
) -> Vec<CandidateRecord> {
    let seeds: Vec<u64> = (0..opts.replications).map(|r| config.seed.wrapping_add(r as u64)).collect();
    let configs: Vec<FitConfig> = seeds
        .iter()
        .map(|&s| FitConfig { variant, seed: s, ..config.clone() })
        .collect();
    let phase1: Vec<Result<FitResult>> = configs.par_iter().map(|c| fit_fisher_em(y, c)).collect();
    let Ok(kind) = SparseKind::try_from(method) else {
        return phase1
            .iter()
            .enumerate()
            .map(|(rep, r)| match r {
                Ok(fit) => CandidateRecord::from_fit(fit, None, rep, seeds[rep], truth)
                    .unwrap_or_else(|e| CandidateRecord::failed(variant, method, None, rep, seeds[rep], &e)),
                Err(e) => CandidateRecord::failed(variant, method, None, rep, seeds[rep], e),
            })
            .collect();
    };
    let jobs: Vec<(usize, f64)> =
        (0..opts.replications).flat_map(|rep| ratios.iter().map(move |&r| (rep, r))).collect();
    jobs.par_iter()
        .map(|&(rep, ratio)| {
            let fail = |e: &Error| CandidateRecord::failed(variant, method, Some(ratio), rep, seeds[rep], e);
            match &phase1[rep] {
                Err(e) => fail(e),
                Ok(p1) => fit_sparse_from(y, p1, &configs[rep], &opts.method(kind, ratio))
                    .and_then(|fit| CandidateRecord::from_fit(&fit, Some(ratio), rep, seeds[rep], truth))
                    .unwrap_or_else(|e| fail(&e)),
            }
        })
        .collect()
}

/// Fit every (ratio, replication) pair and keep the sparsity level with the best BIC.
///
/// With one replication the single best fit wins; with several, the grid point with the
/// best mean BIC over its successful fits. `truth` only adds clustering errors to the report.
pub fn select_sparsity(
    y: &DMatrix<f64>,
    config: &FitConfig,
    method: Method,
    opts: &SelectionOptions,
    truth: Option<&[usize]>,
) -> Result<SelectionReport> {
    opts.pool()?.install(|| select_sparsity_here(y, config, method, opts, truth))
}

/// `select_sparsity` on the current rayon pool.
pub(crate) fn select_sparsity_here(
    y: &DMatrix<f64>,
    config: &FitConfig,
    method: Method,
    opts: &SelectionOptions,
    truth: Option<&[usize]>,
) -> Result<SelectionReport> {
    opts.validate(method)?;
    crate::numerics::ensure_finite(y, "data")?;
    config.validate(y.nrows(), y.ncols())?;
    let ratios: Vec<Option<f64>> = if method == Method::Fem {
        vec![None]
    } else {
        opts.ratio_grid.iter().map(|&r| Some(r)).collect()
    };
    let plain: Vec<f64> = ratios.iter().flatten().copied().collect();
    let records = run_candidates(y, config, config.variant, method, &plain, opts, truth);
    let points: Vec<_> = ratios.iter().map(|&r| (config.variant, method, r)).collect();
    SelectionReport::build(opts.replications, records, &points)
}

/// Two stages: pick the sub-model with the best mean BIC without sparsity (ratio 1),
/// then select the sparsity level for that sub-model.
pub fn select_model(
    y: &DMatrix<f64>,
    config: &FitConfig,
    variants: &[ModelVariant],
    method: Method,
    opts: &SelectionOptions,
    truth: Option<&[usize]>,
) -> Result<SelectionReport> {
    if variants.is_empty() {
        return Err(Error::InvalidInput("no sub-models to compare".into()));
    }
    opts.validate(method)?;
    crate::numerics::ensure_finite(y, "data")?;
    config.validate(y.nrows(), y.ncols())?;
    let stage_ratio = (method != Method::Fem).then_some(1.0);
    let pool = opts.pool()?;
    let mut stage1 = Vec::new();
    for &v in variants {
        let plain: Vec<f64> = stage_ratio.into_iter().collect();
        stage1.extend(pool.install(|| run_candidates(y, config, v, method, &plain, opts, truth)));
    }
    let points: Vec<_> = variants.iter().map(|&v| (v, method, stage_ratio)).collect();
    let summaries: Vec<GridSummary> = points.iter().map(|&(v, m, r)| summarize(&stage1, v, m, r)).collect();
    let mut best: Option<(usize, (f64, f64, usize))> = None;
    for (i, s) in summaries.iter().enumerate() {
        let Some(bic) = s.mean_bic else { continue };
        let k = config.k;
        let pc = param_count(s.variant, k, y.ncols(), config.latent_dim()).unwrap_or(usize::MAX);
        if best.is_none_or(|(_, b)| better((bic, 0.0, pc), b)) {
            best = Some((i, (bic, 0.0, pc)));
        }
    }
    let (i, _) = best.ok_or(Error::SelectionFailure)?;
    let chosen = FitConfig { variant: summaries[i].variant, ..config.clone() };
    let mut report = pool.install(|| select_sparsity_here(y, &chosen, method, opts, truth))?;
    report.model_stage = Some(summaries);
    Ok(report)
}
