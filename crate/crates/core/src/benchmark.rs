//! Simulation benchmark: each sparse method on repeated synthetic draws, with the
//! sparsity level chosen by BIC on every draw.

use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{simulate, SimSpec};
use crate::em::{FitConfig, Method};
use crate::error::{Error, Result};
use crate::selection::{select_sparsity_here, SelectionOptions};

/// The four named simulation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "n30mu06")]
    N30Mu06,
    #[serde(rename = "n30mu17")]
    N30Mu17,
    #[serde(rename = "n300mu06")]
    N300Mu06,
    #[serde(rename = "n300mu17")]
    N300Mu17,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::N30Mu06, Scenario::N30Mu17, Scenario::N300Mu06, Scenario::N300Mu17];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::N30Mu06 => "n30mu06",
            Scenario::N30Mu17 => "n30mu17",
            Scenario::N300Mu06 => "n300mu06",
            Scenario::N300Mu17 => "n300mu17",
        }
    }

    /// Simulation settings for replication seed `seed`.
    pub fn spec(&self, seed: u64) -> SimSpec {
        let (n, mu) = match self {
            Scenario::N30Mu06 => (30, 0.6),
            Scenario::N30Mu17 => (30, 1.7),
            Scenario::N300Mu06 => (300, 0.6),
            Scenario::N300Mu17 => (300, 1.7),
        };
        SimSpec { n, mu, seed, ..SimSpec::default() }
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown scenario '{s}', expected n30mu06, n30mu17, n300mu06 or n300mu17")))
    }
}

#[derive(Debug, Clone)]
pub struct BenchmarkConfig {
    /// Data settings; replication `r` uses simulation seed `spec.seed + r`.
    pub spec: SimSpec,
    pub scenario: Option<Scenario>,
    /// Fit settings; `k` is taken from `spec` and the seed is offset by the replication.
    pub fit: FitConfig,
    pub methods: Vec<Method>,
    pub replications: usize,
    /// Grid and sparse-method settings. Its `replications` field is ignored.
    pub selection: SelectionOptions,
}

impl BenchmarkConfig {
    pub fn new(scenario: Scenario, fit: FitConfig) -> Self {
        Self {
            spec: scenario.spec(0),
            scenario: Some(scenario),
            fit,
            methods: vec![Method::Sfem1, Method::Sfem2, Method::Sfem3],
            replications: 20,
            selection: SelectionOptions::default(),
        }
    }
}

/// Outcome of one method on one simulated draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub replication: usize,
    pub seed: u64,
    pub ratio: Option<f64>,
    pub bic: Option<f64>,
    pub clustering_error: Option<f64>,
    pub selected_variables: Option<usize>,
    pub invariant_violations: usize,
    /// Set when no grid point could be fitted.
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub error_mean: f64,
    pub error_sd: f64,
    pub selected_mean: f64,
    pub selected_sd: f64,
    pub failed_trials: usize,
    pub trials: Vec<Trial>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub scenario: Option<Scenario>,
    pub spec: SimSpec,
    pub variant: crate::model::ModelVariant,
    pub replications: usize,
    pub ratio_grid: Vec<f64>,
    pub methods: Vec<MethodSummary>,
    /// Invariant violations summed over every fit of every grid point.
    pub invariant_violations: usize,
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (m, 0.0);
    }
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v.sqrt())
}

pub fn run_benchmark(cfg: &BenchmarkConfig) -> Result<BenchmarkReport> {
    cfg.spec.validate()?;
    if cfg.replications == 0 || cfg.methods.is_empty() {
        return Err(Error::InvalidInput("benchmark needs at least one replication and one method".into()));
    }
    let opts = SelectionOptions { replications: 1, ..cfg.selection.clone() };
    for &m in &cfg.methods {
        opts.validate(m)?;
    }
    opts.pool()?.install(|| {
        let data: Vec<_> = (0..cfg.replications)
            .into_par_iter()
            .map(|r| simulate(&SimSpec { seed: cfg.spec.seed.wrapping_add(r as u64), ..cfg.spec.clone() }))
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, usize)> =
            (0..cfg.methods.len()).flat_map(|m| (0..cfg.replications).map(move |r| (m, r))).collect();
        let trials: Vec<(Trial, usize)> = jobs
            .par_iter()
            .map(|&(m, r)| {
                let seed = cfg.fit.seed.wrapping_add(r as u64);
                let fit = FitConfig { k: cfg.spec.k, seed, ..cfg.fit.clone() };
                let ds = &data[r];
                match select_sparsity_here(&ds.y, &fit, cfg.methods[m], &opts, ds.labels.as_deref()) {
                    Ok(rep) => {
                        let violations = rep.candidates.iter().filter_map(|c| c.invariant_violations).sum();
                        let w = rep.winner_record();
                        let trial = Trial {
                            replication: r,
                            seed,
                            ratio: w.ratio,
                            bic: w.bic,
                            clustering_error: w.clustering_error,
                            selected_variables: w.selected_variables,
                            invariant_violations: w.invariant_violations.unwrap_or(0),
                            failure: None,
                        };
                        (trial, violations)
                    }
                    Err(e) => (
                        Trial {
                            replication: r,
                            seed,
                            ratio: None,
                            bic: None,
                            clustering_error: None,
                            selected_variables: None,
                            invariant_violations: 0,
                            failure: Some(e.to_string()),
                        },
                        0,
                    ),
                }
            })
            .collect();
        let invariant_violations = trials.iter().map(|(_, v)| v).sum();
        let methods = cfg
            .methods
            .iter()
            .enumerate()
            .map(|(m, &method)| {
                let ts: Vec<Trial> = trials[m * cfg.replications..(m + 1) * cfg.replications]
                    .iter()
                    .map(|(t, _)| t.clone())
                    .collect();
                let errs: Vec<f64> = ts.iter().filter_map(|t| t.clustering_error).collect();
                let sel: Vec<f64> = ts.iter().filter_map(|t| t.selected_variables.map(|s| s as f64)).collect();
                let (error_mean, error_sd) = mean_sd(&errs);
                let (selected_mean, selected_sd) = mean_sd(&sel);
                let failed_trials = ts.iter().filter(|t| t.failure.is_some()).count();
                MethodSummary { method, error_mean, error_sd, selected_mean, selected_sd, failed_trials, trials: ts }
            })
            .collect();
        Ok(BenchmarkReport {
            scenario: cfg.scenario,
            spec: cfg.spec.clone(),
            variant: cfg.fit.variant,
            replications: cfg.replications,
            ratio_grid: opts.ratio_grid.clone(),
            methods,
            invariant_violations,
        })
    })
}

impl BenchmarkReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per method: mean ± sd of the clustering error and of the selected-variable count.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let name = self.scenario.map_or_else(|| format!("n={} mu={}", self.spec.n, self.spec.mu), |sc| sc.name().to_string());
        let _ = writeln!(s, "{name} ({} reps, model {})", self.replications, self.variant);
        let _ = writeln!(s, "{:<8} {:>16} {:>16} {:>7}", "method", "error", "variables", "failed");
        for m in &self.methods {
            let _ = writeln!(
                s,
                "{:<8} {:>7.2} ± {:<6.2} {:>7.1} ± {:<6.1} {:>7}",
                m.method.code(),
                m.error_mean,
                m.error_sd,
                m.selected_mean,
                m.selected_sd,
                m.failed_trials
            );
        }
        s
    }

    /// Flat CSV, one row per method.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["method", "error_mean", "error_sd", "selected_mean", "selected_sd", "failed_trials"])?;
        for m in &self.methods {
            w.write_record([
                m.method.code().to_string(),
                format!("{:?}", m.error_mean),
                format!("{:?}", m.error_sd),
                format!("{:?}", m.selected_mean),
                format!("{:?}", m.selected_sd),
                m.failed_trials.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
