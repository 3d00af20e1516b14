//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::time::Instant;

use common::*;
use nalgebra::DVector;
use rand::Rng;
use sparse_fem::benchmark::{run_benchmark, BenchmarkConfig, BenchmarkReport, Scenario};
use sparse_fem::em::{FitConfig, Method};
use sparse_fem::model::{log_component_density, param_count, ModelVariant};
use sparse_fem::numerics::{lasso_solve, PenaltySpec};

const TABLE1: [usize; 12] = [337, 334, 319, 316, 325, 322, 317, 314, 316, 313, 314, 311];
const ERROR_MAX_N300_MU17: f64 = 0.10;
const COUNT_TARGETS_N300_MU17: [(Method, f64); 3] = [(Method::Sfem1, 10.2), (Method::Sfem2, 8.8), (Method::Sfem3, 5.6)];
const COUNT_BAND: f64 = 3.0;
const ERROR_BAND_N300_MU06: (f64, f64) = (0.33, 0.53);
const ERROR_MAX_N30_MU17: f64 = 0.30;
const COUNT_MAX: f64 = 9.0;
const SFEM3_ANGLE_TOL: f64 = 1e-6;
const UNPENALIZED_ANGLE_TOL: f64 = 1e-3;
const DENSITY_TOL: f64 = 1e-8;
const KKT_TOL: f64 = 1e-6;
const INSTANCES: usize = 100;
const DENSITY_INSTANCES: usize = 1000;
const LASSO_PROBLEMS: usize = 1000;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn table1() -> Outcome {
    let got: Vec<usize> = ModelVariant::ALL.iter().map(|&v| param_count(v, 4, 100, 3).unwrap()).collect();
    outcome(got == TABLE1, format!("{got:?}"))
}

fn benchmark(scenario: Scenario) -> BenchmarkReport {
    let t = Instant::now();
    let report = run_benchmark(&BenchmarkConfig::new(scenario, FitConfig::new("AkB".parse().unwrap(), 3))).unwrap();
    eprint!("{}", report.table());
    eprintln!("{} finished in {:.0?}", scenario.name(), t.elapsed());
    report
}

fn summary(report: &BenchmarkReport) -> String {
    report
        .methods
        .iter()
        .map(|m| format!("{} error {:.3} vars {:.1}", m.method.code(), m.error_mean, m.selected_mean))
        .collect::<Vec<_>>()
        .join("; ")
}

fn all_trials_ran(report: &BenchmarkReport) -> bool {
    report.methods.iter().all(|m| m.failed_trials == 0)
}

fn n300_mu17(report: &BenchmarkReport) -> Outcome {
    let pass = all_trials_ran(report)
        && report.methods.iter().all(|m| {
            let target = COUNT_TARGETS_N300_MU17.iter().find(|(k, _)| *k == m.method).unwrap().1;
            m.error_mean <= ERROR_MAX_N300_MU17 && (m.selected_mean - target).abs() <= COUNT_BAND
        });
    outcome(pass, summary(report))
}

fn n300_mu06(report: &BenchmarkReport) -> Outcome {
    let (lo, hi) = ERROR_BAND_N300_MU06;
    let pass = all_trials_ran(report)
        && report.methods.iter().all(|m| (lo..=hi).contains(&m.error_mean) && m.selected_mean <= COUNT_MAX);
    outcome(pass, summary(report))
}

fn n30_mu17(report: &BenchmarkReport) -> Outcome {
    let pass = all_trials_ran(report)
        && report.methods.iter().all(|m| m.error_mean <= ERROR_MAX_N30_MU17 && m.selected_mean <= COUNT_MAX);
    outcome(pass, summary(report))
}

fn sfem3_eigenspace() -> Outcome {
    let mut r = rng(5_000);
    let worst = (0..INSTANCES).map(|_| sfem3_inactive_angle(&mut r)).fold(0.0, f64::max);
    outcome(worst < SFEM3_ANGLE_TOL, format!("max angle {worst:.2e} over {INSTANCES} instances"))
}

fn unpenalized_subspaces() -> Outcome {
    let mut r = rng(6_000);
    let (mut w1, mut w2) = (0.0f64, 0.0f64);
    for _ in 0..INSTANCES {
        let (a1, a2) = unpenalized_angles(&mut r);
        w1 = w1.max(a1);
        w2 = w2.max(a2);
    }
    outcome(
        w1 < UNPENALIZED_ANGLE_TOL && w2 < UNPENALIZED_ANGLE_TOL,
        format!("max angle sfem1 {w1:.2e}, sfem2 {w2:.2e} over {INSTANCES} instances"),
    )
}

fn density_oracle() -> Outcome {
    let mut r = rng(7_000);
    let mut worst = 0.0f64;
    for _ in 0..DENSITY_INSTANCES {
        let k = r.random_range(2..=4usize);
        let p = r.random_range(k..=10);
        let d = r.random_range(1..k);
        let params = random_params(&mut r, k, p, d);
        let y = DVector::from_fn(p, |_, _| r.random_range(-4.0..4.0));
        let g = r.random_range(0..k);
        let got = log_component_density(&y, g, &params).unwrap();
        let want = dense_log_density(&y, g, &params);
        worst = worst.max((got - want).abs() / want.abs().max(1.0));
    }
    outcome(worst <= DENSITY_TOL, format!("max relative gap {worst:.2e} over {DENSITY_INSTANCES} instances"))
}

fn invariants(reports: &[&BenchmarkReport]) -> Outcome {
    let total: usize = reports.iter().map(|r| r.invariant_violations).sum();
    outcome(total == 0, format!("{total} violations across {} benchmark runs", reports.len()))
}

fn lasso_kkt() -> Outcome {
    let mut r = rng(9_000);
    let mut worst = 0.0f64;
    for _ in 0..LASSO_PROBLEMS {
        let (x, y, lambda, rho) = random_lasso(&mut r);
        let beta = lasso_solve(&x, &y, &PenaltySpec::lambda(lambda).with_ridge(rho)).unwrap();
        worst = worst.max(kkt_residual(&x, &y, &beta, lambda, rho));
    }
    outcome(worst <= KKT_TOL, format!("max subgradient residual {worst:.2e} over {LASSO_PROBLEMS} problems"))
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data.csv");
    let data = data.to_str().unwrap();
    let runs: Vec<Vec<&str>> = vec![
        vec!["simulate", "--n", "80", "--seed", "11"],
        vec!["fit", "--input", data, "--k", "3", "--seed", "4", "--posteriors"],
        vec!["fit", "--input", data, "--k", "3", "--method", "sfem2", "--ratio", "0.6", "--format", "csv"],
        vec!["select", "--input", data, "--k", "3", "--method", "sfem1", "--ratio-grid", "0.4,1.0", "--reps", "2"],
        vec!["benchmark", "--scenario", "n30mu17", "--reps", "2", "--ratio-grid", "0.5,1.0"],
    ];
    let (code, _, _) = cli(&["simulate", "--n", "80", "--seed", "11", "--out", data]);
    if code != 0 {
        return outcome(false, "could not write the input file".into());
    }
    let mut artifacts = 0;
    for args in &runs {
        let first = cli(args);
        let second = cli(args);
        if first.0 != 0 || first.1 != second.1 || first.1.is_empty() {
            return outcome(false, format!("`{}` differs between runs or failed", args.join(" ")));
        }
        artifacts += 1;
    }
    let file_a = dir.path().join("a.json");
    let file_b = dir.path().join("b.json");
    for f in [&file_a, &file_b] {
        cli(&["fit", "--input", data, "--k", "3", "--method", "sfem3", "--ratio", "0.4", "--out", f.to_str().unwrap()]);
    }
    let same_files = std::fs::read(&file_a).unwrap() == std::fs::read(&file_b).unwrap();
    outcome(same_files, format!("{} artifacts byte-identical across repeated runs", artifacts + 1))
}

fn main() {
    let mut results: Vec<(usize, &str, Outcome)> = Vec::new();
    results.push((1, "parameter counts", table1()));
    results.push((5, "sfem3 eigenspace", sfem3_eigenspace()));
    results.push((6, "unpenalized reductions", unpenalized_subspaces()));
    results.push((7, "density oracle", density_oracle()));
    results.push((9, "lasso optimality", lasso_kkt()));
    results.push((10, "CLI determinism", cli_determinism()));
    let n300_17 = benchmark(Scenario::N300Mu17);
    let n300_06 = benchmark(Scenario::N300Mu06);
    let n30_17 = benchmark(Scenario::N30Mu17);
    results.push((2, "n300mu17", n300_mu17(&n300_17)));
    results.push((3, "n300mu06", n300_mu06(&n300_06)));
    results.push((4, "n30mu17", n30_mu17(&n30_17)));
    results.push((8, "invariants", invariants(&[&n300_17, &n300_06, &n30_17])));
    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (id, name, o) in &results {
        println!("{} criterion {id} ({name}): {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
