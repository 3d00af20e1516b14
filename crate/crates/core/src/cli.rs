//! Command-line front end. Reports go to standard output or `--out`; progress and
//! errors go to standard error.
//!
//! Exit codes: 0 on success, 1 when a run fails, 2 on bad flags.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::benchmark::{run_benchmark, BenchmarkConfig, Scenario};
use crate::data::{clustering_error, read_csv, simulate, write_csv, write_csv_to, Dataset, LabelColumn, SimSpec};
use crate::em::{fit_fisher_em, FitConfig, FitResult, Init, Method};
use crate::error::Error;
use crate::model::{ModelVariant, ZERO_LOADING_TOL};
use crate::numerics::{L1Level, PenaltySpec};
use crate::selection::{default_ratio_grid, select_model, select_sparsity, SelectionOptions};
use crate::sparse::{fit_sparse_fem, SparseKind, SparseMethod};

#[derive(Debug, Parser)]
#[command(name = "sparse-fem", version, about = "Discriminative latent mixture clustering with sparse Fisher-EM")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit one model to a CSV file.
    Fit(FitArgs),
    /// Choose the sub-model and sparsity level by BIC.
    Select(SelectArgs),
    /// Write a synthetic dataset.
    Simulate(SimulateArgs),
    /// Run the sparse methods on repeated synthetic draws.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InitArg {
    Random,
    Kmeans,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Fem,
    Sfem1,
    Sfem2,
    Sfem3,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fem => Method::Fem,
            MethodArg::Sfem1 => Method::Sfem1,
            MethodArg::Sfem2 => Method::Sfem2,
            MethodArg::Sfem3 => Method::Sfem3,
        }
    }
}

#[derive(Debug, Args)]
pub struct InputArgs {
    /// CSV file with one observation per row.
    #[arg(long)]
    pub input: PathBuf,
    /// The first row holds values, not column names.
    #[arg(long)]
    pub no_header: bool,
    /// Column with 1-based reference labels (header name or 0-based index), used for evaluation only.
    #[arg(long)]
    pub labels: Option<String>,
}

#[derive(Debug, Args)]
pub struct EmArgs {
    /// Number of groups.
    #[arg(long)]
    pub k: usize,
    /// Latent dimension, at most K-1 (default K-1).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    /// Aitken tolerance, scaled by n.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    /// Ridge on ill-conditioned covariance factorizations.
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    /// Ridge weight of the sfem2 regressions (0 picks a data-scaled default).
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    /// Independent starts; the best log-likelihood is kept.
    #[arg(long, default_value_t = 1)]
    pub starts: usize,
}

#[derive(Debug, Args)]
pub struct OutArgs {
    /// Output file (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Fem)]
    pub method: MethodArg,
    #[arg(long, default_value = "AkB")]
    pub model: String,
    /// Sparsity ratio in (0, 1]: l1 norm relative to the unpenalized solution.
    #[arg(long, conflicts_with = "lambda")]
    pub ratio: Option<f64>,
    /// Raw lasso penalty (sfem1 and sfem2).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Include the posterior probabilities in the report.
    #[arg(long)]
    pub posteriors: bool,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub em: EmArgs,
    #[command(flatten)]
    pub out: OutArgs,
    #[arg(long, value_enum, default_value_t = MethodArg::Sfem3)]
    pub method: MethodArg,
    /// Sub-models to compare: comma-separated codes or "all".
    #[arg(long, default_value = "AkB")]
    pub model: String,
    /// Comma-separated sparsity ratios (default 0.05, 0.10, ..., 1.0).
    #[arg(long)]
    pub ratio_grid: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub reps: usize,
    /// Worker threads (0: all cores).
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 30)]
    pub n: usize,
    #[arg(long, default_value_t = 25)]
    pub p: usize,
    /// Number of informative features.
    #[arg(long, default_value_t = 5)]
    pub q: usize,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, default_value_t = 1.7)]
    pub mu: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Omit the label column.
    #[arg(long)]
    pub no_labels: bool,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Named setting: n30mu06, n30mu17, n300mu06 or n300mu17.
    #[arg(long, conflicts_with_all = ["n", "mu"])]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Comma-separated methods (default sfem1,sfem2,sfem3).
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long, default_value = "AkB")]
    pub model: String,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub ratio_grid: Option<String>,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, value_enum, default_value_t = InitArg::Random)]
    pub init: InitArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format; a text table is printed to standard error either way.
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

/// Flag problems found before any computation.
struct Usage(String);

enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<Usage> for Failure {
    fn from(u: Usage) -> Self {
        Failure::Usage(u.0)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

#[derive(Serialize)]
struct ErrorBody<'a> {
    kind: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

/// Parse `args` (including the program name) and run. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Run(e)) => {
            let report = ErrorReport { error: ErrorBody { kind: e.kind(), message: e.to_string() } };
            eprintln!("{}", serde_json::to_string(&report).unwrap_or_else(|_| e.to_string()));
            1
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Fit(a) => cmd_fit(a),
        Command::Select(a) => cmd_select(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Benchmark(a) => cmd_benchmark(a),
    }
}

fn parse_model(s: &str) -> Result<ModelVariant, Usage> {
    s.parse().map_err(|e: Error| Usage(e.to_string()))
}

fn parse_list<T>(s: &str, what: &str, f: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, Usage> {
    let items: Vec<&str> = s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect();
    if items.is_empty() {
        return Err(Usage(format!("{what} is empty")));
    }
    items.into_iter().map(|x| f(x).ok_or_else(|| Usage(format!("invalid {what} entry '{x}'")))).collect()
}

fn parse_grid(s: Option<&str>) -> Result<Vec<f64>, Usage> {
    let Some(s) = s else { return Ok(default_ratio_grid()) };
    let grid = parse_list(s, "ratio grid", |x| x.parse::<f64>().ok())?;
    if let Some(r) = grid.iter().find(|&&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Usage(format!("ratio grid value {r} is outside (0, 1]")));
    }
    Ok(grid)
}

fn init(i: InitArg) -> Init {
    match i {
        InitArg::Random => Init::RandomPartition,
        InitArg::Kmeans => Init::KMeans,
    }
}

fn fit_config(variant: ModelVariant, em: &EmArgs) -> Result<FitConfig, Usage> {
    if em.k == 0 {
        return Err(Usage("--k must be at least 1".into()));
    }
    if let Some(d) = em.d {
        if d + 1 > em.k {
            return Err(Usage(format!("--d must be at most K-1={}", em.k - 1)));
        }
    }
    if !(em.tol > 0.0) || !(em.gamma >= 0.0) || !(em.rho >= 0.0) || em.max_iters == 0 || em.starts == 0 {
        return Err(Usage("--tol, --max-iters and --starts must be positive; --gamma and --rho nonnegative".into()));
    }
    Ok(FitConfig {
        d: em.d,
        seed: em.seed,
        max_iters: em.max_iters,
        conv_tol: em.tol,
        ridge_gamma: em.gamma,
        init: init(em.init),
        n_starts: em.starts,
        ..FitConfig::new(variant, em.k)
    })
}

fn load(input: &InputArgs) -> CliResult<Dataset> {
    let label = input.labels.as_deref().map(LabelColumn::parse);
    let path = &input.input;
    read_csv(path, !input.no_header, label.as_ref()).map_err(|e| match e {
        Error::Io(io) => Failure::Run(Error::Io(io::Error::new(io.kind(), format!("{}: {io}", path.display())))),
        other => Failure::Run(other),
    })
}

fn sink(out: Option<&Path>) -> CliResult<Box<dyn Write>> {
    Ok(match out {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Io(io::Error::new(e.kind(), format!("{}: {e}", p.display())))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn emit(out: Option<&Path>, body: &str) -> CliResult<()> {
    let mut w = sink(out)?;
    w.write_all(body.as_bytes())?;
    if !body.ends_with('\n') {
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitPenalty {
    ratio: Option<f64>,
    lambda: Option<f64>,
    rho: f64,
}

#[derive(Serialize)]
struct FitReport<'a> {
    model: ModelVariant,
    method: Method,
    penalty: Option<FitPenalty>,
    n: usize,
    p: usize,
    k: usize,
    d: usize,
    loglik: f64,
    bic: f64,
    effective_params: usize,
    zero_loadings: usize,
    iterations: usize,
    converged: bool,
    restarts: usize,
    /// Names of the selected features (or 1-based indices as strings without a header).
    selected_variables: Vec<String>,
    /// `p×d`, one row per feature.
    loadings: Vec<Vec<f64>>,
    /// `|u| > 1e-8`, same layout as `loadings`.
    support: Vec<Vec<bool>>,
    /// 1-based cluster of each observation.
    partition: Vec<usize>,
    posteriors: Option<Vec<Vec<f64>>>,
    clustering_error: Option<f64>,
    loglik_trace: &'a [f64],
    diagnostics: &'a crate::em::Diagnostics,
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn feature_name(ds: &Dataset, j: usize) -> String {
    ds.feature_names.as_ref().and_then(|n| n.get(j).cloned()).unwrap_or_else(|| (j + 1).to_string())
}

fn cmd_fit(a: FitArgs) -> CliResult<()> {
    let variant = parse_model(&a.model)?;
    let config = fit_config(variant, &a.em)?;
    let method: Method = a.method.into();
    let penalty = match (method, a.ratio, a.lambda) {
        (Method::Fem, None, None) => None,
        (Method::Fem, _, _) => return Err(Usage("--ratio and --lambda apply to sparse methods only".into()).into()),
        (_, None, None) => return Err(Usage("sparse methods need --ratio or --lambda".into()).into()),
        (Method::Sfem3, None, Some(_)) => {
            return Err(Usage("sfem3 is controlled by --ratio; --lambda applies to sfem1 and sfem2".into()).into())
        }
        (_, Some(r), None) if !(r > 0.0 && r <= 1.0) => return Err(Usage(format!("--ratio {r} is outside (0, 1]")).into()),
        (_, None, Some(l)) if !(l >= 0.0) => return Err(Usage(format!("--lambda {l} must be nonnegative")).into()),
        (_, Some(r), None) => Some(PenaltySpec::ratio(r).with_ridge(a.em.rho)),
        (_, None, Some(l)) => Some(PenaltySpec::lambda(l).with_ridge(a.em.rho)),
        (_, Some(_), Some(_)) => unreachable!("clap rejects --ratio with --lambda"),
    };
    let ds = load(&a.input)?;
    let fit: FitResult = match penalty {
        None => fit_fisher_em(&ds.y, &config)?,
        Some(pen) => {
            let mut m = SparseMethod::new(SparseKind::try_from(method)?, pen);
            m.gamma = a.em.gamma;
            fit_sparse_fem(&ds.y, &config, &m)?
        }
    };
    let err = match &ds.labels {
        Some(t) => Some(clustering_error(&fit.partition, t, fit.params.k().max(ds.label_groups().unwrap_or(0)))?),
        None => None,
    };
    match a.out.format {
        Format::Json => {
            let u = &fit.params.orientation;
            let report = FitReport {
                model: variant,
                method,
                penalty: penalty.map(|p| FitPenalty {
                    ratio: matches!(p.level, L1Level::Ratio(_)).then(|| a.ratio).flatten(),
                    lambda: matches!(p.level, L1Level::Lambda(_)).then(|| a.lambda).flatten(),
                    rho: p.rho_ridge,
                }),
                n: ds.n(),
                p: ds.p(),
                k: fit.params.k(),
                d: fit.params.d(),
                loglik: fit.loglik,
                bic: fit.bic,
                effective_params: fit.effective_params,
                zero_loadings: fit.zero_loadings,
                iterations: fit.iterations,
                converged: fit.converged,
                restarts: fit.restarts,
                selected_variables: fit.selected_variables.iter().map(|&j| feature_name(&ds, j)).collect(),
                loadings: rows(u),
                support: u.row_iter().map(|r| r.iter().map(|v| v.abs() > ZERO_LOADING_TOL).collect()).collect(),
                partition: fit.partition.iter().map(|g| g + 1).collect(),
                posteriors: a.posteriors.then(|| rows(&fit.posteriors)),
                clustering_error: err,
                loglik_trace: &fit.loglik_trace,
                diagnostics: &fit.diagnostics,
            };
            emit(a.out.out.as_deref(), &serde_json::to_string_pretty(&report).map_err(Error::from)?)?;
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(sink(a.out.out.as_deref())?);
            let k = fit.params.k();
            let mut header = vec!["observation".to_string(), "cluster".to_string()];
            header.extend((1..=k).map(|g| format!("posterior_{g}")));
            w.write_record(&header).map_err(Error::from)?;
            for (i, g) in fit.partition.iter().enumerate() {
                let mut rec = vec![(i + 1).to_string(), (g + 1).to_string()];
                rec.extend(fit.posteriors.row(i).iter().map(|v| format!("{v:?}")));
                w.write_record(&rec).map_err(Error::from)?;
            }
            w.flush()?;
        }
    }
    eprintln!(
        "{} {} K={} d={}: loglik {:.4}, BIC {:.4}, {} iterations{}, {} of {} variables selected",
        method,
        variant,
        fit.params.k(),
        fit.params.d(),
        fit.loglik,
        fit.bic,
        fit.iterations,
        if fit.converged { "" } else { " (not converged)" },
        fit.selected_variables.len(),
        ds.p()
    );
    Ok(())
}

fn cmd_select(a: SelectArgs) -> CliResult<()> {
    let variants: Vec<ModelVariant> = if a.model.eq_ignore_ascii_case("all") {
        ModelVariant::ALL.to_vec()
    } else {
        parse_list(&a.model, "model list", |x| x.parse().ok())?
    };
    let config = fit_config(variants[0], &a.em)?;
    let method: Method = a.method.into();
    let grid = parse_grid(a.ratio_grid.as_deref())?;
    if a.reps == 0 {
        return Err(Usage("--reps must be at least 1".into()).into());
    }
    let opts = SelectionOptions {
        ratio_grid: grid,
        replications: a.reps,
        jobs: a.jobs,
        gamma: a.em.gamma,
        rho: a.em.rho,
        ..SelectionOptions::default()
    };
    let ds = load(&a.input)?;
    let truth = ds.labels.as_deref();
    let report = if variants.len() == 1 {
        select_sparsity(&ds.y, &config, method, &opts, truth)?
    } else {
        select_model(&ds.y, &config, &variants, method, &opts, truth)?
    };
    match a.out.format {
        Format::Json => emit(a.out.out.as_deref(), &report.to_json()?)?,
        Format::Csv => {
            let mut w = sink(a.out.out.as_deref())?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    let w = &report.winner;
    let rec = report.winner_record();
    eprintln!(
        "winner: {} {} ratio {} BIC {:.4}, {} variables selected",
        w.variant,
        w.method,
        w.ratio.map_or("-".to_string(), |r| r.to_string()),
        w.bic,
        rec.selected_variables.unwrap_or(0)
    );
    Ok(())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let spec = SimSpec { n: a.n, p: a.p, q: a.q, k: a.k, mu: a.mu, seed: a.seed };
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let mut ds = simulate(&spec)?;
    if a.no_labels {
        ds.labels = None;
    }
    match &a.out {
        Some(p) => write_csv(p, &ds)?,
        None => {
            let mut w = sink(None)?;
            write_csv_to(&mut w, &ds)?;
            w.flush()?;
        }
    }
    eprintln!("simulated {} observations x {} features, {} groups", ds.n(), ds.p(), spec.k);
    Ok(())
}

fn cmd_benchmark(a: BenchmarkArgs) -> CliResult<()> {
    let variant = parse_model(&a.model)?;
    let (scenario, mut spec) = match &a.scenario {
        Some(s) => {
            let sc: Scenario = s.parse().map_err(|e: Error| Usage(e.to_string()))?;
            (Some(sc), sc.spec(a.seed))
        }
        None => {
            let d = SimSpec::default();
            (None, SimSpec { n: a.n.unwrap_or(d.n), mu: a.mu.unwrap_or(d.mu), seed: a.seed, ..d })
        }
    };
    spec.seed = a.seed;
    spec.validate().map_err(|e| Usage(e.to_string()))?;
    let methods = match &a.method {
        Some(m) => parse_list(m, "method list", |x| x.parse::<Method>().ok().filter(|m| *m != Method::Fem))?,
        None => vec![Method::Sfem1, Method::Sfem2, Method::Sfem3],
    };
    if a.reps == 0 {
        return Err(Usage("--reps must be at least 1".into()).into());
    }
    let em = EmArgs {
        k: spec.k,
        d: None,
        seed: a.seed,
        max_iters: a.max_iters,
        tol: a.tol,
        gamma: a.gamma,
        rho: a.rho,
        init: a.init,
        starts: 1,
    };
    let fit = fit_config(variant, &em)?;
    let cfg = BenchmarkConfig {
        spec,
        scenario,
        fit,
        methods,
        replications: a.reps,
        selection: SelectionOptions {
            ratio_grid: parse_grid(a.ratio_grid.as_deref())?,
            jobs: a.jobs,
            gamma: a.gamma,
            rho: a.rho,
            ..SelectionOptions::default()
        },
    };
    let report = run_benchmark(&cfg)?;
    match a.format {
        Format::Json => emit(a.out.as_deref(), &report.to_json()?)?,
        Format::Csv => {
            let mut w = sink(a.out.as_deref())?;
            report.write_csv(&mut w)?;
            w.flush()?;
        }
    }
    eprint!("{}", report.table());
    Ok(())
}
