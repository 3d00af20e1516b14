//! A short run of the simulation benchmark. The full setting uses 20 replications:
//!
//!     cargo run --release --example benchmark -- n300mu17 20

use sparse_fem::benchmark::{run_benchmark, BenchmarkConfig, Scenario};
use sparse_fem::em::FitConfig;

fn main() -> sparse_fem::Result<()> {
    let mut args = std::env::args().skip(1);
    let scenario: Scenario = args.next().as_deref().unwrap_or("n30mu17").parse()?;
    let reps = args.next().map_or(Ok(3), |s| s.parse()).expect("replications must be an integer");

    let mut cfg = BenchmarkConfig::new(scenario, FitConfig::new("AkB".parse()?, 3));
    cfg.replications = reps;
    let report = run_benchmark(&cfg)?;
    print!("{}", report.table());
    println!("invariant violations: {}", report.invariant_violations);
    Ok(())
}
