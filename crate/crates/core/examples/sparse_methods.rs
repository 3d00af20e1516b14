//! Run the three sparse F-steps from one Fisher-EM fit and show which variables survive.
//!
//!     cargo run --release --example sparse_methods

use sparse_fem::data::{clustering_error, simulate, SimSpec};
use sparse_fem::em::{fit_fisher_em, FitConfig, Init};
use sparse_fem::numerics::PenaltySpec;
use sparse_fem::sparse::{fit_sparse_from, SparseKind, SparseMethod};

fn main() -> sparse_fem::Result<()> {
    // Only the first 5 of 25 features separate the groups.
    let data = simulate(&SimSpec { n: 300, mu: 2.0, seed: 8, ..SimSpec::default() })?;
    let truth = data.labels.as_deref().unwrap();
    let mut config = FitConfig::new("AkB".parse()?, 3);
    config.init = Init::KMeans;
    config.seed = 4;

    let phase1 = fit_fisher_em(&data.y, &config)?;
    println!("fem    error {:.3}  all {} variables", clustering_error(&phase1.partition, truth, 3)?, data.p());

    for (kind, ratio) in [(SparseKind::Sfem1, 0.5), (SparseKind::Sfem2, 0.5), (SparseKind::Sfem3, 0.2)] {
        let method = SparseMethod::new(kind, PenaltySpec::ratio(ratio));
        let fit = fit_sparse_from(&data.y, &phase1, &config, &method)?;
        let names: Vec<String> = fit.selected_variables.iter().map(|j| format!("x{}", j + 1)).collect();
        println!(
            "{:<6} error {:.3}  ratio {ratio}  BIC {:.1}  keeps {}",
            fit.method.code(),
            clustering_error(&fit.partition, truth, 3)?,
            fit.bic,
            names.join(" ")
        );
    }
    Ok(())
}
