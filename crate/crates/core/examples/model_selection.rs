//! Choose a sub-model and a sparsity level by penalized BIC.
//!
//!     cargo run --release --example model_selection

use sparse_fem::data::{simulate, SimSpec};
use sparse_fem::em::{FitConfig, Init, Method};
use sparse_fem::model::ModelVariant;
use sparse_fem::selection::{select_model, SelectionOptions};

fn main() -> sparse_fem::Result<()> {
    let data = simulate(&SimSpec { n: 150, mu: 2.0, seed: 21, ..SimSpec::default() })?;
    let variants: Vec<ModelVariant> = ["DkBk", "DB", "AkjB", "AkB", "AB"].iter().map(|c| c.parse()).collect::<Result<_, _>>()?;
    let mut config = FitConfig::new(variants[0], 3);
    config.init = Init::KMeans;
    let opts = SelectionOptions { ratio_grid: vec![0.1, 0.2, 0.3, 0.5, 0.7, 1.0], ..SelectionOptions::default() };

    let report = select_model(&data.y, &config, &variants, Method::Sfem3, &opts, data.labels.as_deref())?;

    println!("sub-model search at ratio 1:");
    for s in report.model_stage.as_deref().unwrap_or_default() {
        println!("  {:<5} mean BIC {:>10.2}", s.variant.code(), s.mean_bic.unwrap_or(f64::NAN));
    }
    println!("sparsity search for {}:", report.winner.variant);
    for s in &report.grid {
        println!(
            "  ratio {:<4} BIC {:>10.2}  variables {:>4.1}",
            s.ratio.unwrap_or(1.0),
            s.mean_bic.unwrap_or(f64::NAN),
            s.mean_selected_variables.unwrap_or(f64::NAN)
        );
    }
    let w = report.winner_record();
    println!(
        "winner: {} at ratio {:?}, {} variables, error {:.3}",
        w.variant,
        w.ratio,
        w.selected_variables.unwrap_or(0),
        w.clustering_error.unwrap_or(f64::NAN)
    );
    Ok(())
}
