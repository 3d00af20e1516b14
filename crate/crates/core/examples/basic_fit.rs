//! Fit a plain Fisher-EM model to simulated data and compare with the true groups.
//!
//!     cargo run --example basic_fit

use sparse_fem::data::{clustering_error, simulate, SimSpec};
use sparse_fem::em::{fit_fisher_em, FitConfig, Init};
use sparse_fem::model::ModelVariant;

fn main() -> sparse_fem::Result<()> {
    let data = simulate(&SimSpec { n: 300, mu: 1.7, seed: 11, ..SimSpec::default() })?;
    let truth = data.labels.as_deref().expect("simulated data carry labels");

    let variant: ModelVariant = "AkB".parse()?;
    let mut config = FitConfig::new(variant, 3);
    config.init = Init::KMeans;
    let fit = fit_fisher_em(&data.y, &config)?;

    println!("model {variant}, K=3, d={}", fit.params.d());
    println!("log-likelihood {:.3} after {} iterations (converged: {})", fit.loglik, fit.iterations, fit.converged);
    println!("BIC {:.3} with {} free parameters", fit.bic, fit.effective_params);
    println!("proportions {:.3?}", fit.params.proportions.as_slice());
    println!("noise variance {:.3?}", fit.params.noise_vars.as_slice());
    println!("clustering error {:.3}", clustering_error(&fit.partition, truth, 3)?);
    Ok(())
}
