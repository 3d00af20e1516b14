//! Free-parameter counts of the twelve sub-models, and the reduction from zero loadings.
//!
//!     cargo run --example parameter_counts

use sparse_fem::model::{effective_param_count, param_count, ModelVariant};

fn main() -> sparse_fem::Result<()> {
    let (k, p, d) = (4, 100, 3);
    println!("K={k}, p={p}, d={d}");
    println!("{:<6} {:>8} {:>22}", "model", "params", "with 150 zero loadings");
    for v in ModelVariant::ALL {
        println!("{:<6} {:>8} {:>22}", v.code(), param_count(v, k, p, d)?, effective_param_count(v, k, p, d, 150)?);
    }
    Ok(())
}
