//! Write a dataset to CSV, read it back with its label column, cluster it and save
//! the assignments next to it.
//!
//!     cargo run --example csv_workflow

use std::fs::File;
use std::io::Write;

use sparse_fem::data::{clustering_error, read_csv, simulate, write_csv, LabelColumn, SimSpec};
use sparse_fem::em::{fit_fisher_em, FitConfig, Init};

fn main() -> sparse_fem::Result<()> {
    let dir = std::env::temp_dir().join("sparse-fem-csv-example");
    std::fs::create_dir_all(&dir)?;
    let input = dir.join("data.csv");
    write_csv(&input, &simulate(&SimSpec { n: 90, mu: 3.0, seed: 5, ..SimSpec::default() })?)?;

    let data = read_csv(&input, true, Some(&LabelColumn::Name("label".into())))?;
    println!("read {} rows x {} features from {}", data.n(), data.p(), input.display());

    let mut config = FitConfig::new("AkB".parse()?, 3);
    config.init = Init::KMeans;
    let fit = fit_fisher_em(&data.y, &config)?;
    println!("error against the label column: {:.3}", clustering_error(&fit.partition, data.labels.as_deref().unwrap(), 3)?);

    let output = dir.join("clusters.csv");
    let mut f = File::create(&output)?;
    writeln!(f, "observation,cluster")?;
    for (i, g) in fit.partition.iter().enumerate() {
        writeln!(f, "{},{}", i + 1, g + 1)?;
    }
    println!("wrote {}", output.display());
    Ok(())
}
