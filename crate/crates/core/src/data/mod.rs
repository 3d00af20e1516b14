//! Datasets, CSV ingestion, the synthetic benchmark generator and clustering metrics.
//!
//! Group labels are 0-based in memory and 1-based in CSV files.

mod csvio;
mod metrics;
mod simulate;

pub use csvio::{read_csv, read_csv_from, write_csv, write_csv_to, LabelColumn};
pub use metrics::clustering_error;
pub use simulate::{simulate, SimSpec};

use nalgebra::{DMatrix, DVector};

/// A numeric data matrix with optional feature names and evaluation labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    /// Observations, one per row.
    pub y: DMatrix<f64>,
    pub feature_names: Option<Vec<String>>,
    /// 0-based group labels, used only for evaluation.
    pub labels: Option<Vec<usize>>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>) -> Self {
        Self { y, feature_names: None, labels: None }
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    /// Number of distinct groups implied by the labels.
    pub fn label_groups(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }
}

/// Subtract column means; returns the centered matrix and the means.
pub fn center(y: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>) {
    let mean = y.row_mean().transpose();
    (crate::em::center_rows(y, &mean), mean)
}
