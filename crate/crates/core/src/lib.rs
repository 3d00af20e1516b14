pub mod benchmark;
pub mod cli;
pub mod data;
pub mod em;
pub mod error;
pub mod model;
pub mod numerics;
pub mod selection;
pub mod sparse;
mod serde_mat;

pub use error::{Error, Result};
