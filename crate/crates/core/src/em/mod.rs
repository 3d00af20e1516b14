//! The Fisher-EM algorithm: E-step, soft scatter matrices, the discriminative
//! F-step and the closed-form M-step for every DLM sub-model.

mod fit;
mod fstep;
mod mstep;
mod partition;
mod scatter;

pub use fit::{fit_fisher_em, kmeans_labels, Diagnostics, FitConfig, FitResult, Init, Method, Stopping, INVARIANT_TOL};
pub use fstep::{f_step, fisher_criterion, FStep};
pub use mstep::{m_step, q_value, MStep, NOISE_FLOOR_REL};
pub use partition::{default_min_group_mass, e_step, SoftPartition};
pub use scatter::{compute_scatter, ScatterSet};

pub(crate) use fit::{finish, run_em};

pub(crate) use scatter::center_rows;
