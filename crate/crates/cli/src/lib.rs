//! Experiment runner: JSON run configurations, single runs with checkpoint
//! assertions, parameter sweeps, and a reduced-scale invariant suite.

// Negated float comparisons are deliberate: they reject NaN too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checks;
pub mod config;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{Algorithm, RunConfig};
pub use run::{run, run_replication, run_to_dir, summary_from_csv, Summary};

/// Environment variable naming the default output directory.
pub const OUTPUT_DIR_ENV: &str = "RENEWAL_OUTPUT_DIR";
