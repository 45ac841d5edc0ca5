//! Configuration, orchestration and result emission for the contraction
//! laboratory.

// `!(x > 0.0)` rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod emit;
pub mod record;
pub mod run;

pub use config::{parse_config, ConfigError, ExperimentConfig, OutputFormat, Pipeline};
pub use emit::{emit_results, EmitError};
pub use record::{Cell, ResultRecord, Table};
pub use run::{build_problem, build_truth, run_experiment};
