//! Experiment harness behind the `dlab` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod output;

pub use commands::{demo_main2, execute, plan_claims, Command, RunOptions};
pub use config::ExperimentConfig;
pub use output::{Format, Report};
