//! Scenario ingestion, commands and experiment harnesses for the
//! `impulsive` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod montecarlo;
pub mod report;
pub mod scenario;
pub mod sweep;

pub use commands::CliError;
pub use scenario::{parse_scenario, parse_scenario_str, Scenario};
