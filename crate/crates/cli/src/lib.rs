//! Configuration-driven harness around the `wamct` solvers.

pub mod config;
pub mod experiment;
pub mod image_io;

pub use config::RunConfig;
pub use experiment::{compare_runs, run_experiment, simulate, CompareReport, Crossing, RunSummary};
