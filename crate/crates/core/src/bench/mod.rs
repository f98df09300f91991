//! Benchmark orchestration: configuration, per-seed evaluation, reports and the
//! command implementations behind the CLI.

pub mod commands;
pub mod config;
pub mod harness;
pub mod report;

pub use commands::{cmd_ablate, cmd_gen, cmd_heatmap, cmd_run, cmd_sweep, cmd_train};
pub use config::BenchConfig;
pub use harness::{SeedRun, Workspace};
pub use report::BenchReport;
