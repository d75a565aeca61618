//! Batch pipeline around the `wxverify` library: archive ingestion, scoring,
//! calibration diagnostics, post-processing, skill reports and synthetic
//! experiments, each run leaving a manifest that repeats it.

pub mod archive;
pub mod config;
pub mod diagnose;
pub mod error;
pub mod manifest;
pub mod output;
pub mod postprocess;
pub mod report;
pub mod run;
pub mod scoring;
pub mod skill;

pub use config::{RunConfig, ScoreName, ScoreRequest, Task};
pub use error::{CliError, CliResult};
pub use run::{resolve, run, RunSummary};
