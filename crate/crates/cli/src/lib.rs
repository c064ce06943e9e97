//! Experiment orchestration for the `dreamlab` command.

pub mod analysis;
pub mod commands;
pub mod manifest;
pub mod svg;

pub use analysis::{Analysis, NoRunsFound, RunRecord};
pub use commands::{analyze, lm_toy, markov_shift, temp_sweep, RunOptions, VERSION_STAMP};
pub use manifest::{ExperimentManifest, LoadedManifest};
