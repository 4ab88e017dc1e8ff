//! Experiment runner for dissipative quantum neural networks.
//!
//! An experiment is described by a JSON spec (see [`spec::ExperimentSpec`]).
//! [`run`] executes it and writes per-run CSV/JSON traces, a summary of
//! per-iteration means and a manifest with the echoed spec and all seeds.

pub mod experiment;
pub mod output;
pub mod spec;

use std::path::Path;

use anyhow::Result;

pub use experiment::{execute, Outcome, Summary};
pub use spec::ExperimentSpec;

/// Executes `spec` and, when `out_dir` is given, writes its outputs there.
pub fn run(spec: &ExperimentSpec, out_dir: Option<&Path>) -> Result<Outcome> {
    let outcome = execute(spec)?;
    if let Some(dir) = out_dir {
        output::write_outputs(dir, spec, &outcome, spec.workers())?;
    }
    Ok(outcome)
}
