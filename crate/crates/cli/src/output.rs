//! Files written by an experiment: per-run traces, the summary and a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use crate::experiment::Outcome;
use crate::spec::ExperimentSpec;

#[derive(Serialize)]
struct RunSeeds {
    #[serde(skip_serializing_if = "Option::is_none")]
    target: Option<u64>,
    train: u64,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    created: String,
    workers: usize,
    spec: &'a ExperimentSpec,
    seeds: BTreeMap<&'a str, RunSeeds>,
    files: Vec<String>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes `runs/<name>.csv`, `runs/<name>.json`, `summary.json` and
/// `manifest.json` below `out_dir`. Only the manifest carries a timestamp.
pub fn write_outputs(out_dir: &Path, spec: &ExperimentSpec, outcome: &Outcome, workers: usize) -> Result<Vec<String>> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;
    let mut files = Vec::new();
    if !outcome.runs.is_empty() {
        let runs_dir = out_dir.join("runs");
        fs::create_dir_all(&runs_dir).with_context(|| format!("cannot create {}", runs_dir.display()))?;
        for run in &outcome.runs {
            let csv = format!("runs/{}.csv", run.name);
            write(&out_dir.join(&csv), &run.trace.to_csv())?;
            let json = format!("runs/{}.json", run.name);
            write(&out_dir.join(&json), &run.trace.to_json(&run.config))?;
            files.push(csv);
            files.push(json);
        }
    }
    write(&out_dir.join("summary.json"), &serde_json::to_string_pretty(&outcome.summary)?)?;
    files.push("summary.json".into());
    let seeds = outcome
        .runs
        .iter()
        .map(|r| {
            (
                r.name.as_str(),
                RunSeeds {
                    target: r.target_seed,
                    train: r.config.seed,
                },
            )
        })
        .collect();
    let manifest = Manifest {
        tool: "dqnn",
        version: env!("CARGO_PKG_VERSION"),
        created: chrono::Utc::now().to_rfc3339(),
        workers,
        spec,
        seeds,
        files: files.clone(),
    };
    write(&out_dir.join("manifest.json"), &serde_json::to_string_pretty(&manifest)?)?;
    files.push("manifest.json".into());
    Ok(files)
}
