//! Experiment specification files.

use anyhow::{bail, Context, Result};
use dqnn_core::cost::CostKind;
use dqnn_core::metrics::DiamondConfig;
use dqnn_core::network::{Architecture, ArchitectureSpec};
use dqnn_core::train::{AdamConfig, BatchConfig, TrainConfig, TrainMode};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Training settings shared by the training experiments. The cost and the
/// seed are filled in per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    #[serde(default = "default_mode")]
    pub mode: TrainMode,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Only read in random-state mode; defaults to 8 batches of 4 states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchConfig>,
    #[serde(default)]
    pub diamond_every: usize,
    #[serde(default)]
    pub diamond: DiamondConfig,
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

const TRAIN_KEYS: &[&str] = &[
    "mode",
    "iterations",
    "init_scale",
    "adam",
    "batch",
    "diamond_every",
    "diamond",
    "fd_eps",
];

fn default_mode() -> TrainMode {
    TrainMode::Choi
}

fn default_iterations() -> usize {
    1000
}

fn default_init_scale() -> f64 {
    1e-2
}

fn default_fd_eps() -> f64 {
    dqnn_core::cost::DEFAULT_FD_EPS
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            mode: default_mode(),
            iterations: default_iterations(),
            init_scale: default_init_scale(),
            adam: AdamConfig::default(),
            batch: None,
            diamond_every: 0,
            diamond: DiamondConfig::default(),
            fd_eps: default_fd_eps(),
        }
    }
}

impl TrainSettings {
    pub fn config(&self, cost: CostKind, seed: u64) -> TrainConfig {
        let batch = match self.mode {
            TrainMode::Choi => None,
            TrainMode::RandomState => Some(self.batch.unwrap_or_default()),
        };
        TrainConfig {
            mode: self.mode,
            cost,
            iterations: self.iterations,
            init_scale: self.init_scale,
            seed,
            adam: self.adam,
            batch,
            diamond_every: self.diamond_every,
            diamond: self.diamond,
            fd_eps: self.fd_eps,
        }
    }
}

fn default_trials() -> usize {
    50
}

fn default_tolerance() -> f64 {
    1e-5
}

fn default_abs_floor() -> f64 {
    1e-8
}

fn default_check_eps() -> f64 {
    1e-6
}

fn default_param_scale() -> f64 {
    3.0
}

fn analytic_costs() -> Vec<CostKind> {
    CostKind::ALL.into_iter().filter(|k| k.has_analytic_gradient()).collect()
}

fn default_alphas() -> Vec<f64> {
    vec![-1.0, -0.5, 0.0, 0.5, 1.0]
}

fn default_dimension() -> usize {
    2
}

fn default_cost() -> CostKind {
    CostKind::Hs
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradientCheckSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureSpec>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// relative tolerance between analytic and finite-difference gradients
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_abs_floor")]
    pub abs_floor: f64,
    #[serde(default = "default_check_eps")]
    pub eps: f64,
    /// parameters are drawn uniformly from `[-param_scale, param_scale]`
    #[serde(default = "default_param_scale")]
    pub param_scale: f64,
    #[serde(default = "analytic_costs")]
    pub costs: Vec<CostKind>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LearnRandomSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureSpec>,
    pub channel_count: usize,
    pub costs: Vec<CostKind>,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WernerSweepSpec {
    /// defaults to the minimal extended network on `dimension`
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub architecture: Option<ArchitectureSpec>,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    #[serde(default = "default_cost")]
    pub cost: CostKind,
    #[serde(default)]
    pub train: TrainSettings,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamReportSpec {
    pub architecture: ArchitectureSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ExperimentSpec {
    GradientCheck(GradientCheckSpec),
    LearnRandom(LearnRandomSpec),
    WernerSweep(WernerSweepSpec),
    ParamReport(ParamReportSpec),
}

fn allowed_keys(kind: &str) -> Option<&'static [&'static str]> {
    Some(match kind {
        "gradient-check" => &[
            "kind",
            "architecture",
            "trials",
            "tolerance",
            "abs_floor",
            "eps",
            "param_scale",
            "costs",
            "seed",
        ],
        "learn-random" => &["kind", "architecture", "channel_count", "costs", "train", "seed", "workers"],
        "werner-sweep" => &["kind", "architecture", "alphas", "dimension", "cost", "train", "seed", "workers"],
        "param-report" => &["kind", "architecture"],
        _ => return None,
    })
}

fn unknown_keys(obj: &serde_json::Map<String, Value>, allowed: &[&str], prefix: &str, out: &mut Vec<String>) {
    for key in obj.keys() {
        if !allowed.contains(&key.as_str()) {
            out.push(format!("{prefix}{key}"));
        }
    }
}

impl ExperimentSpec {
    /// Parses and validates a specification, reporting every unknown key of
    /// the top level and of the `train` block at once.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("spec is not valid JSON")?;
        let Some(obj) = value.as_object() else { bail!("spec must be a JSON object") };
        let Some(kind) = obj.get("kind").and_then(Value::as_str) else {
            bail!("spec needs a string field `kind`")
        };
        let Some(allowed) = allowed_keys(kind) else {
            bail!("unknown experiment kind `{kind}`; expected gradient-check, learn-random, werner-sweep or param-report")
        };
        let mut bad = Vec::new();
        unknown_keys(obj, allowed, "", &mut bad);
        if let Some(train) = obj.get("train").and_then(Value::as_object) {
            unknown_keys(train, TRAIN_KEYS, "train.", &mut bad);
        }
        if !bad.is_empty() {
            bail!("unknown keys in {kind} spec: {}", bad.join(", "));
        }
        let spec: Self = serde_json::from_value(value).context("invalid spec")?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Self::GradientCheck(_) => "gradient-check",
            Self::LearnRandom(_) => "learn-random",
            Self::WernerSweep(_) => "werner-sweep",
            Self::ParamReport(_) => "param-report",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::GradientCheck(s) => {
                architecture(s.architecture.as_ref(), 2)?;
                if s.trials < 1 {
                    bail!("trials must be at least 1");
                }
                if !(s.tolerance > 0.0 && s.abs_floor >= 0.0 && s.eps > 0.0 && s.param_scale >= 0.0) {
                    bail!("tolerance and eps must be positive, abs_floor and param_scale nonnegative");
                }
                if let Some(k) = s.costs.iter().find(|k| !k.has_analytic_gradient()) {
                    bail!("cost `{k}` has no analytic gradient to check");
                }
            }
            Self::LearnRandom(s) => {
                architecture(s.architecture.as_ref(), 2)?;
                if s.channel_count < 1 || s.costs.is_empty() {
                    bail!("learn-random needs channel_count >= 1 and at least one cost");
                }
                check_workers(s.workers)?;
                for &c in &s.costs {
                    s.train.config(c, s.seed).validate()?;
                }
            }
            Self::WernerSweep(s) => {
                architecture(s.architecture.as_ref(), s.dimension)?;
                if s.alphas.is_empty() {
                    bail!("werner-sweep needs at least one alpha");
                }
                if let Some(a) = s.alphas.iter().find(|a| !(-1.0..=1.0).contains(*a)) {
                    bail!("alpha {a} outside [-1, 1]");
                }
                check_workers(s.workers)?;
                s.train.config(s.cost, s.seed).validate()?;
            }
            Self::ParamReport(s) => {
                Architecture::from_spec(&s.architecture)?;
            }
        }
        Ok(())
    }

    pub fn set_seed(&mut self, seed: u64) {
        match self {
            Self::GradientCheck(s) => s.seed = seed,
            Self::LearnRandom(s) => s.seed = seed,
            Self::WernerSweep(s) => s.seed = seed,
            Self::ParamReport(_) => {}
        }
    }

    pub fn set_iterations(&mut self, iterations: usize) {
        match self {
            Self::LearnRandom(s) => s.train.iterations = iterations,
            Self::WernerSweep(s) => s.train.iterations = iterations,
            Self::GradientCheck(_) | Self::ParamReport(_) => {}
        }
    }

    pub fn set_workers(&mut self, workers: usize) {
        match self {
            Self::LearnRandom(s) => s.workers = Some(workers),
            Self::WernerSweep(s) => s.workers = Some(workers),
            Self::GradientCheck(_) | Self::ParamReport(_) => {}
        }
    }

    pub fn workers(&self) -> usize {
        match self {
            Self::LearnRandom(s) => s.workers.unwrap_or(1),
            Self::WernerSweep(s) => s.workers.unwrap_or(1),
            Self::GradientCheck(_) | Self::ParamReport(_) => 1,
        }
    }
}

fn check_workers(w: Option<usize>) -> Result<()> {
    if w == Some(0) {
        bail!("workers must be at least 1");
    }
    Ok(())
}

/// The architecture of a spec, or the minimal extended network on `d`.
pub fn architecture(spec: Option<&ArchitectureSpec>, d: usize) -> Result<Architecture> {
    match spec {
        Some(s) => Ok(Architecture::from_spec(s)?),
        None if d >= 1 => Ok(Architecture::minimal_extended(d)),
        None => bail!("dimension must be at least 1"),
    }
}

/// Reads an architecture file: either a bare architecture object or a
/// param-report spec.
pub fn read_architecture(text: &str) -> Result<ArchitectureSpec> {
    let value: Value = serde_json::from_str(text).context("architecture file is not valid JSON")?;
    if value.get("kind").is_some() {
        match ExperimentSpec::from_json(text)? {
            ExperimentSpec::ParamReport(s) => Ok(s.architecture),
            other => bail!("expected an architecture or a param-report spec, got kind `{}`", other.kind()),
        }
    } else {
        let spec: ArchitectureSpec = serde_json::from_value(value).context("invalid architecture")?;
        Architecture::from_spec(&spec)?;
        Ok(spec)
    }
}

