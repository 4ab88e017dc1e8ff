//! Experiment execution. Everything here is deterministic given the spec.

use anyhow::{anyhow, bail, Context, Result};
use dqnn_core::channels::{derive_seed, random_channel, random_density_hs, rng_from_seed, werner_channel, Channel};
use dqnn_core::cost::{evaluate, gradient_term, CostKind, GradMode, GradRequest, GradTerm};
use dqnn_core::isometry::active_param_count;
use dqnn_core::network::{Architecture, Network};
use dqnn_core::train::{train, TrainConfig, TrainingTrace};
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::spec::{architecture, ExperimentSpec, GradientCheckSpec, LearnRandomSpec, ParamReportSpec, WernerSweepSpec};

const TARGET_STREAM: u64 = 1;
const TRAIN_STREAM: u64 = 2;

/// One training run of an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub name: String,
    pub target_seed: Option<u64>,
    pub config: TrainConfig,
    pub trace: TrainingTrace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostCheck {
    pub cost: CostKind,
    pub trials: usize,
    pub checked: usize,
    /// terms skipped because output and target coincided
    pub skipped: usize,
    pub failures: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientCheckReport {
    pub tolerance: f64,
    pub abs_floor: f64,
    pub eps: f64,
    pub results: Vec<CostCheck>,
}

impl GradientCheckReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.pass)
    }
}

/// Means over a group of runs sharing one diamond schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub runs: usize,
    /// mean cost per iteration
    pub mean_cost: Vec<f64>,
    pub diamond_iterations: Vec<usize>,
    pub mean_diamond: Vec<f64>,
    pub final_diamonds: Vec<f64>,
    pub mean_final_diamond: Option<f64>,
    pub median_final_diamond: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostGroup {
    pub cost: CostKind,
    pub run_names: Vec<String>,
    #[serde(flatten)]
    pub series: SeriesSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnRandomSummary {
    pub channel_count: usize,
    pub groups: Vec<CostGroup>,
}

impl LearnRandomSummary {
    pub fn group(&self, cost: CostKind) -> Option<&CostGroup> {
        self.groups.iter().find(|g| g.cost == cost)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaResult {
    pub alpha: f64,
    pub run_name: String,
    pub diamond: Vec<(usize, f64)>,
    pub final_cost: f64,
    /// iteration `i` maximizing `cost[i] - cost[i + 1]`
    pub steepest_descent: usize,
}

impl AlphaResult {
    pub fn diamond_at(&self, iteration: usize) -> Option<f64> {
        self.diamond.iter().find(|&&(i, _)| i == iteration).map(|&(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WernerSummary {
    pub dimension: usize,
    pub cost: CostKind,
    pub alphas: Vec<AlphaResult>,
    #[serde(flatten)]
    pub series: SeriesSummary,
}

impl WernerSummary {
    pub fn alpha(&self, alpha: f64) -> Option<&AlphaResult> {
        self.alphas.iter().find(|a| a.alpha == alpha)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerceptronRow {
    pub index: usize,
    pub source_layer: usize,
    pub added: usize,
    pub d_in: usize,
    pub d_out: usize,
    pub active: usize,
    /// entries of a full `d_out x d_out` unitary parametrization
    pub unitary: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamReport {
    pub rows: Vec<PerceptronRow>,
    pub total_active: usize,
    pub total_unitary: usize,
}

impl ParamReport {
    pub fn table(&self) -> String {
        let mut out = String::from("perceptron  source  added  d_in  d_out  active  unitary\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:>10}  {:>6}  {:>5}  {:>4}  {:>5}  {:>6}  {:>7}\n",
                r.index, r.source_layer, r.added, r.d_in, r.d_out, r.active, r.unitary
            ));
        }
        out.push_str(&format!("{:>10}  {:>6}  {:>5}  {:>4}  {:>5}  {:>6}  {:>7}\n", "total", "", "", "", "", self.total_active, self.total_unitary));
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Summary {
    GradientCheck(GradientCheckReport),
    LearnRandom(LearnRandomSummary),
    WernerSweep(WernerSummary),
    ParamReport(ParamReport),
}

/// Result of an experiment, before anything is written to disk.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub summary: Summary,
    pub runs: Vec<RunRecord>,
}

pub fn execute(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    Ok(match spec {
        ExperimentSpec::GradientCheck(s) => Outcome {
            summary: Summary::GradientCheck(gradient_check(s)?),
            runs: Vec::new(),
        },
        ExperimentSpec::LearnRandom(s) => {
            let (summary, runs) = learn_random(s)?;
            Outcome {
                summary: Summary::LearnRandom(summary),
                runs,
            }
        }
        ExperimentSpec::WernerSweep(s) => {
            let (summary, runs) = werner_sweep(s)?;
            Outcome {
                summary: Summary::WernerSweep(summary),
                runs,
            }
        }
        ExperimentSpec::ParamReport(s) => Outcome {
            summary: Summary::ParamReport(param_report(s)?),
            runs: Vec::new(),
        },
    })
}

pub fn param_report(spec: &ParamReportSpec) -> Result<ParamReport> {
    let arch = Architecture::from_spec(&spec.architecture)?;
    let mut rows = Vec::new();
    for (index, p) in arch.perceptrons().iter().enumerate() {
        rows.push(PerceptronRow {
            index,
            source_layer: p.source,
            added: p.added.len(),
            d_in: p.d_in,
            d_out: p.d_out,
            active: active_param_count(p.d_in, p.d_out)?,
            unitary: p.d_out * p.d_out,
        });
    }
    Ok(ParamReport {
        total_active: rows.iter().map(|r| r.active).sum(),
        total_unitary: rows.iter().map(|r| r.unitary).sum(),
        rows,
    })
}

pub fn gradient_check(spec: &GradientCheckSpec) -> Result<GradientCheckReport> {
    let template = Network::new(architecture(spec.architecture.as_ref(), 2)?);
    let (d_in, d_out) = (template.input_dim(), template.output_dim());
    let n = template.param_count();
    let mut results = Vec::new();
    for (ci, &cost) in spec.costs.iter().enumerate() {
        let mut check = CostCheck {
            cost,
            trials: spec.trials,
            checked: 0,
            skipped: 0,
            failures: 0,
            max_abs_error: 0.0,
            max_rel_error: 0.0,
            pass: true,
        };
        let cost_seed = derive_seed(spec.seed, ci as u64);
        for trial in 0..spec.trials {
            let mut rng = rng_from_seed(derive_seed(cost_seed, trial as u64));
            let flat: Vec<f64> = (0..n)
                .map(|_| if spec.param_scale > 0.0 { rng.random_range(-spec.param_scale..=spec.param_scale) } else { 0.0 })
                .collect();
            let net = template.with_flat_params(&flat)?;
            let target = random_channel(d_in, d_out, &mut rng)?;
            let rho = random_density_hs(d_in, &mut rng);
            let tar = target.apply(&rho)?;
            let (out, douts) = net.output_with_gradients(&rho)?;
            for (k, drho) in douts.iter().enumerate() {
                let req = GradRequest { rho_tar: &tar, rho_out: &out, drho, mode: GradMode::Analytic };
                let GradTerm::Value(a) = gradient_term(cost, &req)? else {
                    check.skipped += 1;
                    continue;
                };
                let at = |h: f64| -> Result<f64> {
                    let mut p = flat.clone();
                    p[k] += h;
                    Ok(evaluate(cost, &tar, &net.with_flat_params(&p)?.apply(&rho)?)?)
                };
                let fd = (at(spec.eps)? - at(-spec.eps)?) / (2.0 * spec.eps);
                let err = (a - fd).abs();
                check.checked += 1;
                check.max_abs_error = check.max_abs_error.max(err);
                if fd.abs() > spec.abs_floor {
                    check.max_rel_error = check.max_rel_error.max(err / fd.abs());
                }
                if err > (spec.tolerance * fd.abs()).max(spec.abs_floor) {
                    check.failures += 1;
                }
            }
        }
        check.pass = check.failures == 0;
        results.push(check);
    }
    Ok(GradientCheckReport {
        tolerance: spec.tolerance,
        abs_floor: spec.abs_floor,
        eps: spec.eps,
        results,
    })
}

struct Job {
    name: String,
    target: Channel,
    target_seed: Option<u64>,
    config: TrainConfig,
}

/// Runs the jobs on `workers` threads; results keep the job order.
fn run_jobs(template: &Network, jobs: Vec<Job>, workers: usize) -> Result<Vec<RunRecord>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .context("cannot start worker pool")?;
    pool.install(|| {
        jobs.into_par_iter()
            .map(|job| {
                let trace = train(template, &job.target, &job.config).with_context(|| format!("run {} failed", job.name))?;
                Ok(RunRecord {
                    name: job.name,
                    target_seed: job.target_seed,
                    config: job.config,
                    trace,
                })
            })
            .collect()
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn summarize(runs: &[&RunRecord]) -> Result<SeriesSummary> {
    let Some(first) = runs.first() else { bail!("no runs to summarize") };
    let len = first.trace.costs.len();
    let diamond_iterations: Vec<usize> = first.trace.diamond.iter().map(|&(i, _)| i).collect();
    for r in runs {
        let its: Vec<usize> = r.trace.diamond.iter().map(|&(i, _)| i).collect();
        if r.trace.costs.len() != len || its != diamond_iterations {
            bail!("run {} does not share the schedule of run {}", r.name, first.name);
        }
    }
    let mean_cost = (0..len)
        .map(|i| mean(&runs.iter().map(|r| r.trace.costs[i]).collect::<Vec<_>>()))
        .collect();
    let mean_diamond = (0..diamond_iterations.len())
        .map(|j| mean(&runs.iter().map(|r| r.trace.diamond[j].1).collect::<Vec<_>>()))
        .collect();
    let final_diamonds: Vec<f64> = runs.iter().filter_map(|r| r.trace.final_diamond()).collect();
    let (mean_final_diamond, median_final_diamond) = if final_diamonds.is_empty() {
        (None, None)
    } else {
        (Some(mean(&final_diamonds)), Some(median(&final_diamonds)))
    };
    Ok(SeriesSummary {
        runs: runs.len(),
        mean_cost,
        diamond_iterations,
        mean_diamond,
        final_diamonds,
        mean_final_diamond,
        median_final_diamond,
    })
}

pub fn learn_random(spec: &LearnRandomSpec) -> Result<(LearnRandomSummary, Vec<RunRecord>)> {
    let template = Network::new(architecture(spec.architecture.as_ref(), 2)?);
    let (d_in, d_out) = (template.input_dim(), template.output_dim());
    // the same targets and initializations for every cost
    let mut targets = Vec::with_capacity(spec.channel_count);
    for c in 0..spec.channel_count {
        let seed = derive_seed(derive_seed(spec.seed, TARGET_STREAM), c as u64);
        targets.push((seed, random_channel(d_in, d_out, &mut rng_from_seed(seed))?));
    }
    let mut jobs = Vec::new();
    for &cost in &spec.costs {
        for (c, (target_seed, target)) in targets.iter().enumerate() {
            let train_seed = derive_seed(derive_seed(spec.seed, TRAIN_STREAM), c as u64);
            jobs.push(Job {
                name: format!("{cost}_{c:03}"),
                target: target.clone(),
                target_seed: Some(*target_seed),
                config: spec.train.config(cost, train_seed),
            });
        }
    }
    let runs = run_jobs(&template, jobs, spec.workers.unwrap_or(1))?;
    let mut groups = Vec::new();
    for (g, &cost) in spec.costs.iter().enumerate() {
        let members: Vec<&RunRecord> = runs[g * spec.channel_count..(g + 1) * spec.channel_count].iter().collect();
        groups.push(CostGroup {
            cost,
            run_names: members.iter().map(|r| r.name.clone()).collect(),
            series: summarize(&members)?,
        });
    }
    Ok((
        LearnRandomSummary {
            channel_count: spec.channel_count,
            groups,
        },
        runs,
    ))
}

/// Index `i` of the largest single-step decrease `costs[i] - costs[i + 1]`.
pub fn steepest_descent(costs: &[f64]) -> usize {
    costs
        .windows(2)
        .enumerate()
        .max_by(|(_, a), (_, b)| (a[0] - a[1]).total_cmp(&(b[0] - b[1])))
        .map_or(0, |(i, _)| i)
}

pub fn werner_sweep(spec: &WernerSweepSpec) -> Result<(WernerSummary, Vec<RunRecord>)> {
    let template = Network::new(architecture(spec.architecture.as_ref(), spec.dimension)?);
    if template.input_dim() != spec.dimension || template.output_dim() != spec.dimension {
        bail!(
            "architecture maps {} -> {} but the Werner channel acts on dimension {}",
            template.input_dim(),
            template.output_dim(),
            spec.dimension
        );
    }
    let mut jobs = Vec::new();
    for (i, &alpha) in spec.alphas.iter().enumerate() {
        let train_seed = derive_seed(derive_seed(spec.seed, TRAIN_STREAM), i as u64);
        jobs.push(Job {
            name: format!("alpha_{i:02}"),
            target: werner_channel(alpha, spec.dimension).map_err(|e| anyhow!("alpha {alpha}: {e}"))?,
            target_seed: None,
            config: spec.train.config(spec.cost, train_seed),
        });
    }
    let runs = run_jobs(&template, jobs, spec.workers.unwrap_or(1))?;
    let alphas = spec
        .alphas
        .iter()
        .zip(&runs)
        .map(|(&alpha, r)| AlphaResult {
            alpha,
            run_name: r.name.clone(),
            diamond: r.trace.diamond.clone(),
            final_cost: r.trace.final_cost(),
            steepest_descent: steepest_descent(&r.trace.costs),
        })
        .collect();
    let series = summarize(&runs.iter().collect::<Vec<_>>())?;
    Ok((
        WernerSummary {
            dimension: spec.dimension,
            cost: spec.cost,
            alphas,
            series,
        },
        runs,
    ))
}
