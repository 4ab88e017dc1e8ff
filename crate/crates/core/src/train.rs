//! ADAM training of network parameters.
//!
//! Two protocols are provided. Choi training compares the Choi state of the
//! network with that of the target channel. Random-state training compares
//! network outputs with target outputs on Hilbert-Schmidt-random inputs, cycling
//! through batches and resampling the whole training set when the total cost
//! stops improving.

use std::fmt::Write as _;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::channels::{derive_seed, random_density_hs, rng_from_seed, Channel, Rng};
use crate::cost::{self, evaluate_regularized, gradient_kernel, CostKind, Direction, DEFAULT_FD_EPS};
use crate::error::{Error, Result};
use crate::metrics::{diamond_distance, DiamondConfig};
use crate::network::Network;
use crate::tensor::{trace_product_re, ComplexMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Choi,
    RandomState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BatchConfig {
    pub batches: usize,
    pub batch_size: usize,
    pub resample_size: usize,
    pub plateau_window: usize,
    pub plateau_rel_tol: f64,
}

impl Default for BatchConfig {
    fn default() -> Self {
        Self {
            batches: 8,
            batch_size: 4,
            resample_size: 32,
            plateau_window: 20,
            plateau_rel_tol: 1e-4,
        }
    }
}

fn default_init_scale() -> f64 {
    1e-2
}

fn default_fd_eps() -> f64 {
    DEFAULT_FD_EPS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub cost: CostKind,
    pub iterations: usize,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub adam: AdamConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch: Option<BatchConfig>,
    /// Diamond estimate every this many iterations (and at the end); 0 disables.
    #[serde(default)]
    pub diamond_every: usize,
    #[serde(default)]
    pub diamond: DiamondConfig,
    /// Parameter-space step for costs without analytic gradients.
    #[serde(default = "default_fd_eps")]
    pub fd_eps: f64,
}

impl TrainConfig {
    pub fn choi(cost: CostKind, iterations: usize, seed: u64) -> Self {
        Self {
            mode: TrainMode::Choi,
            cost,
            iterations,
            init_scale: default_init_scale(),
            seed,
            adam: AdamConfig::default(),
            batch: None,
            diamond_every: 0,
            diamond: DiamondConfig::default(),
            fd_eps: DEFAULT_FD_EPS,
        }
    }

    pub fn random_state(cost: CostKind, iterations: usize, seed: u64, batch: BatchConfig) -> Self {
        Self {
            mode: TrainMode::RandomState,
            batch: Some(batch),
            ..Self::choi(cost, iterations, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::Config("iterations must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0) {
            return Err(Error::Config(format!("init_scale {} must be nonnegative", self.init_scale)));
        }
        if !(self.fd_eps > 0.0) {
            return Err(Error::Config(format!("fd_eps {} must be positive", self.fd_eps)));
        }
        let a = &self.adam;
        if !(a.lr > 0.0) || !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config("invalid ADAM hyperparameters".into()));
        }
        match (self.mode, &self.batch) {
            (TrainMode::Choi, Some(_)) => {
                return Err(Error::Config("batch settings are only valid for random_state training".into()))
            }
            (TrainMode::RandomState, None) => {
                return Err(Error::Config("random_state training requires batch settings".into()))
            }
            (TrainMode::RandomState, Some(b)) => {
                if b.batches < 1 || b.batch_size < 1 || b.resample_size < b.batches || b.plateau_window < 1 {
                    return Err(Error::Config(
                        "batches, batch_size and plateau_window must be at least 1 and resample_size at least batches".into(),
                    ));
                }
            }
            (TrainMode::Choi, None) => {}
        }
        if self.diamond_every > 0 {
            self.diamond.validate()?;
        }
        Ok(())
    }
}

/// ADAM moment accumulators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(n: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected ADAM update. `grad` is the cost gradient; for
/// maximize-direction costs it is negated so that the update ascends.
pub fn adam_step(
    state: &AdamState,
    grad: &[f64],
    params: &[f64],
    direction: Direction,
) -> Result<(AdamState, Vec<f64>)> {
    let n = state.m.len();
    if grad.len() != n || params.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: if grad.len() != n { grad.len() } else { params.len() },
        });
    }
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient entry {k} is {}", grad[k])));
    }
    let c = state.config;
    let sign = match direction {
        Direction::Minimize => 1.0,
        Direction::Maximize => -1.0,
    };
    let t = state.t + 1;
    let bc1 = 1.0 - c.beta1.powf(t as f64);
    let bc2 = 1.0 - c.beta2.powf(t as f64);
    let mut next = AdamState {
        m: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        t,
        config: c,
    };
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let g = sign * grad[k];
        let m = c.beta1 * state.m[k] + (1.0 - c.beta1) * g;
        let v = c.beta2 * state.v[k] + (1.0 - c.beta2) * g * g;
        let step = c.lr * (m / bc1) / ((v / bc2).sqrt() + c.eps);
        next.m.push(m);
        next.v.push(v);
        out.push(params[k] - step);
    }
    Ok((next, out))
}

/// Every active parameter drawn uniformly from `[-scale, scale]`.
pub fn init_params(net: &Network, scale: f64, rng: &mut Rng) -> Network {
    let flat: Vec<f64> = (0..net.param_count())
        .map(|_| if scale > 0.0 { rng.random_range(-scale..=scale) } else { 0.0 })
        .collect();
    net.with_flat_params(&flat).expect("parameter count matches")
}

/// Cost history and diagnostics of one training run.
///
/// `costs[i]` is the total cost before update `i`; the last entry (index
/// `iterations`) belongs to the final parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub costs: Vec<f64>,
    pub diamond: Vec<(usize, f64)>,
    /// iterations at which the training set was resampled
    pub resamples: Vec<usize>,
    pub final_params: Vec<f64>,
}

#[derive(Serialize)]
struct TraceReport<'a> {
    config: &'a TrainConfig,
    trace: &'a TrainingTrace,
}

impl TrainingTrace {
    /// CSV with columns `iteration,cost,diamond`; diamond cells are empty between estimates.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("iteration,cost,diamond\n");
        let mut d = self.diamond.iter().peekable();
        for (i, c) in self.costs.iter().enumerate() {
            let _ = write!(out, "{i},{c},");
            if let Some(&&(j, v)) = d.peek() {
                if j == i {
                    let _ = write!(out, "{v}");
                    d.next();
                }
            }
            out.push('\n');
        }
        out
    }

    /// JSON with the full configuration, the trace and the final parameters.
    pub fn to_json(&self, config: &TrainConfig) -> String {
        serde_json::to_string_pretty(&TraceReport { config, trace: self }).expect("trace serializes")
    }

    pub fn final_cost(&self) -> f64 {
        *self.costs.last().expect("trace has at least one entry")
    }

    pub fn final_diamond(&self) -> Option<f64> {
        self.diamond.last().map(|&(_, v)| v)
    }

    pub fn final_network(&self, template: &Network) -> Result<Network> {
        template.with_flat_params(&self.final_params)
    }
}

fn check_target(net: &Network, target: &Channel) -> Result<()> {
    if target.d_in() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim(),
            actual: target.d_in(),
        });
    }
    if target.d_out() != net.output_dim() {
        return Err(Error::DimensionMismatch {
            expected: net.output_dim(),
            actual: target.d_out(),
        });
    }
    Ok(())
}

/// Mean cost over `(target, output)` pairs as used during training, with its gradient.
fn pair_gradients(
    kind: CostKind,
    targets: &[&ComplexMatrix],
    outputs: &[(ComplexMatrix, Vec<ComplexMatrix>)],
) -> Result<(f64, Vec<f64>)> {
    let n_params = outputs[0].1.len();
    let mut grad = vec![0.0; n_params];
    let mut cost_sum = 0.0;
    let mut used = 0usize;
    for (tar, (out, douts)) in targets.iter().zip(outputs) {
        cost_sum += evaluate_regularized(kind, tar, out)?;
        if let Some(g) = gradient_kernel(kind, tar, out)? {
            for (acc, d) in grad.iter_mut().zip(douts) {
                *acc += trace_product_re(&g, d);
            }
            used += 1;
        }
    }
    if used > 0 {
        grad.iter_mut().for_each(|g| *g /= used as f64);
    }
    Ok((cost_sum / targets.len() as f64, grad))
}

/// Central differences of `f` over the flattened parameters.
fn parameter_fd(params: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> Result<f64>) -> Result<Vec<f64>> {
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for k in 0..params.len() {
        work[k] = params[k] + eps;
        let plus = f(&work)?;
        work[k] = params[k] - eps;
        let minus = f(&work)?;
        work[k] = params[k];
        grad.push((plus - minus) / (2.0 * eps));
    }
    Ok(grad)
}

fn choi_cost(net: &Network, kind: CostKind, target: &ComplexMatrix) -> Result<f64> {
    evaluate_regularized(kind, target, &net.choi_state())
}

fn choi_objective(net: &Network, kind: CostKind, target: &ComplexMatrix, fd_eps: f64) -> Result<(f64, Vec<f64>)> {
    if kind.has_analytic_gradient() {
        let (j, dj) = net.choi_with_gradients();
        pair_gradients(kind, &[target], &[(j, dj)])
    } else {
        let c = choi_cost(net, kind, target)?;
        let g = parameter_fd(&net.flat_params(), fd_eps, |p| choi_cost(&net.with_flat_params(p)?, kind, target))?;
        Ok((c, g))
    }
}

fn states_cost(net: &Network, kind: CostKind, inputs: &[ComplexMatrix], targets: &[ComplexMatrix]) -> Result<f64> {
    let channel = net.channel();
    let mut sum = 0.0;
    for (rho, tar) in inputs.iter().zip(targets) {
        sum += evaluate_regularized(kind, tar, &channel.apply(rho)?)?;
    }
    Ok(sum / inputs.len() as f64)
}

fn states_objective(
    net: &Network,
    kind: CostKind,
    inputs: &[ComplexMatrix],
    targets: &[ComplexMatrix],
    fd_eps: f64,
) -> Result<Vec<f64>> {
    if kind.has_analytic_gradient() {
        let outputs = net.outputs_with_gradients(inputs)?;
        let tars: Vec<&ComplexMatrix> = targets.iter().collect();
        Ok(pair_gradients(kind, &tars, &outputs)?.1)
    } else {
        parameter_fd(&net.flat_params(), fd_eps, |p| {
            states_cost(&net.with_flat_params(p)?, kind, inputs, targets)
        })
    }
}

fn non_finite(iteration: usize, what: &str, e: Error) -> Error {
    match e {
        Error::NonFinite(msg) => Error::NonFinite(format!("iteration {iteration}: {what}: {msg}")),
        other => other,
    }
}

fn check_finite(iteration: usize, cost: f64) -> Result<()> {
    if cost.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("iteration {iteration}: cost is {cost}")))
    }
}

fn record_diamond(
    trace: &mut TrainingTrace,
    cfg: &TrainConfig,
    net: &Network,
    target: &Channel,
    iteration: usize,
) -> Result<()> {
    if cfg.diamond_every > 0 && (iteration % cfg.diamond_every == 0 || iteration == cfg.iterations) {
        let d = diamond_distance(&net.channel(), target, &cfg.diamond)?;
        trace.diamond.push((iteration, d));
    }
    Ok(())
}

const INIT_STREAM: u64 = 0;
const STATE_STREAM: u64 = 1;

/// Choi training from a random initialization drawn with `cfg.seed`.
pub fn choi_train(net: &Network, target: &Channel, cfg: &TrainConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    if cfg.mode != TrainMode::Choi {
        return Err(Error::Config("choi_train requires mode = choi".into()));
    }
    check_target(net, target)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, INIT_STREAM));
    let start = init_params(net, cfg.init_scale, &mut rng);
    choi_train_from(&start, target, cfg)
}

/// Choi training starting from the parameters of `net` as given.
pub fn choi_train_from(net: &Network, target: &Channel, cfg: &TrainConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    check_target(net, target)?;
    let j_tar = target.choi();
    let direction = cfg.cost.direction();
    let mut current = net.clone();
    let mut params = current.flat_params();
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let mut trace = TrainingTrace {
        costs: Vec::with_capacity(cfg.iterations + 1),
        diamond: Vec::new(),
        resamples: Vec::new(),
        final_params: Vec::new(),
    };
    for it in 0..cfg.iterations {
        let (c, grad) = choi_objective(&current, cfg.cost, &j_tar, cfg.fd_eps)?;
        check_finite(it, c)?;
        trace.costs.push(c);
        record_diamond(&mut trace, cfg, &current, target, it)?;
        let (next, p) = adam_step(&adam, &grad, &params, direction).map_err(|e| non_finite(it, "choi", e))?;
        adam = next;
        params = p;
        current = current.with_flat_params(&params)?;
    }
    let c = choi_cost(&current, cfg.cost, &j_tar)?;
    check_finite(cfg.iterations, c)?;
    trace.costs.push(c);
    record_diamond(&mut trace, cfg, &current, target, cfg.iterations)?;
    trace.final_params = params;
    Ok(trace)
}

struct TrainingSet {
    batches: Vec<(Vec<ComplexMatrix>, Vec<ComplexMatrix>)>,
}

impl TrainingSet {
    fn sample(target: &Channel, d_in: usize, count: usize, n_batches: usize, rng: &mut Rng) -> Result<Self> {
        let mut batches = vec![(Vec::new(), Vec::new()); n_batches];
        for i in 0..count {
            let rho = random_density_hs(d_in, rng);
            let tar = target.apply(&rho)?;
            let b = &mut batches[i % n_batches];
            b.0.push(rho);
            b.1.push(tar);
        }
        Ok(Self { batches })
    }

    fn all(&self) -> (Vec<ComplexMatrix>, Vec<ComplexMatrix>) {
        let mut inputs = Vec::new();
        let mut targets = Vec::new();
        for (i, t) in &self.batches {
            inputs.extend(i.iter().cloned());
            targets.extend(t.iter().cloned());
        }
        (inputs, targets)
    }
}

fn improvement(direction: Direction, old: f64, new: f64) -> f64 {
    let gain = match direction {
        Direction::Minimize => old - new,
        Direction::Maximize => new - old,
    };
    if old == 0.0 {
        0.0
    } else {
        gain / old.abs()
    }
}

/// Random-state training from a random initialization drawn with `cfg.seed`.
pub fn random_state_train(net: &Network, target: &Channel, cfg: &TrainConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    if cfg.mode != TrainMode::RandomState {
        return Err(Error::Config("random_state_train requires mode = random_state".into()));
    }
    check_target(net, target)?;
    let mut rng = rng_from_seed(derive_seed(cfg.seed, INIT_STREAM));
    let start = init_params(net, cfg.init_scale, &mut rng);
    random_state_train_from(&start, target, cfg)
}

/// Random-state training starting from the parameters of `net` as given.
pub fn random_state_train_from(net: &Network, target: &Channel, cfg: &TrainConfig) -> Result<TrainingTrace> {
    cfg.validate()?;
    check_target(net, target)?;
    let batch = cfg
        .batch
        .ok_or_else(|| Error::Config("random_state training requires batch settings".into()))?;
    let direction = cfg.cost.direction();
    let mut state_rng = rng_from_seed(derive_seed(cfg.seed, STATE_STREAM));
    let d_in = net.input_dim();
    let mut set = TrainingSet::sample(target, d_in, batch.batches * batch.batch_size, batch.batches, &mut state_rng)?;
    let (mut all_in, mut all_tar) = set.all();

    let mut current = net.clone();
    let mut params = current.flat_params();
    let mut adam = AdamState::new(params.len(), cfg.adam);
    let mut trace = TrainingTrace {
        costs: Vec::with_capacity(cfg.iterations + 1),
        diamond: Vec::new(),
        resamples: Vec::new(),
        final_params: Vec::new(),
    };
    // costs since the last resampling, for plateau detection
    let mut window: Vec<f64> = Vec::new();
    let mut cursor = 0usize;
    for it in 0..cfg.iterations {
        let c = states_cost(&current, cfg.cost, &all_in, &all_tar)?;
        check_finite(it, c)?;
        trace.costs.push(c);
        record_diamond(&mut trace, cfg, &current, target, it)?;

        window.push(c);
        if window.len() > batch.plateau_window {
            let old = window[window.len() - 1 - batch.plateau_window];
            if improvement(direction, old, c) < batch.plateau_rel_tol {
                set = TrainingSet::sample(target, d_in, batch.resample_size, batch.batches, &mut state_rng)?;
                (all_in, all_tar) = set.all();
                trace.resamples.push(it);
                window.clear();
                cursor = 0;
            }
        }

        let (inputs, targets) = &set.batches[cursor % set.batches.len()];
        cursor += 1;
        let grad = if inputs.is_empty() {
            vec![0.0; params.len()]
        } else {
            states_objective(&current, cfg.cost, inputs, targets, cfg.fd_eps)?
        };
        let (next, p) = adam_step(&adam, &grad, &params, direction).map_err(|e| non_finite(it, "random_state", e))?;
        adam = next;
        params = p;
        current = current.with_flat_params(&params)?;
    }
    let c = states_cost(&current, cfg.cost, &all_in, &all_tar)?;
    check_finite(cfg.iterations, c)?;
    trace.costs.push(c);
    record_diamond(&mut trace, cfg, &current, target, cfg.iterations)?;
    trace.final_params = params;
    Ok(trace)
}

/// Dispatch on `cfg.mode`.
pub fn train(net: &Network, target: &Channel, cfg: &TrainConfig) -> Result<TrainingTrace> {
    match cfg.mode {
        TrainMode::Choi => choi_train(net, target, cfg),
        TrainMode::RandomState => random_state_train(net, target, cfg),
    }
}

/// Total Choi-training cost of `net` against `target`, as recorded in traces.
pub fn choi_training_cost(net: &Network, target: &Channel, kind: CostKind) -> Result<f64> {
    check_target(net, target)?;
    cost::evaluate_regularized(kind, &target.choi(), &net.choi_state())
}
