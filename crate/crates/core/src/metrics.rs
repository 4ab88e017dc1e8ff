//! Channel distances used to benchmark trained networks.

use serde::{Deserialize, Serialize};

use crate::channels::{complex_gaussian, derive_seed, random_state_vector, rng_from_seed, Channel};
use crate::error::{Error, Result};
use crate::tensor::{eigh, hermitian_part, reconstruct, trace_norm, ComplexMatrix, ComplexVector, C64, ZERO};

/// Knobs of the Monte-Carlo diamond-distance estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiamondConfig {
    pub samples: usize,
    pub refine_steps: usize,
    pub perturb_scale: f64,
    pub decay: f64,
    /// alternating-maximization sweeps run after the stochastic refinement
    pub polish_steps: usize,
    pub seed: u64,
}

impl Default for DiamondConfig {
    fn default() -> Self {
        Self {
            samples: 2000,
            refine_steps: 200,
            perturb_scale: 0.1,
            decay: 0.98,
            polish_steps: 20,
            seed: 0,
        }
    }
}

impl DiamondConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::Config("diamond estimator needs at least one sample".into()));
        }
        if !(self.decay > 0.0 && self.decay < 1.0) {
            return Err(Error::Config(format!("decay {} must lie in (0, 1)", self.decay)));
        }
        if !(self.perturb_scale >= 0.0) {
            return Err(Error::Config(format!("perturb_scale {} must be nonnegative", self.perturb_scale)));
        }
        Ok(())
    }
}

/// Result of the diamond-distance estimator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiamondEstimate {
    /// final lower bound after refinement
    pub value: f64,
    /// best value over the random samples alone
    pub sampled: f64,
    /// number of accepted refinement and polish moves
    pub accepted: usize,
}

const REFINE_STREAM: u64 = u64::MAX;

fn check_dims(e1: &Channel, e2: &Channel) -> Result<()> {
    if e1.d_in() != e2.d_in() {
        return Err(Error::DimensionMismatch {
            expected: e1.d_in(),
            actual: e2.d_in(),
        });
    }
    if e1.d_out() != e2.d_out() {
        return Err(Error::DimensionMismatch {
            expected: e1.d_out(),
            actual: e2.d_out(),
        });
    }
    Ok(())
}

/// Picks one of `a - b`, `b - a` independently of the argument order, so that
/// swapping the channels reproduces every floating-point operation.
fn oriented_difference(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let d = a - b;
    for z in d.iter() {
        if z.re != 0.0 {
            return if z.re > 0.0 { d } else { -d };
        }
        if z.im != 0.0 {
            return if z.im > 0.0 { d } else { -d };
        }
    }
    d
}

/// `||(Delta (x) id)(|psi><psi|)||_1` for `psi` on `H_in (x) H_ref`, `d_ref = d_in`.
struct Objective {
    delta: ComplexMatrix,
    d_in: usize,
    d_out: usize,
}

impl Objective {
    fn output(&self, psi: &ComplexVector) -> ComplexMatrix {
        let (d_in, d_out) = (self.d_in, self.d_out);
        let d_ref = d_in;
        // K maps (a, i) -> (a, r) with weight psi_{i r}
        let mut k = ComplexMatrix::zeros(d_out * d_ref, d_out * d_in);
        for a in 0..d_out {
            for i in 0..d_in {
                for r in 0..d_ref {
                    k[(a * d_ref + r, a * d_in + i)] = psi[i * d_ref + r];
                }
            }
        }
        &k * &self.delta * k.adjoint() * C64::new(d_in as f64, 0.0)
    }

    fn value(&self, psi: &ComplexVector) -> f64 {
        trace_norm(&self.output(psi))
    }

    /// With `S = sign(X(psi))` fixed, `tr(S X(psi'))` is a quadratic form in
    /// `psi'`; its top eigenvector is the next iterate. Never decreases `||X||_1`.
    fn polish(&self, psi: &ComplexVector) -> Option<ComplexVector> {
        let (d_in, d_out) = (self.d_in, self.d_out);
        let d_ref = d_in;
        let x = self.output(psi);
        let (vals, vecs) = eigh(&x).ok()?;
        let signs: Vec<f64> = vals.iter().map(|&v| if v >= 0.0 { 1.0 } else { -1.0 }).collect();
        let s = reconstruct(&vecs, &signs);
        let dim = d_in * d_ref;
        let mut a = ComplexMatrix::zeros(dim, dim);
        for j in 0..d_in {
            for sr in 0..d_ref {
                for i in 0..d_in {
                    for r in 0..d_ref {
                        let mut acc = ZERO;
                        for aa in 0..d_out {
                            for b in 0..d_out {
                                acc += s[(b * d_ref + sr, aa * d_ref + r)] * self.delta[(aa * d_in + i, b * d_in + j)];
                            }
                        }
                        a[(j * d_ref + sr, i * d_ref + r)] = acc;
                    }
                }
            }
        }
        let (evals, evecs) = eigh(&hermitian_part(&a)).ok()?;
        let top = (0..evals.len()).max_by(|&p, &q| evals[p].total_cmp(&evals[q]))?;
        Some(evecs.column(top).into_owned())
    }
}

fn normalize(v: &mut ComplexVector) {
    let n = v.norm();
    *v /= C64::new(n, 0.0);
}

/// Monte-Carlo lower bound on the diamond distance, with diagnostics.
pub fn diamond_estimate(e1: &Channel, e2: &Channel, cfg: &DiamondConfig) -> Result<DiamondEstimate> {
    check_dims(e1, e2)?;
    cfg.validate()?;
    let delta = oriented_difference(&e1.choi(), &e2.choi());
    let (d_in, d_out) = (e1.d_in(), e1.d_out());
    if delta.iter().all(|z| *z == ZERO) {
        return Ok(DiamondEstimate {
            value: 0.0,
            sampled: 0.0,
            accepted: 0,
        });
    }
    let obj = Objective { delta, d_in, d_out };
    let dim = d_in * d_in;

    let mut best = f64::NEG_INFINITY;
    let mut best_psi = ComplexVector::zeros(dim);
    for k in 0..cfg.samples {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, k as u64));
        let psi = random_state_vector(dim, &mut rng);
        let v = obj.value(&psi);
        if v > best {
            best = v;
            best_psi = psi;
        }
    }
    let sampled = best;

    let mut rng = rng_from_seed(derive_seed(cfg.seed, REFINE_STREAM));
    let mut scale = cfg.perturb_scale;
    let mut accepted = 0;
    for _ in 0..cfg.refine_steps {
        let g = ComplexVector::from_fn(dim, |_, _| complex_gaussian(&mut rng));
        let overlap = best_psi.dotc(&g);
        let tangent = &g - &best_psi * overlap;
        let mut candidate = &best_psi + tangent * C64::new(scale, 0.0);
        normalize(&mut candidate);
        let v = obj.value(&candidate);
        if v > best {
            best = v;
            best_psi = candidate;
            accepted += 1;
        }
        scale *= cfg.decay;
    }
    for _ in 0..cfg.polish_steps {
        let Some(mut candidate) = obj.polish(&best_psi) else { break };
        normalize(&mut candidate);
        let v = obj.value(&candidate);
        if v > best {
            best = v;
            best_psi = candidate;
            accepted += 1;
        } else {
            break;
        }
    }
    Ok(DiamondEstimate {
        value: best,
        sampled,
        accepted,
    })
}

/// Monte-Carlo lower bound on `||E1 - E2||_diamond`, in `[0, 2]`.
pub fn diamond_distance(e1: &Channel, e2: &Channel, cfg: &DiamondConfig) -> Result<f64> {
    Ok(diamond_estimate(e1, e2, cfg)?.value)
}

/// Trace distance `1/2 ||J(E1) - J(E2)||_1` of the normalized Choi states.
pub fn choi_trace_distance(e1: &Channel, e2: &Channel) -> Result<f64> {
    check_dims(e1, e2)?;
    Ok(0.5 * trace_norm(&(e1.choi() - e2.choi())))
}
