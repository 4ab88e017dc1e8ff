//! State-distinguishability cost functions and their gradient contractions.
//!
//! Every cost is written `C(rho_tar, rho_out)`; only `rho_out` depends on the
//! network parameters, so a gradient term is the contraction of
//! `d rho_out / d lambda` with a matrix built from the two states.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{
    eigh, expect_square, herm_fn, pinv, sqrtm, trace, trace_norm, trace_product_re, ComplexMatrix,
    HermFn, C64, DEFAULT_CLAMP_TOL,
};

/// Central finite-difference step used when no analytic gradient exists.
pub const DEFAULT_FD_EPS: f64 = 1e-6;
/// Trace-norm distance below which output and target count as equal.
pub const EQUALITY_TOL: f64 = 1e-12;
/// Purity difference below which the `F2` sign term is taken as zero.
pub const F2_TIE_TOL: f64 = 1e-12;
/// Eigenvalue floor for `rho_out` inside the relative entropy during training.
pub const QRE_CLAMP: f64 = 1e-12;

const QCB_GRID: usize = 21;
const QCB_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CostKind {
    /// Hilbert-Schmidt distance
    Hs,
    /// trace distance
    Trace,
    /// Uhlmann-Jozsa fidelity
    F1,
    /// Bures distance
    D1,
    /// Hilbert-Schmidt fidelity
    F2,
    /// distance derived from `F2`
    D2,
    /// quantum Chernoff bound
    Qcb,
    /// quantum relative entropy `D(rho_tar || rho_out)`
    Qre,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Minimize,
    Maximize,
}

impl CostKind {
    pub const ALL: [CostKind; 8] = [
        CostKind::Hs,
        CostKind::Trace,
        CostKind::F1,
        CostKind::D1,
        CostKind::F2,
        CostKind::D2,
        CostKind::Qcb,
        CostKind::Qre,
    ];

    pub fn direction(self) -> Direction {
        match self {
            CostKind::F1 | CostKind::F2 | CostKind::Qcb => Direction::Maximize,
            _ => Direction::Minimize,
        }
    }

    pub fn has_analytic_gradient(self) -> bool {
        !matches!(self, CostKind::Qcb | CostKind::Qre)
    }

    /// Value at `rho_out = rho_tar`.
    pub fn optimum(self) -> f64 {
        match self.direction() {
            Direction::Maximize => 1.0,
            Direction::Minimize => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Hs => "hs",
            CostKind::Trace => "trace",
            CostKind::F1 => "f1",
            CostKind::D1 => "d1",
            CostKind::F2 => "f2",
            CostKind::D2 => "d2",
            CostKind::Qcb => "qcb",
            CostKind::Qre => "qre",
        }
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown cost function `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradMode {
    Analytic,
    /// Central difference along `drho` in state space.
    FiniteDifference { eps: f64 },
}

#[derive(Clone, Copy, Debug)]
pub struct GradRequest<'a> {
    pub rho_tar: &'a ComplexMatrix,
    pub rho_out: &'a ComplexMatrix,
    /// `d rho_out / d lambda`
    pub drho: &'a ComplexMatrix,
    pub mode: GradMode,
}

/// Result of a gradient contraction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradTerm {
    Value(f64),
    /// Output equals target: the pair is excluded from this iteration.
    Skip,
}

fn check_pair(rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> Result<usize> {
    let d = rho_tar.nrows();
    expect_square(rho_tar, d)?;
    expect_square(rho_out, d)?;
    Ok(d)
}

fn purity(rho: &ComplexMatrix) -> f64 {
    trace_product_re(rho, rho)
}

fn root_of_defect(f: f64) -> f64 {
    (2.0 * (1.0 - f)).max(0.0).sqrt()
}

fn fidelity_f1(rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> Result<f64> {
    let s = sqrtm(rho_tar)?;
    let m = &s * rho_out * &s;
    let r = sqrtm(&m)?;
    let t = trace(&r).re;
    Ok(t * t)
}

fn fidelity_f2(rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> f64 {
    trace_product_re(rho_tar, rho_out) / purity(rho_tar).max(purity(rho_out))
}

/// Eigenvalues (clamped at zero) and eigenvectors of a density matrix.
fn spectrum(rho: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let (vals, vecs) = eigh(rho)?;
    Ok((vals.iter().map(|&v| v.max(0.0)).collect(), vecs))
}

/// `|<u_i|v_j>|^2` for two eigenbases.
fn overlaps(u: &ComplexMatrix, v: &ComplexMatrix) -> Vec<Vec<f64>> {
    let g = u.adjoint() * v;
    (0..g.nrows())
        .map(|i| (0..g.ncols()).map(|j| g[(i, j)].norm_sqr()).collect())
        .collect()
}

fn power(p: f64, s: f64) -> f64 {
    if p <= DEFAULT_CLAMP_TOL {
        0.0
    } else {
        p.powf(s)
    }
}

/// `min_{0 <= s <= 1} tr(rho^s sigma^(1-s))`, with `rho^0` the support projector.
fn chernoff(rho: &ComplexMatrix, sigma: &ComplexMatrix) -> Result<f64> {
    let (p, u) = spectrum(rho)?;
    let (q, v) = spectrum(sigma)?;
    let w = overlaps(&u, &v);
    let q_s = |s: f64| -> f64 {
        let mut acc = 0.0;
        for (i, &pi) in p.iter().enumerate() {
            let a = power(pi, s);
            if a == 0.0 {
                continue;
            }
            for (j, &qj) in q.iter().enumerate() {
                acc += a * power(qj, 1.0 - s) * w[i][j];
            }
        }
        acc
    };

    let h = 1.0 / (QCB_GRID - 1) as f64;
    let grid: Vec<f64> = (0..QCB_GRID).map(|k| q_s(k as f64 * h)).collect();
    let (k_best, &v_best) = grid
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("grid is nonempty");

    let mut lo = (k_best as f64 - 1.0).max(0.0) * h;
    let mut hi = ((k_best + 1) as f64 * h).min(1.0);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (q_s(x1), q_s(x2));
    while hi - lo > QCB_TOL {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = q_s(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = q_s(x2);
        }
    }
    Ok(v_best.min(f1).min(f2).min(q_s(0.5 * (lo + hi))))
}

/// `tr(rho log rho - rho log sigma)`; `clamp` floors the eigenvalues of `sigma`.
fn relative_entropy(rho: &ComplexMatrix, sigma: &ComplexMatrix, clamp: Option<f64>) -> Result<f64> {
    let (p, u) = spectrum(rho)?;
    let (q, v) = spectrum(sigma)?;
    let w = overlaps(&u, &v);
    let mut acc = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        if pi <= DEFAULT_CLAMP_TOL {
            continue;
        }
        acc += pi * pi.ln();
        for (j, &qj) in q.iter().enumerate() {
            let qj = match clamp {
                Some(floor) => qj.max(floor),
                None if qj <= DEFAULT_CLAMP_TOL => {
                    if w[i][j] > DEFAULT_CLAMP_TOL {
                        return Ok(f64::INFINITY);
                    }
                    continue;
                }
                None => qj,
            };
            acc -= pi * w[i][j] * qj.ln();
        }
    }
    Ok(acc)
}

fn evaluate_inner(kind: CostKind, rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix, qre_clamp: Option<f64>) -> Result<f64> {
    check_pair(rho_tar, rho_out)?;
    let delta = rho_out - rho_tar;
    Ok(match kind {
        CostKind::Hs => purity(&delta).max(0.0).sqrt(),
        CostKind::Trace => 0.5 * trace_norm(&delta),
        CostKind::F1 => fidelity_f1(rho_tar, rho_out)?,
        CostKind::D1 => root_of_defect(fidelity_f1(rho_tar, rho_out)?.sqrt()),
        CostKind::F2 => fidelity_f2(rho_tar, rho_out),
        CostKind::D2 => root_of_defect(fidelity_f2(rho_tar, rho_out)),
        CostKind::Qcb => chernoff(rho_tar, rho_out)?,
        CostKind::Qre => relative_entropy(rho_tar, rho_out, qre_clamp)?,
    })
}

/// Exact cost value. The relative entropy returns `+inf` when the support of
/// `rho_tar` is not contained in that of `rho_out`.
pub fn evaluate(kind: CostKind, rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> Result<f64> {
    evaluate_inner(kind, rho_tar, rho_out, None)
}

/// Cost value as used during training: identical to [`evaluate`] except that
/// the eigenvalues of `rho_out` are floored at [`QRE_CLAMP`] inside the relative entropy.
pub fn evaluate_regularized(kind: CostKind, rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> Result<f64> {
    evaluate_inner(kind, rho_tar, rho_out, Some(QRE_CLAMP))
}

/// `d C / d lambda` for one pair, given `d rho_out / d lambda`.
pub fn gradient_term(kind: CostKind, req: &GradRequest<'_>) -> Result<GradTerm> {
    let d = check_pair(req.rho_tar, req.rho_out)?;
    expect_square(req.drho, d)?;
    if trace_norm(&(req.rho_out - req.rho_tar)) < EQUALITY_TOL {
        return Ok(GradTerm::Skip);
    }
    if let GradMode::FiniteDifference { eps } = req.mode {
        if !(eps > 0.0) {
            return Err(Error::InvalidParameter(format!("finite-difference step {eps}")));
        }
        let step = req.drho * C64::new(eps, 0.0);
        let plus = evaluate_regularized(kind, req.rho_tar, &(req.rho_out + &step))?;
        let minus = evaluate_regularized(kind, req.rho_tar, &(req.rho_out - &step))?;
        return Ok(GradTerm::Value((plus - minus) / (2.0 * eps)));
    }

    match gradient_kernel(kind, req.rho_tar, req.rho_out)? {
        Some(g) => Ok(GradTerm::Value(trace_product_re(&g, req.drho))),
        None => Ok(GradTerm::Skip),
    }
}

/// Matrix `G` with `d C / d lambda = Re tr(G d rho_out / d lambda)`, or `None`
/// when output and target coincide. Lets one pair serve many parameters.
pub fn gradient_kernel(kind: CostKind, rho_tar: &ComplexMatrix, rho_out: &ComplexMatrix) -> Result<Option<ComplexMatrix>> {
    check_pair(rho_tar, rho_out)?;
    let delta = rho_out - rho_tar;
    if trace_norm(&delta) < EQUALITY_TOL {
        return Ok(None);
    }
    let real = |x: f64| C64::new(x, 0.0);
    let kernel = match kind {
        CostKind::Hs => {
            let dist = purity(&delta).max(0.0).sqrt();
            &delta / real(dist)
        }
        CostKind::Trace => {
            let abs = herm_fn(&delta, HermFn::Abs, 0.0)?;
            pinv(&abs, None)? * &delta * real(0.5)
        }
        CostKind::F1 | CostKind::D1 => {
            let s = sqrtm(rho_tar)?;
            let m = &s * rho_out * &s;
            let root = sqrtm(&m)?;
            let t = trace(&root).re;
            let core = &s * pinv(&root, None)? * &s;
            if kind == CostKind::F1 {
                core * real(t)
            } else {
                core * real(-1.0 / (2.0 * root_of_defect(t)))
            }
        }
        CostKind::F2 | CostKind::D2 => {
            let p_out = purity(rho_out);
            let p_tar = purity(rho_tar);
            let gap = p_out - p_tar;
            let sign = if gap.abs() <= F2_TIE_TOL { 0.0 } else { gap.signum() };
            let max = p_out.max(p_tar);
            let f2 = trace_product_re(rho_tar, rho_out) / max;
            let df2 = (rho_tar - rho_out * real(f2 * (1.0 + sign))) / real(max);
            if kind == CostKind::F2 {
                df2
            } else {
                df2 * real(-1.0 / root_of_defect(f2))
            }
        }
        CostKind::Qcb | CostKind::Qre => return Err(Error::NoAnalyticGradient(kind.name())),
    };
    Ok(Some(kernel))
}

/// Mean cost over `(rho_tar, rho_out)` pairs.
pub fn total_cost(kind: CostKind, pairs: &[(&ComplexMatrix, &ComplexMatrix)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("total cost of an empty training set".into()));
    }
    let mut sum = 0.0;
    for (t, o) in pairs {
        sum += evaluate(kind, t, o)?;
    }
    Ok(sum / pairs.len() as f64)
}

/// [`total_cost`] with the training-side regularization.
pub fn total_cost_regularized(kind: CostKind, pairs: &[(&ComplexMatrix, &ComplexMatrix)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("total cost of an empty training set".into()));
    }
    let mut sum = 0.0;
    for (t, o) in pairs {
        sum += evaluate_regularized(kind, t, o)?;
    }
    Ok(sum / pairs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channels::{random_density_hs, rng_from_seed};
    use crate::tensor::{diag, identity, outer_basis, C64};

    fn half_identity() -> ComplexMatrix {
        identity(2) * C64::new(0.5, 0.0)
    }

    #[test]
    fn equal_states() {
        let mut rng = rng_from_seed(1);
        let rho = random_density_hs(3, &mut rng);
        for kind in CostKind::ALL {
            let v = evaluate(kind, &rho, &rho).unwrap();
            assert!((v - kind.optimum()).abs() < 1e-7, "{kind}: {v}");
        }
    }

    #[test]
    fn orthogonal_pure_states() {
        let a = outer_basis(2, 0, 0);
        let b = outer_basis(2, 1, 1);
        assert!((evaluate(CostKind::Trace, &a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((evaluate(CostKind::Hs, &a, &b).unwrap() - 2f64.sqrt()).abs() < 1e-12);
        assert!(evaluate(CostKind::F1, &a, &b).unwrap().abs() < 1e-12);
        assert!(evaluate(CostKind::F2, &a, &b).unwrap().abs() < 1e-12);
        assert!(evaluate(CostKind::Qcb, &a, &b).unwrap().abs() < 1e-12);
        assert_eq!(evaluate(CostKind::Qre, &a, &b).unwrap(), f64::INFINITY);
    }

    #[test]
    fn diagonal_example() {
        let tar = diag(&[0.75, 0.25]);
        let out = half_identity();
        assert!((evaluate(CostKind::F2, &tar, &out).unwrap() - 0.8).abs() < 1e-12);
        let f1 = ((3.0f64 / 8.0).sqrt() + (1.0f64 / 8.0).sqrt()).powi(2);
        assert!((evaluate(CostKind::F1, &tar, &out).unwrap() - f1).abs() < 1e-12);
        assert!((f1 - 0.9330).abs() < 1e-4);
        // sum p log p - sum p log(1/2)
        let qre = 0.75 * 0.75f64.ln() + 0.25 * 0.25f64.ln() + 2f64.ln();
        assert!((evaluate(CostKind::Qre, &tar, &out).unwrap() - qre).abs() < 1e-12);
        // commuting states: tr(p^s q^(1-s)) minimized over s
        let direct = (0..=100_000)
            .map(|k| {
                let s = k as f64 / 100_000.0;
                0.75f64.powf(s) * 0.5f64.powf(1.0 - s) + 0.25f64.powf(s) * 0.5f64.powf(1.0 - s)
            })
            .fold(f64::INFINITY, f64::min);
        assert!((evaluate(CostKind::Qcb, &tar, &out).unwrap() - direct).abs() < 1e-9);
    }

    #[test]
    fn relative_entropy_pure_vs_mixed() {
        let v = evaluate(CostKind::Qre, &outer_basis(2, 0, 0), &half_identity()).unwrap();
        assert!((v - 2f64.ln()).abs() < 1e-12);
        // reversed order has unsupported target
        assert_eq!(
            evaluate(CostKind::Qre, &half_identity(), &outer_basis(2, 0, 0)).unwrap(),
            f64::INFINITY
        );
        let reg = evaluate_regularized(CostKind::Qre, &half_identity(), &outer_basis(2, 0, 0)).unwrap();
        assert!(reg.is_finite() && reg > 10.0);
    }

    #[test]
    fn tags_roundtrip() {
        for kind in CostKind::ALL {
            let json = serde_json::to_string(&kind).unwrap();
            assert_eq!(json, format!("\"{}\"", kind.name()));
            assert_eq!(serde_json::from_str::<CostKind>(&json).unwrap(), kind);
            assert_eq!(kind.name().parse::<CostKind>().unwrap(), kind);
        }
        assert!("hsd".parse::<CostKind>().is_err());
        assert_eq!(CostKind::Qcb.direction(), Direction::Maximize);
        assert_eq!(CostKind::Qre.direction(), Direction::Minimize);
    }

    #[test]
    fn equality_is_skipped() {
        let rho = diag(&[0.6, 0.4]);
        let drho = diag(&[1.0, -1.0]);
        for kind in CostKind::ALL {
            let req = GradRequest {
                rho_tar: &rho,
                rho_out: &rho,
                drho: &drho,
                mode: GradMode::Analytic,
            };
            assert_eq!(gradient_term(kind, &req).unwrap(), GradTerm::Skip);
        }
    }

    #[test]
    fn zero_direction_gives_zero() {
        let mut rng = rng_from_seed(2);
        let tar = random_density_hs(2, &mut rng);
        let out = random_density_hs(2, &mut rng);
        let zero = ComplexMatrix::zeros(2, 2);
        for kind in CostKind::ALL {
            let mode = if kind.has_analytic_gradient() {
                GradMode::Analytic
            } else {
                GradMode::FiniteDifference { eps: DEFAULT_FD_EPS }
            };
            let req = GradRequest {
                rho_tar: &tar,
                rho_out: &out,
                drho: &zero,
                mode,
            };
            assert_eq!(gradient_term(kind, &req).unwrap(), GradTerm::Value(0.0), "{kind}");
        }
    }

    #[test]
    fn no_analytic_gradient_for_hypothesis_testing_costs() {
        let tar = diag(&[0.6, 0.4]);
        let out = half_identity();
        let drho = diag(&[1.0, -1.0]);
        for kind in [CostKind::Qcb, CostKind::Qre] {
            let req = GradRequest {
                rho_tar: &tar,
                rho_out: &out,
                drho: &drho,
                mode: GradMode::Analytic,
            };
            assert!(matches!(gradient_term(kind, &req), Err(Error::NoAnalyticGradient(_))));
        }
    }

    #[test]
    fn f2_tie_matches_one_sided_differences() {
        // equal purities, different states
        let tar = diag(&[0.7, 0.3]);
        let out = diag(&[0.3, 0.7]);
        let drho = ComplexMatrix::from_row_slice(2, 2, &[
            C64::new(0.2, 0.0), C64::new(0.1, 0.05),
            C64::new(0.1, -0.05), C64::new(-0.2, 0.0),
        ]);
        let req = GradRequest { rho_tar: &tar, rho_out: &out, drho: &drho, mode: GradMode::Analytic };
        let GradTerm::Value(g) = gradient_term(CostKind::F2, &req).unwrap() else { panic!() };
        let eps = 1e-7;
        let f = |t: f64| evaluate(CostKind::F2, &tar, &(&out + &drho * C64::new(t, 0.0))).unwrap();
        let right = (f(eps) - f(0.0)) / eps;
        let left = (f(0.0) - f(-eps)) / eps;
        assert!((g - 0.5 * (left + right)).abs() < 1e-4);
        assert!(g <= left.max(right) + 1e-4 && g >= left.min(right) - 1e-4);
    }

    #[test]
    fn total_cost_is_mean() {
        let mut rng = rng_from_seed(3);
        let states: Vec<ComplexMatrix> = (0..6).map(|_| random_density_hs(2, &mut rng)).collect();
        let pairs: Vec<(&ComplexMatrix, &ComplexMatrix)> = states.chunks(2).map(|c| (&c[0], &c[1])).collect();
        for kind in CostKind::ALL {
            let manual: f64 = pairs.iter().map(|(a, b)| evaluate(kind, a, b).unwrap()).sum::<f64>() / 3.0;
            assert!((total_cost(kind, &pairs).unwrap() - manual).abs() < 1e-12);
            let single = total_cost(kind, &pairs[..1]).unwrap();
            assert_eq!(single, evaluate(kind, pairs[0].0, pairs[0].1).unwrap());
            let repeated = vec![pairs[0]; 5];
            assert!((total_cost(kind, &repeated).unwrap() - single).abs() < 1e-12);
        }
        assert!(total_cost(CostKind::Hs, &[]).is_err());
    }

    #[test]
    fn mismatched_dimensions_rejected() {
        assert!(evaluate(CostKind::Hs, &identity(2), &identity(3)).is_err());
    }
}
