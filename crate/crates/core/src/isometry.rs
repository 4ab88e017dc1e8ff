//! Composite parametrization of isometries.
//!
//! An isometry `V: C^{d_in} -> C^{d_out}` is written as
//!
//! ```text
//! V = [prod_{m<d_in} prod_{m<n<d_out} Lambda_{m,n}] [prod_{l<d_in} exp(i P_l lambda_{l,l})] 1_{d_out x d_in}
//! Lambda_{m,n} = exp(i P_n lambda_{n,m}) exp(i Y_{m,n} lambda_{m,n})
//! ```
//!
//! with products expanded left to right (`prod A_i = A_1 A_2 ... A_n`). Only the
//! entries `(m, n)` with `m < d_in || n < d_in` of the `d_out x d_out` parameter
//! matrix enter; the rest are inactive and held at zero.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ComplexMatrix, C64, I, ONE, ZERO};

/// Number of free real parameters of an isometry `C^{d_in} -> C^{d_out}`: `2 d_in d_out - d_in^2`.
pub fn active_param_count(d_in: usize, d_out: usize) -> Result<usize> {
    if d_in == 0 {
        return Err(Error::InvalidParameter("d_in must be at least 1".into()));
    }
    if d_out < d_in {
        return Err(Error::InvalidParameter(format!(
            "isometry needs d_out >= d_in, got {d_in} -> {d_out}"
        )));
    }
    Ok(2 * d_in * d_out - d_in * d_in)
}

/// Parameter matrix `lambda` of one isometry, stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMatrix {
    d_in: usize,
    d_out: usize,
    lambda: Vec<f64>,
}

impl ParamMatrix {
    /// All-zero parameters: the canonical embedding `1_{d_out x d_in}`.
    pub fn zeros(d_in: usize, d_out: usize) -> Result<Self> {
        active_param_count(d_in, d_out)?;
        Ok(Self {
            d_in,
            d_out,
            lambda: vec![0.0; d_out * d_out],
        })
    }

    /// Builds a parameter matrix from its active entries in [`ParamMatrix::active_indices`] order.
    pub fn from_active(d_in: usize, d_out: usize, values: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(d_in, d_out)?;
        p.set_active(values)?;
        Ok(p)
    }

    /// Builds from a full `d_out x d_out` row-major matrix; inactive entries are zeroed.
    pub fn from_full_masked(d_in: usize, d_out: usize, full: &[f64]) -> Result<Self> {
        let mut p = Self::zeros(d_in, d_out)?;
        if full.len() != d_out * d_out {
            return Err(Error::DimensionMismatch {
                expected: d_out * d_out,
                actual: full.len(),
            });
        }
        for m in 0..d_out {
            for n in 0..d_out {
                if p.is_active(m, n) {
                    p.lambda[m * d_out + n] = full[m * d_out + n];
                }
            }
        }
        Ok(p)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn is_active(&self, m: usize, n: usize) -> bool {
        m < self.d_out && n < self.d_out && (m < self.d_in || n < self.d_in)
    }

    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.lambda[m * self.d_out + n]
    }

    pub fn set(&mut self, m: usize, n: usize, value: f64) -> Result<()> {
        if !self.is_active(m, n) {
            return Err(self.inactive(m, n));
        }
        self.lambda[m * self.d_out + n] = value;
        Ok(())
    }

    fn inactive(&self, x: usize, y: usize) -> Error {
        Error::InactiveParameter {
            x,
            y,
            d_in: self.d_in,
            d_out: self.d_out,
        }
    }

    /// Active entries in row-major order. This order defines the flattened parameter vector.
    pub fn active_indices(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.active_count());
        for m in 0..self.d_out {
            for n in 0..self.d_out {
                if self.is_active(m, n) {
                    out.push((m, n));
                }
            }
        }
        out
    }

    pub fn active_count(&self) -> usize {
        2 * self.d_in * self.d_out - self.d_in * self.d_in
    }

    pub fn active_values(&self) -> Vec<f64> {
        self.active_indices()
            .into_iter()
            .map(|(m, n)| self.get(m, n))
            .collect()
    }

    pub fn set_active(&mut self, values: &[f64]) -> Result<()> {
        let idx = self.active_indices();
        if values.len() != idx.len() {
            return Err(Error::DimensionMismatch {
                expected: idx.len(),
                actual: values.len(),
            });
        }
        for ((m, n), &v) in idx.into_iter().zip(values) {
            self.lambda[m * self.d_out + n] = v;
        }
        Ok(())
    }

    /// Row-major copy of the full `d_out x d_out` matrix.
    pub fn as_full(&self) -> &[f64] {
        &self.lambda
    }

    /// Wraps every angle into `[0, 2pi)`. The isometry is unchanged since all
    /// entries enter through `exp(i x)`, `cos x` and `sin x`.
    pub fn canonicalize(&mut self) {
        for v in &mut self.lambda {
            *v = v.rem_euclid(TAU);
            if *v >= TAU {
                *v = 0.0;
            }
        }
    }

    /// Elementary factors `exp(i G_j theta_j)` in product order, ending with the diagonal phases.
    fn factors(&self) -> Vec<Factor> {
        let mut fs = Vec::with_capacity(self.active_count());
        for m in 0..self.d_in {
            for n in (m + 1)..self.d_out {
                fs.push(Factor::Phase {
                    n,
                    theta: self.get(n, m),
                    param: (n, m),
                });
                fs.push(Factor::Rotation {
                    m,
                    n,
                    theta: self.get(m, n),
                });
            }
        }
        for l in 0..self.d_in {
            fs.push(Factor::Phase {
                n: l,
                theta: self.get(l, l),
                param: (l, l),
            });
        }
        fs
    }
}

/// Hermitian generators of the gate factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Generator {
    /// `P_n = |n><n|`.
    Phase { n: usize },
    /// `Y_{m,n} = -i|m><n| + i|n><m|`, `m < n`.
    Rotation { m: usize, n: usize },
}

impl Generator {
    pub fn matrix(&self, dim: usize) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(dim, dim);
        match *self {
            Generator::Phase { n } => g[(n, n)] = ONE,
            Generator::Rotation { m, n } => {
                g[(m, n)] = -I;
                g[(n, m)] = I;
            }
        }
        g
    }
}

#[derive(Clone, Copy, Debug)]
enum Factor {
    Phase {
        n: usize,
        theta: f64,
        param: (usize, usize),
    },
    Rotation {
        m: usize,
        n: usize,
        theta: f64,
    },
}

impl Factor {
    fn param(&self) -> (usize, usize) {
        match *self {
            Factor::Phase { param, .. } => param,
            Factor::Rotation { m, n, .. } => (m, n),
        }
    }

    /// `a <- F a`, touching only the rows the factor acts on.
    fn apply_left(&self, a: &mut ComplexMatrix) {
        match *self {
            Factor::Phase { n, theta, .. } => {
                if theta != 0.0 {
                    let e = C64::from_polar(1.0, theta);
                    a.row_mut(n).iter_mut().for_each(|x| *x *= e);
                }
            }
            Factor::Rotation { m, n, theta } => {
                if theta != 0.0 {
                    let (s, c) = theta.sin_cos();
                    for j in 0..a.ncols() {
                        let am = a[(m, j)];
                        let an = a[(n, j)];
                        a[(m, j)] = am * c + an * s;
                        a[(n, j)] = an * c - am * s;
                    }
                }
            }
        }
    }

    /// `a <- a F`, touching only the columns the factor acts on.
    fn apply_right(&self, a: &mut ComplexMatrix) {
        match *self {
            Factor::Phase { n, theta, .. } => {
                if theta != 0.0 {
                    let e = C64::from_polar(1.0, theta);
                    a.column_mut(n).iter_mut().for_each(|x| *x *= e);
                }
            }
            Factor::Rotation { m, n, theta } => {
                if theta != 0.0 {
                    let (s, c) = theta.sin_cos();
                    for i in 0..a.nrows() {
                        let am = a[(i, m)];
                        let an = a[(i, n)];
                        a[(i, m)] = am * c - an * s;
                        a[(i, n)] = am * s + an * c;
                    }
                }
            }
        }
    }

    /// `i G a` for the factor's generator.
    fn generator_times(&self, a: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(a.nrows(), a.ncols());
        match *self {
            Factor::Phase { n, .. } => {
                for j in 0..a.ncols() {
                    out[(n, j)] = I * a[(n, j)];
                }
            }
            Factor::Rotation { m, n, .. } => {
                // iY = |m><n| - |n><m|
                for j in 0..a.ncols() {
                    out[(m, j)] = a[(n, j)];
                    out[(n, j)] = -a[(m, j)];
                }
            }
        }
        out
    }
}

/// `Lambda_{m,n} = exp(i P_n lam_nm) exp(i Y_{m,n} lam_mn)` as a dense `dim x dim` matrix.
pub fn gate_factor(m: usize, n: usize, lam_mn: f64, lam_nm: f64, dim: usize) -> Result<ComplexMatrix> {
    if m >= n {
        return Err(Error::InvalidParameter(format!(
            "gate factor needs m < n, got ({m}, {n})"
        )));
    }
    if n >= dim {
        return Err(Error::InvalidParameter(format!(
            "gate index {n} out of range for dimension {dim}"
        )));
    }
    let mut g = ComplexMatrix::identity(dim, dim);
    Factor::Rotation { m, n, theta: lam_mn }.apply_left(&mut g);
    Factor::Phase {
        n,
        theta: lam_nm,
        param: (n, m),
    }
    .apply_left(&mut g);
    Ok(g)
}

/// Canonical embedding `1_{d_out x d_in}`.
pub fn embedding(d_in: usize, d_out: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(d_out, d_in, |i, j| if i == j { ONE } else { ZERO })
}

/// The `d_out x d_in` isometry described by `p`.
pub fn build_isometry(p: &ParamMatrix) -> ComplexMatrix {
    let mut v = embedding(p.d_in, p.d_out);
    for f in p.factors().iter().rev() {
        f.apply_left(&mut v);
    }
    v
}

/// Full composite-parametrized unitary from a `d x d` parameter matrix with every entry active.
///
/// Rotations run over all `m < n < d`, phases over all `l < d`.
pub fn build_unitary(p: &ParamMatrix) -> Result<ComplexMatrix> {
    if p.d_in != p.d_out {
        return Err(Error::InvalidParameter(format!(
            "build_unitary needs a square parameter layout, got {} -> {}",
            p.d_in, p.d_out
        )));
    }
    Ok(build_isometry(p))
}

/// `U^dagger Y_{x,y} U` for `x < y`, `P_x` for `x = y`, `U^dagger P_x U` for `x > y`.
pub fn tilde_generator(u: &ComplexMatrix, x: usize, y: usize) -> ComplexMatrix {
    let dim = u.nrows();
    match x.cmp(&y) {
        std::cmp::Ordering::Less => {
            u.adjoint() * Generator::Rotation { m: x, n: y }.matrix(dim) * u
        }
        std::cmp::Ordering::Equal => Generator::Phase { n: x }.matrix(dim),
        std::cmp::Ordering::Greater => u.adjoint() * Generator::Phase { n: x }.matrix(dim) * u,
    }
}

/// Partial derivatives `dV/d lambda_{x,y}` for every active entry, in
/// [`ParamMatrix::active_indices`] order.
///
/// With `U = F_1 ... F_K` and `F_j = exp(i G_j theta_j)`, the derivative is
/// `F_1 ... F_{j-1} (i G_j) F_j ... F_K 1_{d_out x d_in}`, i.e. `i U R_j^dagger G_j R_j 1`
/// with the suffix `R_j = F_j ... F_K`.
pub fn isometry_jacobian(p: &ParamMatrix) -> Vec<ComplexMatrix> {
    let factors = p.factors();
    let k = factors.len();

    // suffixes applied to the embedding: S_j = F_j ... F_K 1
    let mut suffix = Vec::with_capacity(k + 1);
    let mut s = embedding(p.d_in, p.d_out);
    suffix.push(s.clone());
    for f in factors.iter().rev() {
        f.apply_left(&mut s);
        suffix.push(s.clone());
    }
    suffix.reverse(); // suffix[j] = F_j ... F_K 1, suffix[k] = 1

    let mut by_param = std::collections::HashMap::with_capacity(k);
    let mut prefix = ComplexMatrix::identity(p.d_out, p.d_out);
    for (j, f) in factors.iter().enumerate() {
        let d = &prefix * f.generator_times(&suffix[j]);
        by_param.insert(f.param(), d);
        f.apply_right(&mut prefix);
    }
    p.active_indices()
        .into_iter()
        .map(|idx| by_param.remove(&idx).expect("every active entry owns a factor"))
        .collect()
}

/// `dV/d lambda_{x,y}` for one entry; inactive entries are rejected.
pub fn isometry_derivative(p: &ParamMatrix, x: usize, y: usize) -> Result<ComplexMatrix> {
    if !p.is_active(x, y) {
        return Err(p.inactive(x, y));
    }
    let pos = p
        .active_indices()
        .iter()
        .position(|&idx| idx == (x, y))
        .expect("active entry is indexed");
    Ok(isometry_jacobian(p).swap_remove(pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{identity, max_abs_diff};

    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((*seed >> 11) as f64) / ((1u64 << 53) as f64) * TAU
    }

    fn random_params(d_in: usize, d_out: usize, seed: u64) -> ParamMatrix {
        let mut s = seed;
        let n = active_param_count(d_in, d_out).unwrap();
        let vals: Vec<f64> = (0..n).map(|_| lcg(&mut s)).collect();
        ParamMatrix::from_active(d_in, d_out, &vals).unwrap()
    }

    #[test]
    fn param_counts() {
        assert_eq!(active_param_count(3, 3).unwrap(), 9);
        assert_eq!(active_param_count(2, 8).unwrap(), 28);
        // d = 4 qudits: unitary on two neurons vs. isometry from one to two
        assert_eq!(16usize.pow(2), 256);
        assert_eq!(active_param_count(4, 16).unwrap(), 112);
        assert!(active_param_count(3, 2).is_err());
        assert!(active_param_count(0, 2).is_err());
    }

    #[test]
    fn gate_factor_examples() {
        assert_eq!(gate_factor(0, 2, 0.0, 0.0, 4).unwrap(), identity(4));
        let g = gate_factor(0, 1, std::f64::consts::FRAC_PI_2, 0.0, 2).unwrap();
        let expected = ComplexMatrix::from_row_slice(2, 2, &[ZERO, ONE, -ONE, ZERO]);
        assert!(max_abs_diff(&g, &expected) < 1e-15);
        assert!(gate_factor(1, 1, 0.1, 0.2, 3).is_err());
        assert!(gate_factor(2, 1, 0.1, 0.2, 3).is_err());
    }

    #[test]
    fn gate_factor_matches_block_form() {
        let (m, n, d) = (1, 3, 5);
        let (a, b) = (0.7, 2.1);
        let g = gate_factor(m, n, a, b, d).unwrap();
        let (c, s, e) = (a.cos(), a.sin(), C64::from_polar(1.0, b));
        let mut expected = identity(d);
        expected[(m, m)] = C64::new(c, 0.0);
        expected[(m, n)] = C64::new(s, 0.0);
        expected[(n, m)] = -e * s;
        expected[(n, n)] = e * c;
        assert!(max_abs_diff(&g, &expected) < 1e-15);
        assert!(max_abs_diff(&(g.adjoint() * &g), &identity(d)) < 1e-14);
    }

    #[test]
    fn zero_params_give_embedding() {
        let p = ParamMatrix::zeros(2, 8).unwrap();
        assert_eq!(build_isometry(&p), embedding(2, 8));
        let p = ParamMatrix::zeros(3, 3).unwrap();
        assert_eq!(build_unitary(&p).unwrap(), identity(3));
    }

    #[test]
    fn isometry_matches_dense_product() {
        let p = random_params(2, 5, 7);
        let mut dense = identity(5);
        for m in 0..2 {
            for n in (m + 1)..5 {
                dense *= gate_factor(m, n, p.get(m, n), p.get(n, m), 5).unwrap();
            }
        }
        let mut phases = identity(5);
        for l in 0..2 {
            phases[(l, l)] = C64::from_polar(1.0, p.get(l, l));
        }
        let expected = dense * phases * embedding(2, 5);
        assert!(max_abs_diff(&build_isometry(&p), &expected) < 1e-14);
    }

    #[test]
    fn unitary_restricts_to_masked_isometry() {
        let d = 6;
        let full = random_params(d, d, 99);
        let u = build_unitary(&full).unwrap();
        assert!(max_abs_diff(&(u.adjoint() * &u), &identity(d)) < 1e-12);
        for d_in in 1..=d {
            let masked = ParamMatrix::from_full_masked(d_in, d, full.as_full()).unwrap();
            let v = build_isometry(&masked);
            assert!(max_abs_diff(&(&u * embedding(d_in, d)), &v) < 1e-12);
        }
    }

    #[test]
    fn set_rejects_inactive_entries() {
        let mut p = ParamMatrix::zeros(2, 4).unwrap();
        assert!(p.set(3, 2, 1.0).is_err());
        assert!(p.set(3, 1, 1.0).is_ok());
        assert!(p.set(1, 3, 1.0).is_ok());
        assert!(isometry_derivative(&p, 2, 3).is_err());
    }

    #[test]
    fn canonicalize_preserves_isometry() {
        let mut p = random_params(2, 4, 3);
        let vals: Vec<f64> = p.active_values().iter().map(|v| v * 7.0 - 20.0).collect();
        p.set_active(&vals).unwrap();
        let before = build_isometry(&p);
        p.canonicalize();
        assert!(p.as_full().iter().all(|&v| (0.0..TAU).contains(&v)));
        assert!(max_abs_diff(&before, &build_isometry(&p)) < 1e-12);
    }

    #[test]
    fn tilde_generator_branches() {
        let u = build_unitary(&random_params(4, 4, 5)).unwrap();
        assert_eq!(tilde_generator(&u, 0, 0), Generator::Phase { n: 0 }.matrix(4));
        assert_eq!(
            tilde_generator(&identity(4), 1, 3),
            Generator::Rotation { m: 1, n: 3 }.matrix(4)
        );
        for (x, y) in [(0, 2), (3, 1), (2, 2)] {
            let t = tilde_generator(&u, x, y);
            assert!(max_abs_diff(&t, &t.adjoint()) < 1e-12);
        }
    }

    #[test]
    fn jacobian_matches_tilde_generator_form() {
        // dV = i U Y~ 1 with Y~ built from the suffix of the factor sequence
        let p = random_params(2, 4, 11);
        let jac = isometry_jacobian(&p);
        let factors = p.factors();
        let mut u = identity(4);
        for f in factors.iter().rev() {
            f.apply_left(&mut u);
        }
        for (idx, d) in p.active_indices().into_iter().zip(&jac) {
            let j = factors.iter().position(|f| f.param() == idx).unwrap();
            let mut suffix = identity(4);
            for f in factors[j..].iter().rev() {
                f.apply_left(&mut suffix);
            }
            let yt = tilde_generator(&suffix, idx.0, idx.1);
            let expected = (&u * yt * embedding(2, 4)) * I;
            assert!(max_abs_diff(d, &expected) < 1e-12, "entry {idx:?}");
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let p = random_params(2, 6, 21);
        let jac = isometry_jacobian(&p);
        let eps = 1e-6;
        for (k, (m, n)) in p.active_indices().into_iter().enumerate() {
            let mut plus = p.clone();
            let mut minus = p.clone();
            plus.set(m, n, p.get(m, n) + eps).unwrap();
            minus.set(m, n, p.get(m, n) - eps).unwrap();
            let fd = (build_isometry(&plus) - build_isometry(&minus)) / C64::new(2.0 * eps, 0.0);
            assert!(max_abs_diff(&fd, &jac[k]) < 1e-8, "entry ({m},{n})");
        }
    }
}
