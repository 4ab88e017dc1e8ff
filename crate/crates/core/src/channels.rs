//! Quantum channels, the Werner family, and random sampling of states and channels.
//!
//! Choi matrices use the normalized convention
//! `J(E) = (1/d_in) sum_{ij} E(|i><j|) (x) |i><j|`, so the output factor comes
//! first and `tr J = 1`.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::tensor::{
    self, eigh, expect_square, herm_fn, identity, kron, partial_trace, unvec_row_major,
    vec_row_major, ComplexMatrix, ComplexVector, HermFn, C64, DEFAULT_CLAMP_TOL, ZERO,
};

/// Deterministic random stream used everywhere in the crate.
pub type Rng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

/// Splitmix64 finalizer over `master + golden * (index + 1)`; gives independent
/// per-run seeds from one master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master.wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn complex_gaussian(rng: &mut Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Complex Ginibre matrix with i.i.d. standard complex Gaussian entries.
pub fn ginibre(rows: usize, cols: usize, rng: &mut Rng) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(rows, cols);
    // fill row-major so the stream layout does not depend on storage order
    for i in 0..rows {
        for j in 0..cols {
            m[(i, j)] = complex_gaussian(rng);
        }
    }
    m
}

/// Haar-random unit vector.
pub fn random_state_vector(d: usize, rng: &mut Rng) -> ComplexVector {
    let mut v = ComplexVector::from_fn(d, |_, _| complex_gaussian(rng));
    let norm = v.norm();
    v.unscale_mut(norm);
    v
}

/// Haar-random pure state `|psi><psi|`.
pub fn random_pure(d: usize, rng: &mut Rng) -> ComplexMatrix {
    let v = random_state_vector(d, rng);
    tensor::projector(&v)
}

/// Hilbert-Schmidt random density matrix `G G^dagger / tr(G G^dagger)`.
pub fn random_density_hs(d: usize, rng: &mut Rng) -> ComplexMatrix {
    let g = ginibre(d, d, rng);
    let w = &g * g.adjoint();
    let tr = tensor::trace(&w).re;
    tensor::hermitian_part(&(w / C64::new(tr, 0.0)))
}

/// How a channel is stored.
#[derive(Clone, Debug)]
pub enum ChannelRep {
    Kraus(Vec<ComplexMatrix>),
    /// Normalized Choi matrix on `H_out (x) H_in`.
    Choi(ComplexMatrix),
    /// Isometry `H_in -> H_out (x) H_env` with the output factor first.
    Stinespring(ComplexMatrix),
}

/// A CPTP map from `d_in`- to `d_out`-dimensional states.
#[derive(Clone, Debug)]
pub struct Channel {
    d_in: usize,
    d_out: usize,
    rep: ChannelRep,
}

/// Outcome of a CPTP check on the Choi matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CptpReport {
    pub min_choi_eigenvalue: f64,
    /// `max |tr_out(d_in J) - I|` over entries.
    pub marginal_error: f64,
    pub hermiticity_error: f64,
}

impl CptpReport {
    pub fn passes(&self, tol: f64) -> bool {
        self.min_choi_eigenvalue >= -tol && self.marginal_error <= tol && self.hermiticity_error <= tol
    }
}

impl Channel {
    pub fn from_kraus(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty Kraus list".into()))?;
        let (d_out, d_in) = first.shape();
        for k in &ops {
            if k.shape() != (d_out, d_in) {
                return Err(Error::DimensionMismatch {
                    expected: d_out * d_in,
                    actual: k.nrows() * k.ncols(),
                });
            }
        }
        Ok(Self {
            d_in,
            d_out,
            rep: ChannelRep::Kraus(ops),
        })
    }

    pub fn from_choi(d_in: usize, d_out: usize, choi: ComplexMatrix) -> Result<Self> {
        expect_square(&choi, d_in * d_out)?;
        Ok(Self {
            d_in,
            d_out,
            rep: ChannelRep::Choi(choi),
        })
    }

    pub fn from_stinespring(d_out: usize, v: ComplexMatrix) -> Result<Self> {
        if d_out == 0 || v.nrows() % d_out != 0 {
            return Err(Error::DimensionMismatch {
                expected: d_out,
                actual: v.nrows(),
            });
        }
        Ok(Self {
            d_in: v.ncols(),
            d_out,
            rep: ChannelRep::Stinespring(v),
        })
    }

    /// Conjugation by a unitary (or isometry) `u`.
    pub fn unitary(u: ComplexMatrix) -> Result<Self> {
        Self::from_kraus(vec![u])
    }

    pub fn identity(d: usize) -> Self {
        Self {
            d_in: d,
            d_out: d,
            rep: ChannelRep::Kraus(vec![identity(d)]),
        }
    }

    /// `rho -> tr(rho) I/d`.
    pub fn completely_depolarizing(d: usize) -> Self {
        let choi = identity(d * d) / C64::new((d * d) as f64, 0.0);
        Self {
            d_in: d,
            d_out: d,
            rep: ChannelRep::Choi(choi),
        }
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn rep(&self) -> &ChannelRep {
        &self.rep
    }

    pub fn choi(&self) -> ComplexMatrix {
        match &self.rep {
            ChannelRep::Choi(j) => j.clone(),
            ChannelRep::Kraus(ops) => choi_from_kraus(ops),
            ChannelRep::Stinespring(v) => choi_from_kraus(&kraus_from_stinespring(v, self.d_out)),
        }
    }

    /// Kraus operators. Conversion from a Choi matrix goes through its eigendecomposition
    /// and drops eigenvalues below `1e-14`.
    pub fn kraus(&self) -> Vec<ComplexMatrix> {
        match &self.rep {
            ChannelRep::Kraus(ops) => ops.clone(),
            ChannelRep::Stinespring(v) => kraus_from_stinespring(v, self.d_out),
            ChannelRep::Choi(j) => kraus_from_choi(j, self.d_in, self.d_out),
        }
    }

    /// The same channel held as Kraus operators.
    pub fn to_kraus(&self) -> Self {
        Self {
            d_in: self.d_in,
            d_out: self.d_out,
            rep: ChannelRep::Kraus(self.kraus()),
        }
    }

    /// Channel action through the stored representation.
    pub fn apply(&self, rho: &ComplexMatrix) -> Result<ComplexMatrix> {
        expect_square(rho, self.d_in)?;
        Ok(match &self.rep {
            ChannelRep::Kraus(ops) => apply_kraus(ops, rho),
            ChannelRep::Stinespring(v) => {
                let big = v * rho * v.adjoint();
                let env = v.nrows() / self.d_out;
                partial_trace(&big, &[self.d_out, env], &[0])?
            }
            ChannelRep::Choi(j) => apply_choi(j, self.d_in, self.d_out, rho),
        })
    }

    pub fn cptp_report(&self) -> CptpReport {
        let j = self.choi();
        let herr = tensor::hermiticity_error(&j);
        let min_eig = tensor::hermitian_part(&j)
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &x| m.min(x));
        let marginal = partial_trace(&j, &[self.d_out, self.d_in], &[1])
            .expect("Choi dimensions are consistent")
            * C64::new(self.d_in as f64, 0.0);
        CptpReport {
            min_choi_eigenvalue: min_eig,
            marginal_error: tensor::max_abs_diff(&marginal, &identity(self.d_in)),
            hermiticity_error: herr,
        }
    }

    pub fn is_cptp(&self, tol: f64) -> bool {
        self.cptp_report().passes(tol)
    }
}

/// `sum_k K rho K^dagger`.
pub fn apply_kraus(ops: &[ComplexMatrix], rho: &ComplexMatrix) -> ComplexMatrix {
    let (d_out, _) = ops[0].shape();
    let mut out = ComplexMatrix::zeros(d_out, d_out);
    for k in ops {
        out += k * rho * k.adjoint();
    }
    out
}

/// `E(rho)_{ab} = d_in sum_{ij} J_{(a,i),(b,j)} rho_{ij}`.
pub fn apply_choi(j: &ComplexMatrix, d_in: usize, d_out: usize, rho: &ComplexMatrix) -> ComplexMatrix {
    let mut out = ComplexMatrix::zeros(d_out, d_out);
    let scale = C64::new(d_in as f64, 0.0);
    for b in 0..d_out {
        for a in 0..d_out {
            let mut acc = ZERO;
            for jj in 0..d_in {
                for ii in 0..d_in {
                    acc += j[(a * d_in + ii, b * d_in + jj)] * rho[(ii, jj)];
                }
            }
            out[(a, b)] = acc * scale;
        }
    }
    out
}

/// `(1/d_in) sum_k |K_k>> <<K_k|` with row-major vectorization.
pub fn choi_from_kraus(ops: &[ComplexMatrix]) -> ComplexMatrix {
    let (d_out, d_in) = ops[0].shape();
    let mut j = ComplexMatrix::zeros(d_in * d_out, d_in * d_out);
    for k in ops {
        let v = vec_row_major(k);
        j += &v * v.adjoint();
    }
    j / C64::new(d_in as f64, 0.0)
}

fn kraus_from_choi(j: &ComplexMatrix, d_in: usize, d_out: usize) -> Vec<ComplexMatrix> {
    let scaled = j * C64::new(d_in as f64, 0.0);
    let (w, q) = eigh(&scaled).expect("Choi matrix is Hermitian");
    let mut ops = Vec::new();
    for (k, &wk) in w.iter().enumerate() {
        if wk > 1e-14 {
            let v = q.column(k).into_owned() * C64::new(wk.sqrt(), 0.0);
            ops.push(unvec_row_major(&v, d_out, d_in));
        }
    }
    if ops.is_empty() {
        ops.push(ComplexMatrix::zeros(d_out, d_in));
    }
    ops
}

/// Kraus operators `G_e = (I_out (x) <e|) V` of a Stinespring isometry with the output factor first.
pub fn kraus_from_stinespring(v: &ComplexMatrix, d_out: usize) -> Vec<ComplexMatrix> {
    let env = v.nrows() / d_out;
    (0..env)
        .map(|e| ComplexMatrix::from_fn(d_out, v.ncols(), |o, i| v[(o * env + e, i)]))
        .collect()
}

/// Werner channel `E(rho) = (tr(rho) I + alpha rho^T) / (alpha + d)`, transpose in the computational basis.
pub fn werner_channel(alpha: f64, d: usize) -> Result<Channel> {
    if !(-1.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!(
            "Werner parameter must lie in [-1, 1], got {alpha}"
        )));
    }
    if d < 2 {
        return Err(Error::InvalidParameter(format!(
            "Werner channel needs d >= 2, got {d}"
        )));
    }
    let norm = (alpha + d as f64) * d as f64;
    let mut j = ComplexMatrix::zeros(d * d, d * d);
    for a in 0..d {
        for i in 0..d {
            // E(|i><j|) = (delta_ij I + alpha |j><i|) / (alpha + d)
            j[(a * d + i, a * d + i)] += C64::new(1.0 / norm, 0.0);
            // alpha |j><i| contributes at (a = j, b = i)
            j[(a * d + i, i * d + a)] += C64::new(alpha / norm, 0.0);
        }
    }
    Channel::from_choi(d, d, j)
}

/// Random CPTP map from a Ginibre matrix `G` of size `(d_in d_out)^2`:
/// `W = G G^dagger`, `Y = tr_out W`, `J = (I (x) Y^{-1/2}) W (I (x) Y^{-1/2}) / d_in`.
pub fn random_channel(d_in: usize, d_out: usize, rng: &mut Rng) -> Result<Channel> {
    if d_in == 0 || d_out == 0 {
        return Err(Error::InvalidParameter("channel dimensions must be positive".into()));
    }
    let n = d_in * d_out;
    loop {
        let g = ginibre(n, n, rng);
        let w = tensor::hermitian_part(&(&g * g.adjoint()));
        let y = partial_trace(&w, &[d_out, d_in], &[1])?;
        let (ev, _) = eigh(&y)?;
        let min = ev.iter().fold(f64::INFINITY, |m, &x| m.min(x));
        if min <= DEFAULT_CLAMP_TOL {
            continue;
        }
        let y_inv_sqrt = herm_fn(&y, HermFn::Power(-0.5), DEFAULT_CLAMP_TOL)?;
        let lift = kron(&identity(d_out), &y_inv_sqrt);
        let j = &lift * w * &lift / C64::new(d_in as f64, 0.0);
        return Channel::from_choi(d_in, d_out, tensor::hermitian_part(&j));
    }
}
