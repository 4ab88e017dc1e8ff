//! Dense complex linear algebra on top of `nalgebra`.
//!
//! Everything here is a pure function of its inputs. Subsystem layouts follow
//! the usual big-endian convention: for dimensions `[d_0, d_1, ..., d_{k-1}]`
//! the leftmost factor carries the most significant digit of a basis index.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type ComplexMatrix = DMatrix<C64>;
pub type ComplexVector = DVector<C64>;

/// Eigenvalues below this magnitude are treated as zero by the matrix functions.
pub const DEFAULT_CLAMP_TOL: f64 = 1e-12;
/// Relative cut-off (times the largest eigenvalue) used by [`pinv`].
pub const DEFAULT_PINV_RTOL: f64 = 1e-10;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn identity(n: usize) -> ComplexMatrix {
    ComplexMatrix::identity(n, n)
}

/// `|i><j|` in dimension `n`.
pub fn outer_basis(n: usize, i: usize, j: usize) -> ComplexMatrix {
    let mut m = ComplexMatrix::zeros(n, n);
    m[(i, j)] = ONE;
    m
}

/// Projector `|v><v|` for a (not necessarily normalized) vector.
pub fn projector(v: &ComplexVector) -> ComplexMatrix {
    v * v.adjoint()
}

/// Diagonal matrix with real entries.
pub fn diag(values: &[f64]) -> ComplexMatrix {
    let n = values.len();
    let mut m = ComplexMatrix::zeros(n, n);
    for (i, &v) in values.iter().enumerate() {
        m[(i, i)] = C64::new(v, 0.0);
    }
    m
}

/// Kronecker product; entry `(i*rows_b + k, j*cols_b + l)` equals `a[i,j] * b[k,l]`.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = ComplexMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for l in 0..cb {
                for k in 0..rb {
                    out[(i * rb + k, j * cb + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

pub fn trace(a: &ComplexMatrix) -> C64 {
    a.diagonal().iter().sum()
}

/// Real part of `tr(a b)` without forming the product.
pub fn trace_product_re(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = 0.0;
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += (a[(i, k)] * b[(k, i)]).re;
        }
    }
    acc
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    assert_eq!(a.shape(), b.shape(), "shape mismatch in max_abs_diff");
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max |A - A^dagger|` over entries.
pub fn hermiticity_error(a: &ComplexMatrix) -> f64 {
    let n = a.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            err = err.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    err
}

/// `(A + A^dagger) / 2`.
pub fn hermitian_part(a: &ComplexMatrix) -> ComplexMatrix {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

fn ensure_square(a: &ComplexMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

/// Eigendecomposition of a Hermitian matrix, `a = Q diag(w) Q^dagger`.
///
/// The input is symmetrized first; inputs further than `1e-8` from Hermitian
/// are rejected.
pub fn eigh(a: &ComplexMatrix) -> Result<(DVector<f64>, ComplexMatrix)> {
    ensure_square(a)?;
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let herr = hermiticity_error(a);
    if herr > 1e-8 * scale {
        return Err(Error::NotHermitian(herr));
    }
    let h = hermitian_part(a);
    let eig = h.symmetric_eigen();
    Ok((eig.eigenvalues, eig.eigenvectors))
}

/// Eigenvalues of a Hermitian matrix (unsorted).
pub fn eigvalsh(a: &ComplexMatrix) -> Result<DVector<f64>> {
    ensure_square(a)?;
    let herr = hermiticity_error(a);
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if herr > 1e-8 * scale {
        return Err(Error::NotHermitian(herr));
    }
    Ok(hermitian_part(a).symmetric_eigenvalues())
}

/// `Q diag(f) Q^dagger` for a real spectrum `f`.
pub fn reconstruct(q: &ComplexMatrix, f: &[f64]) -> ComplexMatrix {
    let n = q.nrows();
    let mut scaled = q.clone();
    for (j, &fj) in f.iter().enumerate() {
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * q.adjoint()
}

/// Scalar functions that [`herm_fn`] knows how to apply to a spectrum.
#[derive(Clone, Copy)]
pub enum HermFn {
    /// Principal square root; eigenvalues below the clamp (including small
    /// negatives) map to zero.
    Sqrt,
    /// Natural logarithm on the support; near-zero eigenvalues are excluded
    /// and contribute zero.
    Log,
    /// `x^p` on the support. `p = 0` yields the support projector.
    Power(f64),
    /// `|x|`.
    Abs,
    /// Any other real function, applied without clamping.
    Map(fn(f64) -> f64),
}

/// Applies a scalar function to a Hermitian matrix through its eigendecomposition.
pub fn herm_fn(a: &ComplexMatrix, f: HermFn, clamp_tol: f64) -> Result<ComplexMatrix> {
    let (w, q) = eigh(a)?;
    let mut fw = Vec::with_capacity(w.len());
    for &x in w.iter() {
        let y = match f {
            HermFn::Sqrt => {
                if x < clamp_tol {
                    0.0
                } else {
                    x.sqrt()
                }
            }
            HermFn::Log => {
                if x < -clamp_tol {
                    return Err(Error::Domain(format!(
                        "logarithm of negative eigenvalue {x:e}"
                    )));
                }
                if x.abs() < clamp_tol {
                    0.0
                } else {
                    x.ln()
                }
            }
            HermFn::Power(p) => {
                if x < clamp_tol {
                    0.0
                } else {
                    x.powf(p)
                }
            }
            HermFn::Abs => x.abs(),
            HermFn::Map(g) => g(x),
        };
        fw.push(y);
    }
    Ok(reconstruct(&q, &fw))
}

pub fn sqrtm(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    herm_fn(a, HermFn::Sqrt, DEFAULT_CLAMP_TOL)
}

/// Moore-Penrose pseudoinverse of a Hermitian positive semidefinite matrix.
///
/// Eigenvalues above `tol` are inverted, the rest dropped. With `tol = None`
/// the cut-off is `1e-10` times the largest eigenvalue.
pub fn pinv(a: &ComplexMatrix, tol: Option<f64>) -> Result<ComplexMatrix> {
    let (w, q) = eigh(a)?;
    let wmax = w.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let cut = tol.unwrap_or(DEFAULT_PINV_RTOL * wmax);
    let inv: Vec<f64> = w
        .iter()
        .map(|&x| if x > cut && x > 0.0 { 1.0 / x } else { 0.0 })
        .collect();
    Ok(reconstruct(&q, &inv))
}

/// Sum of singular values. Hermitian inputs go through the eigenvalues.
pub fn trace_norm(a: &ComplexMatrix) -> f64 {
    if a.nrows() == a.ncols() {
        let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);
        if hermiticity_error(a) <= 1e-12 * scale {
            return hermitian_part(a)
                .symmetric_eigenvalues()
                .iter()
                .map(|x| x.abs())
                .sum();
        }
    }
    a.clone().singular_values().iter().sum()
}

/// Checks that `dims` factorizes `n` and that `keep` is a valid subset.
fn check_subsystems(n: usize, dims: &[usize], keep: &[usize]) -> Result<Vec<bool>> {
    if dims.contains(&0) {
        return Err(Error::InvalidSubsystems("zero subsystem dimension".into()));
    }
    let prod: usize = dims.iter().product();
    if prod != n {
        return Err(Error::DimensionMismatch {
            expected: prod,
            actual: n,
        });
    }
    if keep.is_empty() {
        return Err(Error::InvalidSubsystems("keep set is empty".into()));
    }
    let mut mask = vec![false; dims.len()];
    for &k in keep {
        if k >= dims.len() {
            return Err(Error::InvalidSubsystems(format!(
                "subsystem {k} out of range for {} factors",
                dims.len()
            )));
        }
        if mask[k] {
            return Err(Error::InvalidSubsystems(format!("subsystem {k} repeated")));
        }
        mask[k] = true;
    }
    Ok(mask)
}

/// Splits a flat index into per-factor digits.
pub fn digits(mut index: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims.iter()).rev() {
        *slot = index % d;
        index /= d;
    }
}

/// Reduced matrix on the factors in `keep`, in their original relative order.
pub fn partial_trace(a: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let n = ensure_square(a)?;
    let mask = check_subsystems(n, dims, keep)?;

    let kept_dims: Vec<usize> = (0..dims.len()).filter(|&i| mask[i]).map(|i| dims[i]).collect();
    let traced_dims: Vec<usize> = (0..dims.len()).filter(|&i| !mask[i]).map(|i| dims[i]).collect();
    let dk: usize = kept_dims.iter().product();
    let dt: usize = traced_dims.iter().product();

    // strides of each factor in the full index
    let mut strides = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * dims[i + 1];
    }
    let kept_strides: Vec<usize> = (0..dims.len()).filter(|&i| mask[i]).map(|i| strides[i]).collect();
    let traced_strides: Vec<usize> = (0..dims.len()).filter(|&i| !mask[i]).map(|i| strides[i]).collect();

    let offsets = |sub_dims: &[usize], sub_strides: &[usize], count: usize| -> Vec<usize> {
        let mut buf = vec![0usize; sub_dims.len()];
        (0..count)
            .map(|idx| {
                digits(idx, sub_dims, &mut buf);
                buf.iter().zip(sub_strides).map(|(d, s)| d * s).sum()
            })
            .collect()
    };
    let kept_off = offsets(&kept_dims, &kept_strides, dk);
    let traced_off = offsets(&traced_dims, &traced_strides, dt);

    let mut out = ComplexMatrix::zeros(dk, dk);
    for (c, &co) in kept_off.iter().enumerate() {
        for (r, &ro) in kept_off.iter().enumerate() {
            let mut acc = ZERO;
            for &t in &traced_off {
                acc += a[(ro + t, co + t)];
            }
            out[(r, c)] = acc;
        }
    }
    Ok(out)
}

/// Whether `rho` is a density matrix: Hermitian, eigenvalues `>= -tol`, unit trace within `tol`.
pub fn is_density_matrix(rho: &ComplexMatrix, tol: f64) -> bool {
    if rho.nrows() != rho.ncols() || hermiticity_error(rho) > tol {
        return false;
    }
    let tr = trace(rho);
    if (tr.re - 1.0).abs() > tol || tr.im.abs() > tol {
        return false;
    }
    hermitian_part(rho)
        .symmetric_eigenvalues()
        .iter()
        .all(|&x| x >= -tol)
}

/// Rejects inputs that are not square of dimension `dim`.
pub fn expect_square(a: &ComplexMatrix, dim: usize) -> Result<()> {
    let n = ensure_square(a)?;
    if n != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: n,
        });
    }
    Ok(())
}

/// Row-major vectorization: `vec(A)[i*cols + j] = A[i,j]`.
pub fn vec_row_major(a: &ComplexMatrix) -> ComplexVector {
    let (r, c) = a.shape();
    ComplexVector::from_fn(r * c, |k, _| a[(k / c, k % c)])
}

/// Inverse of [`vec_row_major`].
pub fn unvec_row_major(v: &ComplexVector, rows: usize, cols: usize) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}
