//! Small dense linear algebra helpers on top of `nalgebra`.
//!
//! Everything here works on dynamically sized matrices; the dimensions in this crate are
//! small (Hilbert spaces up to a few dozen, a handful of parameters).

use alloc::format;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::math;
use crate::{Error, Result, C64};

pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

/// Largest condition number accepted when inverting a Fisher matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Modulus of a complex number (available without `std`).
pub trait Modulus {
    fn modulus(&self) -> f64;
}

impl Modulus for C64 {
    #[inline]
    fn modulus(&self) -> f64 {
        math::hypot(self.re, self.im)
    }
}

/// Eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct HermEigen {
    pub values: Vec<f64>,
    /// Eigenvectors as columns, in the order of `values`.
    pub vectors: CMat,
}

impl HermEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// `U^† X U`.
    pub fn to_eigenbasis(&self, x: &CMat) -> CMat {
        self.vectors.adjoint() * x * &self.vectors
    }

    /// `U X U^†`.
    pub fn from_eigenbasis(&self, x: &CMat) -> CMat {
        &self.vectors * x * self.vectors.adjoint()
    }

    /// Rebuild `U f(Λ) U^†`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMat {
        let n = self.values.len();
        let diag = CMat::from_fn(n, n, |i, j| {
            if i == j {
                c(f(self.values[i]), 0.0)
            } else {
                c(0.0, 0.0)
            }
        });
        self.from_eigenbasis(&diag)
    }
}

pub fn herm_eigen(m: &CMat) -> HermEigen {
    let sym = hermitian_part(m);
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    HermEigen { values, vectors }
}

/// Eigendecomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: RMat,
}

impl SymEigen {
    pub fn map(&self, f: impl Fn(f64) -> f64) -> RMat {
        let n = self.values.len();
        let mut d = RMat::zeros(n, n);
        for i in 0..n {
            d[(i, i)] = f(self.values[i]);
        }
        &self.vectors * d * self.vectors.transpose()
    }
}

pub fn sym_eigen(m: &RMat) -> SymEigen {
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = RMat::from_fn(n, n, |r, k| eig.eigenvectors[(r, order[k])]);
    SymEigen { values, vectors }
}

pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * c(0.5, 0.0)
}

pub fn symmetric_part(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Max absolute entry of `m - m^†`.
pub fn hermiticity_deviation(m: &CMat) -> f64 {
    let d = m - m.adjoint();
    d.iter().fold(0.0, |acc, z| acc.max(z.modulus()))
}

pub fn symmetry_deviation(m: &RMat) -> f64 {
    let d = m - m.transpose();
    d.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

pub fn max_abs(m: &CMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.modulus()))
}

pub fn max_abs_real(m: &RMat) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.abs()))
}

pub fn trace(m: &CMat) -> C64 {
    m.diagonal().iter().fold(c(0.0, 0.0), |acc, z| acc + z)
}

/// `tr[A B]` without forming the product.
pub fn trace_product(a: &CMat, b: &CMat) -> C64 {
    let n = a.nrows();
    let mut acc = c(0.0, 0.0);
    for i in 0..n {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

pub fn frobenius(m: &CMat) -> f64 {
    math::sqrt(m.iter().map(|z| z.norm_sqr()).sum())
}

pub fn real_part(m: &CMat) -> RMat {
    m.map(|z| z.re)
}

pub fn imag_part(m: &CMat) -> RMat {
    m.map(|z| z.im)
}

pub fn complexify(m: &RMat) -> CMat {
    m.map(|x| c(x, 0.0))
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    a * b + b * a
}

/// Pauli matrices `(σ_x, σ_y, σ_z)`.
pub fn pauli() -> [CMat; 3] {
    let z = c(0.0, 0.0);
    let one = c(1.0, 0.0);
    let i = c(0.0, 1.0);
    [
        CMat::from_row_slice(2, 2, &[z, one, one, z]),
        CMat::from_row_slice(2, 2, &[z, -i, i, z]),
        CMat::from_row_slice(2, 2, &[one, z, z, -one]),
    ]
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

/// Inverse of a positive definite Hermitian matrix, refusing condition numbers above
/// [`MAX_CONDITION`].
pub fn inv_hermitian_pd(m: &CMat, what: &str) -> Result<CMat> {
    let eig = herm_eigen(m);
    check_spectrum(&eig.values, what)?;
    Ok(eig.map(|x| 1.0 / x))
}

/// Inverse of a positive definite real symmetric matrix with the same guard.
pub fn inv_sym_pd(m: &RMat, what: &str) -> Result<RMat> {
    let eig = sym_eigen(m);
    check_spectrum(&eig.values, what)?;
    Ok(eig.map(|x| 1.0 / x))
}

fn check_spectrum(values: &[f64], what: &str) -> Result<()> {
    let (lo, hi) = match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return Err(Error::SingularQfim(format!("{what}: empty matrix"))),
    };
    if !(lo > 0.0) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::SingularQfim(format!(
            "{what}: min eigenvalue {lo:e}"
        )));
    }
    let kappa = hi / lo;
    if kappa > MAX_CONDITION {
        return Err(Error::SingularQfim(format!(
            "{what}: condition number {kappa:e}"
        )));
    }
    Ok(())
}

/// Condition number of a symmetric positive definite matrix (infinite if not PD).
pub fn condition_number(m: &RMat) -> f64 {
    let eig = sym_eigen(m);
    let lo = eig.values.first().copied().unwrap_or(0.0);
    let hi = eig.values.last().copied().unwrap_or(0.0);
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}

/// Moore–Penrose pseudo-inverse of a symmetric PSD matrix; eigenvalues below
/// `cutoff * max_eigenvalue` are treated as zero. Returns the inverse and the rank kept.
pub fn pinv_sym(m: &RMat, cutoff: f64) -> (RMat, usize) {
    let eig = sym_eigen(m);
    let top = eig.values.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let thresh = cutoff * top.max(f64::MIN_POSITIVE);
    let rank = eig.values.iter().filter(|v| v.abs() > thresh).count();
    (
        eig.map(|x| if x.abs() > thresh { 1.0 / x } else { 0.0 }),
        rank,
    )
}

/// Principal square root of a symmetric PSD matrix (negative rounding noise clipped).
pub fn sqrt_psd(m: &RMat) -> RMat {
    sym_eigen(m).map(|x| math::sqrt(x.max(0.0)))
}

pub fn singular_values(m: &RMat) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect()
}

/// Nuclear norm `Tr|X|`.
pub fn trace_norm(m: &RMat) -> f64 {
    singular_values(m).iter().sum()
}

/// Extract a sub-block by row and column index lists.
pub fn block<T: nalgebra::Scalar + Copy>(
    m: &DMatrix<T>,
    rows: &[usize],
    cols: &[usize],
) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| m[(rows[i], cols[j])])
}

/// `Σ_k coeffs[k] * ops[k]` with complex coefficients.
pub fn combine(coeffs: &[C64], ops: &[CMat]) -> CMat {
    let n = ops.first().map(|m| m.nrows()).unwrap_or(0);
    let mut out = CMat::zeros(n, n);
    for (w, op) in coeffs.iter().zip(ops) {
        out += op * *w;
    }
    out
}

/// `Σ_k coeffs[k] * ops[k]` with real coefficients.
pub fn combine_real(coeffs: &[f64], ops: &[CMat]) -> CMat {
    let n = ops.first().map(|m| m.nrows()).unwrap_or(0);
    let mut out = CMat::zeros(n, n);
    for (w, op) in coeffs.iter().zip(ops) {
        out += op * c(*w, 0.0);
    }
    out
}

/// Index lists of the interest and nuisance blocks.
pub fn split_indices(d_interest: usize, d_total: usize) -> (Vec<usize>, Vec<usize>) {
    ((0..d_interest).collect(), (d_interest..d_total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_reconstructs() {
        let [sx, _, sz] = pauli();
        let m = &sx * c(0.3, 0.0) + &sz * c(0.4, 0.0);
        let eig = herm_eigen(&m);
        assert!((eig.values[0] + 0.5).abs() < 1e-14);
        assert!((eig.values[1] - 0.5).abs() < 1e-14);
        let back = eig.map(|x| x);
        assert!(max_abs(&(back - m)) < 1e-14);
    }

    #[test]
    fn guarded_inverse_rejects_ill_conditioned() {
        let m = RMat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-13]);
        assert!(matches!(inv_sym_pd(&m, "J"), Err(Error::SingularQfim(_))));
        let ok = RMat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let inv = inv_sym_pd(&ok, "J").unwrap();
        assert!(max_abs_real(&(inv * ok - RMat::identity(2, 2))) < 1e-14);
    }

    #[test]
    fn pinv_of_rank_one() {
        let m = RMat::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (p, rank) = pinv_sym(&m, 1e-10);
        assert_eq!(rank, 1);
        assert!(max_abs_real(&(&m * &p * &m - &m)) < 1e-14);
    }

    #[test]
    fn trace_norm_of_antisymmetric() {
        let m = RMat::from_row_slice(2, 2, &[0.0, 0.5, -0.5, 0.0]);
        assert!((trace_norm(&m) - 1.0).abs() < 1e-14);
    }
}
