//! Linear operators: sparse and dense matrices, matrix-free structured
//! operators, and spectral estimates.

mod csr;
mod dense;
mod spectral;
mod structured;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

pub use csr::CsrMatrix;
pub use dense::{symmetric_eigen, DenseMatrix};
pub use spectral::{
    estimate_lambda_plus, estimate_spectral_norm, operator_stats, sturm_count, tridiagonal_eigenvalue,
    OperatorStats, SpectralConfig,
};
pub use structured::{
    biq_operator, biq_shift, qap_operator, smat, svec, svec_index, svec_len, BiqOperator,
    LowRankPlusDiag, QapOperator,
};

use crate::vecops;
use crate::Real;

/// A linear map `R^ncols -> R^nrows` available only through products.
pub trait LinearOperator<T: Real>: Send + Sync {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;

    /// `y = Op x`; `y` is overwritten.
    fn apply(&self, x: &[T], y: &mut [T]);

    /// `y = Op^T x`; `y` is overwritten.
    fn apply_adjoint(&self, x: &[T], y: &mut [T]);

    fn is_self_adjoint(&self) -> bool {
        false
    }

    /// Explicit sparse representation, when the operator has one.
    fn as_csr(&self) -> Option<&CsrMatrix<T>> {
        None
    }

    /// Number of scalars held in memory by the operator.
    fn stored_entries(&self) -> usize;

    /// Main diagonal, when the operator can produce it without `n` products.
    fn diagonal(&self) -> Option<Vec<T>> {
        None
    }

    fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows()];
        self.apply(x, &mut y);
        y
    }

    fn mul_adjoint(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.ncols()];
        self.apply_adjoint(x, &mut y);
        y
    }
}

pub type SharedOperator<T> = Arc<dyn LinearOperator<T>>;

impl<T: Real, O: LinearOperator<T> + ?Sized> LinearOperator<T> for Arc<O> {
    fn nrows(&self) -> usize {
        (**self).nrows()
    }
    fn ncols(&self) -> usize {
        (**self).ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        (**self).apply(x, y)
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        (**self).apply_adjoint(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        (**self).is_self_adjoint()
    }
    fn as_csr(&self) -> Option<&CsrMatrix<T>> {
        (**self).as_csr()
    }
    fn stored_entries(&self) -> usize {
        (**self).stored_entries()
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        (**self).diagonal()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Identity {
    pub n: usize,
}

impl<T: Real> LinearOperator<T> for Identity {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        y.copy_from_slice(x);
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        Some(vec![T::one(); self.n])
    }
}

/// The zero operator on `R^n` (linear programs).
#[derive(Debug, Clone, Copy)]
pub struct ZeroOperator {
    pub n: usize,
}

impl<T: Real> LinearOperator<T> for ZeroOperator {
    fn nrows(&self) -> usize {
        self.n
    }
    fn ncols(&self) -> usize {
        self.n
    }
    fn apply(&self, _x: &[T], y: &mut [T]) {
        y.fill(T::zero());
    }
    fn apply_adjoint(&self, _x: &[T], y: &mut [T]) {
        y.fill(T::zero());
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        Some(vec![T::zero(); self.n])
    }
}

/// `alpha * Op`.
pub struct Scaled<T: Real> {
    pub alpha: T,
    pub inner: SharedOperator<T>,
}

impl<T: Real> LinearOperator<T> for Scaled<T> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.inner.apply(x, y);
        vecops::scale(self.alpha, y);
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.inner.apply_adjoint(x, y);
        vecops::scale(self.alpha, y);
    }
    fn is_self_adjoint(&self) -> bool {
        self.inner.is_self_adjoint()
    }
    fn stored_entries(&self) -> usize {
        self.inner.stored_entries()
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        let mut d = self.inner.diagonal()?;
        vecops::scale(self.alpha, &mut d);
        Some(d)
    }
}

/// `Diag(Op, 0_extra)`: a square operator padded with a zero block, as used
/// when slack variables are appended to a problem.
pub struct ZeroPadded<T: Real> {
    pub inner: SharedOperator<T>,
    pub extra: usize,
    csr: Option<CsrMatrix<T>>,
}

impl<T: Real> ZeroPadded<T> {
    pub fn new(inner: SharedOperator<T>, extra: usize) -> Self {
        let csr = inner.as_csr().map(|m| m.padded(extra, extra));
        Self { inner, extra, csr }
    }
}

impl<T: Real> LinearOperator<T> for ZeroPadded<T> {
    fn nrows(&self) -> usize {
        self.inner.nrows() + self.extra
    }
    fn ncols(&self) -> usize {
        self.inner.ncols() + self.extra
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let n = self.inner.ncols();
        let m = self.inner.nrows();
        self.inner.apply(&x[..n], &mut y[..m]);
        y[m..].fill(T::zero());
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        let n = self.inner.ncols();
        let m = self.inner.nrows();
        self.inner.apply_adjoint(&x[..m], &mut y[..n]);
        y[n..].fill(T::zero());
    }
    fn is_self_adjoint(&self) -> bool {
        self.inner.is_self_adjoint()
    }
    fn as_csr(&self) -> Option<&CsrMatrix<T>> {
        self.csr.as_ref()
    }
    fn stored_entries(&self) -> usize {
        self.inner.stored_entries() + self.csr.as_ref().map_or(0, |c| c.nnz())
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        let mut d = self.inner.diagonal()?;
        d.resize(d.len() + self.extra, T::zero());
        Some(d)
    }
}

/// Direct sum `Diag(Op1, Op2)` of two operators.
pub struct BlockDiagonal<T: Real> {
    pub first: SharedOperator<T>,
    pub second: SharedOperator<T>,
}

impl<T: Real> LinearOperator<T> for BlockDiagonal<T> {
    fn nrows(&self) -> usize {
        self.first.nrows() + self.second.nrows()
    }
    fn ncols(&self) -> usize {
        self.first.ncols() + self.second.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let (n1, m1) = (self.first.ncols(), self.first.nrows());
        self.first.apply(&x[..n1], &mut y[..m1]);
        self.second.apply(&x[n1..], &mut y[m1..]);
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        let (n1, m1) = (self.first.ncols(), self.first.nrows());
        self.first.apply_adjoint(&x[..m1], &mut y[..n1]);
        self.second.apply_adjoint(&x[m1..], &mut y[n1..]);
    }
    fn is_self_adjoint(&self) -> bool {
        self.first.is_self_adjoint() && self.second.is_self_adjoint()
    }
    fn stored_entries(&self) -> usize {
        self.first.stored_entries() + self.second.stored_entries()
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        let mut d = self.first.diagonal()?;
        d.extend(self.second.diagonal()?);
        Some(d)
    }
}

/// Wraps an operator and counts forward/adjoint products.
pub struct CountingOperator<T: Real> {
    inner: SharedOperator<T>,
    applies: AtomicUsize,
}

impl<T: Real> CountingOperator<T> {
    pub fn new(inner: SharedOperator<T>) -> Self {
        Self {
            inner,
            applies: AtomicUsize::new(0),
        }
    }

    pub fn count(&self) -> usize {
        self.applies.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.applies.store(0, Ordering::Relaxed);
    }
}

impl<T: Real> LinearOperator<T> for CountingOperator<T> {
    fn nrows(&self) -> usize {
        self.inner.nrows()
    }
    fn ncols(&self) -> usize {
        self.inner.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.applies.fetch_add(1, Ordering::Relaxed);
        self.inner.apply(x, y)
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.applies.fetch_add(1, Ordering::Relaxed);
        self.inner.apply_adjoint(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        self.inner.is_self_adjoint()
    }
    fn as_csr(&self) -> Option<&CsrMatrix<T>> {
        self.inner.as_csr()
    }
    fn stored_entries(&self) -> usize {
        self.inner.stored_entries()
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        self.inner.diagonal()
    }
}

/// Largest `|<Op u, v> - <u, Op^T v>|` relative to `1 + |u||v|` over
/// deterministic pseudo-random pairs.
pub fn adjoint_mismatch<T: Real>(op: &dyn LinearOperator<T>, pairs: usize, seed: u64) -> T {
    let mut rng = SplitMix(seed);
    let mut worst = T::zero();
    for _ in 0..pairs {
        let u: Vec<T> = (0..op.ncols()).map(|_| rng.next_signed()).collect();
        let v: Vec<T> = (0..op.nrows()).map(|_| rng.next_signed()).collect();
        let lhs = vecops::dot(&op.mul(&u), &v);
        let rhs = vecops::dot(&u, &op.mul_adjoint(&v));
        let scale = T::one() + vecops::norm2(&u) * vecops::norm2(&v);
        worst = worst.max((lhs - rhs).abs() / scale);
    }
    worst
}

/// Smallest Rayleigh quotient `<x, Op x> / <x, x>` over random probes.
pub fn min_rayleigh_quotient<T: Real>(op: &dyn LinearOperator<T>, probes: usize, seed: u64) -> T {
    let mut rng = SplitMix(seed);
    let mut worst = T::infinity();
    for _ in 0..probes {
        let x: Vec<T> = (0..op.ncols()).map(|_| rng.next_signed()).collect();
        let nx = vecops::dot(&x, &x);
        if nx > T::zero() {
            worst = worst.min(vecops::dot(&x, &op.mul(&x)) / nx);
        }
    }
    worst
}

/// Tiny deterministic generator for probe vectors inside numerical kernels,
/// so that core code needs no RNG dependency.
#[derive(Debug, Clone)]
pub(crate) struct SplitMix(pub u64);

impl SplitMix {
    pub fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in [-1, 1).
    pub fn next_signed<T: Real>(&mut self) -> T {
        let u = (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64;
        T::lit(2.0 * u - 1.0)
    }
}
