//! Cheap spectral estimates for self-adjoint PSD operators. They feed
//! tolerance constants, not solution accuracy.

use super::{LinearOperator, SplitMix};
use crate::vecops;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralConfig {
    pub power_iterations: usize,
    /// Stop when `|Qv - lambda v| <= power_tol * lambda`.
    pub power_tol: f64,
    pub lanczos_steps: usize,
    /// Eigenvalues below `null_cutoff * norm2_estimate` count as zero.
    pub null_cutoff: f64,
    pub seed: u64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            power_iterations: 50,
            power_tol: 1e-4,
            lanczos_steps: 100,
            null_cutoff: 1e-10,
            seed: 0x5eed_1234,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorStats<T: Real> {
    /// Estimate of the largest eigenvalue (`|Q|_2`).
    pub norm2_estimate: T,
    /// Estimate of the smallest positive eigenvalue.
    pub lambda_plus_estimate: T,
    pub power_iterations: usize,
    pub lanczos_steps: usize,
}

fn machine_floor<T: Real>() -> T {
    T::epsilon()
}

/// Power-iteration estimate of the largest eigenvalue, floored at machine
/// epsilon so downstream divisions stay finite.
pub fn estimate_spectral_norm<T: Real>(op: &dyn LinearOperator<T>, cfg: &SpectralConfig) -> T {
    power_iteration(op, cfg).0
}

fn power_iteration<T: Real>(op: &dyn LinearOperator<T>, cfg: &SpectralConfig) -> (T, usize) {
    let n = op.ncols();
    if n == 0 {
        return (machine_floor(), 0);
    }
    let mut rng = SplitMix(cfg.seed);
    let mut v: Vec<T> = (0..n).map(|_| rng.next_signed::<T>() + T::lit(1.5)).collect();
    let nv = vecops::norm2(&v);
    vecops::scale(T::one() / nv, &mut v);
    let mut qv = vec![T::zero(); n];
    let mut lambda = T::zero();
    let mut iters = 0;
    for k in 0..cfg.power_iterations {
        iters = k + 1;
        op.apply(&v, &mut qv);
        lambda = vecops::dot(&v, &qv);
        let nq = vecops::norm2(&qv);
        if nq <= T::min_positive_value() {
            return (machine_floor(), iters);
        }
        let mut resid = T::zero();
        for (a, b) in qv.iter().zip(&v) {
            let d = *a - lambda * *b;
            resid += d * d;
        }
        let done = resid.sqrt() <= T::lit(cfg.power_tol) * lambda.abs();
        for (vi, qi) in v.iter_mut().zip(&qv) {
            *vi = *qi / nq;
        }
        if done {
            break;
        }
    }
    (lambda.max(machine_floor()), iters)
}

/// Lanczos estimate of the smallest eigenvalue above the null-space cutoff
/// `null_cutoff * norm2`. The Krylov space is seeded inside `Range(Q)`.
pub fn estimate_lambda_plus<T: Real>(
    op: &dyn LinearOperator<T>,
    norm2: T,
    cfg: &SpectralConfig,
) -> (T, usize) {
    let n = op.ncols();
    let cutoff = (T::lit(cfg.null_cutoff) * norm2).max(machine_floor());
    if n == 0 {
        return (cutoff, 0);
    }
    let mut rng = SplitMix(cfg.seed ^ 0xa5a5_a5a5);
    let probe: Vec<T> = (0..n).map(|_| rng.next_signed()).collect();
    let mut q = op.mul(&probe);
    let nq = vecops::norm2(&q);
    if nq <= T::min_positive_value() {
        return (cutoff, 0);
    }
    vecops::scale(T::one() / nq, &mut q);

    let steps = cfg.lanczos_steps.min(n);
    let reorth = n.saturating_mul(steps) <= 50_000_000;
    let mut basis: Vec<Vec<T>> = Vec::new();
    let mut alpha = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut prev = vec![T::zero(); n];
    let mut w = vec![T::zero(); n];
    for j in 0..steps {
        op.apply(&q, &mut w);
        let a = vecops::dot(&q, &w);
        alpha.push(a);
        vecops::axpy(-a, &q, &mut w);
        if j > 0 {
            vecops::axpy(-beta[j - 1], &prev, &mut w);
        }
        if reorth {
            for b in basis.iter().chain(std::iter::once(&q)) {
                let c = vecops::dot(b, &w);
                vecops::axpy(-c, b, &mut w);
            }
        }
        let b = vecops::norm2(&w);
        if reorth {
            basis.push(q.clone());
        }
        if b <= T::lit(1e-12) * norm2.max(T::one()) {
            break;
        }
        beta.push(b);
        std::mem::swap(&mut prev, &mut q);
        for (qi, wi) in q.iter_mut().zip(&w) {
            *qi = *wi / b;
        }
    }
    let k = alpha.len();
    let below = sturm_count(&alpha, &beta, cutoff);
    let est = if below < k {
        tridiagonal_eigenvalue(&alpha, &beta, below)
    } else {
        cutoff
    };
    (est.max(cutoff), k)
}

/// Number of eigenvalues below `x` of the symmetric tridiagonal matrix with
/// diagonal `alpha` and off-diagonal `beta`.
pub fn sturm_count<T: Real>(alpha: &[T], beta: &[T], x: T) -> usize {
    let tiny = T::min_positive_value().sqrt();
    let mut count = 0;
    let mut d = T::one();
    for i in 0..alpha.len() {
        let off = if i == 0 { T::zero() } else { beta[i - 1] * beta[i - 1] / d };
        d = alpha[i] - x - off;
        if d.abs() < tiny {
            d = -tiny;
        }
        if d < T::zero() {
            count += 1;
        }
    }
    count
}

/// The `index`-th smallest eigenvalue (from 0) of a symmetric tridiagonal
/// matrix, by bisection on the Sturm count.
pub fn tridiagonal_eigenvalue<T: Real>(alpha: &[T], beta: &[T], index: usize) -> T {
    let k = alpha.len();
    assert!(index < k, "eigenvalue index out of range");
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..k {
        let r = if i > 0 { beta[i - 1].abs() } else { T::zero() }
            + if i + 1 < k { beta[i].abs() } else { T::zero() };
        lo = lo.min(alpha[i] - r);
        hi = hi.max(alpha[i] + r);
    }
    let tol = T::lit(4.0) * T::epsilon() * lo.abs().max(hi.abs()).max(T::min_positive_value());
    for _ in 0..200 {
        if hi - lo <= tol {
            break;
        }
        let mid = (lo + hi) / T::lit(2.0);
        if sturm_count(alpha, beta, mid) > index {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

pub fn operator_stats<T: Real>(op: &dyn LinearOperator<T>, cfg: &SpectralConfig) -> OperatorStats<T> {
    let (norm2, power_iterations) = power_iteration(op, cfg);
    let (lp, lanczos_steps) = estimate_lambda_plus(op, norm2, cfg);
    OperatorStats {
        norm2_estimate: norm2,
        lambda_plus_estimate: lp.min(norm2),
        power_iterations,
        lanczos_steps,
    }
}
