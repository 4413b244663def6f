#![allow(dead_code)]
use dualpal::LinearOperator;

use std::sync::Arc;

use dualpal::{BoxSet, CsrMatrix, StandardQp};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct KnownSolution {
    pub qp: StandardQp<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub obj: f64,
}

/// Random QP built backwards from a chosen KKT point `(x, y, z)`: bounds of
/// mixed kinds, `x` at a bound or inside, `z` of the matching sign,
/// `Q = B B^T` of deficient rank, sparse `A`, then `b = Ax` and
/// `c = z - Qx + A^T y`.
pub fn kkt_instance(seed: u64, n: usize, m: usize) -> KnownSolution {
    kkt_instance_with(seed, n, m, QKind::Sparse)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QKind {
    Sparse,
    /// Same matrix hidden behind an operator without sparse access.
    MatrixFree,
    Zero,
}

/// Hides the sparse structure of the wrapped matrix.
pub struct Opaque(pub CsrMatrix<f64>);

impl LinearOperator<f64> for Opaque {
    fn nrows(&self) -> usize {
        self.0.nrows()
    }
    fn ncols(&self) -> usize {
        self.0.ncols()
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply(x, out)
    }
    fn apply_adjoint(&self, x: &[f64], out: &mut [f64]) {
        self.0.apply_adjoint(x, out)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
}

pub fn kkt_instance_with(seed: u64, n: usize, m: usize, kind: QKind) -> KnownSolution {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lower = vec![0.0; n];
    let mut upper = vec![0.0; n];
    let mut x = vec![0.0; n];
    let mut z = vec![0.0; n];
    for i in 0..n {
        let kind = rng.gen_range(0..4);
        let (l, u) = match kind {
            0 => (f64::NEG_INFINITY, f64::INFINITY),
            1 => (0.0, f64::INFINITY),
            2 => (f64::NEG_INFINITY, rng.gen_range(-1.0..1.0)),
            _ => {
                let l = rng.gen_range(-2.0..0.0);
                (l, l + rng.gen_range(0.5..3.0))
            }
        };
        lower[i] = l;
        upper[i] = u;
        let place = rng.gen_range(0..3);
        if place == 0 && l.is_finite() {
            x[i] = l;
            z[i] = rng.gen_range(0.0..2.0);
        } else if place == 1 && u.is_finite() {
            x[i] = u;
            z[i] = -rng.gen_range(0.0..2.0);
        } else {
            let lo = if l.is_finite() { l } else { -3.0 };
            let hi = if u.is_finite() { u } else { lo.max(-3.0) + 4.0 };
            x[i] = rng.gen_range(lo..hi);
            if x[i] <= l || x[i] >= u {
                x[i] = 0.5 * (lo + hi);
            }
        }
    }
    let rank = rng.gen_range(n / 4..=n).max(1);
    let mut bt = Vec::new();
    for k in 0..rank {
        for i in 0..n {
            if rng.gen_bool(0.15) {
                bt.push((k, i, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    let b_mat = CsrMatrix::from_triplets(rank, n, &bt).unwrap();
    let q = if kind == QKind::Zero {
        CsrMatrix::zeros(n, n)
    } else {
        b_mat.transpose().mul_self_transpose()
    };
    let mut at = Vec::new();
    for r in 0..m {
        at.push((r, r % n, 1.0 + rng.gen_range(0.0..1.0)));
        for j in 0..n {
            if rng.gen_bool(0.1) {
                at.push((r, j, rng.gen_range(-1.0..1.0)));
            }
        }
    }
    let a = CsrMatrix::from_triplets(m, n, &at).unwrap();
    let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let b = a.mul(&x);
    let qx = q.mul(&x);
    let aty = a.mul_adjoint(&y);
    let c: Vec<f64> = (0..n).map(|i| z[i] - qx[i] + aty[i]).collect();
    let obj = 0.5 * dot(&x, &qx) + dot(&c, &x);
    let bounds = BoxSet::new(lower, upper).unwrap();
    let op: dualpal::SharedOperator<f64> = match kind {
        QKind::Sparse => Arc::new(q),
        QKind::MatrixFree => Arc::new(Opaque(q)),
        QKind::Zero => Arc::new(dualpal::linops::ZeroOperator { n }),
    };
    let qp = StandardQp::new(op, a, b, c, bounds).unwrap();
    KnownSolution { qp, x, y, z, obj }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
