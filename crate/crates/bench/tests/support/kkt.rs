use std::sync::Arc;

use dualpal::LinearOperator;

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

/// [`kkt_instance`] after the change of variables `x = D x_new` with
/// `D = diag(10^u)`, `u` uniform in `[-spread, spread]`. The optimal value is
/// unchanged; `Q`, `A`, `c` and the bounds become badly scaled.
pub fn badly_scaled_instance(seed: u64, n: usize, m: usize, spread: f64) -> KnownSolution {
    let base = kkt_instance(seed, n, m);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ca1e);
    let d: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-spread..=spread))).collect();
    let q = base.qp.q().as_csr().expect("sparse Q").clone();
    let qt: Vec<_> = q.triplets().into_iter().map(|(i, j, v)| (i, j, d[i] * v * d[j])).collect();
    let at: Vec<_> = base.qp.a().triplets().into_iter().map(|(i, j, v)| (i, j, v * d[j])).collect();
    let c: Vec<f64> = (0..n).map(|i| d[i] * base.qp.c()[i]).collect();
    let b = base.qp.bounds();
    let lower: Vec<f64> = (0..n).map(|i| b.lower()[i] / d[i]).collect();
    let upper: Vec<f64> = (0..n).map(|i| b.upper()[i] / d[i]).collect();
    let qp = StandardQp::new(
        Arc::new(CsrMatrix::from_triplets(n, n, &qt).unwrap()),
        CsrMatrix::from_triplets(base.qp.m(), n, &at).unwrap(),
        base.qp.b().to_vec(),
        c,
        BoxSet::new(lower, upper).unwrap(),
    )
    .unwrap();
    KnownSolution {
        qp,
        x: (0..n).map(|i| base.x[i] / d[i]).collect(),
        y: base.y,
        z: (0..n).map(|i| base.z[i] * d[i]).collect(),
        obj: base.obj,
    }
}
