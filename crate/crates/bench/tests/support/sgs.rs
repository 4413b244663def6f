//! Dense oracle for one exact block sweep on the dual augmented Lagrangian
//!
//! ```text
//! L(z, w, y) = delta_C^*(-z) + 1/2 <w, Qw> - <b, y>
//!              + sigma/2 |z - Qw + A^T y - c + x/sigma|^2
//! ```
//!
//! with blocks ordered `(z, w, y)`. The oracle takes one proximal step with
//! the symmetric Gauss-Seidel operator `H_u H_d^{-1} H_u^T` built from the
//! Hessian `H` of the smooth part, and solves the resulting problem jointly:
//! `(w, y)` is eliminated by a dense solve and the remaining problem in `z`
//! through its dual, a box-constrained QP handled by coordinate descent.

use nalgebra::{DMatrix, DVector};

pub struct DenseInstance {
    pub q: DMatrix<f64>,
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct DenseIterate {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
    pub y: Vec<f64>,
}

fn sub(m: &DMatrix<f64>, r: std::ops::Range<usize>, c: std::ops::Range<usize>) -> DMatrix<f64> {
    m.view((r.start, c.start), (r.len(), c.len())).into_owned()
}

pub fn sgs_oracle_step(inst: &DenseInstance, it: &DenseIterate, sigma: f64, tau: f64) -> DenseIterate {
    let n = inst.q.nrows();
    let m = inst.a.nrows();
    assert_eq!(inst.a.ncols(), n);
    assert!(n <= 60, "oracle is meant for small dense instances");
    let big = 2 * n + m;
    let (zr, wr, yr) = (0..n, n..2 * n, 2 * n..big);

    let mut g = DMatrix::zeros(n, big);
    g.view_mut((0, 0), (n, n)).copy_from(&DMatrix::identity(n, n));
    g.view_mut((0, n), (n, n)).copy_from(&(-&inst.q));
    g.view_mut((0, 2 * n), (n, m)).copy_from(&inst.a.transpose());
    let mut h = g.transpose() * &g * sigma;
    {
        let mut hw = h.view_mut((n, n), (n, n));
        hw += &inst.q;
    }
    let shift = DVector::from_iterator(n, (0..n).map(|i| it.x[i] - sigma * inst.c[i]));
    let mut lin = g.transpose() * shift;
    for i in 0..m {
        lin[2 * n + i] -= inst.b[i];
    }

    let blocks = [zr.clone(), wr.clone(), yr.clone()];
    let mut hu = DMatrix::zeros(big, big);
    let mut hd_inv = DMatrix::zeros(big, big);
    for (bi, rb) in blocks.iter().enumerate() {
        let d = sub(&h, rb.clone(), rb.clone());
        let inv = d.clone().cholesky().expect("diagonal block must be positive definite").inverse();
        hd_inv.view_mut((rb.start, rb.start), (rb.len(), rb.len())).copy_from(&inv);
        for cb in blocks.iter().skip(bi + 1) {
            hu.view_mut((rb.start, cb.start), (rb.len(), cb.len()))
                .copy_from(&sub(&h, rb.clone(), cb.clone()));
        }
    }
    let sgs = &hu * hd_inv * hu.transpose();

    let mut v0 = DVector::zeros(big);
    for i in 0..n {
        v0[i] = it.z[i];
        v0[n + i] = it.w[i];
    }
    for i in 0..m {
        v0[2 * n + i] = it.y[i];
    }
    let k = &h + &sgs;
    let r = -lin + &sgs * v0;

    let ur = n..big;
    let kzz = sub(&k, zr.clone(), zr.clone());
    let kzu = sub(&k, zr.clone(), ur.clone());
    let kuu = sub(&k, ur.clone(), ur.clone());
    let kuu_inv = kuu.cholesky().expect("K_uu must be positive definite").inverse();
    let r_z = r.rows(0, n).into_owned();
    let r_u = r.rows(n, n + m).into_owned();
    let mz = &kzz - &kzu * &kuu_inv * kzu.transpose();
    let s = &r_z - &kzu * &kuu_inv * &r_u;

    let mz_inv = mz.clone().cholesky().expect("reduced z-Hessian must be positive definite").inverse();
    let xs = box_qp_dual(&mz_inv, &s, &inst.lower, &inst.upper);
    let z = &mz_inv * (&s + &xs);
    let u = &kuu_inv * (&r_u - kzu.transpose() * &z);
    let w = u.rows(0, n).into_owned();
    let y = u.rows(n, m).into_owned();

    let resid = &z - &inst.q * &w + inst.a.transpose() * &y;
    let x: Vec<f64> = (0..n)
        .map(|i| it.x[i] + tau * sigma * (resid[i] - inst.c[i]))
        .collect();
    DenseIterate {
        x,
        z: z.as_slice().to_vec(),
        w: w.as_slice().to_vec(),
        y: y.as_slice().to_vec(),
    }
}

/// `argmin_{l <= x <= u} 1/2 (s + x)^T P (s + x)` for positive definite `P`,
/// by cyclic exact coordinate minimisation.
fn box_qp_dual(p: &DMatrix<f64>, s: &DVector<f64>, lower: &[f64], upper: &[f64]) -> DVector<f64> {
    let n = s.len();
    let mut x = DVector::from_iterator(n, (0..n).map(|i| 0f64.clamp(lower[i], upper[i])));
    let mut g = p * (s + &x);
    for _ in 0..200_000 {
        let mut change = 0f64;
        for i in 0..n {
            let new = (x[i] - g[i] / p[(i, i)]).clamp(lower[i], upper[i]);
            let d = new - x[i];
            if d != 0.0 {
                x[i] = new;
                for j in 0..n {
                    g[j] += p[(j, i)] * d;
                }
                change = change.max(d.abs() / (1.0 + new.abs()));
            }
        }
        if change < 1e-15 {
            break;
        }
    }
    x
}
