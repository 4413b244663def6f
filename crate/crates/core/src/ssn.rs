//! Semismooth Newton method for the inner problem of the proximal ALM phase.
//!
//! For fixed `x_hat`, `sigma`, `tau` and anchor `(w_a, y_a)`, the objective is
//!
//! ```text
//! phi(w, y) = (|zp|^2 - |zp - Pi(zp)|^2 - |x_hat|^2) / (2 sigma)
//!             + 1/2<w,Qw> - <b,y> + nu/2 (|w - w_a|_Q^2 + |y - y_a|^2)
//! zp        = x_hat - sigma (Qw - A^T y + c),   nu = tau / sigma
//! ```
//!
//! Its gradient has `w`-block `Q g_w` with `g_w = w - Pi(zp) + nu (w - w_a)`
//! and `y`-block `A Pi(zp) - b + nu (y - y_a)`. Newton systems are solved in
//! the "pre-Q" form with matrix `V_hat` (the `w`-rows stripped of their
//! leading `Q`), so `w` never needs projecting onto `Range(Q)`.

use crate::error::{Error, Result};
use crate::linops::{CsrMatrix, DenseMatrix, LinearOperator};
use crate::linsolve::{
    bicgstab_solve, chol_factor, minres_solve, minres_solve_preconditioned, CholFactor, CholOptions,
    DenseCholesky,
};
use crate::problem::{BoxSet, StandardQp, WRepresentation};
use crate::vecops::{dot, norm2};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPolicy {
    /// Reduced path only when `p <= p_max_ratio * n`.
    pub p_max_ratio: f64,
    /// Reduced path only when `sigma <= sigma_switch`.
    pub sigma_switch: f64,
    /// Dense Cholesky of the reduced matrix when `Q` is an explicit sparse
    /// matrix and `p` is at most this; `p_max_ratio` does not apply then.
    pub dense_max: usize,
    /// Reduced MINRES is preconditioned by `diag + low rank` inverted with a
    /// sparse `m x m` factorization when `m` is at most this; plain Jacobi
    /// otherwise.
    pub woodbury_max_rows: usize,
}

impl Default for PathPolicy {
    fn default() -> Self {
        Self {
            p_max_ratio: 0.7,
            sigma_switch: 1e6,
            dense_max: 500,
            woodbury_max_rows: 20_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SsnConfig {
    pub eta_bar: f64,
    /// Newton tolerance `eta_j = min(eta_bar, |grad|^(1 + nu_exp))`.
    pub nu_exp: f64,
    /// Line-search contraction factor.
    pub delta_ls: f64,
    /// Armijo constant.
    pub rho: f64,
    pub max_newton_iter: usize,
    pub max_ls_steps: usize,
    pub krylov_max_iter: usize,
    pub path: PathPolicy,
}

impl Default for SsnConfig {
    fn default() -> Self {
        Self {
            eta_bar: 1e-2,
            nu_exp: 0.5,
            delta_ls: 0.5,
            rho: 1e-4,
            max_newton_iter: 50,
            max_ls_steps: 50,
            krylov_max_iter: 500,
            path: PathPolicy::default(),
        }
    }
}

impl SsnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.eta_bar > 0.0 && self.eta_bar < 1.0) {
            return bad("eta_bar must lie in (0, 1)");
        }
        if !(self.nu_exp > 0.0 && self.nu_exp <= 1.0) {
            return bad("nu_exp must lie in (0, 1]");
        }
        if !(self.delta_ls > 0.0 && self.delta_ls < 1.0) {
            return bad("delta_ls must lie in (0, 1)");
        }
        if !(self.rho > 0.0 && self.rho < 0.5) {
            return bad("rho must lie in (0, 1/2)");
        }
        Ok(())
    }
}

/// Indices where the projection argument lies strictly inside the box.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActivePartition {
    interior: Vec<usize>,
    complement: Vec<usize>,
    mask: Vec<bool>,
}

impl ActivePartition {
    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn complement(&self) -> &[usize] {
        &self.complement
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn p(&self) -> usize {
        self.interior.len()
    }

    pub fn n(&self) -> usize {
        self.mask.len()
    }

    pub fn from_mask(mask: Vec<bool>) -> Self {
        let interior = (0..mask.len()).filter(|&i| mask[i]).collect();
        let complement = (0..mask.len()).filter(|&i| !mask[i]).collect();
        Self {
            interior,
            complement,
            mask,
        }
    }
}

/// `P = { i : lower[i] < zp[i] < upper[i] }`; points on a bound go to `Z`.
pub fn active_partition<T: Real>(zp: &[T], bounds: &BoxSet<T>) -> ActivePartition {
    ActivePartition::from_mask(
        zp.iter()
            .enumerate()
            .map(|(i, &v)| bounds.strictly_inside(i, v))
            .collect(),
    )
}

/// Fixed data of one inner problem.
pub struct PhiContext<'a, T: Real> {
    pub qp: &'a StandardQp<T>,
    pub x_hat: &'a [T],
    pub sigma: T,
    pub tau: T,
    pub anchor_w: &'a WRepresentation<T>,
    pub anchor_y: &'a [T],
    /// Estimate of `|Q|_2`, used to scale Krylov tolerances.
    pub norm2_q: T,
}

impl<T: Real> PhiContext<'_, T> {
    pub fn nu(&self) -> T {
        self.tau / self.sigma
    }

    fn zp(&self, qw: &[T], aty: &[T]) -> Vec<T> {
        let c = self.qp.c();
        (0..qw.len())
            .map(|i| self.x_hat[i] - self.sigma * (qw[i] - aty[i] + c[i]))
            .collect()
    }

    /// `phi` and `zp` at `(w_hat, qw, y, aty)`; no operator applications.
    fn value(&self, w_hat: &[T], qw: &[T], y: &[T], aty: &[T]) -> (T, Vec<T>) {
        let zp = self.zp(qw, aty);
        let bounds = self.qp.bounds();
        let mut env = T::zero();
        for (i, &v) in zp.iter().enumerate() {
            let d = v - bounds.clamp(i, v);
            env += v * v - d * d;
        }
        let two = T::lit(2.0);
        let xx = dot(self.x_hat, self.x_hat);
        let mut prox = T::zero();
        for i in 0..w_hat.len() {
            prox += (w_hat[i] - self.anchor_w.w_hat[i]) * (qw[i] - self.anchor_w.qw[i]);
        }
        for (yi, ai) in y.iter().zip(self.anchor_y) {
            prox += (*yi - *ai) * (*yi - *ai);
        }
        let value = (env - xx) / (two * self.sigma) + dot(w_hat, qw) / two - dot(self.qp.b(), y)
            + self.nu() * prox / two;
        (value, zp)
    }
}

/// A point of the inner problem with its value and gradient.
#[derive(Debug, Clone)]
pub struct PhiPoint<T: Real> {
    pub w: WRepresentation<T>,
    pub y: Vec<T>,
    pub aty: Vec<T>,
    pub zp: Vec<T>,
    /// `Pi_C(zp)`, the candidate primal update.
    pub proj: Vec<T>,
    /// `Q Pi_C(zp)`.
    pub q_proj: Vec<T>,
    pub value: T,
    /// `g_w`; the true `w`-gradient is `Q g_w`.
    pub grad_pre_w: Vec<T>,
    pub grad_w: Vec<T>,
    pub grad_y: Vec<T>,
    pub grad_norm: T,
}

/// Value and gradient of `phi`. Costs one application of `Q` (for
/// `Q Pi(zp)`); `Qw` comes from the representation.
pub fn eval_phi_and_grad<T: Real>(
    ctx: &PhiContext<'_, T>,
    w: WRepresentation<T>,
    y: Vec<T>,
    aty: Vec<T>,
) -> PhiPoint<T> {
    let (value, zp) = ctx.value(&w.w_hat, &w.qw, &y, &aty);
    let proj = ctx.qp.bounds().project(&zp);
    let q_proj = ctx.qp.q().mul(&proj);
    let nu = ctx.nu();
    let n = zp.len();
    let mut grad_pre_w = vec![T::zero(); n];
    let mut grad_w = vec![T::zero(); n];
    for i in 0..n {
        grad_pre_w[i] = w.w_hat[i] - proj[i] + nu * (w.w_hat[i] - ctx.anchor_w.w_hat[i]);
        grad_w[i] = w.qw[i] - q_proj[i] + nu * (w.qw[i] - ctx.anchor_w.qw[i]);
    }
    let ap = ctx.qp.a().mul(&proj);
    let grad_y: Vec<T> = (0..y.len())
        .map(|i| ap[i] - ctx.qp.b()[i] + nu * (y[i] - ctx.anchor_y[i]))
        .collect();
    let grad_norm = (dot(&grad_w, &grad_w) + dot(&grad_y, &grad_y)).sqrt();
    PhiPoint {
        w,
        y,
        aty,
        zp,
        proj,
        q_proj,
        value,
        grad_pre_w,
        grad_w,
        grad_y,
        grad_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NewtonPath {
    ReducedDense,
    ReducedIterative,
    Nonsymmetric,
    GradientFallback,
}

/// The linear system of one Newton step in pre-Q form:
/// `V_hat (d_w; d_y) = (r1; r2)` with
/// `V_hat = [(1+nu) I + sigma U Q, -sigma U A^T; -sigma A U Q, nu I + sigma A U A^T]`.
#[derive(Debug, Clone)]
pub struct NewtonSystem<T: Real> {
    pub partition: ActivePartition,
    pub sigma: T,
    pub nu: T,
    pub r1: Vec<T>,
    pub r2: Vec<T>,
}

impl<T: Real> NewtonSystem<T> {
    /// System at `point`: `U` from `zp`, right-hand side `-(g_w; g_y)`.
    pub fn at(ctx: &PhiContext<'_, T>, point: &PhiPoint<T>) -> Self {
        Self {
            partition: active_partition(&point.zp, ctx.qp.bounds()),
            sigma: ctx.sigma,
            nu: ctx.nu(),
            r1: point.grad_pre_w.iter().map(|&v| -v).collect(),
            r2: point.grad_y.iter().map(|&v| -v).collect(),
        }
    }

    /// `r1_bar = r1^P - sigma/(1+nu) (Q_PZ r1^Z)` and
    /// `r2_bar = r2 + sigma/(1+nu) A_P (Q_PZ r1^Z)`. Costs one `Q` apply when
    /// `Z` is nonempty.
    pub fn reduced_rhs(&self, qp: &StandardQp<T>) -> (Vec<T>, Vec<T>) {
        let part = &self.partition;
        let n = part.n();
        let coef = self.sigma / (T::one() + self.nu);
        let mut r1_bar: Vec<T> = part.interior().iter().map(|&i| self.r1[i]).collect();
        let mut r2_bar = self.r2.clone();
        if part.p() > 0 && !part.complement().is_empty() {
            let mut rz = vec![T::zero(); n];
            for &i in part.complement() {
                rz[i] = self.r1[i];
            }
            let qrz = qp.q().mul(&rz);
            let mut qpz = vec![T::zero(); n];
            for (k, &i) in part.interior().iter().enumerate() {
                r1_bar[k] -= coef * qrz[i];
                qpz[i] = qrz[i];
            }
            let a_qpz = qp.a().mul(&qpz);
            for (r, v) in r2_bar.iter_mut().zip(&a_qpz) {
                *r += coef * *v;
            }
        }
        (r1_bar, r2_bar)
    }

    /// `V_hat d - r` given `Q d_w`.
    pub fn residual(&self, qp: &StandardQp<T>, dw: &[T], qdw: &[T], dy: &[T]) -> (Vec<T>, Vec<T>) {
        let aty = qp.a().mul_adjoint(dy);
        let mask = self.partition.mask();
        let t: Vec<T> = (0..dw.len())
            .map(|i| if mask[i] { qdw[i] - aty[i] } else { T::zero() })
            .collect();
        let at = qp.a().mul(&t);
        let one = T::one();
        let res1 = (0..dw.len())
            .map(|i| (one + self.nu) * dw[i] + self.sigma * t[i] - self.r1[i])
            .collect();
        let res2 = (0..dy.len())
            .map(|i| self.nu * dy[i] - self.sigma * at[i] - self.r2[i])
            .collect();
        (res1, res2)
    }
}

/// `V_hat` as an operator on `R^{n+m}`; one `Q` apply per product.
pub struct VHatOperator<'a, T: Real> {
    pub q: &'a dyn LinearOperator<T>,
    pub a: &'a CsrMatrix<T>,
    pub mask: &'a [bool],
    pub sigma: T,
    pub nu: T,
}

impl<T: Real> LinearOperator<T> for VHatOperator<'_, T> {
    fn nrows(&self) -> usize {
        self.mask.len() + self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        let n = self.mask.len();
        let (dw, dy) = x.split_at(n);
        let qdw = self.q.mul(dw);
        let aty = self.a.mul_adjoint(dy);
        let t: Vec<T> = (0..n)
            .map(|i| if self.mask[i] { qdw[i] - aty[i] } else { T::zero() })
            .collect();
        let at = self.a.mul(&t);
        let (o1, o2) = out.split_at_mut(n);
        for i in 0..n {
            o1[i] = (T::one() + self.nu) * dw[i] + self.sigma * t[i];
        }
        for i in 0..dy.len() {
            o2[i] = self.nu * dy[i] - self.sigma * at[i];
        }
    }
    fn apply_adjoint(&self, x: &[T], out: &mut [T]) {
        // V_hat^T = [(1+nu)I + sigma Q U, -sigma Q U A^T; -sigma A U, nu I + sigma A U A^T]
        let n = self.mask.len();
        let (u1, u2) = x.split_at(n);
        let atu2 = self.a.mul_adjoint(u2);
        let s: Vec<T> = (0..n)
            .map(|i| if self.mask[i] { u1[i] - atu2[i] } else { T::zero() })
            .collect();
        let qs = self.q.mul(&s);
        let as_ = self.a.mul(&s);
        let (o1, o2) = out.split_at_mut(n);
        for i in 0..n {
            o1[i] = (T::one() + self.nu) * u1[i] + self.sigma * qs[i];
        }
        for i in 0..u2.len() {
            o2[i] = self.nu * u2[i] - self.sigma * as_[i];
        }
    }
    fn stored_entries(&self) -> usize {
        0
    }
}

/// `(1+nu) I + sigma Q_PP + sigma (1+nu)/nu A_P^T A_P` on `R^p`, applied
/// through masked full-size products.
struct ReducedOperator<'a, T: Real> {
    q: &'a dyn LinearOperator<T>,
    a: &'a CsrMatrix<T>,
    interior: &'a [usize],
    n: usize,
    sigma: T,
    nu: T,
}

impl<T: Real> LinearOperator<T> for ReducedOperator<'_, T> {
    fn nrows(&self) -> usize {
        self.interior.len()
    }
    fn ncols(&self) -> usize {
        self.interior.len()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        let mut full = vec![T::zero(); self.n];
        for (k, &i) in self.interior.iter().enumerate() {
            full[i] = x[k];
        }
        let qf = self.q.mul(&full);
        let af = self.a.mul(&full);
        let ataf = self.a.mul_adjoint(&af);
        let one = T::one();
        let coef = self.sigma * (one + self.nu) / self.nu;
        for (k, &i) in self.interior.iter().enumerate() {
            out[k] = (one + self.nu) * x[k] + self.sigma * qf[i] + coef * ataf[i];
        }
    }
    fn apply_adjoint(&self, x: &[T], out: &mut [T]) {
        self.apply(x, out)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
}

/// Problem-level data reused across Newton systems.
#[derive(Debug, Clone)]
pub struct NewtonCache<T: Real> {
    a_col_norms_sq: Vec<T>,
    q_diag: Option<Vec<T>>,
}

impl<T: Real> NewtonCache<T> {
    pub fn new(qp: &StandardQp<T>) -> Self {
        let mut a_col_norms_sq = vec![T::zero(); qp.n()];
        for (&j, &v) in qp.a().indices().iter().zip(qp.a().data()) {
            a_col_norms_sq[j] += v * v;
        }
        Self {
            a_col_norms_sq,
            q_diag: qp.q().diagonal(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonDirection<T: Real> {
    pub dw: Vec<T>,
    pub qdw: Vec<T>,
    pub dy: Vec<T>,
    pub path: NewtonPath,
    /// `|V_hat d - r|`.
    pub residual: T,
    pub krylov_iterations: usize,
    /// Residual met the requested tolerance.
    pub ok: bool,
}

/// Solves the Newton system to `|V d + grad| <= eta`, trying the reduced
/// SPD path first when the policy allows and the other path if the result
/// misses the tolerance. `grad_w` is the true `w`-gradient, used for the
/// gradient fallback.
pub fn newton_direction<T: Real>(
    qp: &StandardQp<T>,
    sys: &NewtonSystem<T>,
    grad_w: &[T],
    eta: T,
    norm2_q: T,
    cfg: &SsnConfig,
    cache: &NewtonCache<T>,
) -> NewtonDirection<T> {
    let n = qp.n();
    let p = sys.partition.p();
    let tol = eta / norm2_q.max(T::one());
    let sigma_ok = sys.sigma.as_f64() <= cfg.path.sigma_switch;
    // A small dense factorization is cheap whatever the ratio p / n.
    let dense_ok = qp.q().as_csr().is_some() && p <= cfg.path.dense_max;
    let reduced_allowed = sigma_ok && (dense_ok || (p as f64) <= cfg.path.p_max_ratio * n as f64);
    let mut krylov = 0;
    let mut tries: Vec<NewtonDirection<T>> = Vec::new();
    let order: [bool; 2] = if reduced_allowed { [true, false] } else { [false, true] };
    for reduced in order {
        let dir = if reduced {
            reduced_path(qp, sys, tol, cfg, cache)
        } else {
            nonsymmetric_path(qp, sys, tol, cfg)
        };
        krylov += dir.krylov_iterations;
        if dir.ok {
            return NewtonDirection {
                krylov_iterations: krylov,
                ..dir
            };
        }
        tries.push(dir);
    }
    log::warn!(
        "newton system unsolved (residuals {:?}); gradient step",
        tries.iter().map(|d| d.residual.as_f64()).collect::<Vec<_>>()
    );
    NewtonDirection {
        dw: sys.r1.clone(),
        qdw: grad_w.iter().map(|&v| -v).collect(),
        dy: sys.r2.clone(),
        path: NewtonPath::GradientFallback,
        residual: T::infinity(),
        krylov_iterations: krylov,
        ok: false,
    }
}

fn finish_direction<T: Real>(
    qp: &StandardQp<T>,
    sys: &NewtonSystem<T>,
    dw: Vec<T>,
    dy: Vec<T>,
    path: NewtonPath,
    krylov_iterations: usize,
    tol: T,
) -> NewtonDirection<T> {
    let qdw = qp.q().mul(&dw);
    let (r1, r2) = sys.residual(qp, &dw, &qdw, &dy);
    let residual = (dot(&r1, &r1) + dot(&r2, &r2)).sqrt();
    // allow round-off on top of the Krylov tolerance
    let slack = T::lit(1e3) * T::epsilon() * (norm2(&sys.r1) + norm2(&sys.r2));
    let ok = residual.is_finite() && residual <= tol + slack;
    NewtonDirection {
        dw,
        qdw,
        dy,
        path,
        residual,
        krylov_iterations,
        ok,
    }
}

fn reduced_path<T: Real>(
    qp: &StandardQp<T>,
    sys: &NewtonSystem<T>,
    tol: T,
    cfg: &SsnConfig,
    cache: &NewtonCache<T>,
) -> NewtonDirection<T> {
    let one = T::one();
    let (sigma, nu) = (sys.sigma, sys.nu);
    let part = &sys.partition;
    let n = part.n();
    let p = part.p();
    let (r1_bar, r2_bar) = sys.reduced_rhs(qp);

    // s = A_P r1_bar + r2_bar
    let mut full = vec![T::zero(); n];
    for (k, &i) in part.interior().iter().enumerate() {
        full[i] = r1_bar[k];
    }
    let mut s = qp.a().mul(&full);
    for (si, r) in s.iter_mut().zip(&r2_bar) {
        *si += *r;
    }
    let ats = qp.a().mul_adjoint(&s);
    let rhs: Vec<T> = part
        .interior()
        .iter()
        .enumerate()
        .map(|(k, &i)| r1_bar[k] + sigma / nu * ats[i])
        .collect();

    let mut krylov = 0;
    let mut path = NewtonPath::ReducedIterative;
    let dense_q = qp.q().as_csr().filter(|_| p > 0 && p <= cfg.path.dense_max);
    let dp: Vec<T> = if p == 0 {
        Vec::new()
    } else if let Some(qcsr) = dense_q {
        path = NewtonPath::ReducedDense;
        let m = reduced_dense_matrix(qcsr, qp.a(), part.interior(), sigma, nu);
        match DenseCholesky::factor(&m) {
            Ok(f) => f.solve(&rhs),
            Err(_) => vec![T::nan(); p],
        }
    } else {
        let op = ReducedOperator {
            q: qp.q().as_ref(),
            a: qp.a(),
            interior: part.interior(),
            n,
            sigma,
            nu,
        };
        let coef = sigma * (one + nu) / nu;
        let d_part: Vec<T> = part
            .interior()
            .iter()
            .map(|&i| one + nu + sigma * cache.q_diag.as_ref().map_or(T::zero(), |d| d[i]))
            .collect();
        let woodbury = if qp.m() <= cfg.path.woodbury_max_rows {
            WoodburyPreconditioner::new(qp.a(), part.interior(), &d_part, coef)
        } else {
            None
        };
        let (dp, rep) = match &woodbury {
            Some(pc) => minres_solve_preconditioned(&op, &rhs, None, tol, cfg.krylov_max_iter, pc),
            None => {
                let jacobi: Vec<T> = part
                    .interior()
                    .iter()
                    .zip(&d_part)
                    .map(|(&i, &d)| d + coef * cache.a_col_norms_sq[i])
                    .collect();
                minres_solve(&op, &rhs, None, tol, cfg.krylov_max_iter, Some(&jacobi))
            }
        };
        krylov = rep.iterations;
        dp
    };

    let mut dw = vec![T::zero(); n];
    for &i in part.complement() {
        dw[i] = sys.r1[i] / (one + nu);
    }
    for (k, &i) in part.interior().iter().enumerate() {
        dw[i] = dp[k];
    }
    // d_y = (s - (1+nu) A_P d^P) / nu
    let mut dpf = vec![T::zero(); n];
    for (k, &i) in part.interior().iter().enumerate() {
        dpf[i] = dp[k];
    }
    let adp = qp.a().mul(&dpf);
    let dy: Vec<T> = (0..s.len()).map(|i| (s[i] - (one + nu) * adp[i]) / nu).collect();
    finish_direction(qp, sys, dw, dy, path, krylov, tol)
}

/// Inverse of `D + coef A_P^T A_P` for diagonal `D`, by the Woodbury identity
/// with a sparse factorization of `I / coef + A_P D^-1 A_P^T`.
struct WoodburyPreconditioner<T: Real> {
    d_inv: Vec<T>,
    a_p: CsrMatrix<T>,
    a_p_t: CsrMatrix<T>,
    factor: CholFactor<T>,
}

impl<T: Real> WoodburyPreconditioner<T> {
    fn new(a: &CsrMatrix<T>, interior: &[usize], d: &[T], coef: T) -> Option<Self> {
        if d.iter().any(|&v| !(v > T::zero())) {
            return None;
        }
        let mut local = vec![usize::MAX; a.ncols()];
        for (k, &i) in interior.iter().enumerate() {
            local[i] = k;
        }
        let d_inv: Vec<T> = d.iter().map(|&v| T::one() / v).collect();
        let mut trip = Vec::new();
        let mut scaled = Vec::new();
        for r in 0..a.nrows() {
            let (cols, vals) = a.row(r);
            for (&j, &v) in cols.iter().zip(vals) {
                let k = local[j];
                if k != usize::MAX {
                    trip.push((r, k, v));
                    scaled.push((r, k, v * d_inv[k].sqrt()));
                }
            }
        }
        let a_p = CsrMatrix::from_triplets(a.nrows(), interior.len(), &trip).ok()?;
        let g = CsrMatrix::from_triplets(a.nrows(), interior.len(), &scaled).ok()?;
        let mut k_trip = g.mul_self_transpose().triplets();
        let shift = T::one() / coef;
        k_trip.extend((0..a.nrows()).map(|i| (i, i, shift)));
        let k = CsrMatrix::from_triplets(a.nrows(), a.nrows(), &k_trip).ok()?;
        let factor = chol_factor(&k, &CholOptions::default()).ok()?;
        if !factor.skipped().is_empty() {
            return None;
        }
        let a_p_t = a_p.transpose();
        Some(Self {
            d_inv,
            a_p,
            a_p_t,
            factor,
        })
    }
}

impl<T: Real> LinearOperator<T> for WoodburyPreconditioner<T> {
    fn nrows(&self) -> usize {
        self.d_inv.len()
    }
    fn ncols(&self) -> usize {
        self.d_inv.len()
    }
    fn apply(&self, x: &[T], out: &mut [T]) {
        let t: Vec<T> = x.iter().zip(&self.d_inv).map(|(a, b)| *a * *b).collect();
        let u = self.a_p.mul(&t);
        let s = self.factor.solve(&u);
        let ats = self.a_p_t.mul(&s);
        for i in 0..out.len() {
            out[i] = t[i] - self.d_inv[i] * ats[i];
        }
    }
    fn apply_adjoint(&self, x: &[T], out: &mut [T]) {
        self.apply(x, out)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        2 * self.a_p.nnz() + self.factor.factor_nnz() + self.d_inv.len()
    }
}

/// Dense `(1+nu) I + sigma Q_PP + sigma (1+nu)/nu A_P^T A_P`.
pub fn reduced_dense_matrix<T: Real>(
    q: &CsrMatrix<T>,
    a: &CsrMatrix<T>,
    interior: &[usize],
    sigma: T,
    nu: T,
) -> DenseMatrix<T> {
    let one = T::one();
    let p = interior.len();
    let mut m = q.dense_submatrix(interior, interior);
    for i in 0..p {
        for j in 0..p {
            m[(i, j)] *= sigma;
        }
        m[(i, i)] += one + nu;
    }
    let mut local = vec![usize::MAX; q.ncols()];
    for (k, &i) in interior.iter().enumerate() {
        local[i] = k;
    }
    let coef = sigma * (one + nu) / nu;
    let mut entries: Vec<(usize, T)> = Vec::new();
    for r in 0..a.nrows() {
        entries.clear();
        let (cols, vals) = a.row(r);
        for (&j, &v) in cols.iter().zip(vals) {
            if local[j] != usize::MAX {
                entries.push((local[j], v));
            }
        }
        for &(i, vi) in &entries {
            for &(j, vj) in &entries {
                m[(i, j)] += coef * vi * vj;
            }
        }
    }
    m
}

fn nonsymmetric_path<T: Real>(
    qp: &StandardQp<T>,
    sys: &NewtonSystem<T>,
    tol: T,
    cfg: &SsnConfig,
) -> NewtonDirection<T> {
    let n = qp.n();
    let op = VHatOperator {
        q: qp.q().as_ref(),
        a: qp.a(),
        mask: sys.partition.mask(),
        sigma: sys.sigma,
        nu: sys.nu,
    };
    let mut rhs = sys.r1.clone();
    rhs.extend_from_slice(&sys.r2);
    let (sol, rep) = bicgstab_solve(&op, &rhs, None, tol, 2 * cfg.krylov_max_iter);
    let (dw, dy) = sol.split_at(n);
    finish_direction(
        qp,
        sys,
        dw.to_vec(),
        dy.to_vec(),
        NewtonPath::Nonsymmetric,
        rep.iterations,
        tol,
    )
}

/// `g(v) = v^2 - (v - Pi(v))^2` on one coordinate with bounds `[l, u]`:
/// `v^2` inside, `2lv - l^2` below, `2uv - u^2` above.
/// Returns `g(v + dv) - g(v)` without forming either value, splitting the
/// segment at the kinks it crosses so each piece is a short product.
pub fn envelope_increment<T: Real>(v: T, dv: T, l: T, u: T) -> T {
    let piece = |a: T, b: T| {
        // a and b lie in the same closed region
        let mid = (a + b) / T::lit(2.0);
        if mid < l {
            T::lit(2.0) * l * (b - a)
        } else if mid > u {
            T::lit(2.0) * u * (b - a)
        } else {
            (b - a) * (b + a)
        }
    };
    let end = v + dv;
    let mut kinks = [l, u];
    if dv < T::zero() {
        kinks.swap(0, 1);
    }
    let mut total = T::zero();
    let mut from = v;
    for k in kinks {
        let crosses = k.is_finite()
            && ((dv > T::zero() && from < k && k < end) || (dv < T::zero() && end < k && k < from));
        if crosses {
            total += piece(from, k);
            from = k;
        }
    }
    if from == v {
        // no kink crossed: use the increment directly to avoid end - v rounding
        let mid = v + dv / T::lit(2.0);
        return if mid < l {
            T::lit(2.0) * l * dv
        } else if mid > u {
            T::lit(2.0) * u * dv
        } else {
            dv * (T::lit(2.0) * v + dv)
        };
    }
    total + piece(from, end)
}

/// `phi(point + alpha d) - phi(point)` along a fixed direction, evaluated in
/// increment form so that decreases far below `eps |phi|` remain visible.
struct LineFunction<'c, 'a, T: Real> {
    ctx: &'c PhiContext<'a, T>,
    zp: &'c [T],
    /// Direction of `zp`: `-sigma (Q d_w - A^T d_y)`.
    dzp: Vec<T>,
    linear: T,
    quadratic: T,
}

impl<'c, 'a, T: Real> LineFunction<'c, 'a, T> {
    fn new(ctx: &'c PhiContext<'a, T>, point: &'c PhiPoint<T>, dir: &NewtonDirection<T>, aty_dir: &[T]) -> Self {
        let nu = ctx.nu();
        let n = point.zp.len();
        let dzp = (0..n).map(|i| -ctx.sigma * (dir.qdw[i] - aty_dir[i])).collect();
        let mut prox_lin = T::zero();
        for i in 0..n {
            prox_lin += (point.w.w_hat[i] - ctx.anchor_w.w_hat[i]) * dir.qdw[i];
        }
        for (i, d) in dir.dy.iter().enumerate() {
            prox_lin += (point.y[i] - ctx.anchor_y[i]) * *d;
        }
        let dqd = dot(&dir.dw, &dir.qdw);
        let linear = dot(&point.w.qw, &dir.dw) - dot(ctx.qp.b(), &dir.dy) + nu * prox_lin;
        let quadratic = (dqd + nu * (dqd + dot(&dir.dy, &dir.dy))) / T::lit(2.0);
        Self {
            ctx,
            zp: &point.zp,
            dzp,
            linear,
            quadratic,
        }
    }

    fn increment(&self, alpha: T) -> T {
        let bounds = self.ctx.qp.bounds();
        let (lo, hi) = (bounds.lower(), bounds.upper());
        let mut env = T::zero();
        for i in 0..self.zp.len() {
            env += envelope_increment(self.zp[i], alpha * self.dzp[i], lo[i], hi[i]);
        }
        env / (T::lit(2.0) * self.ctx.sigma) + alpha * self.linear + alpha * alpha * self.quadratic
    }
}

/// Backtracking: the first `m` with
/// `phi(point + delta^m d) <= phi(point) + rho delta^m <grad, d>`, the
/// left side evaluated as an increment. Returns the step and `m`, or `None`
/// when no step passes within `max_ls_steps` halvings.
pub fn armijo_search<T: Real>(
    ctx: &PhiContext<'_, T>,
    point: &PhiPoint<T>,
    dir: &NewtonDirection<T>,
    aty_dir: &[T],
    cfg: &SsnConfig,
) -> Result<Option<(T, usize)>> {
    let slope = dot(&point.grad_pre_w, &dir.qdw) + dot(&point.grad_y, &dir.dy);
    if !(slope < T::zero()) {
        return Err(Error::NotDescent(slope.as_f64()));
    }
    let rho = T::lit(cfg.rho);
    let delta = T::lit(cfg.delta_ls);
    let line = LineFunction::new(ctx, point, dir, aty_dir);
    let mut alpha = T::one();
    for steps in 0..=cfg.max_ls_steps {
        if line.increment(alpha) <= rho * alpha * slope {
            return Ok(Some((alpha, steps)));
        }
        alpha *= delta;
    }
    Ok(None)
}

/// `phi(point + alpha d) - phi(point)` for a direction with known `Q d_w`
/// and `A^T d_y`.
pub fn phi_increment<T: Real>(
    ctx: &PhiContext<'_, T>,
    point: &PhiPoint<T>,
    dir: &NewtonDirection<T>,
    aty_dir: &[T],
    alpha: T,
) -> T {
    LineFunction::new(ctx, point, dir, aty_dir).increment(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsnStatus {
    /// The caller's exit test accepted the point.
    Solved,
    MaxIterations,
    /// Line search failed on a Newton and then on a gradient direction.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct SsnResult<T: Real> {
    pub point: PhiPoint<T>,
    pub iterations: usize,
    pub status: SsnStatus,
    pub krylov_iterations: usize,
    pub fallback_steps: usize,
    /// Accepted steps per path, indexed as [`NewtonPath`] is declared.
    pub path_counts: [usize; 4],
}

/// Newton iterations from `(w0, y0)` until `exit` accepts the current point.
pub fn ssn_solve<T: Real>(
    ctx: &PhiContext<'_, T>,
    w0: WRepresentation<T>,
    y0: Vec<T>,
    aty0: Vec<T>,
    cfg: &SsnConfig,
    cache: &NewtonCache<T>,
    exit: &mut dyn FnMut(&PhiPoint<T>) -> bool,
) -> SsnResult<T> {
    let qp = ctx.qp;
    let mut point = eval_phi_and_grad(ctx, w0, y0, aty0);
    let mut krylov = 0;
    let mut fallback_steps = 0;
    let mut path_counts = [0; 4];
    let mut status = SsnStatus::MaxIterations;
    let mut iterations = 0;
    let eta_bar = T::lit(cfg.eta_bar);
    let power = T::one() + T::lit(cfg.nu_exp);
    for _ in 0..cfg.max_newton_iter {
        if exit(&point) {
            status = SsnStatus::Solved;
            break;
        }
        iterations += 1;
        let eta = eta_bar.min(point.grad_norm.powf(power));
        let sys = NewtonSystem::at(ctx, &point);
        let mut dir = newton_direction(qp, &sys, &point.grad_w, eta, ctx.norm2_q, cfg, cache);
        krylov += dir.krylov_iterations;
        let mut step = None;
        for attempt in 0..2 {
            if attempt == 1 {
                if dir.path == NewtonPath::GradientFallback {
                    break;
                }
                dir = NewtonDirection {
                    dw: sys.r1.clone(),
                    qdw: point.grad_w.iter().map(|&v| -v).collect(),
                    dy: sys.r2.clone(),
                    path: NewtonPath::GradientFallback,
                    residual: T::infinity(),
                    krylov_iterations: 0,
                    ok: false,
                };
            }
            let aty_dir = qp.a().mul_adjoint(&dir.dy);
            match armijo_search(ctx, &point, &dir, &aty_dir, cfg) {
                Ok(Some((alpha, _))) => {
                    step = Some((alpha, aty_dir));
                    break;
                }
                Ok(None) => log::debug!("line search failed on {:?} direction", dir.path),
                Err(e) => log::debug!("{e} on {:?} direction", dir.path),
            }
        }
        let Some((alpha, aty_dir)) = step else {
            status = SsnStatus::Stalled;
            break;
        };
        if dir.path == NewtonPath::GradientFallback {
            fallback_steps += 1;
        }
        path_counts[dir.path as usize] += 1;
        let n = point.w.w_hat.len();
        let mut w = point.w.clone();
        let mut aty = point.aty.clone();
        for i in 0..n {
            w.w_hat[i] += alpha * dir.dw[i];
            w.qw[i] += alpha * dir.qdw[i];
            aty[i] += alpha * aty_dir[i];
        }
        let y: Vec<T> = point.y.iter().zip(&dir.dy).map(|(a, b)| *a + alpha * *b).collect();
        point = eval_phi_and_grad(ctx, w, y, aty);
    }
    if status == SsnStatus::MaxIterations && exit(&point) {
        status = SsnStatus::Solved;
    }
    SsnResult {
        point,
        iterations,
        status,
        krylov_iterations: krylov,
        fallback_steps,
        path_counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partition_examples() {
        let cone = BoxSet::<f64>::nonnegative(2);
        assert_eq!(active_partition(&[-1.0, 2.0], &cone).interior(), &[1]);
        assert_eq!(active_partition(&[0.0, 2.0], &cone).interior(), &[1]);
        let free = BoxSet::<f64>::free(3);
        assert_eq!(active_partition(&[0.0, -5.0, 1e300], &free).p(), 3);
    }

    #[test]
    fn envelope_increment_matches_direct_difference() {
        let g = |v: f64, l: f64, u: f64| {
            let p = v.clamp(l, u);
            v * v - (v - p) * (v - p)
        };
        let (l, u) = (-1.0, 2.0);
        for &v in &[-3.0, -1.0, -0.5, 0.0, 1.5, 2.0, 4.0] {
            for &dv in &[-5.0, -1.2, -0.1, 0.0, 0.3, 2.5, 6.0] {
                let want = g(v + dv, l, u) - g(v, l, u);
                let got = envelope_increment(v, dv, l, u);
                assert!((want - got).abs() < 1e-12, "v={v} dv={dv}: {want} vs {got}");
            }
        }
        let inf = f64::INFINITY;
        assert_eq!(envelope_increment(1.0, 1.0, -inf, inf), 3.0);
        assert_eq!(envelope_increment(-2.0, 1.0, 0.0, inf), 0.0);
    }

    #[test]
    fn config_ranges() {
        assert!(SsnConfig::default().validate().is_ok());
        let bad = SsnConfig {
            rho: 0.5,
            ..SsnConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
