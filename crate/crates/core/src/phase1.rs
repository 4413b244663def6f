//! Warm-start phase: a symmetric Gauss-Seidel sweep over the dual blocks
//! `(z, w, y)` inside a semi-proximal augmented Lagrangian loop with fixed
//! `sigma`.
//!
//! With multiplier `x`, the augmented Lagrangian of the dual is
//! `delta_C^*(-z) + 1/2<w,Qw> - <b,y> + sigma/2 |z - Qw + A^T y - c + x/sigma|^2`,
//! so each block step is a linear solve or a projection.

use crate::error::{Error, Result};
use crate::history::{IterationRecord, SolveStatus};
use crate::kkt::{check_termination, kkt_residuals_with_qx, KktResiduals};
use crate::linops::{CsrMatrix, LinearOperator};
use crate::linsolve::{chol_factor, minres_solve, CholFactor, CholOptions, IterSolveReport};
use crate::problem::{BoxSet, IterateState, StandardQp, WRepresentation};
use crate::vecops::norm2;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UpdateOrder {
    /// `y, w, z, w, y`.
    #[default]
    YFirst,
    /// `w, y, z, y, w`.
    WFirst,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LinearSolverMode {
    /// Direct when `m <= direct_max_rows` and `AA^T` is not too dense.
    #[default]
    Auto,
    Direct,
    Iterative,
}

/// `eps_k = min(cap, k^-exponent)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsSchedule {
    pub cap: f64,
    pub exponent: f64,
}

impl EpsSchedule {
    pub fn eval(&self, k: usize) -> f64 {
        self.cap.min((k.max(1) as f64).powf(-self.exponent))
    }

    /// Solves to machine precision.
    pub fn exact() -> Self {
        Self {
            cap: 0.0,
            exponent: 1.0,
        }
    }
}

impl Default for EpsSchedule {
    fn default() -> Self {
        Self {
            cap: 1e-2,
            exponent: 1.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase1Config {
    /// `None` picks `(1 + |b|) / (1 + |c|)`.
    pub sigma: Option<f64>,
    pub tau: f64,
    pub eps: EpsSchedule,
    pub tol: f64,
    pub max_iter: usize,
    pub update_order: UpdateOrder,
    pub linear_solver: LinearSolverMode,
    pub direct_max_rows: usize,
    /// Upper bound on `nnz(AA^T)` for the direct mode under `Auto`.
    pub direct_max_nnz: usize,
    pub krylov_max_iter: usize,
    pub record_history: bool,
}

impl Default for Phase1Config {
    fn default() -> Self {
        Self {
            sigma: None,
            tau: 1.618,
            eps: EpsSchedule::default(),
            tol: 1e-4,
            max_iter: 1000,
            update_order: UpdateOrder::YFirst,
            linear_solver: LinearSolverMode::Auto,
            direct_max_rows: 20_000,
            direct_max_nnz: 20_000_000,
            krylov_max_iter: 500,
            record_history: true,
        }
    }
}

impl Phase1Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 2.0) {
            return Err(Error::InvalidParameter(format!("tau = {} not in (0, 2)", self.tau)));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::InvalidParameter(format!("sigma = {s} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn default_sigma<T: Real>(qp: &StandardQp<T>) -> T {
    (T::one() + norm2(qp.b())) / (T::one() + norm2(qp.c()))
}

/// `A A^T` applied as two sparse products.
struct NormalOperator<'a, T: Real> {
    a: &'a CsrMatrix<T>,
}

impl<T: Real> LinearOperator<T> for NormalOperator<'_, T> {
    fn nrows(&self) -> usize {
        self.a.nrows()
    }
    fn ncols(&self) -> usize {
        self.a.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let t = self.a.mul_adjoint(x);
        self.a.matvec(&t, y);
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.apply(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
}

/// `I + sigma Q`.
pub(crate) struct ShiftedOperator<'a, T: Real> {
    pub q: &'a dyn LinearOperator<T>,
    pub sigma: T,
}

impl<T: Real> LinearOperator<T> for ShiftedOperator<'_, T> {
    fn nrows(&self) -> usize {
        self.q.nrows()
    }
    fn ncols(&self) -> usize {
        self.q.ncols()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.q.apply(x, y);
        for (yi, &xi) in y.iter_mut().zip(x) {
            *yi = xi + self.sigma * *yi;
        }
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.apply(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn stored_entries(&self) -> usize {
        0
    }
}

/// Solver for `sigma A A^T y = g`, either a cached factor of `AA^T` or MINRES.
pub enum YStepSolver<T: Real> {
    Direct(CholFactor<T>),
    Iterative { jacobi: Vec<T>, max_iter: usize },
}

impl<T: Real> YStepSolver<T> {
    pub fn new(a: &CsrMatrix<T>, cfg: &Phase1Config) -> Result<Self> {
        let iterative = || YStepSolver::Iterative {
            jacobi: a.row_norms_sq(),
            max_iter: cfg.krylov_max_iter.max(a.nrows()),
        };
        let want_direct = match cfg.linear_solver {
            LinearSolverMode::Direct => true,
            LinearSolverMode::Iterative => false,
            LinearSolverMode::Auto => a.nrows() <= cfg.direct_max_rows,
        };
        if !want_direct {
            return Ok(iterative());
        }
        let aat = a.mul_self_transpose();
        if cfg.linear_solver == LinearSolverMode::Auto && aat.nnz() > cfg.direct_max_nnz {
            return Ok(iterative());
        }
        match chol_factor(&aat, &CholOptions::default()) {
            Ok(f) => {
                if !f.skipped().is_empty() {
                    log::debug!("AA^T: {} dependent rows skipped", f.skipped().len());
                }
                Ok(YStepSolver::Direct(f))
            }
            Err(e) if cfg.linear_solver == LinearSolverMode::Auto => {
                log::warn!("Cholesky of AA^T failed ({e}); using MINRES");
                Ok(iterative())
            }
            Err(e) => Err(e),
        }
    }

    pub fn is_direct(&self) -> bool {
        matches!(self, YStepSolver::Direct(_))
    }
}

/// Solves `sigma A A^T y = g`. The iterative branch stops at residual `eps`.
pub fn solve_y_step<T: Real>(
    solver: &YStepSolver<T>,
    a: &CsrMatrix<T>,
    g: &[T],
    sigma: T,
    eps: T,
    warm: Option<&[T]>,
) -> (Vec<T>, Option<IterSolveReport<T>>) {
    match solver {
        YStepSolver::Direct(f) => {
            let mut y = f.solve(g);
            crate::vecops::scale(T::one() / sigma, &mut y);
            (y, None)
        }
        YStepSolver::Iterative { jacobi, max_iter } => {
            let op = NormalOperator { a };
            let rhs: Vec<T> = g.iter().map(|&v| v / sigma).collect();
            let tol = (eps / sigma).max(machine_floor(&rhs));
            let (y, rep) = minres_solve(&op, &rhs, warm, tol, *max_iter, Some(jacobi));
            (y, Some(rep))
        }
    }
}

fn machine_floor<T: Real>(rhs: &[T]) -> T {
    T::lit(16.0) * T::epsilon() * (T::one() + norm2(rhs))
}

/// Solves `(I + sigma Q) w_hat = h` to `|residual| <= eps / norm2_q` and
/// returns `(w_hat, Q w_hat)`. `q_diag`, when given, enables Jacobi
/// preconditioning. A failed solve is retried once with twice the iteration
/// budget.
#[allow(clippy::too_many_arguments)]
pub fn solve_w_step<T: Real>(
    q: &dyn LinearOperator<T>,
    q_diag: Option<&[T]>,
    h: &[T],
    sigma: T,
    eps: T,
    norm2_q: T,
    warm: Option<&[T]>,
    max_iter: usize,
) -> (WRepresentation<T>, IterSolveReport<T>) {
    let op = ShiftedOperator { q, sigma };
    let jacobi =
        q_diag.map(|d| d.iter().map(|&v| T::one() + sigma * v).collect::<Vec<_>>());
    let tol = (eps / norm2_q.max(T::min_positive_value())).max(machine_floor(h));
    let (mut w_hat, mut rep) = minres_solve(&op, h, warm, tol, max_iter, jacobi.as_deref());
    if !rep.converged {
        let (w2, rep2) = minres_solve(&op, h, Some(&w_hat), tol, 2 * max_iter, jacobi.as_deref());
        w_hat = w2;
        rep = IterSolveReport {
            iterations: rep.iterations + rep2.iterations,
            matvecs: rep.matvecs + rep2.matvecs,
            ..rep2
        };
    }
    (WRepresentation::from_w_hat(w_hat, q), rep)
}

/// Minimizer of `delta_C^*(-z) + sigma/2 |z - m|^2`, i.e.
/// `z = m + Pi_C(-sigma m) / sigma`, written so that components whose
/// projection is inactive come out exactly zero.
pub fn update_z<T: Real>(m_center: &[T], sigma: T, bounds: &BoxSet<T>) -> Vec<T> {
    m_center
        .iter()
        .enumerate()
        .map(|(i, &m)| {
            let v = -sigma * m;
            let p = bounds.clamp(i, v);
            if p == v {
                T::zero()
            } else {
                (p - v) / sigma
            }
        })
        .collect()
}

/// `x + tau sigma (z - Qw + A^T y - c)`.
pub fn update_x_phase1<T: Real>(state: &IterateState<T>, c: &[T], sigma: T, tau: T) -> Vec<T> {
    let ts = tau * sigma;
    (0..state.x.len())
        .map(|i| state.x[i] + ts * (state.z[i] - state.w.qw[i] + state.aty()[i] - c[i]))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Phase1Summary<T: Real> {
    pub status: SolveStatus,
    pub iterations: usize,
    pub sigma: T,
    pub residuals: KktResiduals<T>,
    pub history: Vec<IterationRecord<T>>,
    pub direct_y_solver: bool,
}

/// Per-solve data shared by the sweeps.
pub struct Phase1Context<'a, T: Real> {
    pub qp: &'a StandardQp<T>,
    pub y_solver: YStepSolver<T>,
    pub sigma: T,
    pub norm2_q: T,
    pub q_diag: Option<Vec<T>>,
    pub krylov_max_iter: usize,
    pub order: UpdateOrder,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SweepInfo {
    pub krylov_iterations: usize,
    pub failed_solves: usize,
}

impl<T: Real> Phase1Context<'_, T> {
    /// `g = (b - Ax) - sigma A (z - Qw - c)`.
    fn y_rhs(&self, state: &IterateState<T>, z: &[T], qw: &[T]) -> Vec<T> {
        let qp = self.qp;
        let t: Vec<T> = (0..z.len()).map(|i| z[i] - qw[i] - qp.c()[i]).collect();
        let at = qp.a().mul(&t);
        (0..qp.m())
            .map(|i| qp.b()[i] - state.ax()[i] - self.sigma * at[i])
            .collect()
    }

    /// `h = sigma (z + A^T y - c) + x`.
    fn w_rhs(&self, state: &IterateState<T>, z: &[T], aty: &[T]) -> Vec<T> {
        let c = self.qp.c();
        (0..z.len())
            .map(|i| self.sigma * (z[i] + aty[i] - c[i]) + state.x[i])
            .collect()
    }

    fn y_step(
        &self,
        state: &IterateState<T>,
        z: &[T],
        qw: &[T],
        warm: &[T],
        eps: T,
        info: &mut SweepInfo,
    ) -> (Vec<T>, Vec<T>) {
        let g = self.y_rhs(state, z, qw);
        let (y, rep) = solve_y_step(&self.y_solver, self.qp.a(), &g, self.sigma, eps, Some(warm));
        if let Some(rep) = rep {
            info.krylov_iterations += rep.iterations;
            if !rep.converged {
                info.failed_solves += 1;
            }
        }
        let aty = self.qp.a().mul_adjoint(&y);
        (y, aty)
    }

    fn w_step(
        &self,
        state: &IterateState<T>,
        z: &[T],
        aty: &[T],
        warm: &[T],
        eps: T,
        info: &mut SweepInfo,
    ) -> WRepresentation<T> {
        let h = self.w_rhs(state, z, aty);
        let (w, rep) = solve_w_step(
            self.qp.q().as_ref(),
            self.q_diag.as_deref(),
            &h,
            self.sigma,
            eps,
            self.norm2_q,
            Some(warm),
            self.krylov_max_iter,
        );
        info.krylov_iterations += rep.iterations;
        if !rep.converged {
            info.failed_solves += 1;
        }
        w
    }

    /// `m = Qw - A^T y + c - x / sigma`.
    fn z_step(&self, state: &IterateState<T>, qw: &[T], aty: &[T]) -> Vec<T> {
        let c = self.qp.c();
        let m: Vec<T> = (0..qw.len())
            .map(|i| qw[i] - aty[i] + c[i] - state.x[i] / self.sigma)
            .collect();
        update_z(&m, self.sigma, self.qp.bounds())
    }

    /// One sweep on `(z, w, y)` followed by the multiplier step, in place.
    pub fn sweep(&self, state: &mut IterateState<T>, eps: T, tau: T) -> SweepInfo {
        let mut info = SweepInfo::default();
        let z_old = state.z.clone();
        match self.order {
            UpdateOrder::YFirst => {
                let (y_bar, aty_bar) = self.y_step(state, &z_old, &state.w.qw, &state.y, eps, &mut info);
                let w_bar = self.w_step(state, &z_old, &aty_bar, &state.w.w_hat, eps, &mut info);
                let z = self.z_step(state, &w_bar.qw, &aty_bar);
                let w = self.w_step(state, &z, &aty_bar, &w_bar.w_hat, eps, &mut info);
                let (y, aty) = self.y_step(state, &z, &w.qw, &y_bar, eps, &mut info);
                state.z = z;
                state.w = w;
                state.set_y_with_aty(y, aty);
            }
            UpdateOrder::WFirst => {
                let w_bar = self.w_step(state, &z_old, state.aty(), &state.w.w_hat, eps, &mut info);
                let (y_bar, aty_bar) = self.y_step(state, &z_old, &w_bar.qw, &state.y, eps, &mut info);
                let z = self.z_step(state, &w_bar.qw, &aty_bar);
                let (y, aty) = self.y_step(state, &z, &w_bar.qw, &y_bar, eps, &mut info);
                let w = self.w_step(state, &z, &aty, &w_bar.w_hat, eps, &mut info);
                state.z = z;
                state.w = w;
                state.set_y_with_aty(y, aty);
            }
        }
        let x = update_x_phase1(state, self.qp.c(), self.sigma, tau);
        state.set_x(self.qp, x);
        info
    }
}

/// Runs sweeps until the KKT residual drops below `cfg.tol` or the budget is
/// spent. `norm2_q` is an estimate of `|Q|_2`.
pub fn phase1_solve<T: Real>(
    qp: &StandardQp<T>,
    cfg: &Phase1Config,
    start: IterateState<T>,
    norm2_q: T,
) -> Result<(IterateState<T>, Phase1Summary<T>)> {
    cfg.validate()?;
    let sigma = cfg.sigma.map_or_else(|| default_sigma(qp), T::lit);
    let ctx = Phase1Context {
        qp,
        y_solver: YStepSolver::new(qp.a(), cfg)?,
        sigma,
        norm2_q,
        q_diag: qp.q().diagonal(),
        krylov_max_iter: cfg.krylov_max_iter,
        order: cfg.update_order,
    };
    let tau = T::lit(cfg.tau);
    let tol = T::lit(cfg.tol);
    let mut state = start;
    let mut history = Vec::new();
    let qx = qp.q().mul(&state.x);
    let mut res = kkt_residuals_with_qx(&state, &qx, qp);
    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0;
    let mut consecutive_failures = 0;
    if check_termination(&res, tol) {
        status = SolveStatus::Converged;
    } else {
        for k in 1..=cfg.max_iter {
            let eps = T::lit(cfg.eps.eval(k));
            let info = ctx.sweep(&mut state, eps, tau);
            iterations = k;
            state.iter_phase1 += 1;
            let qx = qp.q().mul(&state.x);
            res = kkt_residuals_with_qx(&state, &qx, qp);
            if cfg.record_history {
                history.push(IterationRecord {
                    phase: 1,
                    iter: k,
                    sigma,
                    inner: info.krylov_iterations,
                    residuals: res,
                });
            }
            log::trace!("phase1 k={k} eta={:.3e}", res.eta_max.as_f64());
            if check_termination(&res, tol) {
                status = SolveStatus::Converged;
                break;
            }
            if !res.eta_max.is_finite() {
                status = SolveStatus::Stalled;
                break;
            }
            consecutive_failures = if info.failed_solves > 0 { consecutive_failures + 1 } else { 0 };
            if consecutive_failures >= 3 {
                log::warn!("phase1: inner linear solves keep failing; stopping");
                status = SolveStatus::Stalled;
                break;
            }
        }
    }
    let summary = Phase1Summary {
        status,
        iterations,
        sigma,
        residuals: res,
        history,
        direct_y_solver: ctx.y_solver.is_direct(),
    };
    Ok((state, summary))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{DenseMatrix, Identity};

    #[test]
    fn z_update_examples() {
        let free = BoxSet::<f64>::free(2);
        assert_eq!(update_z(&[3.0, -1.0], 2.0, &free), vec![0.0, 0.0]);
        let unit = BoxSet::uniform(1, -1.0, 1.0);
        assert_eq!(update_z(&[0.5], 1.0, &unit), vec![0.0]);
        let cone = BoxSet::nonnegative(1);
        assert_eq!(update_z(&[2.0], 1.0, &cone), vec![2.0]);
    }

    #[test]
    fn w_step_examples() {
        let (w, _) = solve_w_step::<f64>(&Identity { n: 2 }, None, &[2.0, 4.0], 1.0, 0.0, 1.0, None, 50);
        assert!(crate::vecops::dist2(&w.w_hat, &[1.0, 2.0]) < 1e-14);
        assert!(crate::vecops::dist2(&w.qw, &[1.0, 2.0]) < 1e-14);
        let q = DenseMatrix::from_row_major(2, 2, vec![0.0, 0.0, 0.0, 3.0]);
        let (w, rep) = solve_w_step(&q, Some(&[0.0, 3.0]), &[1.0, 7.0], 2.0, 0.0, 3.0, None, 50);
        assert!(rep.converged);
        assert!(crate::vecops::dist2(&w.w_hat, &[1.0, 1.0]) < 1e-14);
        assert!(crate::vecops::dist2(&w.qw, &[0.0, 3.0]) < 1e-14);
    }
}
