//! Proximal augmented Lagrangian phase. Each outer step minimizes the
//! proximal augmented Lagrangian in `(w, y)` with semismooth Newton, then
//! recovers `x` and `z` by projection.

use crate::error::{Error, Result};
use crate::history::{IterationRecord, SolveStatus};
use crate::kkt::{check_termination, kkt_residuals_with_qx, KktResiduals};
use crate::linops::LinearOperator;
use crate::problem::{IterateState, StandardQp};
use crate::ssn::{ssn_solve, NewtonCache, PhiContext, PhiPoint, SsnConfig, SsnStatus};
use crate::vecops::norm2;
use crate::Real;

/// `value(k) = scale * k^-exponent`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSchedule {
    pub scale: f64,
    pub exponent: f64,
}

impl PowerSchedule {
    pub fn eval(&self, k: usize) -> f64 {
        self.scale * (k.max(1) as f64).powf(-self.exponent)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Phase2Config {
    /// `None` continues with the warm-start phase's `sigma`.
    pub sigma0: Option<f64>,
    pub sigma_max: f64,
    /// `tau_k / sigma_k = max(1e-12, kappa k^-2.5)`.
    pub kappa: f64,
    /// Multiplies `tol` in the criterion (A) schedule `eps_k`.
    pub eps: PowerSchedule,
    pub delta: PowerSchedule,
    pub tol: f64,
    pub max_iter: usize,
    pub use_criterion_b: bool,
    pub ssn: SsnConfig,
    pub record_history: bool,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            sigma0: None,
            sigma_max: 1e8,
            kappa: 1.0,
            eps: PowerSchedule {
                scale: 0.1,
                exponent: 1.5,
            },
            delta: PowerSchedule {
                scale: 0.5,
                exponent: 1.5,
            },
            tol: 1e-6,
            max_iter: 500,
            use_criterion_b: true,
            ssn: SsnConfig::default(),
            record_history: true,
        }
    }
}

impl Phase2Config {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParameter(what));
        if let Some(s) = self.sigma0 {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("sigma0 = {s} must be positive"));
            }
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa = {} must be positive", self.kappa));
        }
        if !(self.sigma_max > 0.0) {
            return bad("sigma_max must be positive".into());
        }
        for (name, s) in [("eps", self.eps), ("delta", self.delta)] {
            if !(s.scale >= 0.0 && s.exponent > 1.0) {
                return bad(format!("{name} schedule must be nonnegative and summable"));
            }
        }
        if !(self.delta.scale < 1.0) {
            return bad("delta schedule must stay below 1".into());
        }
        self.ssn.validate()
    }
}

/// `tau_k = sigma_k max(1e-12, kappa k^-2.5)`.
pub fn update_tau<T: Real>(k: usize, sigma: T, kappa: T) -> T {
    let ratio = kappa * T::from_usize_lossy(k.max(1)).powf(T::lit(-2.5));
    sigma * ratio.max(T::lit(1e-12))
}

/// Raises `sigma` by 5/4 when dual infeasibility dominates, lowers it by 4/5
/// when the primal-side residuals dominate, and caps it at `sigma_max`.
pub fn update_sigma<T: Real>(sigma: T, res: &KktResiduals<T>, sigma_max: T) -> T {
    let primal = res.eta_p.max(res.eta_q).max(res.eta_c);
    let three_quarters = T::lit(0.75);
    let next = if primal < three_quarters * res.eta_d {
        sigma * T::lit(1.25)
    } else if res.eta_d < three_quarters * primal {
        sigma * T::lit(0.8)
    } else {
        sigma
    };
    next.min(sigma_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CriteriaResult {
    pub a_met: bool,
    pub b_met: bool,
}

/// `min(1, sqrt(tau), sqrt(tau lambda_plus)) / sigma`.
pub fn criteria_scale<T: Real>(sigma: T, tau: T, lambda_plus: T) -> T {
    T::one().min(tau.sqrt()).min((tau * lambda_plus).sqrt()) / sigma
}

/// Criterion (A): `grad <= scale * eps_k`; criterion (B):
/// `grad <= delta_k * scale * |delta_state|_Lambda`.
pub fn check_criteria<T: Real>(
    grad_norm: T,
    delta_lambda_norm: T,
    sigma: T,
    tau: T,
    lambda_plus: T,
    eps_k: T,
    delta_k: T,
) -> CriteriaResult {
    let scale = criteria_scale(sigma, tau, lambda_plus);
    CriteriaResult {
        a_met: grad_norm <= scale * eps_k,
        b_met: grad_norm <= delta_k * scale * delta_lambda_norm,
    }
}

/// `sqrt(tau <dw, Q dw> + tau |dy|^2 + |dx|^2)`, with `Q dw` supplied.
pub fn lambda_norm<T: Real>(tau: T, dw: &[T], qdw: &[T], dy: &[T], dx: &[T]) -> T {
    let wq: T = dw.iter().zip(qdw).map(|(a, b)| *a * *b).sum();
    let yy: T = dy.iter().map(|v| *v * *v).sum();
    let xx: T = dx.iter().map(|v| *v * *v).sum();
    (tau * wq.max(T::zero()) + tau * yy + xx).sqrt()
}

/// Rounding level of the computed gradient: `zp` carries an error of about
/// `eps (|x_hat| + sigma (|Qw| + |A^T y| + |c|))`, which the operators in the
/// gradient amplify by at most `op_scale`. Exit tests asking for less than
/// this cannot be met, so they are treated as met.
fn gradient_noise<T: Real>(
    pt: &PhiPoint<T>,
    x_hat: &[T],
    sigma: T,
    op_scale: T,
    norm_b: T,
    norm_c: T,
) -> T {
    let zp_err = norm2(x_hat) + sigma * (norm2(&pt.w.qw) + norm2(&pt.aty) + norm_c);
    T::lit(100.0) * T::epsilon() * (op_scale * zp_err + norm_b)
}

#[derive(Debug, Clone)]
pub struct Phase2Summary<T: Real> {
    pub status: SolveStatus,
    pub iterations: usize,
    pub newton_iterations: usize,
    pub krylov_iterations: usize,
    pub ssn_stalls: usize,
    pub path_counts: [usize; 4],
    pub sigma: T,
    pub residuals: KktResiduals<T>,
    pub history: Vec<IterationRecord<T>>,
}

/// Runs outer iterations from `warm` until the KKT residual drops below
/// `cfg.tol`. `sigma_start` is used when `cfg.sigma0` is unset;
/// `lambda_plus` and `norm2_q` are spectral estimates of `Q`.
pub fn phase2_solve<T: Real>(
    qp: &StandardQp<T>,
    cfg: &Phase2Config,
    warm: IterateState<T>,
    sigma_start: T,
    lambda_plus: T,
    norm2_q: T,
) -> Result<(IterateState<T>, Phase2Summary<T>)> {
    cfg.validate()?;
    let mut sigma = cfg.sigma0.map_or(sigma_start, T::lit);
    let sigma_max = T::lit(cfg.sigma_max);
    let kappa = T::lit(cfg.kappa);
    let tol = T::lit(cfg.tol);
    let cache = NewtonCache::new(qp);
    let a_frob = qp.a().data().iter().map(|v| *v * *v).sum::<T>().sqrt();
    let op_scale = a_frob.max(norm2_q).max(T::one());
    let (norm_b, norm_c) = (norm2(qp.b()), norm2(qp.c()));

    let mut state = warm;
    let qx = qp.q().mul(&state.x);
    let mut res = kkt_residuals_with_qx(&state, &qx, qp);
    let mut summary = Phase2Summary {
        status: SolveStatus::MaxIterations,
        iterations: 0,
        newton_iterations: 0,
        krylov_iterations: 0,
        ssn_stalls: 0,
        path_counts: [0; 4],
        sigma,
        residuals: res,
        history: Vec::new(),
    };
    if check_termination(&res, tol) {
        summary.status = SolveStatus::Converged;
        return Ok((state, summary));
    }
    let mut consecutive_stalls = 0;
    let mut sigma_cut = false;
    for k in 1..=cfg.max_iter {
        let tau = update_tau(k, sigma, kappa);
        let eps_k = T::lit(cfg.tol * cfg.eps.eval(k));
        let delta_k = T::lit(cfg.delta.eval(k));
        let x_k = state.x.clone();
        let ctx = PhiContext {
            qp,
            x_hat: &x_k,
            sigma,
            tau,
            anchor_w: &state.w,
            anchor_y: &state.y,
            norm2_q,
        };
        let use_b = cfg.use_criterion_b;
        let mut exit = |pt: &PhiPoint<T>| {
            if pt.grad_norm <= gradient_noise(pt, &x_k, sigma, op_scale, norm_b, norm_c) {
                return true;
            }
            let dl = if use_b {
                let n = x_k.len();
                let dw: Vec<T> = (0..n).map(|i| pt.w.w_hat[i] - state.w.w_hat[i]).collect();
                let dqw: Vec<T> = (0..n).map(|i| pt.w.qw[i] - state.w.qw[i]).collect();
                let dy: Vec<T> = pt.y.iter().zip(&state.y).map(|(a, b)| *a - *b).collect();
                let dx: Vec<T> = (0..n).map(|i| pt.proj[i] - x_k[i]).collect();
                lambda_norm(tau, &dw, &dqw, &dy, &dx)
            } else {
                T::zero()
            };
            let c = check_criteria(pt.grad_norm, dl, sigma, tau, lambda_plus, eps_k, delta_k);
            c.a_met && (c.b_met || !use_b)
        };
        let out = ssn_solve(
            &ctx,
            state.w.clone(),
            state.y.clone(),
            state.aty().to_vec(),
            &cfg.ssn,
            &cache,
            &mut exit,
        );
        summary.newton_iterations += out.iterations;
        summary.krylov_iterations += out.krylov_iterations;
        for (acc, c) in summary.path_counts.iter_mut().zip(out.path_counts) {
            *acc += c;
        }

        let pt = out.point;
        let z: Vec<T> = (0..pt.zp.len()).map(|i| (pt.proj[i] - pt.zp[i]) / sigma).collect();
        state.w = pt.w;
        state.set_y_with_aty(pt.y, pt.aty);
        state.z = z;
        state.set_x(qp, pt.proj);
        state.iter_phase2 += 1;
        summary.iterations = k;
        res = kkt_residuals_with_qx(&state, &pt.q_proj, qp);
        if cfg.record_history {
            summary.history.push(IterationRecord {
                phase: 2,
                iter: k,
                sigma,
                inner: out.iterations,
                residuals: res,
            });
        }
        log::trace!(
            "phase2 k={k} sigma={:.2e} newton={} eta={:.3e}",
            sigma.as_f64(),
            out.iterations,
            res.eta_max.as_f64()
        );
        if check_termination(&res, tol) {
            summary.status = SolveStatus::Converged;
            break;
        }
        if !res.eta_max.is_finite() {
            summary.status = SolveStatus::Stalled;
            break;
        }
        if out.status == SsnStatus::Stalled {
            summary.ssn_stalls += 1;
            consecutive_stalls += 1;
        } else {
            consecutive_stalls = 0;
        }
        if consecutive_stalls >= 2 {
            if sigma_cut {
                log::warn!("phase2: inner solver keeps stalling; stopping");
                summary.status = SolveStatus::Stalled;
                break;
            }
            sigma_cut = true;
            consecutive_stalls = 0;
            sigma *= T::lit(0.8);
            continue;
        }
        sigma = update_sigma(sigma, &res, sigma_max);
    }
    summary.sigma = sigma;
    summary.residuals = res;
    Ok((state, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn res(eta_p: f64, eta_d: f64) -> KktResiduals<f64> {
        KktResiduals {
            eta_p,
            eta_d,
            eta_q: 0.0,
            eta_c: 0.0,
            eta_g: 0.0,
            obj_p: 0.0,
            obj_d: 0.0,
            eta_max: eta_p.max(eta_d),
            dual_unbounded: false,
        }
    }

    #[test]
    fn sigma_rule_branches() {
        assert_eq!(update_sigma(1.0, &res(1e-4, 1e-3), 1e8), 1.25);
        assert_eq!(update_sigma(1.0, &res(1e-3, 1e-6), 1e8), 0.8);
        assert_eq!(update_sigma(1.0, &res(1e-3, 1e-3), 1e8), 1.0);
        assert_eq!(update_sigma(1e8, &res(1e-4, 1e-3), 1e8), 1e8);
    }

    #[test]
    fn tau_schedule() {
        assert_eq!(update_tau(1, 1.0, 1.0), 1.0);
        assert!((update_tau(10, 2.0, 1.0) - 2.0 * 10f64.powf(-2.5)).abs() < 1e-15);
        assert_eq!(update_tau(10, 3.0, 1e-20), 3.0 * 1e-12);
    }

    #[test]
    fn criteria_examples() {
        let c = check_criteria(0.0, 0.0, 1.0, 1.0, 1.0, 1e-3, 0.5);
        assert!(c.a_met && c.b_met);
        assert_eq!(criteria_scale(1.0, 1.0, 1.0) * 1e-3, 1e-3);
        let c = check_criteria(1e-3, 0.0, 1.0, 1.0, 1.0, 1e-3, 0.5);
        assert!(c.a_met && !c.b_met);
    }

    #[test]
    fn lambda_norm_by_hand() {
        // tau = 2: 2*(1*3) + 2*(4) + 1 = 15
        let v = lambda_norm(2.0, &[1.0], &[3.0], &[2.0], &[1.0]);
        assert!((v - 15f64.sqrt()).abs() < 1e-14);
    }
}
