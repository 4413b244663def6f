use crate::linops::LinearOperator;
use crate::vecops::{axpy, dot, norm2};
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterSolveReport<T: Real> {
    /// `|rhs - op x|`, recomputed from the returned `x`.
    pub residual_norm: T,
    pub iterations: usize,
    /// Operator applications, including the initial and final residuals.
    pub matvecs: usize,
    pub converged: bool,
    pub breakdown: bool,
}

fn true_residual<T: Real>(op: &dyn LinearOperator<T>, rhs: &[T], x: &[T], r: &mut [T]) -> T {
    op.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(rhs) {
        *ri = *bi - *ri;
    }
    norm2(r)
}

/// MINRES for self-adjoint `op`, stopping on `|rhs - op x| <= tol_abs`.
///
/// `jacobi` is an optional diagonal approximation of `op`; the iteration then
/// runs on the symmetrically scaled system `D^{-1/2} op D^{-1/2}`. `x0` is a
/// warm start.
pub fn minres_solve<T: Real>(
    op: &dyn LinearOperator<T>,
    rhs: &[T],
    x0: Option<&[T]>,
    tol_abs: T,
    max_iter: usize,
    jacobi: Option<&[T]>,
) -> (Vec<T>, IterSolveReport<T>) {
    let n = rhs.len();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = vec![T::zero(); n];
    let mut matvecs = 0;
    let mut res = if x0.is_some() {
        matvecs += 1;
        true_residual(op, rhs, &x, &mut r)
    } else {
        r.copy_from_slice(rhs);
        norm2(rhs)
    };
    let mut report = IterSolveReport {
        residual_norm: res,
        iterations: 0,
        matvecs,
        converged: res <= tol_abs,
        breakdown: false,
    };
    if report.converged {
        return (x, report);
    }

    // s = D^{-1/2}; the scaled residual norm bounds the true one by max(d)^{1/2}.
    let s: Vec<T> = match jacobi {
        Some(d) => d
            .iter()
            .map(|&v| if v > T::zero() { T::one() / v.sqrt() } else { T::one() })
            .collect(),
        None => vec![T::one(); n],
    };
    let unscale = s.iter().fold(T::zero(), |a, &v| a.max(T::one() / v));
    let mut iterations = 0;
    let mut breakdown = false;
    let mut target = tol_abs / unscale;

    // Restart loop: each pass runs MINRES on the correction equation.
    while iterations < max_iter {
        let mut v: Vec<T> = r.iter().zip(&s).map(|(a, b)| *a * *b).collect();
        let beta1 = norm2(&v);
        if beta1 == T::zero() {
            break;
        }
        for vi in v.iter_mut() {
            *vi /= beta1;
        }
        let mut v_prev = vec![T::zero(); n];
        let mut w1 = vec![T::zero(); n];
        let mut w2 = vec![T::zero(); n];
        let mut dx = vec![T::zero(); n];
        let (mut c_old, mut c) = (T::one(), T::one());
        let (mut s_old, mut sn) = (T::zero(), T::zero());
        let mut beta = T::zero();
        let mut eta = beta1;
        let mut est = beta1;
        let mut p = vec![T::zero(); n];
        let mut tmp = vec![T::zero(); n];
        while iterations < max_iter {
            iterations += 1;
            for i in 0..n {
                tmp[i] = s[i] * v[i];
            }
            op.apply(&tmp, &mut p);
            matvecs += 1;
            for i in 0..n {
                p[i] *= s[i];
            }
            let alpha = dot(&v, &p);
            axpy(-alpha, &v, &mut p);
            axpy(-beta, &v_prev, &mut p);
            let beta_next = norm2(&p);

            let delta = c * alpha - c_old * sn * beta;
            let rho1 = (delta * delta + beta_next * beta_next).sqrt();
            let rho2 = sn * alpha + c_old * c * beta;
            let rho3 = s_old * beta;
            if rho1 == T::zero() {
                breakdown = true;
                break;
            }
            let c_new = delta / rho1;
            let s_new = beta_next / rho1;
            // w_j = (v_j - rho3 w_{j-2} - rho2 w_{j-1}) / rho1
            let mut w = v.clone();
            axpy(-rho3, &w2, &mut w);
            axpy(-rho2, &w1, &mut w);
            for wi in w.iter_mut() {
                *wi /= rho1;
            }
            axpy(c_new * eta, &w, &mut dx);
            est *= s_new.abs();
            eta = -s_new * eta;
            w2 = std::mem::replace(&mut w1, w);
            c_old = c;
            c = c_new;
            s_old = sn;
            sn = s_new;

            if beta_next <= T::epsilon() * beta1 || est <= target {
                break;
            }
            std::mem::swap(&mut v_prev, &mut v);
            for i in 0..n {
                v[i] = p[i] / beta_next;
            }
            beta = beta_next;
        }
        for i in 0..n {
            x[i] += s[i] * dx[i];
        }
        matvecs += 1;
        res = true_residual(op, rhs, &x, &mut r);
        if res <= tol_abs || breakdown {
            break;
        }
        // Recurrence drifted from the true residual: tighten and restart.
        target = target.min(est) / T::lit(4.0);
    }
    report.residual_norm = res;
    report.iterations = iterations;
    report.matvecs = matvecs;
    report.converged = res <= tol_abs;
    report.breakdown = breakdown && !report.converged;
    (x, report)
}

/// MINRES with a self-adjoint positive definite preconditioner given as the
/// action of its inverse, `precond_inv`. Stops on `|rhs - op x| <= tol_abs`;
/// the inner recurrence tracks the residual in the preconditioned norm, so
/// the true residual is checked on exit and the solve restarted if needed.
pub fn minres_solve_preconditioned<T: Real>(
    op: &dyn LinearOperator<T>,
    rhs: &[T],
    x0: Option<&[T]>,
    tol_abs: T,
    max_iter: usize,
    precond_inv: &dyn LinearOperator<T>,
) -> (Vec<T>, IterSolveReport<T>) {
    let n = rhs.len();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = vec![T::zero(); n];
    let mut matvecs = 0;
    let mut res = if x0.is_some() {
        matvecs += 1;
        true_residual(op, rhs, &x, &mut r)
    } else {
        r.copy_from_slice(rhs);
        norm2(rhs)
    };
    let mut report = IterSolveReport {
        residual_norm: res,
        iterations: 0,
        matvecs,
        converged: res <= tol_abs,
        breakdown: false,
    };
    if report.converged {
        return (x, report);
    }
    let mut iterations = 0;
    let mut breakdown = false;
    let mut ratio: Option<T> = None;
    let mut shrink = T::one();

    while iterations < max_iter {
        let mut y = precond_inv.mul(&r);
        let beta1_sq = dot(&r, &y);
        if !(beta1_sq > T::zero()) {
            breakdown = true;
            break;
        }
        let beta1 = beta1_sq.sqrt();
        // preconditioned-to-Euclidean norm ratio, measured on the residual
        let ratio_now = *ratio.get_or_insert(beta1 / res);
        let target = tol_abs * ratio_now * shrink;

        let mut r1 = r.clone();
        let mut r2 = r.clone();
        let mut dx = vec![T::zero(); n];
        let mut w = vec![T::zero(); n];
        let mut w1 = vec![T::zero(); n];
        let mut w2;
        let mut v = vec![T::zero(); n];
        let mut oldb = T::zero();
        let mut beta = beta1;
        let mut dbar = T::zero();
        let mut epsln = T::zero();
        let mut phibar = beta1;
        let mut cs = -T::one();
        let mut sn = T::zero();
        let mut first = true;
        while iterations < max_iter {
            iterations += 1;
            for i in 0..n {
                v[i] = y[i] / beta;
            }
            op.apply(&v, &mut y);
            matvecs += 1;
            if !first {
                axpy(-beta / oldb, &r1, &mut y);
            }
            first = false;
            let alfa = dot(&v, &y);
            axpy(-alfa / beta, &r2, &mut y);
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            y = precond_inv.mul(&r2);
            oldb = beta;
            let beta_sq = dot(&r2, &y);
            if beta_sq < T::zero() {
                breakdown = true;
                break;
            }
            beta = beta_sq.sqrt();
            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = (gbar * gbar + beta * beta).sqrt().max(T::epsilon() * beta1);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar = sn * phibar;
            w2 = std::mem::replace(&mut w1, std::mem::take(&mut w));
            w = (0..n)
                .map(|i| (v[i] - oldeps * w2[i] - delta * w1[i]) / gamma)
                .collect();
            axpy(phi, &w, &mut dx);
            if phibar <= target || beta <= T::epsilon() * beta1 {
                break;
            }
        }
        axpy(T::one(), &dx, &mut x);
        matvecs += 1;
        res = true_residual(op, rhs, &x, &mut r);
        if res <= tol_abs || breakdown {
            break;
        }
        shrink /= T::lit(4.0);
    }
    report.residual_norm = res;
    report.iterations = iterations;
    report.matvecs = matvecs;
    report.converged = res <= tol_abs;
    report.breakdown = breakdown && !report.converged;
    (x, report)
}

/// BICGSTAB for a general square `op`, stopping on `|rhs - op x| <= tol_abs`.
///
/// `iterations` counts half-steps, each costing one operator application, so
/// `matvecs <= iterations + 2` (initial residual plus the final check).
pub fn bicgstab_solve<T: Real>(
    op: &dyn LinearOperator<T>,
    rhs: &[T],
    x0: Option<&[T]>,
    tol_abs: T,
    max_iter: usize,
) -> (Vec<T>, IterSolveReport<T>) {
    let n = rhs.len();
    let mut x = x0.map_or_else(|| vec![T::zero(); n], <[T]>::to_vec);
    let mut r = vec![T::zero(); n];
    let mut matvecs = 0;
    let mut res = if x0.is_some() {
        matvecs += 1;
        true_residual(op, rhs, &x, &mut r)
    } else {
        r.copy_from_slice(rhs);
        norm2(rhs)
    };
    if res <= tol_abs {
        let report = IterSolveReport {
            residual_norm: res,
            iterations: 0,
            matvecs,
            converged: true,
            breakdown: false,
        };
        return (x, report);
    }

    let mut best_x = x.clone();
    let mut best_res = res;
    let mut iterations = 0;
    let mut breakdown = false;
    let mut restarts = 0;
    let mut target = tol_abs;
    'outer: loop {
        let r_hat = r.clone();
        let mut rho_old = T::one();
        let mut alpha = T::one();
        let mut omega = T::one();
        let mut v = vec![T::zero(); n];
        let mut p = vec![T::zero(); n];
        let mut t = vec![T::zero(); n];
        let mut s = vec![T::zero(); n];
        let mut est = res;
        let tiny = T::epsilon() * T::epsilon();
        while iterations + 2 <= max_iter {
            let rho = dot(&r_hat, &r);
            if rho.abs() <= tiny * dot(&r_hat, &r_hat) {
                breakdown = true;
                break;
            }
            let beta = (rho / rho_old) * (alpha / omega);
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            op.apply(&p, &mut v);
            matvecs += 1;
            iterations += 1;
            let rv = dot(&r_hat, &v);
            if rv == T::zero() {
                breakdown = true;
                break;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            let ns = norm2(&s);
            if ns <= target {
                axpy(alpha, &p, &mut x);
                est = ns;
                break;
            }
            op.apply(&s, &mut t);
            matvecs += 1;
            iterations += 1;
            let tt = dot(&t, &t);
            if tt == T::zero() {
                axpy(alpha, &p, &mut x);
                breakdown = true;
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * p[i] + omega * s[i];
                r[i] = s[i] - omega * t[i];
            }
            est = norm2(&r);
            if est < best_res {
                best_res = est;
                best_x.copy_from_slice(&x);
            }
            if est <= target {
                break;
            }
            if omega == T::zero() {
                breakdown = true;
                break;
            }
            rho_old = rho;
        }
        matvecs += 1;
        res = true_residual(op, rhs, &x, &mut r);
        if res <= tol_abs {
            break 'outer;
        }
        if res < best_res || !best_res.is_finite() {
            best_res = res;
            best_x.copy_from_slice(&x);
        }
        restarts += 1;
        if breakdown || iterations + 2 > max_iter || restarts > 3 {
            break 'outer;
        }
        // the residual check becomes the start of a new cycle
        iterations += 1;
        target = target.min(est) / T::lit(4.0);
    }
    if res > tol_abs && best_res < res {
        // best_res came from the recurrence; confirm it
        matvecs += 1;
        iterations += 1;
        let r_best = true_residual(op, rhs, &best_x, &mut r);
        if r_best < res {
            x = best_x;
            res = r_best;
        }
    }
    let converged = res <= tol_abs;
    let report = IterSolveReport {
        residual_norm: res,
        iterations,
        matvecs,
        converged,
        breakdown: breakdown && !converged,
    };
    (x, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::{CsrMatrix, Identity};

    #[test]
    fn identity_one_step() {
        let b = [1.0, -2.0, 3.0];
        let (x, rep) = minres_solve::<f64>(&Identity { n: 3 }, &b, None, 1e-12, 10, None);
        assert_eq!(rep.iterations, 1);
        assert!(rep.converged);
        assert!(crate::vecops::dist2(&x, &b) < 1e-14);
        let (x, rep) = bicgstab_solve::<f64>(&Identity { n: 3 }, &b, None, 1e-12, 10);
        assert!(rep.converged);
        assert!(crate::vecops::dist2(&x, &b) < 1e-14);
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let (x, rep) = minres_solve::<f64>(&Identity { n: 2 }, &[0.0, 0.0], None, 1e-12, 10, None);
        assert_eq!((rep.iterations, x), (0, vec![0.0, 0.0]));
    }

    #[test]
    fn minres_diagonal() {
        let t: Vec<_> = (0..10).map(|i| (i, i, (i + 1) as f64)).collect();
        let d = CsrMatrix::from_triplets(10, 10, &t).unwrap();
        let b = vec![1.0; 10];
        let (x, rep) = minres_solve(&d, &b, None, 1e-12, 100, None);
        assert!(rep.converged, "{rep:?}");
        for i in 0..10 {
            assert!((x[i] - 1.0 / (i + 1) as f64).abs() < 1e-11);
        }
    }
}
