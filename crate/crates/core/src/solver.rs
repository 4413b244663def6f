//! Two-phase driver: the sGS warm-start phase followed by the proximal ALM
//! phase with semismooth Newton inner solves.

use std::time::Instant;

use crate::history::{IterationRecord, SolveStatus};
use crate::kkt::{check_termination, KktResiduals};
use crate::linops::{operator_stats, OperatorStats, SpectralConfig};
use crate::phase1::{phase1_solve, Phase1Config, Phase1Summary};
use crate::phase2::{phase2_solve, Phase2Config, Phase2Summary};
use crate::problem::{IterateState, StandardQp};
use crate::{Real, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverConfig {
    pub phase1: Phase1Config,
    pub phase2: Phase2Config,
    /// Stop after the warm-start phase.
    pub phase1_only: bool,
    pub spectral: SpectralConfig,
}

#[derive(Debug, Clone)]
pub struct SolveResult<T: Real> {
    pub state: IterateState<T>,
    pub residuals: KktResiduals<T>,
    pub status: SolveStatus,
    pub iter_phase1: usize,
    pub iter_phase2: usize,
    pub time_s: f64,
    pub stats: OperatorStats<T>,
    pub phase1: Phase1Summary<T>,
    pub phase2: Option<Phase2Summary<T>>,
}

impl<T: Real> SolveResult<T> {
    /// Phase 1 records followed by phase 2 records.
    pub fn history(&self) -> Vec<IterationRecord<T>> {
        let mut out = self.phase1.history.clone();
        if let Some(p2) = &self.phase2 {
            out.extend_from_slice(&p2.history);
        }
        out
    }
}

/// `lambda_plus` for the inexactness tests. With `Q = 0` the `w` block is
/// vacuous and the estimate is replaced by 1 so it does not shrink the
/// thresholds.
pub fn effective_lambda_plus<T: Real>(stats: &OperatorStats<T>) -> T {
    if stats.norm2_estimate <= T::lit(16.0) * T::epsilon() {
        T::one()
    } else {
        stats.lambda_plus_estimate
    }
}

pub fn solve<T: Real>(qp: &StandardQp<T>, cfg: &SolverConfig) -> Result<SolveResult<T>> {
    solve_from(qp, cfg, IterateState::zeros(qp))
}

pub fn solve_from<T: Real>(
    qp: &StandardQp<T>,
    cfg: &SolverConfig,
    start: IterateState<T>,
) -> Result<SolveResult<T>> {
    cfg.phase1.validate()?;
    if !cfg.phase1_only {
        cfg.phase2.validate()?;
    }
    let clock = Instant::now();
    let stats = operator_stats(qp.q().as_ref(), &cfg.spectral);
    let (state, p1) = phase1_solve(qp, &cfg.phase1, start, stats.norm2_estimate)?;
    log::debug!(
        "phase1: {} iterations, eta={:.3e}, {}",
        p1.iterations,
        p1.residuals.eta_max.as_f64(),
        p1.status
    );
    let done = cfg.phase1_only || check_termination(&p1.residuals, T::lit(cfg.phase2.tol));
    if done {
        let status = if cfg.phase1_only {
            p1.status
        } else {
            SolveStatus::Converged
        };
        return Ok(SolveResult {
            residuals: p1.residuals,
            status,
            iter_phase1: p1.iterations,
            iter_phase2: 0,
            time_s: clock.elapsed().as_secs_f64(),
            state,
            stats,
            phase1: p1,
            phase2: None,
        });
    }
    let (state, p2) = phase2_solve(
        qp,
        &cfg.phase2,
        state,
        p1.sigma,
        effective_lambda_plus(&stats),
        stats.norm2_estimate,
    )?;
    log::debug!(
        "phase2: {} iterations ({} newton), eta={:.3e}, {}",
        p2.iterations,
        p2.newton_iterations,
        p2.residuals.eta_max.as_f64(),
        p2.status
    );
    Ok(SolveResult {
        residuals: p2.residuals,
        status: p2.status,
        iter_phase1: p1.iterations,
        iter_phase2: p2.iterations,
        time_s: clock.elapsed().as_secs_f64(),
        state,
        stats,
        phase1: p1,
        phase2: Some(p2),
    })
}
