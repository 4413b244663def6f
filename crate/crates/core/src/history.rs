use crate::kkt::KktResiduals;
use crate::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    /// An inner solver could not make progress; the last iterate is returned.
    Stalled,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIterations => "max_iter",
            SolveStatus::Stalled => "stalled",
        }
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord<T: Real> {
    pub phase: u8,
    pub iter: usize,
    pub sigma: T,
    /// Krylov iterations (phase 1) or Newton steps (phase 2).
    pub inner: usize,
    pub residuals: KktResiduals<T>,
}
