//! Input formats, instance generators and benchmark bookkeeping for the
//! `dualpal` solver.

// NaN-rejecting checks are written as `!(x > 0)` on purpose, and the
// numeric kernels index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod error;
pub mod generators;
pub mod instances;
pub mod profile;
pub mod qps;
pub mod records;

use std::path::Path;

use dualpal::problem::to_standard_form;
use dualpal::{GeneralQp, SolveResult, SolverConfig, StandardQp};

pub use error::{BenchError, Result};
pub use generators::{gen_biq_relaxation, gen_portfolio, gen_qap_relaxation, solve_st_lp};
pub use profile::{performance_profile, shifted_geometric_mean, ProfileCurve};
pub use qps::{parse_qps, write_qps};
pub use records::BenchRecord;

/// A problem in whichever form its source produced.
#[derive(Debug, Clone)]
pub enum Instance {
    Standard(StandardQp<f64>),
    General(GeneralQp<f64>),
}

impl Instance {
    /// `(m_E, m_I, n)` of the original formulation.
    pub fn dims(&self) -> (usize, usize, usize) {
        match self {
            Instance::Standard(qp) => (qp.m(), 0, qp.n()),
            Instance::General(gp) => gp.dims(),
        }
    }

    pub fn to_standard(&self) -> Result<StandardQp<f64>> {
        match self {
            Instance::Standard(qp) => Ok(qp.clone()),
            Instance::General(gp) => Ok(to_standard_form(gp)?.0),
        }
    }

    /// Solves the standard form. Residuals and objectives are those of the
    /// standard form, which has the same optimal value.
    pub fn solve(&self, cfg: &SolverConfig) -> Result<SolveResult<f64>> {
        Ok(dualpal::solve(&self.to_standard()?, cfg)?)
    }
}

/// Resolves an input descriptor:
///
/// * `gen:qap:<file>`: QAPLIB data file, convex relaxation of the
///   Frobenius-normalised data
/// * `gen:biq:<file>`: BIQMAC data file, relaxation with `beta = d / 5`
/// * `gen:portfolio:<k>`: random portfolio model with the given seed
/// * `qps:<file>` or a bare path: QPS file
pub fn load_input(desc: &str, seed: u64) -> Result<Instance> {
    if let Some(path) = desc.strip_prefix("gen:qap:") {
        let (a, b) = instances::read_qaplib(path)?;
        return Ok(Instance::Standard(gen_qap_relaxation(&a, &b, true)?));
    }
    if let Some(path) = desc.strip_prefix("gen:biq:") {
        let q = instances::read_biqmac(path)?;
        let beta = generators::default_biq_beta(q.nrows());
        return Ok(Instance::General(gen_biq_relaxation(&q, beta)?));
    }
    if let Some(k) = desc.strip_prefix("gen:portfolio:") {
        let k: usize = k
            .parse()
            .map_err(|_| BenchError::Invalid(format!("portfolio scale `{k}` is not an integer")))?;
        return Ok(Instance::Standard(gen_portfolio(k, seed, 1.0)?));
    }
    let path = desc.strip_prefix("qps:").unwrap_or(desc);
    Ok(Instance::General(parse_qps(path)?))
}

/// Short problem name from a descriptor: the file stem, or `portfolio<k>`.
pub fn problem_name(desc: &str) -> String {
    if let Some(k) = desc.strip_prefix("gen:portfolio:") {
        return format!("portfolio{k}");
    }
    let path = desc.rsplit(':').next().unwrap_or(desc);
    Path::new(path)
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .map(|s| s.strip_suffix(".qps").or(s.strip_suffix(".QPS")).or(s.strip_suffix(".dat")).map(str::to_string).unwrap_or(s))
        .unwrap_or_else(|| desc.to_string())
}
