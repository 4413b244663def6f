//! Performance profiles and shifted geometric means.

use std::collections::BTreeMap;

use crate::error::{BenchError, Result};
use crate::records::BenchRecord;

/// Right-continuous step function `f_s(tau)`: the fraction of problems that
/// solver `s` solves within a factor `tau` of the fastest solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileCurve {
    pub solver: String,
    /// Increasing breakpoints, the first one is 1.
    pub taus: Vec<f64>,
    /// `fractions[k] = f_s(taus[k])`, nondecreasing.
    pub fractions: Vec<f64>,
}

impl ProfileCurve {
    pub fn fraction_at(&self, tau: f64) -> f64 {
        match self.taus.iter().rposition(|t| *t <= tau) {
            Some(k) => self.fractions[k],
            None => 0.0,
        }
    }

    /// Value for `tau -> inf`.
    pub fn limit(&self) -> f64 {
        self.fractions.last().copied().unwrap_or(0.0)
    }
}

/// Profiles from an `S x P` time matrix; `NaN` (or any non-finite or
/// negative entry) marks a failure. Failures never attain the per-problem
/// minimum and count as unsolved for every `tau`. A problem that every solver
/// failed stays in the denominator `P`.
pub fn performance_profile(solvers: &[String], times: &[Vec<f64>]) -> Result<Vec<ProfileCurve>> {
    if times.len() != solvers.len() {
        return Err(BenchError::Invalid(format!(
            "{} solver names for {} rows of times",
            solvers.len(),
            times.len()
        )));
    }
    let p = times.first().map_or(0, Vec::len);
    if p == 0 {
        return Err(BenchError::Invalid("performance profile needs at least one problem".into()));
    }
    if times.iter().any(|row| row.len() != p) {
        return Err(BenchError::Invalid("ragged time matrix".into()));
    }
    let ok = |t: f64| t.is_finite() && t >= 0.0;
    let best: Vec<Option<f64>> = (0..p)
        .map(|j| {
            times
                .iter()
                .map(|row| row[j])
                .filter(|t| ok(*t))
                .fold(None, |m: Option<f64>, t| Some(m.map_or(t, |m| m.min(t))))
        })
        .collect();
    let pf = p as f64;
    Ok(solvers
        .iter()
        .zip(times)
        .map(|(name, row)| {
            let mut ratios: Vec<f64> = row
                .iter()
                .zip(&best)
                .filter_map(|(t, b)| match b {
                    Some(b) if ok(*t) => Some(if *t == *b { 1.0 } else { t / b }),
                    _ => None,
                })
                .collect();
            ratios.sort_by(f64::total_cmp);
            let mut taus = vec![1.0];
            let mut fractions = vec![0.0];
            for (k, r) in ratios.iter().enumerate() {
                let frac = (k + 1) as f64 / pf;
                if *r <= 1.0 {
                    fractions[0] = frac;
                } else if taus.last() == Some(r) {
                    *fractions.last_mut().expect("nonempty") = frac;
                } else {
                    taus.push(*r);
                    fractions.push(frac);
                }
            }
            ProfileCurve {
                solver: name.clone(),
                taus,
                fractions,
            }
        })
        .collect())
}

/// `exp(mean(ln(t + zeta))) - zeta`.
///
/// Evaluated as the `1/n`-th power of the product when that product stays
/// in range, which keeps exact cases exact; otherwise through logarithms.
pub fn shifted_geometric_mean(times: &[f64], zeta: f64) -> f64 {
    if times.is_empty() {
        return f64::NAN;
    }
    let n = times.len() as f64;
    let prod: f64 = times.iter().map(|t| t + zeta).product();
    if prod.is_normal() {
        prod.powf(1.0 / n) - zeta
    } else {
        let mean = times.iter().map(|t| (t + zeta).ln()).sum::<f64>() / n;
        mean.exp() - zeta
    }
}

/// Solver-by-problem time matrix from records. Runs flagged as failed by
/// [`BenchRecord::failed`] get `NaN`; missing runs count as failures. The
/// reference objective for a problem is that of the record with the
/// smallest KKT residual among converged runs.
pub fn time_matrix(records: &[BenchRecord]) -> (Vec<String>, Vec<String>, Vec<Vec<f64>>) {
    let mut solvers: Vec<String> = records.iter().map(|r| r.solver.clone()).collect();
    solvers.sort();
    solvers.dedup();
    let mut problems: Vec<String> = records.iter().map(|r| r.problem.clone()).collect();
    problems.sort();
    problems.dedup();
    let mut reference: BTreeMap<&str, (f64, f64, f64)> = BTreeMap::new();
    for r in records.iter().filter(|r| r.status == "converged") {
        let eta = r.residuals().eta_kkt();
        let entry = reference
            .entry(r.problem.as_str())
            .or_insert((f64::INFINITY, f64::NAN, f64::NAN));
        if eta < entry.0 {
            *entry = (eta, r.obj_p, r.obj_d);
        }
    }
    let mut times = vec![vec![f64::NAN; problems.len()]; solvers.len()];
    for r in records {
        let s = solvers.binary_search(&r.solver).expect("solver listed");
        let p = problems.binary_search(&r.problem).expect("problem listed");
        let (_, bp, bd) = reference
            .get(r.problem.as_str())
            .copied()
            .unwrap_or((f64::INFINITY, f64::NAN, f64::NAN));
        if !r.failed(bp, bd) {
            times[s][p] = r.time_s;
        }
    }
    (solvers, problems, times)
}

/// Per-solver `(name, sgm, failures)` where the SGM runs over all recorded
/// times of that solver, failed runs included.
pub fn sgm_table(records: &[BenchRecord], zeta: f64) -> Vec<(String, f64, usize)> {
    let (solvers, _, times) = time_matrix(records);
    solvers
        .iter()
        .zip(&times)
        .map(|(s, row)| {
            let all: Vec<f64> = records
                .iter()
                .filter(|r| &r.solver == s)
                .map(|r| r.time_s)
                .collect();
            let failures = row.iter().filter(|t| t.is_nan()).count();
            (s.clone(), shifted_geometric_mean(&all, zeta), failures)
        })
        .collect()
}

/// CSV lines `solver,tau,fraction`, one per breakpoint.
pub fn curves_to_csv(curves: &[ProfileCurve]) -> String {
    let mut out = String::from("solver,tau,fraction\n");
    for c in curves {
        for (t, f) in c.taus.iter().zip(&c.fractions) {
            out.push_str(&format!("{},{t},{f}\n", c.solver));
        }
    }
    out
}
