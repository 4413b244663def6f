//! Result records, one per (problem, solver) run, stored as JSON lines or CSV.

use std::io::{BufRead, Write};
use std::path::Path;

use dualpal::kkt::{failure_flags, FailureFlags};
use dualpal::{KktResiduals, SolveResult};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, BenchError, Result};

/// Version of the record layout, written into every record.
pub const SCHEMA_VERSION: u32 = 1;

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

/// JSON has no infinities or NaN; non-finite values are written as `null`
/// and read back as NaN.
mod nullable {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub problem: String,
    pub solver: String,
    #[serde(rename = "mE")]
    pub m_e: usize,
    #[serde(rename = "mI")]
    pub m_i: usize,
    pub n: usize,
    /// Outer iterations of the final phase.
    pub iter: usize,
    pub iter_phase1: usize,
    pub time_s: f64,
    #[serde(with = "nullable")]
    pub eta_p: f64,
    #[serde(with = "nullable")]
    pub eta_d: f64,
    #[serde(rename = "eta_Q", with = "nullable")]
    pub eta_q: f64,
    #[serde(rename = "eta_C", with = "nullable")]
    pub eta_c: f64,
    #[serde(with = "nullable")]
    pub eta_g: f64,
    #[serde(with = "nullable")]
    pub obj_p: f64,
    #[serde(with = "nullable")]
    pub obj_d: f64,
    pub status: String,
    #[serde(default = "default_schema")]
    pub schema: u32,
}

impl BenchRecord {
    pub fn from_solve(
        problem: &str,
        solver: &str,
        dims: (usize, usize, usize),
        out: &SolveResult<f64>,
    ) -> Self {
        let iter = if out.phase2.is_some() {
            out.iter_phase2
        } else {
            out.iter_phase1
        };
        let mut rec = Self::with_residuals(problem, solver, dims, &out.residuals);
        rec.iter = iter;
        rec.iter_phase1 = out.iter_phase1;
        rec.time_s = out.time_s;
        rec.status = out.status.as_str().to_string();
        rec
    }

    fn with_residuals(
        problem: &str,
        solver: &str,
        (m_e, m_i, n): (usize, usize, usize),
        r: &KktResiduals<f64>,
    ) -> Self {
        Self {
            problem: problem.to_string(),
            solver: solver.to_string(),
            m_e,
            m_i,
            n,
            iter: 0,
            iter_phase1: 0,
            time_s: 0.0,
            eta_p: r.eta_p,
            eta_d: r.eta_d,
            eta_q: r.eta_q,
            eta_c: r.eta_c,
            eta_g: r.eta_g,
            obj_p: r.obj_p,
            obj_d: r.obj_d,
            status: String::new(),
            schema: SCHEMA_VERSION,
        }
    }

    pub fn residuals(&self) -> KktResiduals<f64> {
        let abs_gap = self.eta_g.abs();
        KktResiduals {
            eta_p: self.eta_p,
            eta_d: self.eta_d,
            eta_q: self.eta_q,
            eta_c: self.eta_c,
            eta_g: self.eta_g,
            obj_p: self.obj_p,
            obj_d: self.obj_d,
            eta_max: self.eta_p.max(self.eta_d).max(self.eta_q).max(self.eta_c).max(abs_gap),
            dual_unbounded: self.obj_d.is_nan() || self.obj_d == f64::NEG_INFINITY,
        }
    }

    /// Residual and objective failure flags against best-known objectives.
    /// A record whose solver did not report convergence also fails.
    pub fn failed(&self, best_p: f64, best_d: f64) -> bool {
        let flags: FailureFlags = failure_flags(&self.residuals(), best_p, best_d);
        let kkt_nan = [self.eta_p, self.eta_d, self.eta_q, self.eta_c]
            .iter()
            .any(|v| v.is_nan());
        flags.any() || kkt_nan || self.status != "converged"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Json,
    Csv,
}

impl RecordFormat {
    /// `.csv` selects CSV, anything else JSON lines.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => RecordFormat::Csv,
            _ => RecordFormat::Json,
        }
    }
}

pub fn write_jsonl<W: Write>(mut w: W, records: &[BenchRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")
            .map_err(|e| io_err(Path::new("<jsonl>"), e))?;
    }
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<BenchRecord>> {
    let mut out = Vec::new();
    for (k, line) in r.lines().enumerate() {
        let line = line.map_err(|e| io_err(Path::new("<jsonl>"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| BenchError::Parse {
            line: k + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_csv<W: Write>(w: W, records: &[BenchRecord]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in records {
        wr.serialize(r)?;
    }
    wr.flush().map_err(|e| io_err(Path::new("<csv>"), e))?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(r: R) -> Result<Vec<BenchRecord>> {
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(BenchError::from))
        .collect()
}

pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<BenchRecord>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    match RecordFormat::from_path(path) {
        RecordFormat::Csv => read_csv(file),
        RecordFormat::Json => read_jsonl(std::io::BufReader::new(file)),
    }
}

pub fn write_records(path: impl AsRef<Path>, records: &[BenchRecord], format: RecordFormat) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let w = std::io::BufWriter::new(file);
    match format {
        RecordFormat::Csv => write_csv(w, records),
        RecordFormat::Json => write_jsonl(w, records),
    }
}
