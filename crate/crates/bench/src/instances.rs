//! Readers for QAPLIB (`.dat`) and BIQMAC instance files.

use std::path::Path;

use dualpal::DenseMatrix;

use crate::error::{io_err, BenchError, Result};

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_err(path, e))
}

fn invalid(msg: impl Into<String>) -> BenchError {
    BenchError::Invalid(msg.into())
}

/// QAPLIB layout: `d` followed by the `d x d` matrices `A` and `B` in row-major
/// order, all whitespace separated.
pub fn parse_qaplib_str(text: &str) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
    let mut tok = text.split_whitespace();
    let d: usize = tok
        .next()
        .ok_or_else(|| invalid("empty QAPLIB file"))?
        .parse()
        .map_err(|_| invalid("QAPLIB order is not an integer"))?;
    let vals: Vec<f64> = tok
        .map(|t| t.parse::<f64>().map_err(|_| invalid(format!("bad QAPLIB entry `{t}`"))))
        .collect::<Result<_>>()?;
    if vals.len() != 2 * d * d {
        return Err(invalid(format!(
            "QAPLIB file of order {d} needs {} entries, found {}",
            2 * d * d,
            vals.len()
        )));
    }
    let a = DenseMatrix::from_row_major(d, d, vals[..d * d].to_vec());
    let b = DenseMatrix::from_row_major(d, d, vals[d * d..].to_vec());
    Ok((a, b))
}

pub fn read_qaplib(path: impl AsRef<Path>) -> Result<(DenseMatrix<f64>, DenseMatrix<f64>)> {
    parse_qaplib_str(&read(path.as_ref())?)
}

/// BIQMAC layout: `d nnz` then `nnz` lines `i j v` with 1-based indices; each
/// entry sets both `Q_ij` and `Q_ji`.
pub fn parse_biqmac_str(text: &str) -> Result<DenseMatrix<f64>> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let head: Vec<usize> = lines
        .next()
        .ok_or_else(|| invalid("empty BIQMAC file"))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| invalid("bad BIQMAC header")))
        .collect::<Result<_>>()?;
    let (d, nnz) = match head[..] {
        [d, nnz] => (d, nnz),
        _ => return Err(invalid("BIQMAC header needs `d nnz`")),
    };
    let mut q = DenseMatrix::zeros(d, d);
    let mut count = 0;
    for l in lines {
        let t: Vec<&str> = l.split_whitespace().collect();
        if t.len() != 3 {
            return Err(invalid(format!("BIQMAC entry `{l}` needs `i j v`")));
        }
        let idx = |s: &str| -> Result<usize> {
            let k: usize = s.parse().map_err(|_| invalid(format!("bad index `{s}`")))?;
            if k == 0 || k > d {
                return Err(invalid(format!("index {k} outside 1..={d}")));
            }
            Ok(k - 1)
        };
        let (i, j) = (idx(t[0])?, idx(t[1])?);
        let v: f64 = t[2].parse().map_err(|_| invalid(format!("bad value `{}`", t[2])))?;
        q[(i, j)] = v;
        q[(j, i)] = v;
        count += 1;
    }
    if count != nnz {
        return Err(invalid(format!("BIQMAC header announces {nnz} entries, found {count}")));
    }
    Ok(q)
}

pub fn read_biqmac(path: impl AsRef<Path>) -> Result<DenseMatrix<f64>> {
    parse_biqmac_str(&read(path.as_ref())?)
}
