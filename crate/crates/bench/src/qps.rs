//! Reader and writer for QPS files (MPS with a quadratic objective section).
//!
//! Both free (whitespace separated) and fixed column layouts are accepted. Row
//! constraints are mapped onto `A_E x = b_E` and `A_I x <= b_I`: `G` rows are
//! negated and ranged rows become one or two inequality rows.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use dualpal::{BoxSet, CsrMatrix, GeneralQp};

use crate::error::{io_err, BenchError, Result};

/// Bound magnitudes at or above this are read as infinite.
pub const INFINITE_BOUND: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Rows,
    Columns,
    Rhs,
    Ranges,
    Bounds,
    QuadObj,
    QMatrix,
    ObjSense,
    End,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RowKind {
    Objective,
    Free,
    Le,
    Ge,
    Eq,
}

#[derive(Default)]
struct Builder {
    name: String,
    row_index: HashMap<String, usize>,
    rows: Vec<RowKind>,
    objective: Option<usize>,
    col_index: HashMap<String, usize>,
    col_names: Vec<String>,
    entries: BTreeMap<(usize, usize), f64>,
    c: Vec<f64>,
    rhs: Vec<f64>,
    ranges: Vec<Option<f64>>,
    offset: f64,
    lower: Vec<f64>,
    upper: Vec<f64>,
    quad: BTreeMap<(usize, usize), f64>,
    full_q: bool,
}

fn perr(line: usize, msg: impl Into<String>) -> BenchError {
    BenchError::Parse { line, msg: msg.into() }
}

fn number(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| perr(line, format!("bad number `{tok}`")))
}

/// Splits a fixed-format data line into its six fields (some may be empty).
fn fixed_fields(line: &str) -> [String; 6] {
    let field = |a: usize, b: usize| {
        if a >= line.len() {
            String::new()
        } else {
            line.get(a..b.min(line.len())).unwrap_or("").trim().to_string()
        }
    };
    [
        field(1, 3),
        field(4, 12),
        field(14, 22),
        field(24, 36),
        field(39, 47),
        field(49, 61),
    ]
}

fn insert_unique<K: Ord + Copy>(
    map: &mut BTreeMap<K, f64>,
    key: K,
    v: f64,
    line: usize,
    what: &str,
) -> Result<()> {
    match map.get(&key) {
        Some(old) if *old != v => Err(perr(
            line,
            format!("duplicate {what} entry with conflicting values {old} and {v}"),
        )),
        _ => {
            map.insert(key, v);
            Ok(())
        }
    }
}

impl Builder {
    fn row(&self, name: &str, line: usize) -> Result<usize> {
        self.row_index
            .get(name)
            .copied()
            .ok_or_else(|| perr(line, format!("unknown row `{name}`")))
    }

    fn col(&self, name: &str, line: usize) -> Result<usize> {
        self.col_index
            .get(name)
            .copied()
            .ok_or_else(|| perr(line, format!("unknown column `{name}`")))
    }

    fn add_row(&mut self, kind: &str, name: &str, line: usize) -> Result<()> {
        let kind = match kind.to_ascii_uppercase().as_str() {
            "N" if self.objective.is_none() => RowKind::Objective,
            "N" => RowKind::Free,
            "L" => RowKind::Le,
            "G" => RowKind::Ge,
            "E" => RowKind::Eq,
            other => return Err(perr(line, format!("unknown row type `{other}`"))),
        };
        if self.row_index.contains_key(name) {
            return Err(perr(line, format!("duplicate row `{name}`")));
        }
        if kind == RowKind::Objective {
            self.objective = Some(self.rows.len());
        }
        self.row_index.insert(name.to_string(), self.rows.len());
        self.rows.push(kind);
        self.rhs.push(0.0);
        self.ranges.push(None);
        Ok(())
    }

    fn column_entry(&mut self, col: &str, row: &str, v: f64, line: usize) -> Result<()> {
        let i = self.row(row, line)?;
        let j = match self.col_index.get(col) {
            Some(j) => *j,
            None => {
                let j = self.col_names.len();
                self.col_index.insert(col.to_string(), j);
                self.col_names.push(col.to_string());
                self.c.push(0.0);
                self.lower.push(0.0);
                self.upper.push(f64::INFINITY);
                j
            }
        };
        match self.rows[i] {
            RowKind::Objective => {
                if self.c[j] != 0.0 && self.c[j] != v {
                    return Err(perr(line, format!("conflicting objective entry for `{col}`")));
                }
                self.c[j] = v;
            }
            RowKind::Free => {}
            _ => insert_unique(&mut self.entries, (i, j), v, line, "matrix")?,
        }
        Ok(())
    }

    fn columns_line(&mut self, t: &[&str], line: usize) -> Result<()> {
        if t.len() >= 3 && t[1].eq_ignore_ascii_case("'MARKER'") {
            return Ok(());
        }
        if t.len() != 3 && t.len() != 5 {
            return Err(perr(line, "COLUMNS line needs 3 or 5 fields"));
        }
        for pair in t[1..].chunks(2) {
            let v = number(pair[1], line)?;
            self.column_entry(t[0], pair[0], v, line)?;
        }
        Ok(())
    }

    /// RHS and RANGES lines: an optional set name followed by pairs.
    fn pairs<'a>(t: &'a [&'a str], line: usize) -> Result<&'a [&'a str]> {
        match t.len() {
            2 | 4 => Ok(t),
            3 | 5 => Ok(&t[1..]),
            _ => Err(perr(line, "expected `[set] row value [row value]`")),
        }
    }

    fn rhs_line(&mut self, t: &[&str], line: usize) -> Result<()> {
        for pair in Self::pairs(t, line)?.chunks(2) {
            let i = self.row(pair[0], line)?;
            let v = number(pair[1], line)?;
            if self.rows[i] == RowKind::Objective {
                self.offset = -v;
            } else {
                self.rhs[i] = v;
            }
        }
        Ok(())
    }

    fn ranges_line(&mut self, t: &[&str], line: usize) -> Result<()> {
        for pair in Self::pairs(t, line)?.chunks(2) {
            let i = self.row(pair[0], line)?;
            self.ranges[i] = Some(number(pair[1], line)?);
        }
        Ok(())
    }

    fn bounds_line(&mut self, t: &[&str], line: usize) -> Result<()> {
        let kind = t
            .first()
            .ok_or_else(|| perr(line, "empty BOUNDS line"))?
            .to_ascii_uppercase();
        let valued = !matches!(kind.as_str(), "FR" | "MI" | "PL" | "BV");
        let (col, val) = match (valued, t.len()) {
            (true, 4) => (t[2], Some(number(t[3], line)?)),
            (true, 3) => (t[1], Some(number(t[2], line)?)),
            (false, 3) => (t[2], None),
            (false, 2) => (t[1], None),
            // BV occasionally carries a value, which is ignored
            (false, 4) if kind == "BV" => (t[2], None),
            _ => return Err(perr(line, format!("malformed {kind} bound"))),
        };
        let j = self.col(col, line)?;
        let inf = f64::INFINITY;
        let big = |v: f64| {
            if v >= INFINITE_BOUND {
                inf
            } else if v <= -INFINITE_BOUND {
                -inf
            } else {
                v
            }
        };
        match (kind.as_str(), val) {
            ("LO" | "LI", Some(v)) => self.lower[j] = big(v),
            ("UP" | "UI", Some(v)) => {
                // MPS convention: a negative upper bound with the default lower bound frees it
                if v < 0.0 && self.lower[j] == 0.0 {
                    log::warn!("line {line}: negative UP bound on `{col}` sets its lower bound to -inf");
                    self.lower[j] = -inf;
                }
                self.upper[j] = big(v);
            }
            ("FX", Some(v)) => {
                self.lower[j] = v;
                self.upper[j] = v;
            }
            ("FR", _) => {
                self.lower[j] = -inf;
                self.upper[j] = inf;
            }
            ("MI", _) => self.lower[j] = -inf,
            ("PL", _) => self.upper[j] = inf,
            ("BV", _) => {
                self.lower[j] = 0.0;
                self.upper[j] = 1.0;
            }
            (other, _) => return Err(perr(line, format!("unsupported bound type `{other}`"))),
        }
        Ok(())
    }

    fn quad_line(&mut self, t: &[&str], line: usize) -> Result<()> {
        if t.len() != 3 {
            return Err(perr(line, "quadratic entry needs `col col value`"));
        }
        let i = self.col(t[0], line)?;
        let j = self.col(t[1], line)?;
        let v = number(t[2], line)?;
        if self.full_q {
            insert_unique(&mut self.quad, (i, j), v, line, "quadratic")
        } else {
            insert_unique(&mut self.quad, (i.max(j), i.min(j)), v, line, "quadratic")
        }
    }

    /// Dispatches one data line, retrying with the fixed column layout when
    /// the whitespace split does not parse.
    fn data_line(&mut self, section: Section, raw: &str, line: usize) -> Result<()> {
        let tokens: Vec<&str> = raw.split_whitespace().collect();
        let free = self.dispatch(section, &tokens, line);
        if free.is_ok() || raw.len() < 15 {
            return free;
        }
        let f = fixed_fields(raw);
        let fixed: Vec<&str> = match section {
            Section::Rows => vec![&f[0], &f[1]],
            Section::Columns | Section::QuadObj | Section::QMatrix => {
                f[1..].iter().map(String::as_str).filter(|s| !s.is_empty()).collect()
            }
            Section::Rhs | Section::Ranges => {
                let mut v: Vec<&str> = f[2..].iter().map(String::as_str).filter(|s| !s.is_empty()).collect();
                if !f[1].is_empty() {
                    v.insert(0, &f[1]);
                }
                v
            }
            Section::Bounds => {
                let mut v = vec![f[0].as_str()];
                if !f[1].is_empty() {
                    v.push(&f[1]);
                }
                v.extend(f[2..4].iter().map(String::as_str).filter(|s| !s.is_empty()));
                v
            }
            _ => return free,
        };
        self.dispatch(section, &fixed, line)
            .map_err(|_| free.unwrap_err())
    }

    fn dispatch(&mut self, section: Section, t: &[&str], line: usize) -> Result<()> {
        match section {
            Section::Rows => match t {
                [kind, name] => self.add_row(kind, name, line),
                _ => Err(perr(line, "ROWS line needs `type name`")),
            },
            Section::Columns => self.columns_line(t, line),
            Section::Rhs => self.rhs_line(t, line),
            Section::Ranges => self.ranges_line(t, line),
            Section::Bounds => self.bounds_line(t, line),
            Section::QuadObj | Section::QMatrix => self.quad_line(t, line),
            Section::ObjSense => match t.first().map(|s| s.to_ascii_uppercase()) {
                Some(s) if s == "MIN" || s == "MINIMIZE" => Ok(()),
                _ => Err(perr(line, "only minimization is supported")),
            },
            Section::Preamble | Section::End => Err(perr(line, "data outside of a section")),
        }
    }

    fn finish(self) -> Result<GeneralQp<f64>> {
        let n = self.col_names.len();
        let mut q_trip = Vec::new();
        if self.full_q {
            for (&(i, j), &v) in &self.quad {
                match self.quad.get(&(j, i)) {
                    Some(&w) if (v - w).abs() <= 1e-12 * (1.0 + v.abs()) => {}
                    other => {
                        return Err(BenchError::AsymmetricQuadratic {
                            row: self.col_names[i].clone(),
                            col: self.col_names[j].clone(),
                            a: v,
                            b: other.copied().unwrap_or(0.0),
                        })
                    }
                }
                q_trip.push((i, j, v));
            }
        } else {
            for (&(i, j), &v) in &self.quad {
                q_trip.push((i, j, v));
                if i != j {
                    q_trip.push((j, i, v));
                }
            }
        }
        let q = CsrMatrix::from_triplets(n, n, &q_trip)?;

        // each constraint row as an interval lo <= a x <= hi
        let mut eq_rows = Vec::new();
        let mut in_rows: Vec<(usize, f64, f64)> = Vec::new();
        for (i, kind) in self.rows.iter().enumerate() {
            let r = self.rhs[i];
            let (lo, hi) = match (kind, self.ranges[i]) {
                (RowKind::Objective | RowKind::Free, _) => continue,
                (RowKind::Eq, None) => (r, r),
                (RowKind::Eq, Some(g)) if g >= 0.0 => (r, r + g),
                (RowKind::Eq, Some(g)) => (r + g, r),
                (RowKind::Le, None) => (f64::NEG_INFINITY, r),
                (RowKind::Le, Some(g)) => (r - g.abs(), r),
                (RowKind::Ge, None) => (r, f64::INFINITY),
                (RowKind::Ge, Some(g)) => (r, r + g.abs()),
            };
            if lo == hi {
                eq_rows.push((i, lo));
            } else {
                if hi.is_finite() {
                    in_rows.push((i, 1.0, hi));
                }
                if lo.is_finite() {
                    in_rows.push((i, -1.0, -lo));
                }
            }
        }
        let mut by_row: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for (&(i, j), &v) in &self.entries {
            by_row.entry(i).or_default().push((j, v));
        }
        let assemble = |rows: &[(usize, f64)]| -> Result<CsrMatrix<f64>> {
            let mut trip = Vec::new();
            for (k, &(i, sign)) in rows.iter().enumerate() {
                for &(j, v) in by_row.get(&i).map(Vec::as_slice).unwrap_or(&[]) {
                    trip.push((k, j, sign * v));
                }
            }
            Ok(CsrMatrix::from_triplets(rows.len(), n, &trip)?)
        };
        let a_eq = assemble(&eq_rows.iter().map(|&(i, _)| (i, 1.0)).collect::<Vec<_>>())?;
        let a_in = assemble(&in_rows.iter().map(|&(i, s, _)| (i, s)).collect::<Vec<_>>())?;
        let gp = GeneralQp {
            q: Arc::new(q),
            c: self.c,
            a_eq,
            b_eq: eq_rows.iter().map(|r| r.1).collect(),
            a_in,
            b_in: in_rows.iter().map(|r| r.2).collect(),
            bounds: BoxSet::new(self.lower, self.upper)?,
            offset: self.offset,
        };
        gp.validate()?;
        Ok(gp)
    }
}

/// Parses QPS text.
pub fn parse_qps_str(text: &str) -> Result<GeneralQp<f64>> {
    parse_qps_named(text).map(|(_, gp)| gp)
}

/// Parses QPS text and also returns the `NAME` field.
pub fn parse_qps_named(text: &str) -> Result<(String, GeneralQp<f64>)> {
    let mut b = Builder::default();
    let mut section = Section::Preamble;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let raw = raw.trim_end();
        if raw.is_empty() || raw.starts_with('*') {
            continue;
        }
        if !raw.starts_with(char::is_whitespace) {
            let mut t = raw.split_whitespace();
            let head = t.next().unwrap_or("").to_ascii_uppercase();
            section = match head.as_str() {
                "NAME" => {
                    b.name = t.collect::<Vec<_>>().join(" ");
                    Section::Preamble
                }
                "ROWS" => Section::Rows,
                "COLUMNS" => Section::Columns,
                "RHS" => Section::Rhs,
                "RANGES" => Section::Ranges,
                "BOUNDS" => Section::Bounds,
                "QUADOBJ" => Section::QuadObj,
                "QMATRIX" | "QSECTION" => {
                    b.full_q = true;
                    Section::QMatrix
                }
                "OBJSENSE" => match t.next() {
                    Some(s) => {
                        b.dispatch(Section::ObjSense, &[s], line)?;
                        Section::ObjSense
                    }
                    None => Section::ObjSense,
                },
                "ENDATA" => Section::End,
                _ if section != Section::Preamble && section != Section::End => {
                    // free-format data lines may start in column 1
                    b.data_line(section, raw, line)?;
                    continue;
                }
                other => return Err(perr(line, format!("unknown section `{other}`"))),
            };
            if section == Section::QuadObj && b.full_q {
                return Err(perr(line, "both QUADOBJ and QMATRIX present"));
            }
            if section == Section::End {
                break;
            }
            continue;
        }
        b.data_line(section, raw, line)?;
    }
    if section != Section::End {
        return Err(perr(text.lines().count(), "missing ENDATA"));
    }
    if b.objective.is_none() {
        return Err(perr(0, "no objective row"));
    }
    let name = b.name.clone();
    Ok((name, b.finish()?))
}

pub fn parse_qps(path: impl AsRef<Path>) -> Result<GeneralQp<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    parse_qps_str(&text)
}

/// Emits `gp` in free-format QPS with generated names. Equalities become `E`
/// rows and inequalities `L` rows, so parsing the output reproduces `gp`
/// exactly. Fails when `Q` has no explicit matrix.
pub fn write_qps(gp: &GeneralQp<f64>, name: &str) -> Result<String> {
    let q = gp
        .q
        .as_csr()
        .ok_or_else(|| BenchError::Invalid("QPS output needs an explicit Q matrix".into()))?;
    let n = gp.n();
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "NAME {}", if name.is_empty() { "QP" } else { name });
    let _ = writeln!(w, "ROWS\n N OBJ");
    for i in 0..gp.m_eq() {
        let _ = writeln!(w, " E E{i}");
    }
    for i in 0..gp.m_in() {
        let _ = writeln!(w, " L L{i}");
    }
    let _ = writeln!(w, "COLUMNS");
    let (at_eq, at_in) = (gp.a_eq.transpose(), gp.a_in.transpose());
    for j in 0..n {
        // a column with no entries at all still has to be declared
        let _ = writeln!(w, " C{j} OBJ {:?}", gp.c[j]);
        let (idx, val) = at_eq.row(j);
        for (i, v) in idx.iter().zip(val) {
            let _ = writeln!(w, " C{j} E{i} {v:?}");
        }
        let (idx, val) = at_in.row(j);
        for (i, v) in idx.iter().zip(val) {
            let _ = writeln!(w, " C{j} L{i} {v:?}");
        }
    }
    let _ = writeln!(w, "RHS");
    if gp.offset != 0.0 {
        let _ = writeln!(w, " RHS OBJ {:?}", -gp.offset);
    }
    for (i, v) in gp.b_eq.iter().enumerate() {
        let _ = writeln!(w, " RHS E{i} {v:?}");
    }
    for (i, v) in gp.b_in.iter().enumerate() {
        let _ = writeln!(w, " RHS L{i} {v:?}");
    }
    let _ = writeln!(w, "BOUNDS");
    let (lo, up) = (gp.bounds.lower(), gp.bounds.upper());
    for j in 0..n {
        let (l, u) = (lo[j], up[j]);
        if l == u {
            let _ = writeln!(w, " FX BND C{j} {l:?}");
            continue;
        }
        match (l.is_finite(), u.is_finite()) {
            (false, false) => {
                let _ = writeln!(w, " FR BND C{j}");
            }
            (false, true) => {
                let _ = writeln!(w, " MI BND C{j}\n UP BND C{j} {u:?}");
            }
            (true, fin_u) => {
                if l != 0.0 {
                    let _ = writeln!(w, " LO BND C{j} {l:?}");
                }
                if fin_u {
                    let _ = writeln!(w, " UP BND C{j} {u:?}");
                }
            }
        }
    }
    if q.nnz() > 0 {
        let _ = writeln!(w, "QUADOBJ");
        for (i, j, v) in q.triplets() {
            if i >= j {
                let _ = writeln!(w, " C{i} C{j} {v:?}");
            }
        }
    }
    let _ = writeln!(w, "ENDATA");
    Ok(out)
}
