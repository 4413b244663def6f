use crate::error::{check_dim, Error, Result};
use crate::linops::{CsrMatrix, DenseMatrix};
use crate::Real;

const NONE: usize = usize::MAX;

/// Fill-reducing ordering applied before factorization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    #[default]
    Amd,
    Natural,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CholOptions {
    /// Pivots below `pivot_tol * max_diag` are skipped.
    pub pivot_tol: f64,
    pub ordering: Ordering,
}

impl Default for CholOptions {
    fn default() -> Self {
        Self {
            pivot_tol: 1e-13,
            ordering: Ordering::Amd,
        }
    }
}

/// Sparse `P M P^T = L L^T` with tiny pivots skipped.
///
/// A skipped pivot has its column of `L` zeroed, which is the same as
/// factoring `M` with that row and column deleted; [`CholFactor::solve`]
/// then returns zero in that component. For a consistent right-hand side of
/// a rank-deficient `M` this still gives an exact solution.
#[derive(Debug, Clone)]
pub struct CholFactor<T: Real> {
    n: usize,
    /// `perm[k]` is the original index of the k-th pivot.
    perm: Vec<usize>,
    // L by columns; the diagonal entry comes first in each column.
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<T>,
    skipped: Vec<usize>,
    pivot_tol: f64,
}

pub fn chol_factor<T: Real>(m: &CsrMatrix<T>, opts: &CholOptions) -> Result<CholFactor<T>> {
    let n = m.nrows();
    check_dim("chol_factor (square)", n, m.ncols())?;
    if !m.is_symmetric() {
        return Err(Error::Asymmetric(m.max_asymmetry().as_f64()));
    }
    let perm = match opts.ordering {
        Ordering::Natural => (0..n).collect(),
        Ordering::Amd => amd_order(m).unwrap_or_else(|| (0..n).collect()),
    };
    let mut pinv = vec![0; n];
    for (k, &i) in perm.iter().enumerate() {
        pinv[i] = k;
    }

    // Upper triangle of C = P M P^T, by columns.
    let mut cnt = vec![0usize; n + 1];
    for i in 0..n {
        let (cols, _) = m.row(i);
        for &j in cols {
            let (a, b) = (pinv[i], pinv[j]);
            if a <= b {
                cnt[b + 1] += 1;
            }
        }
    }
    for k in 0..n {
        cnt[k + 1] += cnt[k];
    }
    let c_ptr = cnt.clone();
    let mut next = cnt;
    let mut c_idx = vec![0; c_ptr[n]];
    let mut c_val = vec![T::zero(); c_ptr[n]];
    for i in 0..n {
        let (cols, vals) = m.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let (a, b) = (pinv[i], pinv[j]);
            if a <= b {
                c_idx[next[b]] = a;
                c_val[next[b]] = v;
                next[b] += 1;
            }
        }
    }

    let parent = etree(n, &c_ptr, &c_idx);

    // Symbolic pass: column counts of L.
    let mut mark = vec![NONE; n];
    let mut stack = vec![0; n];
    let mut pattern = vec![0; n];
    let mut col_count = vec![1usize; n];
    for k in 0..n {
        let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack, &mut pattern);
        for &j in &pattern[top..] {
            col_count[j] += 1;
        }
    }
    let mut col_ptr = vec![0; n + 1];
    for k in 0..n {
        col_ptr[k + 1] = col_ptr[k] + col_count[k];
    }
    let nnz = col_ptr[n];
    let mut row_idx = vec![0; nnz];
    let mut values = vec![T::zero(); nnz];
    // next free slot per column, after the diagonal
    let mut fill: Vec<usize> = (0..n).map(|k| col_ptr[k] + 1).collect();

    let max_diag = (0..n).fold(T::zero(), |a, i| a.max(m.get(i, i).abs()));
    let tol = T::lit(opts.pivot_tol) * max_diag.max(T::min_positive_value());
    let mut skipped = Vec::new();
    let mut is_skipped = vec![false; n];
    let mut x = vec![T::zero(); n];
    mark.fill(NONE);
    for k in 0..n {
        let top = ereach(k, &c_ptr, &c_idx, &parent, &mut mark, &mut stack, &mut pattern);
        for p in c_ptr[k]..c_ptr[k + 1] {
            x[c_idx[p]] += c_val[p];
        }
        let mut d = x[k];
        x[k] = T::zero();
        for &j in &pattern[top..] {
            let lkj = if is_skipped[j] {
                T::zero()
            } else {
                x[j] / values[col_ptr[j]]
            };
            x[j] = T::zero();
            for p in (col_ptr[j] + 1)..fill[j] {
                x[row_idx[p]] -= values[p] * lkj;
            }
            d -= lkj * lkj;
            row_idx[fill[j]] = k;
            values[fill[j]] = lkj;
            fill[j] += 1;
        }
        row_idx[col_ptr[k]] = k;
        if d < -tol {
            return Err(Error::Indefinite {
                column: perm[k],
                pivot: d.as_f64(),
            });
        }
        if d <= tol {
            is_skipped[k] = true;
            skipped.push(perm[k]);
            values[col_ptr[k]] = T::one();
        } else {
            values[col_ptr[k]] = d.sqrt();
        }
    }
    skipped.sort_unstable();
    Ok(CholFactor {
        n,
        perm,
        col_ptr,
        row_idx,
        values,
        skipped,
        pivot_tol: opts.pivot_tol,
    })
}

fn amd_order<T: Real>(m: &CsrMatrix<T>) -> Option<Vec<usize>> {
    let n = m.nrows();
    if n == 0 {
        return Some(Vec::new());
    }
    // CSR of a symmetric matrix is also its CSC.
    match amd::order::<usize>(n, m.indptr(), m.indices(), &amd::Control::default()) {
        Ok((p, _, _)) => Some(p),
        Err(status) => {
            log::warn!("AMD ordering failed ({status:?}); using natural order");
            None
        }
    }
}

fn etree(n: usize, c_ptr: &[usize], c_idx: &[usize]) -> Vec<usize> {
    let mut parent = vec![NONE; n];
    let mut ancestor = vec![NONE; n];
    for k in 0..n {
        for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
            let mut i = i0;
            while i != NONE && i < k {
                let next = ancestor[i];
                ancestor[i] = k;
                if next == NONE {
                    parent[i] = k;
                }
                i = next;
            }
        }
    }
    parent
}

/// Nonzero pattern of row `k` of `L` in topological order, as
/// `pattern[top..]`.
fn ereach(
    k: usize,
    c_ptr: &[usize],
    c_idx: &[usize],
    parent: &[usize],
    mark: &mut [usize],
    stack: &mut [usize],
    pattern: &mut [usize],
) -> usize {
    let n = parent.len();
    let mut top = n;
    mark[k] = k;
    for &i0 in &c_idx[c_ptr[k]..c_ptr[k + 1]] {
        if i0 > k {
            continue;
        }
        let mut len = 0;
        let mut i = i0;
        while mark[i] != k {
            stack[len] = i;
            len += 1;
            mark[i] = k;
            i = parent[i];
            if i == NONE {
                break;
            }
        }
        while len > 0 {
            len -= 1;
            top -= 1;
            pattern[top] = stack[len];
        }
    }
    top
}

impl<T: Real> CholFactor<T> {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// Original indices whose pivots were skipped.
    pub fn skipped(&self) -> &[usize] {
        &self.skipped
    }

    pub fn pivot_tol(&self) -> f64 {
        self.pivot_tol
    }

    pub fn factor_nnz(&self) -> usize {
        self.values.len()
    }

    /// `L` of the permuted matrix, with skipped columns zeroed.
    pub fn lower_factor(&self) -> CsrMatrix<T> {
        let mut t = Vec::with_capacity(self.values.len());
        for j in 0..self.n {
            let skip = self.is_skipped_pivot(j);
            for p in self.col_ptr[j]..self.col_ptr[j + 1] {
                if !skip {
                    t.push((self.row_idx[p], j, self.values[p]));
                }
            }
        }
        CsrMatrix::from_triplets(self.n, self.n, &t).expect("factor indices in range")
    }

    fn is_skipped_pivot(&self, k: usize) -> bool {
        self.skipped.binary_search(&self.perm[k]).is_ok()
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.solve_into(rhs, &mut out);
        out
    }

    pub fn solve_into(&self, rhs: &[T], out: &mut [T]) {
        let n = self.n;
        assert_eq!(rhs.len(), n, "cholesky rhs length");
        let skip: Vec<bool> = (0..n).map(|k| self.is_skipped_pivot(k)).collect();
        let mut z: Vec<T> = self.perm.iter().map(|&i| rhs[i]).collect();
        for j in 0..n {
            if skip[j] {
                z[j] = T::zero();
                continue;
            }
            z[j] /= self.values[self.col_ptr[j]];
            let zj = z[j];
            for p in (self.col_ptr[j] + 1)..self.col_ptr[j + 1] {
                z[self.row_idx[p]] -= self.values[p] * zj;
            }
        }
        for j in (0..n).rev() {
            if skip[j] {
                z[j] = T::zero();
                continue;
            }
            let mut s = z[j];
            for p in (self.col_ptr[j] + 1)..self.col_ptr[j + 1] {
                s -= self.values[p] * z[self.row_idx[p]];
            }
            z[j] = s / self.values[self.col_ptr[j]];
        }
        for (k, &i) in self.perm.iter().enumerate() {
            out[i] = z[k];
        }
    }
}

pub fn chol_solve<T: Real>(f: &CholFactor<T>, rhs: &[T]) -> Result<Vec<T>> {
    check_dim("chol_solve rhs", f.dim(), rhs.len())?;
    Ok(f.solve(rhs))
}

/// Dense `M = L L^T` for small SPD systems (the reduced Newton matrix).
#[derive(Debug, Clone)]
pub struct DenseCholesky<T: Real> {
    l: DenseMatrix<T>,
}

impl<T: Real> DenseCholesky<T> {
    /// Fails with [`Error::Indefinite`] on a nonpositive pivot.
    pub fn factor(m: &DenseMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        check_dim("dense cholesky (square)", n, m.ncols())?;
        let mut l = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let mut d = m[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
                return Err(Error::Indefinite {
                    column: j,
                    pivot: d.as_f64(),
                });
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in (j + 1)..n {
                let mut s = m[(i, j)];
                let (ri, rj) = (l.row(i), l.row(j));
                for k in 0..j {
                    s -= ri[k] * rj[k];
                }
                l[(i, j)] = s / d;
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.l.nrows();
        let mut z = rhs.to_vec();
        for i in 0..n {
            let row = self.l.row(i);
            let mut s = z[i];
            for k in 0..i {
                s -= row[k] * z[k];
            }
            z[i] = s / row[i];
        }
        for i in (0..n).rev() {
            let mut s = z[i];
            for k in (i + 1)..n {
                s -= self.l[(k, i)] * z[k];
            }
            z[i] = s / self.l[(i, i)];
        }
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_factor() {
        let f = chol_factor(&CsrMatrix::<f64>::identity(4), &CholOptions::default()).unwrap();
        assert!(f.skipped().is_empty());
        assert_eq!(f.lower_factor(), CsrMatrix::identity(4));
        assert_eq!(f.solve(&[1.0, 2.0, 3.0, 4.0]), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tiny_pivot_is_skipped() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (1, 1, 1e-20)]).unwrap();
        let opts = CholOptions {
            pivot_tol: 1e-12,
            ordering: Ordering::Natural,
        };
        let f = chol_factor(&m, &opts).unwrap();
        assert_eq!(f.skipped(), &[1]);
        assert_eq!(f.solve(&[3.0, 5.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn negative_pivot_is_indefinite() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)])
            .unwrap();
        assert!(matches!(
            chol_factor(&m, &CholOptions::default()),
            Err(Error::Indefinite { .. })
        ));
    }

    #[test]
    fn dense_cholesky_solves() {
        let m = DenseMatrix::from_row_major(2, 2, vec![4.0_f64, 2.0, 2.0, 3.0]);
        let x = DenseCholesky::factor(&m).unwrap().solve(&[2.0, 1.0]);
        assert!((x[0] - 0.5).abs() < 1e-15 && x[1].abs() < 1e-15);
    }
}
