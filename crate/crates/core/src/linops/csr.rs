use std::sync::OnceLock;

use super::{DenseMatrix, LinearOperator};
use crate::error::{Error, Result};
use crate::Real;

/// Compressed sparse row matrix with sorted, duplicate-free column indices.
#[derive(Debug, Clone)]
pub struct CsrMatrix<T: Real> {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<T>,
    symmetric: OnceLock<bool>,
}

impl<T: Real> PartialEq for CsrMatrix<T> {
    fn eq(&self, other: &Self) -> bool {
        self.nrows == other.nrows
            && self.ncols == other.ncols
            && self.indptr == other.indptr
            && self.indices == other.indices
            && self.data == other.data
    }
}

impl<T: Real> CsrMatrix<T> {
    /// Builds from raw CSR arrays; rows are sorted and duplicates summed.
    pub fn new(
        nrows: usize,
        ncols: usize,
        indptr: Vec<usize>,
        indices: Vec<usize>,
        data: Vec<T>,
    ) -> Result<Self> {
        if indptr.len() != nrows + 1 {
            return Err(Error::DimensionMismatch {
                context: "csr indptr",
                expected: nrows + 1,
                got: indptr.len(),
            });
        }
        if indices.len() != data.len() || indptr[nrows] != data.len() {
            return Err(Error::DimensionMismatch {
                context: "csr data",
                expected: indptr[nrows],
                got: data.len(),
            });
        }
        let mut triplets = Vec::with_capacity(data.len());
        for i in 0..nrows {
            for p in indptr[i]..indptr[i + 1] {
                triplets.push((i, indices[p], data[p]));
            }
        }
        Self::from_triplets(nrows, ncols, &triplets)
    }

    /// Assembles from `(row, col, value)` triplets, summing duplicates.
    /// Explicit zeros are kept so the sparsity pattern is preserved.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, T)]) -> Result<Self> {
        let mut counts = vec![0usize; nrows + 1];
        for &(i, j, _) in triplets {
            if i >= nrows {
                return Err(Error::DimensionMismatch {
                    context: "triplet row",
                    expected: nrows,
                    got: i,
                });
            }
            if j >= ncols {
                return Err(Error::DimensionMismatch {
                    context: "triplet column",
                    expected: ncols,
                    got: j,
                });
            }
            counts[i + 1] += 1;
        }
        for i in 0..nrows {
            counts[i + 1] += counts[i];
        }
        let mut next = counts.clone();
        let mut cols = vec![0usize; triplets.len()];
        let mut vals = vec![T::zero(); triplets.len()];
        for &(i, j, v) in triplets {
            cols[next[i]] = j;
            vals[next[i]] = v;
            next[i] += 1;
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut data = Vec::with_capacity(triplets.len());
        indptr.push(0);
        let mut row: Vec<(usize, T)> = Vec::new();
        for i in 0..nrows {
            row.clear();
            row.extend((counts[i]..counts[i + 1]).map(|p| (cols[p], vals[p])));
            row.sort_by_key(|e| e.0);
            for &(j, v) in &row {
                if indices.len() > indptr[i] && *indices.last().unwrap() == j {
                    *data.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Ok(Self {
            nrows,
            ncols,
            indptr,
            indices,
            data,
            symmetric: OnceLock::new(),
        })
    }

    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            data: Vec::new(),
            symmetric: OnceLock::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![T::one(); n],
            symmetric: OnceLock::new(),
        }
    }

    pub fn from_dense(m: &DenseMatrix<T>) -> Self {
        let mut trip = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != T::zero() {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &trip).expect("in-range triplets")
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn indptr(&self) -> &[usize] {
        &self.indptr
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let r = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[r.clone()], &self.data[r])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => T::zero(),
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, T)> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            out.extend(cols.iter().zip(vals).map(|(&j, &v)| (i, j, v)));
        }
        out
    }

    /// `y = A x`
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = T::zero();
            for p in self.indptr[i]..self.indptr[i + 1] {
                acc += self.data[p] * x[self.indices[p]];
            }
            *yi = acc;
        }
    }

    /// `y = A^T x`
    pub fn matvec_transpose(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.nrows);
        debug_assert_eq!(y.len(), self.ncols);
        y.fill(T::zero());
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for p in self.indptr[i]..self.indptr[i + 1] {
                y[self.indices[p]] += self.data[p] * xi;
            }
        }
    }

    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.ncols + 1];
        for &j in &self.indices {
            counts[j + 1] += 1;
        }
        for j in 0..self.ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut indices = vec![0usize; self.nnz()];
        let mut data = vec![T::zero(); self.nnz()];
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[p];
                indices[next[j]] = i;
                data[next[j]] = self.data[p];
                next[j] += 1;
            }
        }
        Self {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr: counts,
            indices,
            data,
            symmetric: OnceLock::new(),
        }
    }

    /// `A A^T` as a sparse matrix.
    pub fn mul_self_transpose(&self) -> Self {
        let at = self.transpose();
        let mut marker = vec![usize::MAX; self.nrows];
        let mut acc = vec![T::zero(); self.nrows];
        let mut indptr = Vec::with_capacity(self.nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        let mut pattern = Vec::new();
        for i in 0..self.nrows {
            pattern.clear();
            for p in self.indptr[i]..self.indptr[i + 1] {
                let k = self.indices[p];
                let aik = self.data[p];
                for q in at.indptr[k]..at.indptr[k + 1] {
                    let j = at.indices[q];
                    if marker[j] != i {
                        marker[j] = i;
                        acc[j] = T::zero();
                        pattern.push(j);
                    }
                    acc[j] += aik * at.data[q];
                }
            }
            pattern.sort_unstable();
            for &j in &pattern {
                indices.push(j);
                data.push(acc[j]);
            }
            indptr.push(indices.len());
        }
        Self {
            nrows: self.nrows,
            ncols: self.nrows,
            indptr,
            indices,
            data,
            symmetric: OnceLock::new(),
        }
    }

    /// Copy with `extra_rows` zero rows and `extra_cols` zero columns appended.
    pub fn padded(&self, extra_rows: usize, extra_cols: usize) -> Self {
        let mut indptr = self.indptr.clone();
        let last = *indptr.last().unwrap();
        indptr.extend(std::iter::repeat_n(last, extra_rows));
        Self {
            nrows: self.nrows + extra_rows,
            ncols: self.ncols + extra_cols,
            indptr,
            indices: self.indices.clone(),
            data: self.data.clone(),
            symmetric: OnceLock::new(),
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= alpha;
        }
        out
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Dense submatrix `A[rows, cols]`.
    pub fn dense_submatrix(&self, rows: &[usize], cols: &[usize]) -> DenseMatrix<T> {
        let mut pos = vec![usize::MAX; self.ncols];
        for (k, &j) in cols.iter().enumerate() {
            pos[j] = k;
        }
        let mut out = DenseMatrix::zeros(rows.len(), cols.len());
        for (r, &i) in rows.iter().enumerate() {
            let (cs, vs) = self.row(i);
            for (&j, &v) in cs.iter().zip(vs) {
                if pos[j] != usize::MAX {
                    out[(r, pos[j])] = v;
                }
            }
        }
        out
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let rows: Vec<usize> = (0..self.nrows).collect();
        let cols: Vec<usize> = (0..self.ncols).collect();
        self.dense_submatrix(&rows, &cols)
    }

    /// Largest `|A_ij - A_ji|` (infinite when not square).
    pub fn max_asymmetry(&self) -> T {
        if self.nrows != self.ncols {
            return T::infinity();
        }
        let t = self.transpose();
        let mut worst = T::zero();
        for i in 0..self.nrows {
            let (ca, va) = self.row(i);
            let (cb, vb) = t.row(i);
            let (mut p, mut q) = (0, 0);
            while p < ca.len() || q < cb.len() {
                let (ja, jb) = (
                    ca.get(p).copied().unwrap_or(usize::MAX),
                    cb.get(q).copied().unwrap_or(usize::MAX),
                );
                let diff = if ja == jb {
                    p += 1;
                    q += 1;
                    va[p - 1] - vb[q - 1]
                } else if ja < jb {
                    p += 1;
                    va[p - 1]
                } else {
                    q += 1;
                    vb[q - 1]
                };
                worst = worst.max(diff.abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self) -> bool {
        *self.symmetric.get_or_init(|| {
            let scale = self.data.iter().fold(T::zero(), |a, v| a.max(v.abs()));
            self.max_asymmetry() <= T::lit(1e-12) * (T::one() + scale)
        })
    }

    /// Squared Euclidean norms of the rows.
    pub fn row_norms_sq(&self) -> Vec<T> {
        (0..self.nrows)
            .map(|i| self.row(i).1.iter().fold(T::zero(), |a, &v| a + v * v))
            .collect()
    }
}

impl<T: Real> LinearOperator<T> for CsrMatrix<T> {
    fn nrows(&self) -> usize {
        self.nrows
    }
    fn ncols(&self) -> usize {
        self.ncols
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        self.matvec(x, y)
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.matvec_transpose(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        self.is_symmetric()
    }
    fn as_csr(&self) -> Option<&CsrMatrix<T>> {
        Some(self)
    }
    fn stored_entries(&self) -> usize {
        self.nnz()
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        Some(CsrMatrix::diagonal(self))
    }
}
