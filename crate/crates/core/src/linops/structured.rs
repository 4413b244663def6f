//! Matrix-free operators with Kronecker or low-rank structure.

use super::{CsrMatrix, DenseMatrix, LinearOperator};
use crate::error::{Error, Result};
use crate::Real;

fn check_symmetric<T: Real>(m: &DenseMatrix<T>) -> Result<()> {
    let asym = m.max_asymmetry();
    if asym > T::lit(1e-12) * (T::one() + m.max_abs()) {
        return Err(Error::Asymmetric(asym.as_f64()));
    }
    Ok(())
}

/// `vec(X) -> vec(A X B - S X - X T)` for `d x d` symmetric data, i.e. the
/// operator `B (x) A - I (x) S - T (x) I` on `R^{d^2}` with column-major `vec`.
#[derive(Debug, Clone)]
pub struct QapOperator<T: Real> {
    a: DenseMatrix<T>,
    b: DenseMatrix<T>,
    s: DenseMatrix<T>,
    t: DenseMatrix<T>,
}

pub fn qap_operator<T: Real>(
    a: DenseMatrix<T>,
    b: DenseMatrix<T>,
    s: DenseMatrix<T>,
    t: DenseMatrix<T>,
) -> Result<QapOperator<T>> {
    let d = a.nrows();
    for m in [&a, &b, &s, &t] {
        if m.nrows() != d || m.ncols() != d {
            return Err(Error::DimensionMismatch {
                context: "qap_operator data",
                expected: d,
                got: m.nrows().max(m.ncols()),
            });
        }
        check_symmetric(m)?;
    }
    Ok(QapOperator { a, b, s, t })
}

impl<T: Real> QapOperator<T> {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }
}

/// Column-major `vec` reshaped into a row-major dense matrix.
fn unvec<T: Real>(x: &[T], d: usize) -> DenseMatrix<T> {
    DenseMatrix::from_fn(d, d, |i, j| x[i + j * d])
}

impl<T: Real> LinearOperator<T> for QapOperator<T> {
    fn nrows(&self) -> usize {
        self.order() * self.order()
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let d = self.order();
        let xm = unvec(x, d);
        let axb = self.a.matmul(&xm).matmul(&self.b);
        let sx = self.s.matmul(&xm);
        let xt = xm.matmul(&self.t);
        for j in 0..d {
            for i in 0..d {
                y[i + j * d] = axb[(i, j)] - sx[(i, j)] - xt[(i, j)];
            }
        }
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.apply(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    /// `A_ii B_jj - S_ii - T_jj` at position `i + j d`.
    fn diagonal(&self) -> Option<Vec<T>> {
        let d = self.order();
        let mut out = vec![T::zero(); d * d];
        for j in 0..d {
            for i in 0..d {
                out[i + j * d] = self.a[(i, i)] * self.b[(j, j)] - self.s[(i, i)] - self.t[(j, j)];
            }
        }
        Some(out)
    }
    fn stored_entries(&self) -> usize {
        4 * self.order() * self.order()
    }
}

pub fn svec_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Position of `X[i][j]` (`i <= j`) in `svec(X)`.
#[inline]
pub fn svec_index(i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    j * (j + 1) / 2 + i
}

/// Column-stacked upper triangle with off-diagonal entries scaled by `sqrt 2`.
pub fn svec<T: Real>(x: &DenseMatrix<T>) -> Result<Vec<T>> {
    let d = x.nrows();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            context: "svec",
            expected: d,
            got: x.ncols(),
        });
    }
    check_symmetric(x)?;
    let r2 = T::lit(std::f64::consts::SQRT_2);
    let mut out = Vec::with_capacity(svec_len(d));
    for j in 0..d {
        for i in 0..=j {
            out.push(if i == j { x[(i, j)] } else { r2 * x[(i, j)] });
        }
    }
    Ok(out)
}

/// Inverse of [`svec`].
pub fn smat<T: Real>(s: &[T], d: usize) -> DenseMatrix<T> {
    assert_eq!(s.len(), svec_len(d), "smat length");
    let ir2 = T::one() / T::lit(std::f64::consts::SQRT_2);
    let mut x = DenseMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..=j {
            let v = s[svec_index(i, j)];
            if i == j {
                x[(i, i)] = v;
            } else {
                x[(i, j)] = v * ir2;
                x[(j, i)] = v * ir2;
            }
        }
    }
    x
}

/// `min(0, lambda_min(Q (x) Q))` from the extreme eigenvalues of `Q`.
pub fn biq_shift<T: Real>(lambda_min: T, lambda_max: T) -> T {
    let kron_min = if lambda_min >= T::zero() {
        lambda_min * lambda_min
    } else if lambda_max <= T::zero() {
        lambda_max * lambda_max
    } else {
        lambda_min * lambda_max
    };
    kron_min.min(T::zero())
}

/// `s -> svec(Q smat(s) Q) - lambda0 s` on `R^{d(d+1)/2}`.
#[derive(Debug, Clone)]
pub struct BiqOperator<T: Real> {
    q: DenseMatrix<T>,
    lambda0: T,
}

pub fn biq_operator<T: Real>(q: DenseMatrix<T>, lambda0: T) -> Result<BiqOperator<T>> {
    if q.nrows() != q.ncols() {
        return Err(Error::DimensionMismatch {
            context: "biq_operator",
            expected: q.nrows(),
            got: q.ncols(),
        });
    }
    check_symmetric(&q)?;
    Ok(BiqOperator { q, lambda0 })
}

impl<T: Real> BiqOperator<T> {
    pub fn order(&self) -> usize {
        self.q.nrows()
    }

    pub fn lambda0(&self) -> T {
        self.lambda0
    }
}

impl<T: Real> LinearOperator<T> for BiqOperator<T> {
    fn nrows(&self) -> usize {
        svec_len(self.order())
    }
    fn ncols(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let d = self.order();
        let xm = smat(x, d);
        let qxq = self.q.matmul(&xm).matmul(&self.q);
        let r2 = T::lit(std::f64::consts::SQRT_2);
        for j in 0..d {
            for i in 0..=j {
                let k = svec_index(i, j);
                // symmetrize to cancel round-off between the two triangles
                let v = if i == j {
                    qxq[(i, i)]
                } else {
                    r2 * (qxq[(i, j)] + qxq[(j, i)]) / T::lit(2.0)
                };
                y[k] = v - self.lambda0 * x[k];
            }
        }
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.apply(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    /// `Q_ii Q_jj + Q_ij^2 - lambda0` off the diagonal, `Q_ii^2 - lambda0` on it.
    fn diagonal(&self) -> Option<Vec<T>> {
        let d = self.order();
        let mut out = vec![T::zero(); svec_len(d)];
        for j in 0..d {
            for i in 0..=j {
                let v = if i == j {
                    self.q[(i, i)] * self.q[(i, i)]
                } else {
                    self.q[(i, i)] * self.q[(j, j)] + self.q[(i, j)] * self.q[(i, j)]
                };
                out[svec_index(i, j)] = v - self.lambda0;
            }
        }
        Some(out)
    }
    fn stored_entries(&self) -> usize {
        self.order() * self.order()
    }
}

/// `x -> scale * Fc Fc^T x + diag .* x` with `Fc = F - mean 1^T`, i.e. a
/// sample covariance plus a diagonal, applied without forming it.
#[derive(Debug, Clone)]
pub struct LowRankPlusDiag<T: Real> {
    factor: CsrMatrix<T>,
    factor_t: CsrMatrix<T>,
    mean: Vec<T>,
    scale: T,
    diag: Vec<T>,
}

impl<T: Real> LowRankPlusDiag<T> {
    /// `factor` is `n x f`; `mean` is its row mean (length `n`).
    pub fn new(factor: CsrMatrix<T>, mean: Vec<T>, scale: T, diag: Vec<T>) -> Result<Self> {
        let n = factor.nrows();
        crate::error::check_dim("low-rank mean", n, mean.len())?;
        crate::error::check_dim("low-rank diagonal", n, diag.len())?;
        let factor_t = factor.transpose();
        Ok(Self {
            factor,
            factor_t,
            mean,
            scale,
            diag,
        })
    }

    /// Covariance of the columns of `factor` treated as observations, scaled,
    /// plus a diagonal.
    pub fn sample_covariance(factor: CsrMatrix<T>, scale: T, diag: Vec<T>) -> Result<Self> {
        let f = factor.ncols();
        let mut mean = vec![T::zero(); factor.nrows()];
        for (i, m) in mean.iter_mut().enumerate() {
            *m = factor.row(i).1.iter().copied().sum::<T>() / T::from_usize_lossy(f.max(1));
        }
        let denom = T::from_usize_lossy(f.saturating_sub(1).max(1));
        Self::new(factor, mean, scale / denom, diag)
    }

    pub fn rank(&self) -> usize {
        self.factor.ncols()
    }
}

impl<T: Real> LinearOperator<T> for LowRankPlusDiag<T> {
    fn nrows(&self) -> usize {
        self.factor.nrows()
    }
    fn ncols(&self) -> usize {
        self.factor.nrows()
    }
    fn apply(&self, x: &[T], y: &mut [T]) {
        let f = self.factor.ncols();
        let mut t = vec![T::zero(); f];
        self.factor_t.matvec(x, &mut t);
        let mx = crate::vecops::dot(&self.mean, x);
        for ti in t.iter_mut() {
            *ti -= mx;
        }
        let et: T = t.iter().copied().sum();
        self.factor.matvec(&t, y);
        for i in 0..y.len() {
            y[i] = self.scale * (y[i] - self.mean[i] * et) + self.diag[i] * x[i];
        }
    }
    fn apply_adjoint(&self, x: &[T], y: &mut [T]) {
        self.apply(x, y)
    }
    fn is_self_adjoint(&self) -> bool {
        true
    }
    fn diagonal(&self) -> Option<Vec<T>> {
        let f = T::from_usize_lossy(self.factor.ncols());
        Some(
            (0..self.diag.len())
                .map(|i| {
                    let vals = self.factor.row(i).1;
                    let sq: T = vals.iter().map(|v| *v * *v).sum();
                    let sum: T = vals.iter().copied().sum();
                    let mu = self.mean[i];
                    self.scale * (sq - T::lit(2.0) * mu * sum + f * mu * mu) + self.diag[i]
                })
                .collect(),
        )
    }
    fn stored_entries(&self) -> usize {
        2 * self.factor.nnz() + self.mean.len() + self.diag.len()
    }
}
