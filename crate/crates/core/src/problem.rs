//! Problem data: the standard form `min 1/2<x,Qx> + <c,x>, Ax = b, x in [l,u]`,
//! the general form with inequalities, and the iterate shared by both phases.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::linops::{min_rayleigh_quotient, CsrMatrix, LinearOperator, SharedOperator, ZeroPadded};
use crate::vecops::{dot, norm2};
use crate::Real;

/// Componentwise box `[lower, upper]`; infinite bounds are IEEE infinities.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSet<T: Real> {
    lower: Vec<T>,
    upper: Vec<T>,
}

impl<T: Real> BoxSet<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        for i in 0..lower.len() {
            let (l, u) = (lower[i], upper[i]);
            if l.is_nan() || u.is_nan() || l > u || l == T::infinity() || u == T::neg_infinity() {
                return Err(Error::InvalidBounds(i));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn free(n: usize) -> Self {
        Self::uniform(n, T::neg_infinity(), T::infinity())
    }

    pub fn nonnegative(n: usize) -> Self {
        Self::uniform(n, T::zero(), T::infinity())
    }

    pub fn uniform(n: usize, lower: T, upper: T) -> Self {
        Self {
            lower: vec![lower; n],
            upper: vec![upper; n],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[T] {
        &self.lower
    }

    pub fn upper(&self) -> &[T] {
        &self.upper
    }

    /// `self x other`.
    pub fn product(&self, other: &Self) -> Self {
        let mut lower = self.lower.clone();
        let mut upper = self.upper.clone();
        lower.extend_from_slice(&other.lower);
        upper.extend_from_slice(&other.upper);
        Self { lower, upper }
    }

    #[inline]
    pub fn clamp(&self, i: usize, v: T) -> T {
        v.max(self.lower[i]).min(self.upper[i])
    }

    pub fn project(&self, v: &[T]) -> Vec<T> {
        v.iter().enumerate().map(|(i, &vi)| self.clamp(i, vi)).collect()
    }

    pub fn project_into(&self, v: &[T], out: &mut [T]) {
        for (i, (o, &vi)) in out.iter_mut().zip(v).enumerate() {
            *o = self.clamp(i, vi);
        }
    }

    /// `lower[i] < v < upper[i]`.
    #[inline]
    pub fn strictly_inside(&self, i: usize, v: T) -> bool {
        self.lower[i] < v && v < self.upper[i]
    }

    pub fn contains(&self, x: &[T], tol: T) -> bool {
        x.iter()
            .enumerate()
            .all(|(i, &v)| v >= self.lower[i] - tol && v <= self.upper[i] + tol)
    }

    /// `sup { <y, x> : x in box }`, with `0 * inf = 0`.
    pub fn support(&self, y: &[T]) -> T {
        let mut total = T::zero();
        for (i, &yi) in y.iter().enumerate() {
            let term = if yi > T::zero() {
                yi * self.upper[i]
            } else if yi < T::zero() {
                yi * self.lower[i]
            } else {
                T::zero()
            };
            total += term;
            if total == T::infinity() {
                return total;
            }
        }
        total
    }
}

pub fn project_box<T: Real>(v: &[T], bounds: &BoxSet<T>) -> Result<Vec<T>> {
    check_dim("project_box", bounds.len(), v.len())?;
    Ok(bounds.project(v))
}

pub fn support_function_box<T: Real>(y: &[T], bounds: &BoxSet<T>) -> Result<T> {
    check_dim("support_function_box", bounds.len(), y.len())?;
    Ok(bounds.support(y))
}

/// `min 1/2<x,Qx> + <c,x> + offset  s.t.  Ax = b, x in bounds`.
#[derive(Clone)]
pub struct StandardQp<T: Real> {
    q: SharedOperator<T>,
    a: CsrMatrix<T>,
    b: Vec<T>,
    c: Vec<T>,
    bounds: BoxSet<T>,
    offset: T,
}

impl<T: Real> std::fmt::Debug for StandardQp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StandardQp")
            .field("m", &self.m())
            .field("n", &self.n())
            .field("a_nnz", &self.a.nnz())
            .finish_non_exhaustive()
    }
}

const PSD_PROBES: usize = 8;

impl<T: Real> StandardQp<T> {
    /// Validates dimensions, self-adjointness, and PSD-ness of `q` on a few
    /// random probes.
    pub fn new(
        q: SharedOperator<T>,
        a: CsrMatrix<T>,
        b: Vec<T>,
        c: Vec<T>,
        bounds: BoxSet<T>,
    ) -> Result<Self> {
        let n = c.len();
        check_dim("Q rows", n, q.nrows())?;
        check_dim("Q cols", n, q.ncols())?;
        check_dim("A cols", n, a.ncols())?;
        check_dim("b", a.nrows(), b.len())?;
        check_dim("bounds", n, bounds.len())?;
        if !q.is_self_adjoint() {
            return Err(Error::Asymmetric(f64::NAN));
        }
        check_psd(q.as_ref())?;
        Ok(Self {
            q,
            a,
            b,
            c,
            bounds,
            offset: T::zero(),
        })
    }

    pub fn with_offset(mut self, offset: T) -> Self {
        self.offset = offset;
        self
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn q(&self) -> &SharedOperator<T> {
        &self.q
    }

    pub fn a(&self) -> &CsrMatrix<T> {
        &self.a
    }

    pub fn b(&self) -> &[T] {
        &self.b
    }

    pub fn c(&self) -> &[T] {
        &self.c
    }

    pub fn bounds(&self) -> &BoxSet<T> {
        &self.bounds
    }

    pub fn offset(&self) -> T {
        self.offset
    }

    /// Replaces `Q`, e.g. with an instrumented wrapper. Dimensions must match.
    pub fn with_q(mut self, q: SharedOperator<T>) -> Result<Self> {
        check_dim("Q rows", self.n(), q.nrows())?;
        self.q = q;
        Ok(self)
    }
}

fn check_psd<T: Real>(q: &dyn LinearOperator<T>) -> Result<()> {
    let n = q.ncols();
    if n == 0 {
        return Ok(());
    }
    let min_rq = min_rayleigh_quotient(q, PSD_PROBES, 0x0b5e_55ed);
    // scale reference: |Qx|/|x| on a probe, a lower bound of |Q|_2
    let probe: Vec<T> = (0..n).map(|i| T::one() + T::lit(((i * 7919) % 13) as f64 / 13.0)).collect();
    let scale = norm2(&q.mul(&probe)) / norm2(&probe);
    if min_rq < -T::lit(1e-10) * scale.max(T::one()) {
        return Err(Error::NotPsd(min_rq.as_f64()));
    }
    Ok(())
}

/// `min 1/2<x,Qx> + <c,x> + offset  s.t.  A_E x = b_E, A_I x <= b_I, x in bounds`.
#[derive(Clone)]
pub struct GeneralQp<T: Real> {
    pub q: SharedOperator<T>,
    pub c: Vec<T>,
    pub a_eq: CsrMatrix<T>,
    pub b_eq: Vec<T>,
    pub a_in: CsrMatrix<T>,
    pub b_in: Vec<T>,
    pub bounds: BoxSet<T>,
    pub offset: T,
}

impl<T: Real> std::fmt::Debug for GeneralQp<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GeneralQp")
            .field("m_eq", &self.m_eq())
            .field("m_in", &self.m_in())
            .field("n", &self.n())
            .finish_non_exhaustive()
    }
}

impl<T: Real> GeneralQp<T> {
    pub fn n(&self) -> usize {
        self.c.len()
    }

    pub fn m_eq(&self) -> usize {
        self.a_eq.nrows()
    }

    pub fn m_in(&self) -> usize {
        self.a_in.nrows()
    }

    /// `(m_E, m_I, n)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.m_eq(), self.m_in(), self.n())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        check_dim("Q rows", n, self.q.nrows())?;
        check_dim("Q cols", n, self.q.ncols())?;
        check_dim("A_E cols", n, self.a_eq.ncols())?;
        check_dim("A_I cols", n, self.a_in.ncols())?;
        check_dim("b_E", self.a_eq.nrows(), self.b_eq.len())?;
        check_dim("b_I", self.a_in.nrows(), self.b_in.len())?;
        check_dim("bounds", n, self.bounds.len())
    }
}

/// Where the original variables and the slacks live in a standard-form vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IndexMap {
    pub n_orig: usize,
    pub m_eq: usize,
    pub m_in: usize,
}

impl IndexMap {
    pub fn original<'a, T>(&self, x: &'a [T]) -> &'a [T] {
        &x[..self.n_orig]
    }

    pub fn slack<'a, T>(&self, x: &'a [T]) -> &'a [T] {
        &x[self.n_orig..]
    }

    /// `(x', b_I - A_I x')`.
    pub fn lift<T: Real>(&self, gp: &GeneralQp<T>, x_orig: &[T]) -> Vec<T> {
        let mut out = x_orig.to_vec();
        let ax = gp.a_in.mul(x_orig);
        out.extend(gp.b_in.iter().zip(&ax).map(|(b, a)| *b - *a));
        out
    }
}

/// Appends one nonnegative slack per inequality, after the original
/// variables: `A = [A_E 0; A_I I]`, `Q = Diag(Q', 0)`.
pub fn to_standard_form<T: Real>(gp: &GeneralQp<T>) -> Result<(StandardQp<T>, IndexMap)> {
    gp.validate()?;
    let (n, m_eq, m_in) = (gp.n(), gp.m_eq(), gp.m_in());
    let map = IndexMap {
        n_orig: n,
        m_eq,
        m_in,
    };
    let mut trip = gp.a_eq.triplets();
    trip.extend(gp.a_in.triplets().into_iter().map(|(i, j, v)| (i + m_eq, j, v)));
    trip.extend((0..m_in).map(|k| (m_eq + k, n + k, T::one())));
    let a = CsrMatrix::from_triplets(m_eq + m_in, n + m_in, &trip)?;
    let mut b = gp.b_eq.clone();
    b.extend_from_slice(&gp.b_in);
    let mut c = gp.c.clone();
    c.resize(n + m_in, T::zero());
    let q: SharedOperator<T> = if m_in == 0 {
        gp.q.clone()
    } else {
        Arc::new(ZeroPadded::new(gp.q.clone(), m_in))
    };
    let bounds = gp.bounds.product(&BoxSet::nonnegative(m_in));
    let qp = StandardQp::new(q, a, b, c, bounds)?.with_offset(gp.offset);
    Ok((qp, map))
}

/// `w` in `Range(Q)` carried as `(w_hat, Q w_hat)`; `w` itself is never formed.
#[derive(Debug, Clone, PartialEq)]
pub struct WRepresentation<T: Real> {
    pub w_hat: Vec<T>,
    pub qw: Vec<T>,
}

impl<T: Real> WRepresentation<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            w_hat: vec![T::zero(); n],
            qw: vec![T::zero(); n],
        }
    }

    pub fn from_w_hat(w_hat: Vec<T>, q: &dyn LinearOperator<T>) -> Self {
        let qw = q.mul(&w_hat);
        Self { w_hat, qw }
    }

    /// `<w, Qw> = <w_hat, Q w_hat>`.
    pub fn quad(&self) -> T {
        dot(&self.w_hat, &self.qw)
    }

    /// `|Q w_hat - qw|`, the cache drift.
    pub fn drift(&self, q: &dyn LinearOperator<T>) -> T {
        let fresh = q.mul(&self.w_hat);
        crate::vecops::dist2(&fresh, &self.qw)
    }
}

/// Primal-dual point `(x, z, w, y)` with cached `Ax` and `A^T y`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateState<T: Real> {
    pub x: Vec<T>,
    pub z: Vec<T>,
    pub w: WRepresentation<T>,
    pub y: Vec<T>,
    ax: Vec<T>,
    aty: Vec<T>,
    pub iter_phase1: usize,
    pub iter_phase2: usize,
}

impl<T: Real> IterateState<T> {
    pub fn zeros(qp: &StandardQp<T>) -> Self {
        let (m, n) = (qp.m(), qp.n());
        Self {
            x: vec![T::zero(); n],
            z: vec![T::zero(); n],
            w: WRepresentation::zeros(n),
            y: vec![T::zero(); m],
            ax: vec![T::zero(); m],
            aty: vec![T::zero(); n],
            iter_phase1: 0,
            iter_phase2: 0,
        }
    }

    pub fn new(
        qp: &StandardQp<T>,
        x: Vec<T>,
        z: Vec<T>,
        w: WRepresentation<T>,
        y: Vec<T>,
    ) -> Result<Self> {
        let (m, n) = (qp.m(), qp.n());
        check_dim("x", n, x.len())?;
        check_dim("z", n, z.len())?;
        check_dim("w_hat", n, w.w_hat.len())?;
        check_dim("Qw", n, w.qw.len())?;
        check_dim("y", m, y.len())?;
        let ax = qp.a().mul(&x);
        let aty = qp.a().mul_adjoint(&y);
        Ok(Self {
            x,
            z,
            w,
            y,
            ax,
            aty,
            iter_phase1: 0,
            iter_phase2: 0,
        })
    }

    pub fn ax(&self) -> &[T] {
        &self.ax
    }

    pub fn aty(&self) -> &[T] {
        &self.aty
    }

    pub fn set_x(&mut self, qp: &StandardQp<T>, x: Vec<T>) {
        qp.a().matvec(&x, &mut self.ax);
        self.x = x;
    }

    pub fn set_y(&mut self, qp: &StandardQp<T>, y: Vec<T>) {
        qp.a().matvec_transpose(&y, &mut self.aty);
        self.y = y;
    }

    /// Sets `y` together with a precomputed `A^T y`.
    pub fn set_y_with_aty(&mut self, y: Vec<T>, aty: Vec<T>) {
        self.y = y;
        self.aty = aty;
    }

    /// Largest relative drift of the `Ax`/`A^T y` caches.
    pub fn cache_error(&self, qp: &StandardQp<T>) -> T {
        let ax = qp.a().mul(&self.x);
        let aty = qp.a().mul_adjoint(&self.y);
        let e1 = crate::vecops::dist2(&ax, &self.ax) / (T::one() + norm2(&ax));
        let e2 = crate::vecops::dist2(&aty, &self.aty) / (T::one() + norm2(&aty));
        e1.max(e2)
    }
}

/// `1/2<x,Qx> + <c,x> + offset`.
pub fn objective_primal<T: Real>(x: &[T], qp: &StandardQp<T>) -> T {
    let qx = qp.q().mul(x);
    objective_primal_with_qx(x, &qx, qp)
}

pub(crate) fn objective_primal_with_qx<T: Real>(x: &[T], qx: &[T], qp: &StandardQp<T>) -> T {
    T::lit(0.5) * dot(x, qx) + dot(qp.c(), x) + qp.offset()
}

/// `-delta_C^*(-z) - 1/2<w,Qw> + <b,y> + offset`; `-inf` when `-z` is outside
/// the barrier cone of the box.
pub fn objective_dual<T: Real>(z: &[T], w: &WRepresentation<T>, y: &[T], qp: &StandardQp<T>) -> T {
    let neg_z: Vec<T> = z.iter().map(|&v| -v).collect();
    let s = qp.bounds().support(&neg_z);
    if s == T::infinity() {
        return T::neg_infinity();
    }
    -s - T::lit(0.5) * w.quad() + dot(qp.b(), y) + qp.offset()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linops::ZeroOperator;

    #[test]
    fn projection_examples() {
        let unit = BoxSet::uniform(3, 0.0, 1.0);
        assert_eq!(unit.project(&[-1.0, 0.5, 2.0]), vec![0.0, 0.5, 1.0]);
        let free = BoxSet::<f64>::free(2);
        assert_eq!(free.project(&[-7.0, 3.0]), vec![-7.0, 3.0]);
        let upper = BoxSet::new(vec![f64::NEG_INFINITY], vec![2.0]).unwrap();
        assert_eq!(upper.project(&[3.0]), vec![2.0]);
    }

    #[test]
    fn support_examples() {
        let cone = BoxSet::<f64>::nonnegative(3);
        assert_eq!(cone.support(&[-1.0, 0.0, -2.0]), 0.0);
        assert_eq!(cone.support(&[-1.0, 1e-9, -2.0]), f64::INFINITY);
        let unit = BoxSet::uniform(3, -1.0, 1.0);
        assert_eq!(unit.support(&[1.5, -2.0, 0.25]), 3.75);
        let b = BoxSet::new(vec![0.0, -1.0], vec![2.0, 0.0]).unwrap();
        assert_eq!(b.support(&[3.0, -4.0]), 10.0);
    }

    #[test]
    fn bounds_are_validated() {
        assert_eq!(BoxSet::new(vec![1.0], vec![0.0]), Err(Error::InvalidBounds(0)));
        assert!(BoxSet::new(vec![f64::INFINITY], vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn slack_assembly() {
        let gp = GeneralQp {
            q: Arc::new(ZeroOperator { n: 2 }),
            c: vec![1.0, 1.0],
            a_eq: CsrMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]).unwrap(),
            b_eq: vec![1.0],
            a_in: CsrMatrix::from_triplets(1, 2, &[(0, 0, 1.0), (0, 1, 1.0)]).unwrap(),
            b_in: vec![3.0],
            bounds: BoxSet::free(2),
            offset: 0.0,
        };
        let (qp, map) = to_standard_form(&gp).unwrap();
        assert_eq!((qp.m(), qp.n()), (2, 3));
        assert_eq!(qp.a().row(1).1, &[1.0, 1.0, 1.0]);
        assert_eq!(qp.b()[1], 3.0);
        assert_eq!((qp.bounds().lower()[2], qp.bounds().upper()[2]), (0.0, f64::INFINITY));
        assert_eq!(map.lift(&gp, &[1.0, 0.5]), vec![1.0, 0.5, 1.5]);
    }

    #[test]
    fn objectives_at_zero() {
        let qp = StandardQp::new(
            Arc::new(ZeroOperator { n: 2 }),
            CsrMatrix::identity(2),
            vec![1.0, 1.0],
            vec![1.0, -1.0],
            BoxSet::nonnegative(2),
        )
        .unwrap();
        assert_eq!(objective_primal(&[0.0, 0.0], &qp), 0.0);
        let w = WRepresentation::zeros(2);
        assert_eq!(objective_dual(&[-1.0, 0.0], &w, &[0.0, 0.0], &qp), f64::NEG_INFINITY);
        assert_eq!(objective_dual(&[1.0, 0.0], &w, &[2.0, 0.0], &qp), 2.0);
    }
}
