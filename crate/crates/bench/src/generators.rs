//! Instance generators: convex QAP and quartic-binary relaxations, and a
//! random portfolio model. Quadratic terms are stated as `<v, Q v>` in the
//! source models; the solver minimizes `1/2 <v, Q v>`, so every generator
//! passes `2Q`.

use std::sync::Arc;

use dualpal::linops::{
    biq_operator, biq_shift, qap_operator, svec_index, svec_len, symmetric_eigen, LowRankPlusDiag,
    Scaled, ZeroPadded,
};
use dualpal::{BoxSet, CsrMatrix, DenseMatrix, GeneralQp, StandardQp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{BenchError, Result};

/// Optimal `(s, t)` of `max e^T s + e^T t  s.t.  s_i + t_j <= alpha_i beta_j`.
///
/// The LP is the dual of the assignment problem with costs `alpha_i beta_j`;
/// the Hungarian method returns optimal potentials, which are certified by
/// feasibility and complementary slackness on the optimal assignment before
/// being returned. The split is normalised so that `t_0 = 0`.
pub fn solve_st_lp(alpha: &[f64], beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = alpha.len();
    if beta.len() != d {
        return Err(BenchError::Invalid(format!(
            "alpha has {d} entries, beta {}",
            beta.len()
        )));
    }
    if alpha.windows(2).any(|w| w[0] < w[1]) || beta.windows(2).any(|w| w[0] > w[1]) {
        return Err(BenchError::Invalid(
            "alpha must be sorted descending and beta ascending".into(),
        ));
    }
    if d == 0 {
        return Ok((vec![], vec![]));
    }
    let cost = |i: usize, j: usize| alpha[i] * beta[j];
    let (mut s, mut t, assign) = hungarian(d, cost);

    let scale = 1.0 + alpha.iter().chain(beta).fold(0.0_f64, |m, v| m.max(v.abs())).powi(2);
    let tol = 1e-10 * scale;
    for i in 0..d {
        for j in 0..d {
            if s[i] + t[j] > cost(i, j) + tol {
                return Err(BenchError::Invalid(format!(
                    "assignment potentials infeasible at ({i}, {j})"
                )));
            }
        }
        if (s[i] + t[assign[i]] - cost(i, assign[i])).abs() > tol {
            return Err(BenchError::Invalid(format!(
                "complementary slackness fails at row {i}"
            )));
        }
    }
    let shift = t[0];
    s.iter_mut().for_each(|v| *v += shift);
    t.iter_mut().for_each(|v| *v -= shift);
    Ok((s, t))
}

/// Shortest augmenting path Hungarian method for a square min-cost
/// assignment. Returns row potentials, column potentials and the row to
/// column assignment.
fn hungarian(d: usize, cost: impl Fn(usize, usize) -> f64) -> (Vec<f64>, Vec<f64>, Vec<usize>) {
    // 1-based arrays with a sentinel column 0
    let mut u = vec![0.0; d + 1];
    let mut v = vec![0.0; d + 1];
    let mut row_of = vec![0usize; d + 1];
    let mut way = vec![0usize; d + 1];
    for i in 1..=d {
        row_of[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; d + 1];
        let mut used = vec![false; d + 1];
        loop {
            used[j0] = true;
            let i0 = row_of[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=d {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=d {
                if used[j] {
                    u[row_of[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if row_of[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            row_of[j0] = row_of[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0; d];
    for j in 1..=d {
        assign[row_of[j] - 1] = j - 1;
    }
    (u[1..].to_vec(), v[1..].to_vec(), assign)
}

fn check_square_symmetric(m: &DenseMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(BenchError::Invalid(format!("{what} is not square")));
    }
    let asym = m.max_asymmetry();
    if asym > 1e-12 * (1.0 + m.max_abs()) {
        return Err(dualpal::Error::Asymmetric(asym).into());
    }
    Ok(())
}

/// `V diag(w) V^T`.
fn from_eigen(v: &DenseMatrix<f64>, w: &[f64]) -> DenseMatrix<f64> {
    let d = w.len();
    DenseMatrix::from_fn(d, d, |i, j| (0..d).map(|k| v[(i, k)] * w[k] * v[(j, k)]).sum())
}

fn frobenius_normalized(m: &DenseMatrix<f64>) -> DenseMatrix<f64> {
    let norm = m.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = if norm > 0.0 { 1.0 / norm } else { 1.0 };
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| s * m[(i, j)])
}

/// Convex QAP relaxation on `vec(X)` (column-major, `n = d^2`) with doubly
/// stochastic constraints and `X >= 0`. `Q = B (x) A - I (x) S - T (x) I` is
/// kept matrix-free. With `normalize`, `A` and `B` are first divided by their
/// Frobenius norms, so that `|<X, A X B>| <= 1` for every permutation `X`.
pub fn gen_qap_relaxation(
    a: &DenseMatrix<f64>,
    b: &DenseMatrix<f64>,
    normalize: bool,
) -> Result<StandardQp<f64>> {
    check_square_symmetric(a, "A")?;
    check_square_symmetric(b, "B")?;
    let (a, b) = if normalize {
        (&frobenius_normalized(a), &frobenius_normalized(b))
    } else {
        (a, b)
    };
    let d = a.nrows();
    if b.nrows() != d {
        return Err(BenchError::Invalid(format!(
            "A is {d} x {d} but B is {0} x {0}",
            b.nrows()
        )));
    }
    let (mut alpha, va) = symmetric_eigen(a);
    alpha.reverse();
    let va = DenseMatrix::from_fn(d, d, |i, k| va[(i, d - 1 - k)]);
    let (beta, vb) = symmetric_eigen(b);
    let (s, t) = solve_st_lp(&alpha, &beta)?;
    let s_mat = from_eigen(&va, &s);
    let t_mat = from_eigen(&vb, &t);

    let twice = |m: &DenseMatrix<f64>| DenseMatrix::from_fn(d, d, |i, j| 2.0 * m[(i, j)]);
    let q = qap_operator(twice(a), b.clone(), twice(&s_mat), twice(&t_mat))?;

    let n = d * d;
    let mut trip = Vec::with_capacity(2 * n);
    for j in 0..d {
        for i in 0..d {
            let col = i + j * d;
            trip.push((i, col, 1.0)); // row sums
            trip.push((d + j, col, 1.0)); // column sums
        }
    }
    let a_mat = CsrMatrix::from_triplets(2 * d, n, &trip)?;
    Ok(StandardQp::new(
        Arc::new(q),
        a_mat,
        vec![1.0; 2 * d],
        vec![0.0; n],
        BoxSet::nonnegative(n),
    )?)
}

/// Default cardinality level `beta = d / 5`.
pub fn default_biq_beta(d: usize) -> f64 {
    d as f64 / 5.0
}

/// Relaxation of `min <x,Qx>^2` over binary `x` with `|x|_0 >= beta`.
///
/// Variables are `(svec(X); x)`. Equalities `diag(X) = x`; inequalities, all
/// written as `<=` rows: the cardinality row first, then for each pair
/// `i < j` (row-major over the upper triangle) the three rows
/// `X_ij <= x_j`, `X_ij <= x_i`, `x_i + x_j - X_ij <= 1`.
pub fn gen_biq_relaxation(q: &DenseMatrix<f64>, beta: f64) -> Result<GeneralQp<f64>> {
    check_square_symmetric(q, "Q")?;
    let d = q.nrows();
    let (eig, _) = symmetric_eigen(q);
    let lambda0 = if d == 0 {
        0.0
    } else {
        biq_shift(eig[0], eig[d - 1])
    };
    let ns = svec_len(d);
    let n = ns + d;
    let tilde = Arc::new(biq_operator(q.clone(), lambda0)?);
    let quad = Arc::new(ZeroPadded::new(
        Arc::new(Scaled {
            alpha: 2.0,
            inner: tilde,
        }),
        d,
    ));
    let mut c = vec![0.0; n];
    c[ns..].iter_mut().for_each(|v| *v = lambda0);

    let eq: Vec<_> = (0..d)
        .flat_map(|i| [(i, svec_index(i, i), 1.0), (i, ns + i, -1.0)])
        .collect();
    let a_eq = CsrMatrix::from_triplets(d, n, &eq)?;

    let r = std::f64::consts::FRAC_1_SQRT_2;
    let mut ineq: Vec<(usize, usize, f64)> = (0..d).map(|i| (0, ns + i, -1.0)).collect();
    let mut b_in = vec![-beta];
    let mut row = 1;
    for i in 0..d {
        for j in (i + 1)..d {
            let k = svec_index(i, j);
            ineq.extend([(row, k, r), (row, ns + j, -1.0)]);
            ineq.extend([(row + 1, k, r), (row + 1, ns + i, -1.0)]);
            ineq.extend([(row + 2, k, -r), (row + 2, ns + i, 1.0), (row + 2, ns + j, 1.0)]);
            b_in.extend([0.0, 0.0, 1.0]);
            row += 3;
        }
    }
    let a_in = CsrMatrix::from_triplets(row, n, &ineq)?;
    let gp = GeneralQp {
        q: quad,
        c,
        a_eq,
        b_eq: vec![0.0; d],
        a_in,
        b_in,
        bounds: BoxSet::nonnegative(n),
        offset: 0.0,
    };
    gp.validate()?;
    Ok(gp)
}

/// Random portfolio model `min gamma <x, Sigma x> - <mu, x>` over the simplex
/// with `n = 1000 k` assets and `f = 10 k` factors.
///
/// `F` is `n x f` with independent entries that are nonzero with probability
/// 0.1 and then standard normal; `Sigma` is the sample covariance of the
/// columns of `F` plus `diag(sqrt(f) u)`, `u` uniform on `[0, 1)`; `mu` is
/// standard normal. `Sigma` is applied as low rank plus diagonal and never
/// formed. The generator is ChaCha8 seeded with `seed`; stream 0 draws `F`,
/// stream 1 the diagonal and stream 2 `mu`.
pub fn gen_portfolio(k: usize, seed: u64, gamma: f64) -> Result<StandardQp<f64>> {
    if k == 0 {
        return Err(BenchError::Invalid("portfolio scale k must be at least 1".into()));
    }
    if !(gamma > 0.0) {
        return Err(BenchError::Invalid(format!("gamma = {gamma} must be positive")));
    }
    let (n, f) = (1000 * k, 10 * k);
    let stream = |s: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s);
        rng
    };
    let mut rng = stream(0);
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..f {
            if rng.gen::<f64>() < 0.1 {
                trip.push((i, j, rng.sample::<f64, _>(StandardNormal)));
            }
        }
    }
    let factor = CsrMatrix::from_triplets(n, f, &trip)?;
    let mut rng = stream(1);
    let sqrt_f = (f as f64).sqrt();
    let diag: Vec<f64> = (0..n).map(|_| 2.0 * gamma * sqrt_f * rng.gen::<f64>()).collect();
    let mut rng = stream(2);
    let c: Vec<f64> = (0..n).map(|_| -rng.sample::<f64, _>(StandardNormal)).collect();

    let sigma = LowRankPlusDiag::sample_covariance(factor, 2.0 * gamma, diag)?;
    let a = CsrMatrix::from_triplets(1, n, &(0..n).map(|j| (0, j, 1.0)).collect::<Vec<_>>())?;
    Ok(StandardQp::new(
        Arc::new(sigma),
        a,
        vec![1.0],
        c,
        BoxSet::nonnegative(n),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hungarian_picks_cheapest_pairing() {
        let c = [[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]];
        let (u, v, assign) = hungarian(3, |i, j| c[i][j]);
        let total: f64 = (0..3).map(|i| c[i][assign[i]]).sum();
        assert_eq!(total, 5.0);
        assert_eq!(u.iter().sum::<f64>() + v.iter().sum::<f64>(), 5.0);
    }

    #[test]
    fn st_lp_rejects_unsorted() {
        assert!(solve_st_lp(&[1.0, 2.0], &[0.0, 1.0]).is_err());
        assert!(solve_st_lp(&[2.0, 1.0], &[1.0, 0.0]).is_err());
    }
}
