//! Structured operators, sparse Cholesky and Krylov solvers against dense
//! nalgebra computations.

use dualpal::linops::{
    adjoint_mismatch, biq_operator, biq_shift, estimate_lambda_plus, estimate_spectral_norm, qap_operator,
    smat, svec, svec_index, svec_len, SpectralConfig,
};
use dualpal::linsolve::{
    bicgstab_solve, chol_factor, minres_solve, minres_solve_preconditioned, CholOptions, Ordering,
};
use dualpal::{BoxSet, CsrMatrix, DenseMatrix, LinearOperator};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_na(m: &DMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn sym(r: &mut ChaCha8Rng, d: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, d, |_, _| r.gen_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

/// Columns are the operator applied to unit vectors.
fn dense_of(op: &dyn LinearOperator<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(op.nrows(), op.ncols());
    for j in 0..op.ncols() {
        let mut e = vec![0.0; op.ncols()];
        e[j] = 1.0;
        out.set_column(j, &DVector::from_vec(op.mul(&e)));
    }
    out
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn resid(op: &dyn LinearOperator<f64>, x: &[f64], rhs: &[f64]) -> f64 {
    op.mul(x).iter().zip(rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

#[test]
fn qap_operator_matches_kronecker_form() {
    let mut r = rng(1);
    for d in 1..=5 {
        let (a, b, s, t) = (sym(&mut r, d), sym(&mut r, d), sym(&mut r, d), sym(&mut r, d));
        let op = qap_operator(from_na(&a), from_na(&b), from_na(&s), from_na(&t)).unwrap();
        let eye = DMatrix::identity(d, d);
        let want = b.kronecker(&a) - eye.kronecker(&s) - t.kronecker(&eye);
        let got = dense_of(&op);
        assert!((got - want).amax() < 1e-12, "d={d}");
        assert!(op.is_self_adjoint());
        assert!(adjoint_mismatch(&op, 5, d as u64) < 1e-13);
    }
}

/// `U` with `U svec(X) = vec(X)` for symmetric `X`, built from the index map.
fn svec_to_vec(d: usize) -> DMatrix<f64> {
    let mut u = DMatrix::zeros(d * d, svec_len(d));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for i in 0..d {
            let k = svec_index(i.min(j), i.max(j));
            u[(i + j * d, k)] = if i == j { 1.0 } else { h };
        }
    }
    u
}

#[test]
fn biq_operator_matches_kronecker_form() {
    let mut r = rng(2);
    for d in 2..=5 {
        let q = sym(&mut r, d) * 3.0;
        let eig = SymmetricEigen::new(q.clone()).eigenvalues;
        let lambda0 = biq_shift(eig.min(), eig.max());
        let op = biq_operator(from_na(&q), lambda0).unwrap();
        let u = svec_to_vec(d);
        let want = u.transpose() * (q.kronecker(&q) - DMatrix::identity(d * d, d * d) * lambda0) * &u;
        let got = dense_of(&op);
        assert!((&got - &want).amax() < 1e-12, "d={d}");
        let min = SymmetricEigen::new(got).eigenvalues.min();
        assert!(min > -1e-12, "d={d}: {min}");
    }
}

#[test]
fn biq_shift_for_an_indefinite_diagonal() {
    assert_eq!(biq_shift(-2.0, 1.0), -2.0);
    assert_eq!(biq_shift(0.5, 3.0), 0.0);
    let q = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, -2.0]);
    let op = biq_operator(q, -2.0).unwrap();
    // diag(1, -2): svec(Q E Q) scales the three basis entries by 1, -2, 4
    assert_eq!(op.mul(&[1.0, 1.0, 1.0]), vec![3.0, 0.0, 6.0]);
}

proptest! {
    #[test]
    fn svec_is_an_isometry(d in 1usize..6, seed in any::<u64>()) {
        let mut r = rng(seed);
        let (x, y) = (sym(&mut r, d), sym(&mut r, d));
        let (sx, sy) = (svec(&from_na(&x)).unwrap(), svec(&from_na(&y)).unwrap());
        prop_assert_eq!(sx.len(), svec_len(d));
        let inner: f64 = sx.iter().zip(&sy).map(|(a, b)| a * b).sum();
        prop_assert!((inner - x.dot(&y)).abs() < 1e-13);
        let back = to_na(&smat(&sx, d));
        prop_assert!((back - x).amax() < 1e-15);
    }

    #[test]
    fn projection_is_the_nearest_point(
        v in proptest::collection::vec(-5.0..5.0f64, 1..8),
        seed in any::<u64>(),
    ) {
        let n = v.len();
        let mut r = rng(seed);
        let mut lower = vec![0.0; n];
        let mut upper = vec![0.0; n];
        for i in 0..n {
            match r.gen_range(0..4) {
                0 => { lower[i] = f64::NEG_INFINITY; upper[i] = f64::INFINITY; }
                1 => { lower[i] = r.gen_range(-3.0..3.0); upper[i] = f64::INFINITY; }
                2 => { lower[i] = f64::NEG_INFINITY; upper[i] = r.gen_range(-3.0..3.0); }
                _ => { lower[i] = r.gen_range(-3.0..0.0); upper[i] = lower[i] + r.gen_range(0.0..3.0); }
            }
        }
        let bx = BoxSet::new(lower.clone(), upper.clone()).unwrap();
        let p = bx.project(&v);
        prop_assert!(bx.contains(&p, 0.0));
        prop_assert_eq!(bx.project(&p), p.clone());
        let dist = |q: &[f64]| q.iter().zip(&v).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        for _ in 0..20 {
            let q: Vec<f64> = (0..n)
                .map(|i| r.gen_range(-6.0..6.0f64).clamp(lower[i], upper[i]))
                .collect();
            prop_assert!(dist(&p) <= dist(&q) + 1e-12);
        }
    }

    #[test]
    fn support_function_is_the_max_over_corners(
        y in proptest::collection::vec(-4.0..4.0f64, 1..6),
        seed in any::<u64>(),
    ) {
        let n = y.len();
        let mut r = rng(seed);
        let lower: Vec<f64> = (0..n).map(|_| r.gen_range(-3.0..1.0)).collect();
        let upper: Vec<f64> = lower.iter().map(|l| l + r.gen_range(0.0..2.0)).collect();
        let bx = BoxSet::new(lower.clone(), upper.clone()).unwrap();
        let best = (0..1usize << n)
            .map(|mask| (0..n).map(|i| y[i] * if mask >> i & 1 == 1 { upper[i] } else { lower[i] }).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((bx.support(&y) - best).abs() < 1e-12);

        // an unbounded side in a direction where y pushes gives +inf
        let mut open = upper.clone();
        let k = r.gen_range(0..n);
        open[k] = f64::INFINITY;
        let bx = BoxSet::new(lower, open).unwrap();
        prop_assert_eq!(bx.support(&y) == f64::INFINITY, y[k] > 0.0);
    }

    #[test]
    fn csr_adjoint_and_transpose_agree(
        rows in 1usize..8,
        cols in 1usize..8,
        seed in any::<u64>(),
    ) {
        let mut r = rng(seed);
        let mut trip = Vec::new();
        for k in 0..rows * cols {
            if r.gen_bool(0.4) {
                trip.push((k / cols, k % cols, r.gen_range(-2.0..2.0)));
            }
        }
        let a = CsrMatrix::from_triplets(rows, cols, &trip).unwrap();
        let u: Vec<f64> = (0..cols).map(|_| r.gen_range(-1.0..1.0)).collect();
        let v: Vec<f64> = (0..rows).map(|_| r.gen_range(-1.0..1.0)).collect();
        let lhs: f64 = a.mul(&u).iter().zip(&v).map(|(p, q)| p * q).sum();
        let rhs: f64 = u.iter().zip(a.mul_adjoint(&v)).map(|(p, q)| p * q).sum();
        prop_assert!((lhs - rhs).abs() < 1e-13);
        prop_assert!(max_diff(&a.transpose().mul(&v), &a.mul_adjoint(&v)) < 1e-15);
        let dense = to_na(&a.to_dense());
        let aat = to_na(&a.mul_self_transpose().to_dense());
        prop_assert!((aat - &dense * dense.transpose()).amax() < 1e-13);
    }
}

fn random_spd_csr(r: &mut ChaCha8Rng, n: usize, density: f64) -> (CsrMatrix<f64>, DMatrix<f64>) {
    let mut trip = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if r.gen_bool(density) {
                trip.push((i, j, r.gen_range(-1.0..1.0)));
            }
        }
    }
    let g = CsrMatrix::from_triplets(n, n, &trip).unwrap();
    let mut m = to_na(&g.mul_self_transpose().to_dense());
    for i in 0..n {
        m[(i, i)] += 0.5;
    }
    (CsrMatrix::from_dense(&from_na(&m)), m)
}

#[test]
fn cholesky_matches_dense_inverse() {
    let mut r = rng(3);
    for ordering in [Ordering::Amd, Ordering::Natural] {
        let (m, dense) = random_spd_csr(&mut r, 50, 0.06);
        let f = chol_factor(&m, &CholOptions { ordering, ..Default::default() }).unwrap();
        assert!(f.skipped().is_empty());
        let rhs: Vec<f64> = (0..50).map(|_| r.gen_range(-1.0..1.0)).collect();
        let want = dense.clone().try_inverse().unwrap() * DVector::from_vec(rhs.clone());
        assert!(max_diff(&f.solve(&rhs), want.as_slice()) < 1e-10, "{ordering:?}");
        // L L^T reproduces the permuted matrix
        let l = to_na(&f.lower_factor().to_dense());
        let p = f.permutation();
        let permuted = DMatrix::from_fn(50, 50, |i, j| dense[(p[i], p[j])]);
        assert!((&l * l.transpose() - permuted).amax() < 1e-12);
    }
}

/// Row and column sum constraints of a `d x d` matrix in column-major order.
fn assignment_rows(d: usize) -> CsrMatrix<f64> {
    let mut trip = Vec::new();
    for i in 0..d {
        for j in 0..d {
            trip.push((i, i + j * d, 1.0));
            trip.push((d + j, i + j * d, 1.0));
        }
    }
    CsrMatrix::from_triplets(2 * d, d * d, &trip).unwrap()
}

#[test]
fn rank_deficient_assignment_normal_matrix() {
    let d = 4;
    let a = assignment_rows(d);
    let m = a.mul_self_transpose();
    let f = chol_factor(&m, &CholOptions::default()).unwrap();
    assert_eq!(f.skipped().len(), 1);
    let mut r = rng(4);
    let x: Vec<f64> = (0..d * d).map(|_| r.gen_range(-1.0..1.0)).collect();
    let rhs = m.mul(&a.mul(&x));
    let sol = f.solve(&rhs);
    assert!(resid(&m, &sol, &rhs) < 1e-8);

    // the residual of a consistent solve is orthogonal to Range(M)
    let res: Vec<f64> = m.mul(&sol).iter().zip(&rhs).map(|(p, q)| q - p).collect();
    let svd = to_na(&m.to_dense()).svd(true, false);
    let u = svd.u.unwrap();
    for k in (0..2 * d).filter(|&k| svd.singular_values[k] > 1e-8) {
        let c: f64 = (0..2 * d).map(|i| u[(i, k)] * res[i]).sum();
        assert!(c.abs() < 1e-8, "component {k}: {c}");
    }

    // an inconsistent right-hand side leaves its residual in the skipped rows
    let mut bad = rhs.clone();
    bad[0] += 1.0;
    let sol = f.solve(&bad);
    for &k in f.skipped() {
        assert_eq!(sol[k], 0.0);
    }
    let res: Vec<f64> = m.mul(&sol).iter().zip(&bad).map(|(p, q)| q - p).collect();
    for (i, v) in res.iter().enumerate() {
        assert!(f.skipped().contains(&i) || v.abs() < 1e-10, "row {i}: {v}");
    }
}

#[test]
fn minres_on_diagonal_and_indefinite_systems() {
    let diag = DenseMatrix::from_fn(10, 10, |i, j| if i == j { (i + 1) as f64 } else { 0.0 });
    let rhs: Vec<f64> = (0..10).map(|i| (i as f64).sin()).collect();
    let (x, rep) = minres_solve(&diag, &rhs, None, 1e-12, 100, None);
    assert!(rep.converged);
    let exact: Vec<f64> = rhs.iter().enumerate().map(|(i, v)| v / (i + 1) as f64).collect();
    assert!(max_diff(&x, &exact) < 1e-11);

    let mut r = rng(5);
    let n = 30;
    let s = sym(&mut r, n) + DMatrix::from_diagonal(&DVector::from_fn(n, |i, _| if i % 2 == 0 { 3.0 } else { -3.0 }));
    let op = from_na(&s);
    let rhs: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let (x, rep) = minres_solve(&op, &rhs, None, 1e-11, 500, None);
    assert!(rep.converged && rep.residual_norm <= 1e-11);
    assert!(resid(&op, &x, &rhs) <= 1e-11);
    let want = s.lu().solve(&DVector::from_vec(rhs)).unwrap();
    assert!(max_diff(&x, want.as_slice()) < 1e-8);
}

#[test]
fn preconditioned_minres_matches_dense_solve() {
    let mut r = rng(6);
    let n = 40;
    let (_, dense) = random_spd_csr(&mut r, n, 0.1);
    // badly scaled rows and columns
    let scale = DVector::from_fn(n, |i, _| 10f64.powi((i % 5) as i32 - 2));
    let scaled = DMatrix::from_diagonal(&scale) * &dense * DMatrix::from_diagonal(&scale);
    let op = from_na(&scaled);
    let pinv = from_na(&DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / scaled[(i, i)] } else { 0.0 }));
    let rhs: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let (x, rep) = minres_solve_preconditioned(&op, &rhs, None, 1e-9, 2000, &pinv);
    assert!(rep.converged, "{rep:?}");
    assert!(resid(&op, &x, &rhs) <= 1e-9);
    let want = scaled.cholesky().unwrap().solve(&DVector::from_vec(rhs));
    assert!(max_diff(&x, want.as_slice()) / want.amax() < 1e-6);
}

#[test]
fn bicgstab_matches_dense_solve() {
    let mut r = rng(7);
    for trial in 0..10 {
        let n = 40;
        let g = DMatrix::from_fn(n, n, |_, _| r.gen_range(-1.0..1.0)) / (n as f64).sqrt();
        let mat = DMatrix::identity(n, n) * 2.0 + g;
        let op = from_na(&mat);
        let rhs: Vec<f64> = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
        let (x, rep) = bicgstab_solve(&op, &rhs, None, 1e-10, 400);
        assert!(rep.converged, "trial {trial}: {rep:?}");
        assert!(rep.matvecs <= rep.iterations + 2, "{rep:?}");
        let want = mat.lu().solve(&DVector::from_vec(rhs)).unwrap();
        assert!(max_diff(&x, want.as_slice()) < 1e-8);
    }
}

#[test]
fn bicgstab_on_a_singular_consistent_system() {
    let n = 6;
    let op = DenseMatrix::from_fn(n, n, |i, j| if i == j && i + 1 < n { (i + 2) as f64 } else if j == i + 1 { 0.5 } else { 0.0 });
    // last row is zero; a right-hand side with zero last entry is consistent
    let rhs = vec![1.0, -2.0, 0.5, 3.0, 1.0, 0.0];
    let (x, rep) = bicgstab_solve(&op, &rhs, None, 1e-10, 200);
    assert!(resid(&op, &x, &rhs) <= 1e-10, "{rep:?}");
}

#[test]
fn krylov_trivial_cases() {
    let id = DenseMatrix::identity(5);
    let rhs = vec![1.0, 2.0, 3.0, 4.0, 5.0];
    for (x, rep) in [
        minres_solve(&id, &rhs, None, 1e-14, 10, None),
        bicgstab_solve(&id, &rhs, None, 1e-14, 10),
    ] {
        assert!(max_diff(&x, &rhs) < 1e-14);
        assert!(rep.iterations <= 1, "{rep:?}");
    }
    let zero = vec![0.0; 5];
    for (x, rep) in [
        minres_solve(&id, &zero, None, 1e-14, 10, None),
        bicgstab_solve(&id, &zero, None, 1e-14, 10),
    ] {
        assert_eq!(x, zero);
        assert_eq!(rep.iterations, 0);
    }
}

#[test]
fn spectral_estimates_on_a_low_rank_operator() {
    let mut r = rng(8);
    let n = 30;
    let b = DMatrix::from_fn(n, 8, |_, _| r.gen_range(-1.0..1.0));
    let q = &b * b.transpose();
    let eig = SymmetricEigen::new(q.clone()).eigenvalues;
    let lmax = eig.max();
    let lplus = eig.iter().copied().filter(|v| *v > 1e-8 * lmax).fold(f64::INFINITY, f64::min);
    let op = from_na(&q);
    let cfg = SpectralConfig { power_iterations: 500, power_tol: 1e-8, ..Default::default() };
    let norm = estimate_spectral_norm(&op, &cfg);
    assert!(norm <= lmax * (1.0 + 1e-10) && norm >= lmax * (1.0 - 1e-4), "{norm} vs {lmax}");
    let (lp, _) = estimate_lambda_plus(&op, norm, &cfg);
    assert!((lp - lplus).abs() < 1e-6 * lmax, "{lp} vs {lplus}");
}
