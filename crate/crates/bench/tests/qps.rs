use std::sync::Arc;

use dualpal::{BoxSet, CsrMatrix, GeneralQp, LinearOperator};
use dualpal_bench::qps::{parse_qps_named, parse_qps_str, write_qps};
use dualpal_bench::BenchError;
use proptest::prelude::*;

const EXAMPLE: &str = "\
NAME          QPEXAMPLE
ROWS
 N  obj
 G  r1
 L  r2
COLUMNS
    c1        r1                 2.0   r2                -1.0
    c1        obj                1.5
    c2        r1                 1.0   r2                 2.0
    c2        obj               -2.0
RHS
    rhs1      r1                 2.0   r2                 6.0
BOUNDS
 UP bnd1      c1                20.0
QUADOBJ
    c1        c1                 8.0
    c1        c2                 2.0
    c2        c2                10.0
ENDATA
";

fn dense_q(gp: &GeneralQp<f64>) -> Vec<Vec<f64>> {
    let n = gp.n();
    (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            gp.q.mul(&e)
        })
        .collect()
}

fn dense(m: &CsrMatrix<f64>) -> Vec<Vec<f64>> {
    let d = m.to_dense();
    (0..m.nrows()).map(|i| d.row(i).to_vec()).collect()
}

#[test]
fn quadobj_example() {
    let (name, gp) = parse_qps_named(EXAMPLE).unwrap();
    assert_eq!(name, "QPEXAMPLE");
    assert_eq!(gp.dims(), (0, 2, 2));
    assert_eq!(gp.c, vec![1.5, -2.0]);
    assert_eq!(dense_q(&gp), vec![vec![8.0, 2.0], vec![2.0, 10.0]]);
    // the G row is negated into <= form
    assert_eq!(dense(&gp.a_in), vec![vec![-2.0, -1.0], vec![-1.0, 2.0]]);
    assert_eq!(gp.b_in, vec![-2.0, 6.0]);
    assert_eq!(gp.bounds.lower(), &[0.0, 0.0]);
    assert_eq!(gp.bounds.upper(), &[20.0, f64::INFINITY]);
    assert_eq!(gp.offset, 0.0);
}

fn ranged(kind: &str, rhs: f64, range: f64) -> GeneralQp<f64> {
    let text = format!(
        "NAME R\nROWS\n N obj\n {kind} r\nCOLUMNS\n x obj 1.0\n x r 1.0\nRHS\n rhs r {rhs}\nRANGES\n rng r {range}\nBOUNDS\n FR bnd x\nENDATA\n"
    );
    parse_qps_str(&text).unwrap()
}

/// Whether the scalar `x` satisfies every row of the one-variable problem.
fn feasible(gp: &GeneralQp<f64>, x: f64) -> bool {
    let eq = gp.a_eq.mul(&[x]);
    let ineq = gp.a_in.mul(&[x]);
    eq.iter().zip(&gp.b_eq).all(|(a, b)| (a - b).abs() < 1e-12)
        && ineq.iter().zip(&gp.b_in).all(|(a, b)| *a <= b + 1e-12)
}

#[test]
fn ranges_follow_mps_semantics() {
    let cases: [(&str, f64, f64, f64, f64); 5] = [
        ("L", 4.0, 3.0, 1.0, 4.0),
        ("G", 1.0, 3.0, 1.0, 4.0),
        ("E", 1.0, 3.0, 1.0, 4.0),
        ("E", 4.0, -3.0, 1.0, 4.0),
        ("L", 4.0, -3.0, 1.0, 4.0),
    ];
    for (kind, rhs, range, lo, hi) in cases {
        let gp = ranged(kind, rhs, range);
        for x in [lo - 0.5, lo, 0.5 * (lo + hi), hi, hi + 0.5] {
            assert_eq!(
                feasible(&gp, x),
                (lo..=hi).contains(&x),
                "{kind} row, range {range}, x = {x}"
            );
        }
    }
}

#[test]
fn objective_rhs_sets_offset() {
    let text = "NAME O\nROWS\n N obj\n E r\nCOLUMNS\n x obj 1\n x r 1\nRHS\n rhs obj 2.5\n rhs r 1\nENDATA\n";
    assert_eq!(parse_qps_str(text).unwrap().offset, -2.5);
}

#[test]
fn conflicting_duplicate_is_an_error() {
    let text = "NAME D\nROWS\n N obj\n E r\nCOLUMNS\n x r 1.0\n x r 2.0\nRHS\n rhs r 1\nENDATA\n";
    assert!(matches!(parse_qps_str(text), Err(BenchError::Parse { .. })));
}

#[test]
fn asymmetric_qmatrix_is_an_error() {
    let text = "NAME Q\nROWS\n N obj\nCOLUMNS\n x obj 1\n y obj 1\nQMATRIX\n x x 1\n x y 2\n y x 3\n y y 1\nENDATA\n";
    assert!(matches!(
        parse_qps_str(text),
        Err(BenchError::AsymmetricQuadratic { .. })
    ));
}

#[test]
fn missing_endata_is_an_error() {
    assert!(parse_qps_str("NAME X\nROWS\n N obj\nCOLUMNS\n x obj 1\n").is_err());
}

fn bound_strategy() -> impl Strategy<Value = (f64, f64)> {
    prop_oneof![
        Just((0.0, f64::INFINITY)),
        Just((f64::NEG_INFINITY, f64::INFINITY)),
        (-5.0..5.0f64).prop_map(|u| (f64::NEG_INFINITY, u)),
        (-5.0..5.0f64, 0.0..5.0f64).prop_map(|(l, w)| (l, l + w)),
        (-5.0..5.0f64).prop_map(|v| (v, v)),
    ]
}

prop_compose! {
    fn general_qp()(n in 1usize..6, m_eq in 0usize..4, m_in in 0usize..4)
        (q in proptest::collection::vec(-3.0..3.0f64, n * n),
         c in proptest::collection::vec(-3.0..3.0f64, n),
         ae in proptest::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], m_eq * n),
         ai in proptest::collection::vec(prop_oneof![Just(0.0), -3.0..3.0f64], m_in * n),
         be in proptest::collection::vec(-3.0..3.0f64, m_eq),
         bi in proptest::collection::vec(-3.0..3.0f64, m_in),
         bounds in proptest::collection::vec(bound_strategy(), n),
         offset in prop_oneof![Just(0.0), -3.0..3.0f64],
         n in Just(n), m_eq in Just(m_eq), m_in in Just(m_in))
        -> GeneralQp<f64>
    {
        let mut trip = Vec::new();
        for i in 0..n {
            for j in 0..=i {
                let v = q[i * n + j];
                if v != 0.0 {
                    trip.push((i, j, v));
                    if i != j {
                        trip.push((j, i, v));
                    }
                }
            }
        }
        let sparse = |rows: usize, vals: &[f64]| {
            let t: Vec<_> = (0..rows * n)
                .filter(|k| vals[*k] != 0.0)
                .map(|k| (k / n, k % n, vals[k]))
                .collect();
            CsrMatrix::from_triplets(rows, n, &t).unwrap()
        };
        let (lower, upper): (Vec<f64>, Vec<f64>) = bounds.into_iter().unzip();
        GeneralQp {
            q: Arc::new(CsrMatrix::from_triplets(n, n, &trip).unwrap()),
            c,
            a_eq: sparse(m_eq, &ae),
            b_eq: be,
            a_in: sparse(m_in, &ai),
            b_in: bi,
            bounds: BoxSet::new(lower, upper).unwrap(),
            offset,
        }
    }
}

proptest! {
    #[test]
    fn write_then_parse_round_trips(gp in general_qp()) {
        let text = write_qps(&gp, "RT").unwrap();
        let (name, back) = parse_qps_named(&text).unwrap();
        prop_assert_eq!(name, "RT");
        prop_assert_eq!(back.dims(), gp.dims());
        prop_assert_eq!(&back.c, &gp.c);
        prop_assert_eq!(dense_q(&back), dense_q(&gp));
        prop_assert_eq!(dense(&back.a_eq), dense(&gp.a_eq));
        prop_assert_eq!(dense(&back.a_in), dense(&gp.a_in));
        prop_assert_eq!(&back.b_eq, &gp.b_eq);
        prop_assert_eq!(&back.b_in, &gp.b_in);
        prop_assert_eq!(back.bounds.lower(), gp.bounds.lower());
        prop_assert_eq!(back.bounds.upper(), gp.bounds.upper());
        prop_assert_eq!(back.offset, gp.offset);
    }
}
