#![allow(dead_code)]

pub mod kkt;
pub mod sgs;

use dualpal::{CsrMatrix, DenseMatrix};
use nalgebra::{DMatrix, DVector};

pub fn to_na(m: &DenseMatrix<f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn csr_to_na(m: &CsrMatrix<f64>) -> DMatrix<f64> {
    to_na(&m.to_dense())
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix<f64> {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

pub fn vec_na(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Prints one acceptance line and passes the verdict through.
pub fn report(id: &str, pass: bool, detail: &str) -> bool {
    println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}
