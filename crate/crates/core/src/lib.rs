//! Convex quadratic programming by a two-phase proximal augmented Lagrangian
//! method on the restricted-Wolfe dual.
//!
//! ```
//! use dualpal::{solve, BoxSet, CsrMatrix, DenseMatrix, SolverConfig, StandardQp};
//! use std::sync::Arc;
//!
//! // min 1/2 |x|^2 - x_1  s.t.  x_1 + x_2 = 1,  x >= 0
//! let q = Arc::new(CsrMatrix::<f64>::identity(2));
//! let a = CsrMatrix::from_dense(&DenseMatrix::from_row_major(1, 2, vec![1.0, 1.0]));
//! let qp = StandardQp::new(q, a, vec![1.0], vec![-1.0, 0.0], BoxSet::nonnegative(2)).unwrap();
//! let out = solve(&qp, &SolverConfig::default()).unwrap();
//! assert!(out.residuals.eta_max <= 1e-6);
//! assert!((out.state.x[0] - 1.0).abs() < 1e-5);
//! ```

// NaN-rejecting checks are written as `!(x > 0)` on purpose, and the
// numeric kernels index several arrays in lockstep.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

mod scalar;

pub mod error;
pub mod history;
pub mod kkt;
pub mod linops;
pub mod linsolve;
pub mod phase1;
pub mod phase2;
pub mod problem;
pub mod solver;
pub mod ssn;
pub mod vecops;

pub use error::{Error, Result};
pub use history::{IterationRecord, SolveStatus};
pub use kkt::{kkt_residuals, KktResiduals};
pub use linops::{CsrMatrix, DenseMatrix, LinearOperator, SharedOperator};
pub use phase1::Phase1Config;
pub use phase2::Phase2Config;
pub use problem::{BoxSet, GeneralQp, IterateState, StandardQp, WRepresentation};
pub use scalar::Real;
pub use solver::{solve, solve_from, SolveResult, SolverConfig};
pub use ssn::SsnConfig;

pub type StandardQp64 = StandardQp<f64>;
pub type StandardQp32 = StandardQp<f32>;
pub type GeneralQp64 = GeneralQp<f64>;
pub type GeneralQp32 = GeneralQp<f32>;
pub type CsrMatrix64 = CsrMatrix<f64>;
pub type CsrMatrix32 = CsrMatrix<f32>;
pub type SolveResult64 = SolveResult<f64>;
pub type SolveResult32 = SolveResult<f32>;
