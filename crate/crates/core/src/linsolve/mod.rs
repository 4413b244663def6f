//! Sparse Cholesky with pivot skipping, dense Cholesky for small blocks, and
//! Krylov solvers with absolute residual tolerances.

mod cholesky;
mod krylov;

pub use cholesky::{chol_factor, chol_solve, CholFactor, CholOptions, DenseCholesky, Ordering};
pub use krylov::{bicgstab_solve, minres_solve, minres_solve_preconditioned, IterSolveReport};
