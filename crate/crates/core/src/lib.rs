//! Sum Hessian operators `S_k = σ_{k-1} + α σ_k`: symmetric-function
//! kernels, cone tests, randomized checks of the concavity inequalities,
//! a finite-difference Dirichlet solver and Pogorelov-quantity reports.

pub mod cli;
pub mod concavity;
pub mod cones;
pub mod error;
pub mod matrixcalc;
pub mod pogorelov;
pub mod solver;
pub mod symfunc;

pub use error::{Error, Result};

/// Shortest round-trip decimal form used in every CSV and JSON output.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}
