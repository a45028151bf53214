//! Dense linear algebra, scalar statistics and solver primitives shared by
//! every other module.

mod linalg;
mod matrix;
mod newton;
mod rng;
mod stats;

pub use linalg::{
    cholesky, cholesky_semidefinite, cholesky_solve, inverse, inverse_quadratic_form,
    nullspace_basis, pseudo_inverse, rank, solve, svd, symmetric_eigenvalues, Lu, Svd,
    DEFAULT_RANK_TOL,
};
pub use matrix::{add, all_finite, axpy, dot, norm, norm_inf, scaled, sub, Mat};
pub use newton::{
    finite_diff_jacobian, kkt_newton_solve, try_finite_diff_jacobian, FnObjective, KktSolution,
    NewtonOptions, Objective,
};
pub use rng::{gaussian_sample, RngState};
pub use stats::{chi2_cdf, chi2_quantile, ln_gamma, regularized_gamma_p};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NumericsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix not positive definite: pivot {pivot} = {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("matrix singular at column {index}")]
    Singular { index: usize },
    #[error("KKT matrix singular at column {index}")]
    SingularKkt { index: usize },
    #[error("Newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}
