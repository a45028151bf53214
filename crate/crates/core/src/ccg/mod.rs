//! Constrained convex generator (CCG) sets.
//!
//! A set is `{ G ξ + c : A ξ = b, g_i(ξ_i) ≤ 0 }` with each `g_i` a smooth
//! strictly convex generator function. Linear images, Minkowski sums and
//! generalized intersections are exact and closed in this representation.

mod generator;
mod set;
pub mod sliced;
mod solve;

pub use generator::GeneratorFn;
pub use set::{make_ellipsoid, Ccg};
pub use sliced::{log_sum_exp, SlicedGenerators, SmoothMax};
pub use solve::DEFAULT_CONTAINS_TOL;

use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CcgError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid generator: {0}")]
    InvalidGenerator(String),
    #[error("set is empty (smallest generator maximum {min_max:e})")]
    Infeasible { min_max: f64 },
    #[error("membership could not be decided: {0}")]
    Indeterminate(String),
    #[error("could not parse set: {0}")]
    Parse(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
