//! Probabilistically safe navigation around a moving obstacle with unknown
//! dynamics.
//!
//! Noisy obstacle positions feed a sliding-window least-squares estimator
//! whose chi-square confidence ellipsoid is combined with body shapes and a
//! velocity bound into a time-varying unsafe set in constrained convex
//! generator form. That set is converted exactly into a control barrier
//! function, which filters a nominal controller for first- and second-order
//! planar vehicles.
//!
//! Module map:
//!
//! - [`numerics`]: dense linear algebra, chi-square quantiles, Newton KKT solver
//! - [`ccg`]: constrained convex generator sets and their exact operations
//! - [`estimator`]: sliding-window fit and confidence ellipsoid
//! - [`flow`]: unsafe set flow over one sampling interval and its smoothing
//! - [`cbf`]: barrier evaluation with envelope-theorem derivatives
//! - [`filter`]: CBF quadratic-program and smooth safety filters
//! - [`sim`]: closed-loop scenario engine, logging and metrics

pub mod ccg;
pub mod cbf;
pub mod estimator;
pub mod filter;
pub mod flow;
pub mod numerics;
pub mod sim;

pub use numerics::Mat;
