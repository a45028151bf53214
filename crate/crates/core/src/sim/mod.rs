//! Sampled-data closed-loop simulation: ego models, obstacle truth, noisy
//! measurements, the estimator-to-filter pipeline, logging and metrics.

mod config;
mod coverage;
mod dynamics;
mod geometry;
mod obstacle;
mod reference;
mod run;

pub use config::{
    mat3, BarrierConfig, ConfigError, ConfigFormat, CoverageConfig, DynamicsKind, EgoConfig, EstimatorConfig,
    NominalKind, ObstacleConfig, ObstacleMotion, ReferenceConfig, ScenarioConfig,
};
pub use coverage::{coverage_trial, wilson_interval, CoverageReport};
pub use dynamics::{
    nominal_first_order, nominal_pursuit, nominal_second_order, step_dynamics, wrap_angle, EgoModel, EgoState,
    TrackingGains,
};
pub use geometry::rectangle_disk_separation;
pub use obstacle::ObstacleTruth;
pub use reference::{CubicSpline, PlanarSpline};
pub use run::{run_scenario, RunMetrics, StepRecord, TrajectoryLog};

pub use crate::flow::{rotation, rotation_derivative};

use crate::ccg::CcgError;
use crate::estimator::EstimatorError;
use crate::flow::FlowError;
use crate::numerics::NumericsError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("run aborted at step {step}: {message}")]
    Aborted { step: usize, message: String },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Set(#[from] CcgError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("cannot write output: {0}")]
    Output(String),
}
