//! Closed-loop scenario engine.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cbf::{eval_h, BacksteppingParams, CbfEval};
use crate::ccg::Ccg;
use crate::estimator::{confidence_ellipsoid, fit, BasisSpec, EstimatorWindow};
use crate::filter::{first_order_safe_controller, second_order_safe_controller, ClassKSpec, SafeStep, VesselModel};
use crate::flow::{build_unsafe_flow, BodySets, UnsafeFlow};
use crate::numerics::{chi2_quantile, gaussian_sample, inverse, inverse_quadratic_form, Mat, RngState};

use super::config::{mat3, DynamicsKind, NominalKind, ScenarioConfig};
use super::dynamics::{nominal_first_order, nominal_pursuit, step_dynamics, wrap_angle, EgoModel, EgoState, TrackingGains};
use super::geometry::rectangle_disk_separation;
use super::obstacle::ObstacleTruth;
use super::reference::PlanarSpline;
use super::SimError;

/// Warm-up sets are balls of this many noise deviations, in chi-square units.
const WARMUP_SIGMAS: f64 = 3.0;

/// One control step. Column order of the CSV output follows field order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Heading wrapped to `(−π, π]`.
    pub psi: f64,
    pub nu_u: f64,
    pub nu_v: f64,
    pub nu_r: f64,
    /// Applied input: `ν` for the kinematic model, `τ` for the vessel.
    pub u0: f64,
    pub u1: f64,
    pub u2: f64,
    pub obs_x: f64,
    pub obs_y: f64,
    /// Latest measurement.
    pub meas_x: f64,
    pub meas_y: f64,
    /// Center of the estimate set, the measurement itself during warm-up.
    pub rhat_x: f64,
    pub rhat_y: f64,
    /// Estimate covariance, NaN during warm-up.
    pub pi_xx: f64,
    pub pi_xy: f64,
    pub pi_yy: f64,
    pub h_est: f64,
    pub h_true: f64,
    /// Backstepping barrier, NaN for the kinematic model.
    pub h1: f64,
    /// Barrier under the previous interval's flow at the first step of an
    /// interval, NaN elsewhere.
    pub h_prev: f64,
    pub slack: f64,
    pub active: bool,
    pub fallback: bool,
    pub warmup: bool,
    /// Whether the true position at the interval start lies in the estimate.
    pub covered: bool,
    pub separation: f64,
    pub tracking_error: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub steps: usize,
    pub warmup_end: f64,
    pub min_separation: f64,
    pub violations: usize,
    pub fallback_steps: usize,
    pub min_h_true: f64,
    pub min_h_est: f64,
    pub min_h1: Option<f64>,
    /// Smallest `h₁` over the sampling intervals that start with `h₁ ≥ 0`.
    /// A new estimate can move the barrier at an interval start; within an
    /// interval the filter keeps a nonnegative `h₁` nonnegative.
    pub min_h1_safe_start: Option<f64>,
    pub min_slack: f64,
    pub coverage_hits: usize,
    pub coverage_total: usize,
    pub coverage_rate: Option<f64>,
    /// Over the steps after warm-up.
    pub max_tracking_error: f64,
    pub max_newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub config: ScenarioConfig,
    pub records: Vec<StepRecord>,
    pub metrics: RunMetrics,
}

impl TrajectoryLog {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), SimError> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.records {
            w.serialize(r).map_err(|e| SimError::Output(e.to_string()))?;
        }
        w.flush().map_err(|e| SimError::Output(e.to_string()))?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String, SimError> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| SimError::Output(e.to_string()))
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        serde_json::to_string_pretty(self).map_err(|e| SimError::Output(e.to_string()))
    }
}

/// Everything derived once from a config.
struct Setup {
    reference: PlanarSpline,
    obstacle: ObstacleTruth,
    bodies: BodySets,
    true_flow: UnsafeFlow,
    model: EgoModel,
    vessel: Option<VesselModel>,
    spec: ClassKSpec,
    params: BacksteppingParams,
    k_nu: Mat,
    gains: TrackingGains,
    basis: BasisSpec,
    chi2: f64,
}

impl Setup {
    fn new(cfg: &ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        if cfg.estimator.sigma == 0.0 {
            return Err(SimError::InvalidConfig("closed-loop runs need positive measurement noise".into()));
        }
        let reference = PlanarSpline::new(&cfg.reference.waypoints).map_err(SimError::InvalidConfig)?;
        let obstacle = ObstacleTruth::new(&cfg.obstacle).map_err(SimError::InvalidConfig)?;
        let origin = [0.0, 0.0];
        let e = &cfg.ego;
        let bodies = BodySets {
            ego_shape: Ccg::smooth_box_enclosing(&origin, &e.half_widths, e.box_power, e.box_reg)?,
            obstacle_shape: Ccg::ball(&origin, obstacle.body_radius)?,
            velocity_set: Ccg::ball(&origin, cfg.obstacle.v_max)?,
        };
        let true_bodies = BodySets {
            velocity_set: Ccg::point(&origin),
            ..bodies.clone()
        };
        let true_flow = build_unsafe_flow(&Ccg::point(&origin), &true_bodies, 0.0, 1.0, cfg.barrier.gamma)?;
        let m_inv = inverse(&mat3(&e.mass))?;
        let d = mat3(&e.damping);
        let (model, vessel) = match cfg.dynamics {
            DynamicsKind::FirstOrder => (EgoModel::Kinematic, None),
            DynamicsKind::SecondOrder => (
                EgoModel::Vessel {
                    m_inv: m_inv.clone(),
                    d: d.clone(),
                },
                Some(VesselModel { m_inv, d }),
            ),
        };
        Ok(Self {
            reference,
            obstacle,
            bodies,
            true_flow,
            model,
            vessel,
            spec: ClassKSpec::linear(cfg.barrier.alpha_cbf),
            params: BacksteppingParams {
                mu: cfg.barrier.mu,
                fd_step: cfg.barrier.fd_step,
                time_step: cfg.control_dt,
            },
            k_nu: mat3(&e.k_nu),
            gains: TrackingGains {
                k_p: e.k_p,
                k_psi: e.k_psi,
            },
            basis: BasisSpec::polynomial(cfg.estimator.degree),
            chi2: chi2_quantile(2, 1.0 - cfg.estimator.alpha)?,
        })
    }

    fn nominal(&self, cfg: &ScenarioConfig, p: &[f64], psi: f64, t: f64) -> Vec<f64> {
        match cfg.nominal {
            NominalKind::Track => nominal_first_order(p, psi, t, &self.reference, &self.gains),
            NominalKind::Pursue => nominal_pursuit(p, psi, self.obstacle.position(t), cfg.ego.pursue_speed, self.gains.k_psi),
        }
    }

    fn initial_state(&self, cfg: &ScenarioConfig) -> EgoState {
        let (p, psi) = match cfg.ego.initial {
            Some([x, y, psi]) => ([x, y], psi),
            None => {
                let (q, dq) = self.reference.eval(0.0);
                (q, dq[1].atan2(dq[0]))
            }
        };
        EgoState {
            p,
            psi,
            nu: cfg.ego.initial_nu,
        }
    }
}

struct IntervalSet {
    flow: UnsafeFlow,
    center: [f64; 2],
    pi: Option<Mat>,
    covered: bool,
}

/// Runs the closed loop over the configured horizon.
///
/// At every sampling instant a noisy obstacle position is drawn and the
/// estimate set rebuilt; until the window is full the estimate is a ball of
/// three noise deviations (in chi-square units) around the latest raw
/// measurement. Between samples the selected safety filter is applied with
/// the input held over each control step.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<TrajectoryLog, SimError> {
    let setup = Setup::new(cfg)?;
    let sigma = cfg.estimator.sigma;
    let noise = Mat::from_diag(&[sigma * sigma, sigma * sigma]);
    let mut rng = RngState::new(cfg.seed);
    let mut window = EstimatorWindow::new(cfg.estimator.window)?;
    let substeps = cfg.control_substeps();
    let dt = cfg.control_dt;
    let warmup_radius = WARMUP_SIGMAS * sigma * setup.chi2.sqrt();

    let mut state = setup.initial_state(cfg);
    let mut last_u = vec![0.0; 3];
    let mut warm: Option<CbfEval> = None;
    let mut warm_true: Option<CbfEval> = None;
    let mut prev: Option<UnsafeFlow> = None;
    let mut records = Vec::with_capacity(cfg.intervals() * substeps);
    let mut warmup_end = f64::NAN;
    let mut coverage = (0, 0);

    for k in 0..cfg.intervals() {
        let t_k = k as f64 * cfg.sample_time;
        let r_k = setup.obstacle.position(t_k);
        let y = gaussian_sample(&mut rng, &r_k, &noise)?;
        window.push_measurement(t_k, y.clone(), noise.clone())?;
        let set = if window.is_ready() {
            if warmup_end.is_nan() {
                warmup_end = t_k;
            }
            let est = fit(&window, &setup.basis)?;
            let ell = confidence_ellipsoid(&est, cfg.estimator.alpha)?;
            let e = [r_k[0] - est.r_hat[0], r_k[1] - est.r_hat[1]];
            let covered = inverse_quadratic_form(&est.pi.scale(setup.chi2), &e)? <= 1.0;
            coverage.0 += usize::from(covered);
            coverage.1 += 1;
            IntervalSet {
                flow: build_unsafe_flow(&ell, &setup.bodies, t_k, cfg.sample_time, cfg.barrier.gamma)?,
                center: [est.r_hat[0], est.r_hat[1]],
                pi: Some(est.pi),
                covered,
            }
        } else {
            let ball = Ccg::ball(&y, warmup_radius)?;
            IntervalSet {
                flow: build_unsafe_flow(&ball, &setup.bodies, t_k, cfg.sample_time, cfg.barrier.gamma)?,
                center: [y[0], y[1]],
                pi: None,
                covered: true,
            }
        };

        let h_prev = match &prev {
            Some(f) => eval_h(f, &state.p, state.psi, t_k, warm.as_ref()).map(|e| e.h).unwrap_or(f64::NAN),
            None => f64::NAN,
        };

        for j in 0..substeps {
            let step_index = k * substeps + j;
            let t = t_k + j as f64 * dt;
            let nominal = |p: &[f64], psi: f64, tt: f64| setup.nominal(cfg, p, psi, tt);
            let safe: SafeStep = match &setup.vessel {
                None => first_order_safe_controller(
                    &set.flow,
                    &nominal(&state.p, state.psi, t),
                    &state.p,
                    state.psi,
                    t,
                    &setup.spec,
                    warm.as_ref(),
                    &last_u,
                ),
                Some(vessel) => second_order_safe_controller(
                    &set.flow,
                    &setup.params,
                    &nominal,
                    &setup.k_nu,
                    vessel,
                    &state.p,
                    state.psi,
                    &state.nu,
                    t,
                    &setup.spec,
                    cfg.barrier.beta,
                    warm.as_ref(),
                    &last_u,
                ),
            };
            if let Some(e) = &safe.eval {
                warm = Some(e.clone());
            }
            let r_t = setup.obstacle.position(t);
            let rel = [state.p[0] - r_t[0], state.p[1] - r_t[1]];
            let truth = eval_h(&setup.true_flow, &rel, state.psi, 0.0, warm_true.as_ref())
                .map_err(|e| SimError::Aborted {
                    step: step_index,
                    message: format!("true barrier at offset ({}, {}), heading {}: {e}", rel[0], rel[1], state.psi),
                })?;
            let (q, _) = setup.reference.eval(t);
            let u = safe.decision.u.clone();
            records.push(StepRecord {
                step: step_index,
                t,
                x: state.p[0],
                y: state.p[1],
                psi: wrap_angle(state.psi),
                nu_u: state.nu[0],
                nu_v: state.nu[1],
                nu_r: state.nu[2],
                u0: u[0],
                u1: u[1],
                u2: u[2],
                obs_x: r_t[0],
                obs_y: r_t[1],
                meas_x: y[0],
                meas_y: y[1],
                rhat_x: set.center[0],
                rhat_y: set.center[1],
                pi_xx: set.pi.as_ref().map_or(f64::NAN, |m| m[(0, 0)]),
                pi_xy: set.pi.as_ref().map_or(f64::NAN, |m| m[(0, 1)]),
                pi_yy: set.pi.as_ref().map_or(f64::NAN, |m| m[(1, 1)]),
                h_est: safe.eval.as_ref().map_or(f64::NAN, |e| e.h),
                h_true: truth.h,
                h1: safe.h1.as_ref().map_or(f64::NAN, |h| h.h1),
                h_prev: if j == 0 { h_prev } else { f64::NAN },
                slack: safe.decision.slack,
                active: safe.decision.constraint_active,
                fallback: safe.decision.fallback_used,
                warmup: set.pi.is_none(),
                covered: set.covered,
                separation: rectangle_disk_separation(
                    state.p,
                    state.psi,
                    cfg.ego.half_widths,
                    r_t,
                    setup.obstacle.body_radius,
                ),
                tracking_error: (state.p[0] - q[0]).hypot(state.p[1] - q[1]),
                newton_iters: safe.eval.as_ref().map_or(0, |e| e.newton_iters),
            });
            warm_true = Some(truth);
            let input = [u[0], u[1], u[2]];
            state = step_dynamics(&state, &input, dt, &setup.model);
            if !state.p.iter().chain([&state.psi]).chain(&state.nu).all(|v| v.is_finite()) {
                return Err(SimError::Aborted {
                    step: step_index,
                    message: "state became non-finite".into(),
                });
            }
            last_u = u;
        }
        prev = Some(set.flow);
    }
    let metrics = summarize(&records, substeps, warmup_end, coverage);
    Ok(TrajectoryLog {
        config: cfg.clone(),
        records,
        metrics,
    })
}

fn summarize(records: &[StepRecord], substeps: usize, warmup_end: f64, (hits, total): (usize, usize)) -> RunMetrics {
    let min = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::INFINITY, f64::min);
    let h1: Vec<f64> = records.iter().map(|r| r.h1).filter(|v| !v.is_nan()).collect();
    let safe_start: Vec<f64> = records
        .chunks(substeps)
        .filter(|c| c[0].h1 >= 0.0)
        .flat_map(|c| c.iter().map(|r| r.h1))
        .collect();
    RunMetrics {
        steps: records.len(),
        warmup_end,
        min_separation: min(&mut records.iter().map(|r| r.separation)),
        violations: records.iter().filter(|r| r.separation < 0.0).count(),
        fallback_steps: records.iter().filter(|r| r.fallback).count(),
        min_h_true: min(&mut records.iter().map(|r| r.h_true)),
        min_h_est: min(&mut records.iter().map(|r| r.h_est).filter(|v| !v.is_nan())),
        min_h1: (!h1.is_empty()).then(|| min(&mut h1.iter().copied())),
        min_h1_safe_start: (!safe_start.is_empty()).then(|| min(&mut safe_start.iter().copied())),
        min_slack: min(&mut records.iter().filter(|r| !r.fallback).map(|r| r.slack)),
        coverage_hits: hits,
        coverage_total: total,
        coverage_rate: (total > 0).then(|| hits as f64 / total as f64),
        max_tracking_error: records
            .iter()
            .filter(|r| !r.warmup)
            .map(|r| r.tracking_error)
            .fold(0.0, f64::max),
        max_newton_iters: records.iter().map(|r| r.newton_iters).max().unwrap_or(0),
    }
}
