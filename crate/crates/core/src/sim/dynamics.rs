//! Ego models, nominal controllers and the fixed-step integrator.

use std::f64::consts::PI;

use crate::flow::rotation;
use crate::numerics::Mat;

use super::reference::PlanarSpline;

/// Ego pose and body-frame velocity `ν = (surge, sway, yaw rate)`. For the
/// kinematic model `ν` is the last applied input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoState {
    pub p: [f64; 2],
    /// Unwrapped heading.
    pub psi: f64,
    pub nu: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub enum EgoModel {
    /// `(ṗ, ψ̇) = G(ψ) u` with the input `u = ν`.
    Kinematic,
    /// `(ṗ, ψ̇) = G(ψ) ν`, `M ν̇ = τ − D ν` with the input `τ`.
    Vessel { m_inv: Mat, d: Mat },
}

/// Angle wrapped to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn body_to_world(psi: f64, nu: &[f64]) -> [f64; 3] {
    let (s, c) = psi.sin_cos();
    [c * nu[0] - s * nu[1], s * nu[0] + c * nu[1], nu[2]]
}

fn derivative(model: &EgoModel, x: &[f64; 6], input: &[f64; 3]) -> [f64; 6] {
    match model {
        EgoModel::Kinematic => {
            let v = body_to_world(x[2], input);
            [v[0], v[1], v[2], 0.0, 0.0, 0.0]
        }
        EgoModel::Vessel { m_inv, d } => {
            let nu = &x[3..6];
            let v = body_to_world(x[2], nu);
            let dnu = d.mulv(nu);
            let force: Vec<f64> = input.iter().zip(&dnu).map(|(t, f)| t - f).collect();
            let a = m_inv.mulv(&force);
            [v[0], v[1], v[2], a[0], a[1], a[2]]
        }
    }
}

/// One RK4 step of length `dt` with the input held constant.
pub fn step_dynamics(state: &EgoState, input: &[f64; 3], dt: f64, model: &EgoModel) -> EgoState {
    let x = [state.p[0], state.p[1], state.psi, state.nu[0], state.nu[1], state.nu[2]];
    let shift = |a: &[f64; 6], k: &[f64; 6], s: f64| {
        let mut out = *a;
        for (o, ki) in out.iter_mut().zip(k) {
            *o += s * ki;
        }
        out
    };
    let k1 = derivative(model, &x, input);
    let k2 = derivative(model, &shift(&x, &k1, 0.5 * dt), input);
    let k3 = derivative(model, &shift(&x, &k2, 0.5 * dt), input);
    let k4 = derivative(model, &shift(&x, &k3, dt), input);
    let mut next = x;
    for i in 0..6 {
        next[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    let nu = match model {
        EgoModel::Kinematic => *input,
        EgoModel::Vessel { .. } => [next[3], next[4], next[5]],
    };
    EgoState {
        p: [next[0], next[1]],
        psi: next[2],
        nu,
    }
}

/// Body-frame velocity command following the world-frame velocity `v` and
/// turning toward its direction. A vanishing `v` leaves the heading alone.
fn velocity_command(v: [f64; 2], psi: f64, k_psi: f64) -> Vec<f64> {
    let turn = if v[0] == 0.0 && v[1] == 0.0 {
        0.0
    } else {
        k_psi * wrap_angle(v[1].atan2(v[0]) - psi)
    };
    let body = rotation(psi).tmulv(&v);
    vec![body[0], body[1], turn]
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingGains {
    pub k_p: f64,
    pub k_psi: f64,
}

/// Reference-tracking velocity `Gᵀ [q̇ + k_p (q − p); k_ψ (θ − ψ)]`, with
/// `θ` the direction of the commanded velocity.
pub fn nominal_first_order(p: &[f64], psi: f64, t: f64, reference: &PlanarSpline, gains: &TrackingGains) -> Vec<f64> {
    let (q, dq) = reference.eval(t);
    let v = [dq[0] + gains.k_p * (q[0] - p[0]), dq[1] + gains.k_p * (q[1] - p[1])];
    velocity_command(v, psi, gains.k_psi)
}

/// Velocity of magnitude `speed` straight at `target`.
pub fn nominal_pursuit(p: &[f64], psi: f64, target: [f64; 2], speed: f64, k_psi: f64) -> Vec<f64> {
    let d = [target[0] - p[0], target[1] - p[1]];
    let n = d[0].hypot(d[1]);
    let v = if n > 0.0 {
        [speed * d[0] / n, speed * d[1] / n]
    } else {
        [0.0, 0.0]
    };
    velocity_command(v, psi, k_psi)
}

/// Generalized force `K_ν (k_d − ν)` steering the velocity to `k_d`.
pub fn nominal_second_order(k_d: &[f64], nu: &[f64], k_nu: &Mat) -> Vec<f64> {
    let e: Vec<f64> = k_d.iter().zip(nu).map(|(a, b)| a - b).collect();
    k_nu.mulv(&e)
}
