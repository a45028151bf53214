//! Safety filters enforcing `ḣ + α(h) ≥ 0`.
//!
//! With one barrier the QP `min ½‖u − u_d‖²  s.t.  a·u ≥ b` is a half-space
//! projection, `a = L_G h` and `b = −α(h) − L_f h − ∂h/∂t`. The smooth filter
//! replaces the kink of the projection by a softplus so that it can serve as
//! the virtual control of a backstepping barrier.

use serde::{Deserialize, Serialize};

use crate::cbf::{
    eval_h, eval_h1, hdot_terms, kinematic_input_matrix, BacksteppingParams, CbfError, CbfEval,
    H1Eval, HdotTerms,
};
use crate::flow::UnsafeFlow;
use crate::numerics::{dot, Mat};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("constraint infeasible: zero input gain with required rate {b:e}")]
    Infeasible { b: f64 },
    #[error("constraint direction vanishes")]
    DegenerateDirection,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassKKind {
    Linear,
}

/// Extended class-K∞ function, `α(s) = gain·s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassKSpec {
    pub kind: ClassKKind,
    pub gain: f64,
}

impl ClassKSpec {
    pub fn linear(gain: f64) -> Self {
        Self {
            kind: ClassKKind::Linear,
            gain,
        }
    }

    pub fn eval(&self, s: f64) -> f64 {
        match self.kind {
            ClassKKind::Linear => self.gain * s,
        }
    }
}

impl Default for ClassKSpec {
    fn default() -> Self {
        Self::linear(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterDecision {
    pub u: Vec<f64>,
    pub constraint_active: bool,
    /// `ḣ + α(h)` at the returned input.
    pub slack: f64,
    pub fallback_used: bool,
}

/// `b = −α(h) − L_f h − ∂h/∂t`.
pub fn constraint_rhs(terms: &HdotTerms, h: f64, spec: &ClassKSpec) -> f64 {
    -spec.eval(h) - terms.lf_h - terms.dh_dt
}

/// Closed-form CBF-QP.
pub fn qp_filter(
    u_d: &[f64],
    lf_h: f64,
    lg_h: &[f64],
    dh_dt: f64,
    h: f64,
    spec: &ClassKSpec,
) -> Result<FilterDecision, FilterError> {
    if u_d.len() != lg_h.len() {
        return Err(FilterError::InvalidArgument(format!(
            "input of length {} with gain of length {}",
            u_d.len(),
            lg_h.len()
        )));
    }
    let all = [lf_h, dh_dt, h];
    if u_d.iter().chain(lg_h).chain(&all).any(|v| !v.is_finite()) {
        return Err(FilterError::InvalidArgument("non-finite filter input".into()));
    }
    let a = lg_h;
    let b = -spec.eval(h) - lf_h - dh_dt;
    let a2 = dot(a, a);
    let au = dot(a, u_d);
    let (u, active) = if au >= b {
        (u_d.to_vec(), false)
    } else if a2 == 0.0 {
        return Err(FilterError::Infeasible { b });
    } else {
        let s = (b - au) / a2;
        (u_d.iter().zip(a).map(|(ud, ai)| ud + s * ai).collect(), true)
    };
    let slack = lf_h + dot(a, &u) + dh_dt + spec.eval(h);
    Ok(FilterDecision {
        u,
        constraint_active: active,
        slack,
        fallback_used: false,
    })
}

/// `β⁻¹ ln(1 + e^{βs})` without overflow.
pub fn softplus(s: f64, beta: f64) -> f64 {
    let x = beta * s;
    (x.max(0.0) + (-x.abs()).exp().ln_1p()) / beta
}

/// `u = u_d + a σ(b − a·u_d)/‖a‖²`, which satisfies `a·u ≥ b` and is smooth.
pub fn smooth_filter(u_d: &[f64], a: &[f64], b: f64, beta: f64) -> Result<Vec<f64>, FilterError> {
    if u_d.len() != a.len() {
        return Err(FilterError::InvalidArgument(format!(
            "input of length {} with gain of length {}",
            u_d.len(),
            a.len()
        )));
    }
    if !(beta > 0.0) {
        return Err(FilterError::InvalidArgument(format!("softplus sharpness {beta}")));
    }
    let a2 = dot(a, a);
    if a2 == 0.0 {
        return Err(FilterError::DegenerateDirection);
    }
    let s = softplus(b - dot(a, u_d), beta) / a2;
    Ok(u_d.iter().zip(a).map(|(ud, ai)| ud + s * ai).collect())
}

/// Result of one filtered control evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct SafeStep {
    pub decision: FilterDecision,
    pub eval: Option<CbfEval>,
    pub h1: Option<H1Eval>,
}

fn fallback(last: &[f64], reason: &str, t: f64) -> FilterDecision {
    log::warn!("safety filter fallback at t = {t}: {reason}");
    FilterDecision {
        u: last.to_vec(),
        constraint_active: true,
        slack: f64::NAN,
        fallback_used: true,
    }
}

/// Hard CBF-QP for the planar kinematics. On solver failure or an infeasible
/// constraint the previous input `last_u` is held and flagged.
#[allow(clippy::too_many_arguments)]
pub fn first_order_safe_controller(
    flow: &UnsafeFlow,
    k_d: &[f64],
    p: &[f64],
    psi: f64,
    t: f64,
    spec: &ClassKSpec,
    warm: Option<&CbfEval>,
    last_u: &[f64],
) -> SafeStep {
    let eval = match eval_h(flow, p, psi, t, warm) {
        Ok(e) => e,
        Err(e) => {
            return SafeStep {
                decision: fallback(last_u, &e.to_string(), t),
                eval: None,
                h1: None,
            }
        }
    };
    let terms = hdot_terms(&eval, &[0.0; 3], &kinematic_input_matrix(psi));
    let decision = match qp_filter(k_d, terms.lf_h, &terms.lg_h, terms.dh_dt, eval.h, spec) {
        Ok(d) => d,
        Err(e) => fallback(last_u, &e.to_string(), t),
    };
    SafeStep {
        decision,
        eval: Some(eval),
        h1: None,
    }
}

/// Smooth safe velocity `k(p, ψ, t)` for the planar kinematics, built from
/// the nominal velocity `k_d(p, ψ, t)`.
#[allow(clippy::too_many_arguments)]
pub fn smooth_virtual_control(
    flow: &UnsafeFlow,
    k_d: &dyn Fn(&[f64], f64, f64) -> Vec<f64>,
    p: &[f64],
    psi: f64,
    t: f64,
    spec: &ClassKSpec,
    beta: f64,
    warm: Option<&CbfEval>,
) -> Result<(Vec<f64>, CbfEval), CbfError> {
    let eval = eval_h(flow, p, psi, t, warm)?;
    let terms = hdot_terms(&eval, &[0.0; 3], &kinematic_input_matrix(psi));
    let b = constraint_rhs(&terms, eval.h, spec);
    let k = smooth_filter(&k_d(p, psi, t), &terms.lg_h, b, beta)
        .map_err(|e| CbfError::VirtualControl(e.to_string()))?;
    Ok((k, eval))
}

/// Planar vessel model `M ν̇ = τ − D ν` behind the kinematics.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselModel {
    pub m_inv: Mat,
    pub d: Mat,
}

/// Backstepped CBF-QP in the generalized force `τ`, filtering
/// `τ_d = K_ν (k_d − ν)`.
#[allow(clippy::too_many_arguments)]
pub fn second_order_safe_controller(
    flow: &UnsafeFlow,
    params: &BacksteppingParams,
    k_d: &dyn Fn(&[f64], f64, f64) -> Vec<f64>,
    k_nu: &Mat,
    model: &VesselModel,
    p: &[f64],
    psi: f64,
    nu: &[f64],
    t: f64,
    spec: &ClassKSpec,
    beta: f64,
    warm: Option<&CbfEval>,
    last_tau: &[f64],
) -> SafeStep {
    let kd = k_d(p, psi, t);
    let tau_d: Vec<f64> = k_nu.mulv(&kd.iter().zip(nu).map(|(a, b)| a - b).collect::<Vec<_>>());
    let fail = |reason: String| SafeStep {
        decision: fallback(last_tau, &reason, t),
        eval: None,
        h1: None,
    };
    let base = match eval_h(flow, p, psi, t, warm) {
        Ok(e) => e,
        Err(e) => return fail(e.to_string()),
    };
    let k_fn = |pp: &[f64], ps: f64, tt: f64| {
        smooth_virtual_control(flow, k_d, pp, ps, tt, spec, beta, Some(&base)).map(|r| r.0)
    };
    let h1 = match eval_h1(&base, params, k_fn, p, psi, nu, t) {
        Ok(h) => h,
        Err(e) => return fail(e.to_string()),
    };
    // ḣ₁ = ∂h₁/∂x · G(ψ)ν + ∂h₁/∂t + ∂h₁/∂ν · M⁻¹(τ − Dν)
    let xdot = kinematic_input_matrix(psi).mulv(nu);
    let dnu_m = model.m_inv.tmulv(&h1.dnu);
    let lf = dot(&h1.dx, &xdot) - dot(&dnu_m, &model.d.mulv(nu));
    let decision = match qp_filter(&tau_d, lf, &dnu_m, h1.dt, h1.h1, spec) {
        Ok(d) => d,
        Err(e) => fallback(last_tau, &e.to_string(), t),
    };
    SafeStep {
        decision,
        eval: Some(base),
        h1: Some(h1),
    }
}
