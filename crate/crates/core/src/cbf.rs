//! Barrier `h(p, ψ, t) = min { f(η) : G̃(ψ, t) η + c̃(ψ, t) = p }` and its
//! derivatives.
//!
//! `h ≤ 0` exactly on the smoothed unsafe set. With the Lagrangian
//! `f(η) + λᵀ(G̃η + c̃ − p)` the envelope theorem gives `∇_p h = −λ`,
//! `∂h/∂ψ = λᵀ(∂G̃/∂ψ η + ∂c̃/∂ψ)` and likewise for `t`.

use serde::{Deserialize, Serialize};

use crate::ccg::SmoothMax;
use crate::flow::{FlowError, UnsafeFlow};
use crate::numerics::{
    cholesky, dot, kkt_newton_solve, pseudo_inverse, try_finite_diff_jacobian, KktSolution, Mat,
    NewtonOptions, NumericsError, DEFAULT_RANK_TOL,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CbfError {
    #[error("barrier solve failed: {0}")]
    Solver(#[from] NumericsError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("virtual control failed: {0}")]
    VirtualControl(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CbfEval {
    pub h: f64,
    pub eta_star: Vec<f64>,
    pub lambda_star: Vec<f64>,
    pub grad_p: Vec<f64>,
    pub dh_dpsi: f64,
    pub dh_dt: f64,
    pub converged: bool,
    pub newton_iters: usize,
}

pub fn newton_options() -> NewtonOptions {
    NewtonOptions {
        tol: 1e-10,
        max_iter: 100,
        ..Default::default()
    }
}

/// Iterations allowed to a warm-started solve before restarting cold.
const WARM_MAX_ITER: usize = 25;

/// Evaluates the barrier at `(p, ψ, t)`, warm-starting from `warm` when given.
pub fn eval_h(
    flow: &UnsafeFlow,
    p: &[f64],
    psi: f64,
    t: f64,
    warm: Option<&CbfEval>,
) -> Result<CbfEval, CbfError> {
    if p.len() != 2 {
        return Err(CbfError::InvalidArgument(format!("position of length {}", p.len())));
    }
    let gc = flow.eval_gc(psi, t)?;
    let rhs: Vec<f64> = p.iter().zip(&gc.c).map(|(pi, ci)| pi - ci).collect();
    let f = flow.smoothed_f();
    let (sol, stage_iters) = match warm {
        Some(w) if w.eta_star.len() == flow.free_dim() => {
            let opts = NewtonOptions {
                max_iter: WARM_MAX_ITER,
                ..newton_options()
            };
            match kkt_newton_solve(&f, &gc.g, &rhs, &w.eta_star, &opts) {
                Ok(sol) => (sol, 0),
                Err(e) => {
                    // a stale start far from the new optimum can stall; the
                    // continuation start does not depend on it
                    log::debug!("warm-started barrier solve failed ({e}), restarting cold");
                    let (sol, spent) = cold_solve(flow, &gc.g, &rhs)?;
                    (sol, spent + WARM_MAX_ITER)
                }
            }
        }
        _ => cold_solve(flow, &gc.g, &rhs)?,
    };
    let (h, _, hess) = f.value_gradient_hessian(&sol.eta);
    if cholesky(&hess).is_err() {
        log::debug!("smoothed generator Hessian not positive definite at t = {t}, psi = {psi}");
    }
    let d = flow.eval_gc_derivatives(psi, t)?;
    let lam = sol.lambda;
    let directional = |dg: &Mat, dc: &[f64]| {
        let mut v = dg.mulv(&sol.eta);
        for (vi, ci) in v.iter_mut().zip(dc) {
            *vi += ci;
        }
        dot(&lam, &v)
    };
    Ok(CbfEval {
        h,
        grad_p: lam.iter().map(|l| -l).collect(),
        dh_dpsi: directional(&d.dg_dpsi, &d.dc_dpsi),
        dh_dt: directional(&d.dg_dt, &d.dc_dt),
        eta_star: sol.eta,
        lambda_star: lam,
        converged: true,
        newton_iters: stage_iters + sol.iterations,
    })
}

/// Cold start by continuation in the smoothing parameter: from the
/// least-norm point the generator values can differ by orders of magnitude,
/// which underflows every softmax weight but one at the target `γ`. Starting
/// where `γ · spread = O(1)` and sharpening tenfold per stage avoids that.
/// Returns the final solve and the iterations spent in earlier stages.
fn cold_solve(flow: &UnsafeFlow, g: &Mat, rhs: &[f64]) -> Result<(KktSolution, usize), CbfError> {
    let eta0 = pseudo_inverse(g, DEFAULT_RANK_TOL)?.mulv(rhs);
    let vals = flow.sliced().values(&eta0);
    let spread = vals.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v))
        - vals.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let gamma = flow.gamma();
    let stages = (gamma * (1.0 + spread)).log10().ceil().max(0.0) as i32;
    let loose = NewtonOptions {
        tol: 1e-6,
        ..newton_options()
    };
    let mut eta = eta0;
    let mut spent = 0;
    for k in (1..=stages).rev() {
        let gk = gamma * 10f64.powi(-k);
        let fk = SmoothMax::new(flow.sliced(), gk, 0.0);
        let sol = kkt_newton_solve(&fk, g, rhs, &eta, &loose)?;
        spent += sol.iterations;
        eta = sol.eta;
    }
    let sol = kkt_newton_solve(&flow.smoothed_f(), g, rhs, &eta, &newton_options())?;
    Ok((sol, spent))
}

/// Terms of `ḣ = L_f h + L_G h · u + ∂h/∂t` for `(ṗ, ψ̇) = f + G u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HdotTerms {
    pub lf_h: f64,
    pub lg_h: Vec<f64>,
    pub dh_dt: f64,
}

/// Chain rule with the state gradient `[∇_p h; ∂h/∂ψ]`.
pub fn hdot_terms(eval: &CbfEval, drift: &[f64], input_matrix: &Mat) -> HdotTerms {
    let grad = state_gradient(eval);
    HdotTerms {
        lf_h: dot(&grad, drift),
        lg_h: input_matrix.tmulv(&grad),
        dh_dt: eval.dh_dt,
    }
}

/// `[∇_p h; ∂h/∂ψ]`.
pub fn state_gradient(eval: &CbfEval) -> Vec<f64> {
    let mut g = eval.grad_p.clone();
    g.push(eval.dh_dpsi);
    g
}

/// Input matrix `blkdiag(R(ψ), 1)` of the planar kinematics, which have no
/// drift.
pub fn kinematic_input_matrix(psi: f64) -> Mat {
    let mut g = Mat::zeros(3, 3);
    g.set_block(0, 0, &crate::flow::rotation(psi));
    g[(2, 2)] = 1.0;
    g
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacksteppingParams {
    pub mu: f64,
    /// Central-difference step for `∂k/∂(p, ψ)`.
    pub fd_step: f64,
    /// Forward-difference step for `∂k/∂t`. Near the interval start `k`
    /// varies like `ln(t − t_k)`, so a controller holding its input over a
    /// step is better served by a secant over the hold time.
    pub time_step: f64,
}

impl Default for BacksteppingParams {
    fn default() -> Self {
        Self {
            mu: 1.0,
            fd_step: 1e-5,
            time_step: 1e-5,
        }
    }
}

impl BacksteppingParams {
    pub fn validate(&self) -> Result<(), CbfError> {
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(CbfError::InvalidArgument(format!("mu = {}", self.mu)));
        }
        if !(self.fd_step > 0.0 && self.fd_step.is_finite()) {
            return Err(CbfError::InvalidArgument(format!("fd_step = {}", self.fd_step)));
        }
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(CbfError::InvalidArgument(format!("time_step = {}", self.time_step)));
        }
        Ok(())
    }
}

/// `h₁ = h − ‖ν − k‖²/(2μ)` with its partial derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct H1Eval {
    pub h1: f64,
    pub base: CbfEval,
    /// Virtual control `k(p, ψ, t)`.
    pub k: Vec<f64>,
    /// `[∂h₁/∂p; ∂h₁/∂ψ]`.
    pub dx: Vec<f64>,
    pub dt: f64,
    pub dnu: Vec<f64>,
}

/// Backstepping barrier at `(p, ψ, ν, t)`. `base` is the barrier at
/// `(p, ψ, t)`; `k_fn(p, ψ, t)` is the smooth virtual control whose Jacobian
/// is taken by central differences in `(p, ψ)` and a forward difference in
/// `t`.
pub fn eval_h1<F>(
    base: &CbfEval,
    params: &BacksteppingParams,
    k_fn: F,
    p: &[f64],
    psi: f64,
    nu: &[f64],
    t: f64,
) -> Result<H1Eval, CbfError>
where
    F: Fn(&[f64], f64, f64) -> Result<Vec<f64>, CbfError>,
{
    params.validate()?;
    let k = k_fn(p, psi, t)?;
    if k.len() != nu.len() {
        return Err(CbfError::InvalidArgument(format!(
            "virtual control of length {} for velocity of length {}",
            k.len(),
            nu.len()
        )));
    }
    let z = [p[0], p[1], psi];
    let jac_x = try_finite_diff_jacobian(|z: &[f64]| k_fn(&z[..2], z[2], t), &z, params.fd_step)?;
    // forward in time: the flow starts at the interval start
    let k_next = k_fn(p, psi, t + params.time_step)?;
    let mut jac = Mat::zeros(k.len(), 4);
    jac.set_block(0, 0, &jac_x);
    for i in 0..k.len() {
        jac[(i, 3)] = (k_next[i] - k[i]) / params.time_step;
    }
    let diff: Vec<f64> = nu.iter().zip(&k).map(|(n, kk)| n - kk).collect();
    let inv_mu = 1.0 / params.mu;
    // ∂h₁/∂z = ∂h/∂z + (ν − k)ᵀ ∂k/∂z / μ
    let jt = jac.tmulv(&diff);
    let mut dx = state_gradient(base);
    for (i, d) in dx.iter_mut().enumerate() {
        *d += inv_mu * jt[i];
    }
    Ok(H1Eval {
        h1: base.h - 0.5 * inv_mu * dot(&diff, &diff),
        base: base.clone(),
        k,
        dx,
        dt: base.dh_dt + inv_mu * jt[3],
        dnu: diff.iter().map(|d| -inv_mu * d).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccg::Ccg;
    use crate::flow::{build_unsafe_flow, BodySets};

    fn unit_ball_flow(gamma: f64) -> UnsafeFlow {
        let origin = Ccg::point(&[0.0, 0.0]);
        let bodies = BodySets {
            ego_shape: origin.clone(),
            obstacle_shape: origin.clone(),
            velocity_set: origin,
        };
        build_unsafe_flow(&Ccg::ball(&[0.0, 0.0], 1.0).unwrap(), &bodies, 0.0, 0.1, gamma).unwrap()
    }

    #[test]
    fn unit_ball_values() {
        let flow = unit_ball_flow(10.0);
        let e = eval_h(&flow, &[3.0, 0.0], 0.0, 0.0, None).unwrap();
        assert!((e.h - (8.0 - 2f64.ln() / 10.0)).abs() < 1e-9);
        assert!((e.h - 7.93069).abs() < 1e-5);
        assert!((e.grad_p[0] - 6.0).abs() < 1e-9 && e.grad_p[1].abs() < 1e-9);
        assert!(e.dh_dt.abs() < 1e-12 && e.dh_dpsi.abs() < 1e-12);
        let inside = eval_h(&flow, &[0.0, 0.0], 0.0, 0.0, None).unwrap();
        assert!((inside.h + 1.0 + 2f64.ln() / 10.0).abs() < 1e-9);
    }

    #[test]
    fn warm_start_at_solution_takes_one_iteration() {
        let flow = unit_ball_flow(10.0);
        let e = eval_h(&flow, &[1.5, -0.7], 0.0, 0.05, None).unwrap();
        let again = eval_h(&flow, &[1.5, -0.7], 0.0, 0.05, Some(&e)).unwrap();
        assert_eq!(again.newton_iters, 1);
        assert!((again.h - e.h).abs() < 1e-12);
    }

    #[test]
    fn h1_reduces_to_h_on_the_virtual_control() {
        let flow = unit_ball_flow(10.0);
        let base = eval_h(&flow, &[2.0, 0.0], 0.0, 0.0, None).unwrap();
        let k = |_: &[f64], _: f64, _: f64| Ok(vec![0.1, 0.2, 0.3]);
        let h1 = eval_h1(&base, &BacksteppingParams::default(), k, &[2.0, 0.0], 0.0, &[0.1, 0.2, 0.3], 0.0)
            .unwrap();
        assert_eq!(h1.h1, base.h);
        assert!(h1.dnu.iter().all(|v| *v == 0.0));
        let big_mu = BacksteppingParams {
            mu: 1e12,
            ..Default::default()
        };
        let h1 = eval_h1(&base, &big_mu, k, &[2.0, 0.0], 0.0, &[1.0, 0.0, 0.0], 0.0).unwrap();
        assert!((h1.h1 - base.h).abs() < 1e-11);
    }
}
