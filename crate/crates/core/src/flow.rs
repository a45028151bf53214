//! Unsafe position set for the ego reference point over one sampling
//! interval,
//!
//! `Q̂(ψ, t) = R̂ ⊕ (t − t_k)𝒱 ⊕ (−R(ψ)Ē) ⊕ Ō`,
//!
//! kept in a form where only the generator matrix and center depend on
//! `(ψ, t)`. The equality constraints are eliminated once per interval via
//! `ξ = A†b + N η`, leaving `Q̃(ψ, t) = { G̃ η + c̃ : f_i(η) ≤ 0 }`.

use serde::{Deserialize, Serialize};

use crate::ccg::{Ccg, CcgError, GeneratorFn, SlicedGenerators, SmoothMax};
use crate::numerics::{norm, nullspace_basis, pseudo_inverse, Mat, DEFAULT_RANK_TOL};

/// Times this far outside the interval are still accepted, so that finite
/// differences and boundary logging can evaluate at the endpoints.
pub const INTERVAL_SLACK: f64 = 1e-4;

/// Smallest elapsed time, relative to the interval length, at which the
/// flow is evaluated.
pub const MIN_ELAPSED: f64 = 1e-9;

pub fn rotation(psi: f64) -> Mat {
    let (s, c) = psi.sin_cos();
    Mat::from_rows(&[&[c, -s], &[s, c]])
}

pub fn rotation_derivative(psi: f64) -> Mat {
    let (s, c) = psi.sin_cos();
    Mat::from_rows(&[&[-s, -c], &[c, -s]])
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FlowError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("combined constraints are inconsistent (residual {residual:e})")]
    Inconsistent { residual: f64 },
    #[error("time {t} outside the interval [{start}, {end}]")]
    OutsideInterval { t: f64, start: f64, end: f64 },
    #[error(transparent)]
    Set(#[from] CcgError),
}

/// Ego shape `Ē` in the body frame, obstacle shape `Ō`, and the obstacle
/// velocity bound `𝒱`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodySets {
    pub ego_shape: Ccg,
    pub obstacle_shape: Ccg,
    pub velocity_set: Ccg,
}

impl BodySets {
    pub fn validate(&self) -> Result<(), FlowError> {
        let p = self.ego_shape.dim();
        if p != 2 || self.obstacle_shape.dim() != p || self.velocity_set.dim() != p {
            return Err(FlowError::InvalidArgument(format!(
                "body sets must be planar, got dimensions {}, {}, {}",
                p,
                self.obstacle_shape.dim(),
                self.velocity_set.dim()
            )));
        }
        if !self.velocity_set.contains(&[0.0, 0.0], 1e-9)? {
            return Err(FlowError::InvalidArgument(
                "velocity set must contain the origin".into(),
            ));
        }
        Ok(())
    }
}

/// Unsafe set flow over `[t_k, t_k + duration]`.
#[derive(Debug, Clone)]
pub struct UnsafeFlow {
    t_k: f64,
    duration: f64,
    gamma: f64,
    r_hat: Ccg,
    bodies: BodySets,
    /// Column offsets of the r, v, e, o generator blocks.
    offsets: [usize; 4],
    /// `[G_r | 0 | 0 | G_o]`, the parts that do not move with `(ψ, t)`.
    g_static: Mat,
    c_static: Vec<f64>,
    g_v: Mat,
    c_v: Vec<f64>,
    g_e: Mat,
    c_e: Vec<f64>,
    gens: Vec<GeneratorFn>,
    a: Mat,
    b: Vec<f64>,
    a_pinv_b: Vec<f64>,
    nul: Mat,
    sliced: SlicedGenerators,
}

/// Eliminated representation at one `(ψ, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowGc {
    pub g: Mat,
    pub c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowGcDerivatives {
    pub dg_dpsi: Mat,
    pub dg_dt: Mat,
    pub dc_dpsi: Vec<f64>,
    pub dc_dt: Vec<f64>,
}

/// Assembles the flow for the interval starting at `t_k`.
pub fn build_unsafe_flow(
    r_hat: &Ccg,
    bodies: &BodySets,
    t_k: f64,
    duration: f64,
    gamma: f64,
) -> Result<UnsafeFlow, FlowError> {
    bodies.validate()?;
    if r_hat.dim() != 2 {
        return Err(FlowError::InvalidArgument(format!(
            "estimate set has dimension {}",
            r_hat.dim()
        )));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(FlowError::InvalidArgument(format!("smoothing gamma = {gamma}")));
    }
    if !(duration > 0.0 && duration.is_finite()) || !t_k.is_finite() {
        return Err(FlowError::InvalidArgument(format!(
            "interval start {t_k} with duration {duration}"
        )));
    }
    let parts = [
        r_hat,
        &bodies.velocity_set,
        &bodies.ego_shape,
        &bodies.obstacle_shape,
    ];
    let mut offsets = [0; 4];
    let mut start = 0;
    for (off, s) in offsets.iter_mut().zip(parts) {
        *off = start;
        start += s.gen_dim();
    }
    let total = start;
    let mut g_static = Mat::zeros(2, total);
    g_static.set_block(0, offsets[0], r_hat.g());
    g_static.set_block(0, offsets[3], bodies.obstacle_shape.g());
    let c_static: Vec<f64> = r_hat
        .c()
        .iter()
        .zip(bodies.obstacle_shape.c())
        .map(|(a, b)| a + b)
        .collect();

    let mut a = Mat::zeros(0, 0);
    let mut b = Vec::new();
    let mut gens = Vec::new();
    for s in parts {
        a = a.block_diag(s.a());
        b.extend_from_slice(s.b());
        gens.extend_from_slice(s.gens());
    }
    let (a_pinv_b, nul) = if a.rows() == 0 {
        (vec![0.0; total], Mat::identity(total))
    } else {
        let xi0 = pseudo_inverse(&a, DEFAULT_RANK_TOL).map_err(CcgError::from)?.mulv(&b);
        let resid: Vec<f64> = a.mulv(&xi0).iter().zip(&b).map(|(x, y)| x - y).collect();
        let residual = norm(&resid);
        if residual > 1e-9 * (1.0 + norm(&b)) {
            return Err(FlowError::Inconsistent { residual });
        }
        (xi0, nullspace_basis(&a, DEFAULT_RANK_TOL).map_err(CcgError::from)?)
    };
    let sliced = SlicedGenerators::new(&gens, &a_pinv_b, &nul);
    Ok(UnsafeFlow {
        t_k,
        duration,
        gamma,
        r_hat: r_hat.clone(),
        bodies: bodies.clone(),
        offsets,
        g_static,
        c_static,
        g_v: bodies.velocity_set.g().clone(),
        c_v: bodies.velocity_set.c().to_vec(),
        g_e: bodies.ego_shape.g().clone(),
        c_e: bodies.ego_shape.c().to_vec(),
        gens,
        a,
        b,
        a_pinv_b,
        nul,
        sliced,
    })
}

impl UnsafeFlow {
    pub fn t_k(&self) -> f64 {
        self.t_k
    }

    pub fn t_end(&self) -> f64 {
        self.t_k + self.duration
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn r_hat(&self) -> &Ccg {
        &self.r_hat
    }

    pub fn bodies(&self) -> &BodySets {
        &self.bodies
    }

    pub fn generator_count(&self) -> usize {
        self.gens.len()
    }

    /// Columns of `η`.
    pub fn free_dim(&self) -> usize {
        self.nul.cols()
    }

    pub fn nullspace(&self) -> &Mat {
        &self.nul
    }

    pub fn a_pinv_b(&self) -> &[f64] {
        &self.a_pinv_b
    }

    pub fn sliced(&self) -> &SlicedGenerators {
        &self.sliced
    }

    /// `t − t_k`, raised to [`MIN_ELAPSED`] times the duration. The spread
    /// term `(t − t_k)𝒱` is not differentiable at the interval start, and
    /// the barrier derivatives there are meant from the right.
    fn elapsed(&self, t: f64) -> f64 {
        (t - self.t_k).max(MIN_ELAPSED * self.duration)
    }

    fn check_time(&self, t: f64) -> Result<(), FlowError> {
        if !(t >= self.t_k - INTERVAL_SLACK && t <= self.t_end() + INTERVAL_SLACK) {
            return Err(FlowError::OutsideInterval {
                t,
                start: self.t_k,
                end: self.t_end(),
            });
        }
        Ok(())
    }

    /// `G_q(ψ, t)` and `c_q(ψ, t)` before elimination.
    pub fn eval_gq(&self, psi: f64, t: f64) -> Result<(Mat, Vec<f64>), FlowError> {
        self.check_time(t)?;
        let dt = self.elapsed(t);
        let rot = rotation(psi);
        let mut g = self.g_static.clone();
        g.set_block(0, self.offsets[1], &self.g_v.scale(dt));
        g.set_block(0, self.offsets[2], &rot.mul(&self.g_e).scale(-1.0));
        let rce = rot.mulv(&self.c_e);
        let c = (0..2)
            .map(|i| self.c_static[i] + dt * self.c_v[i] - rce[i])
            .collect();
        Ok((g, c))
    }

    /// `G̃ = G_q N`, `c̃ = c_q + G_q A†b`.
    pub fn eval_gc(&self, psi: f64, t: f64) -> Result<FlowGc, FlowError> {
        let (gq, cq) = self.eval_gq(psi, t)?;
        let shift = gq.mulv(&self.a_pinv_b);
        Ok(FlowGc {
            g: gq.mul(&self.nul),
            c: cq.iter().zip(&shift).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn eval_gc_derivatives(&self, psi: f64, t: f64) -> Result<FlowGcDerivatives, FlowError> {
        self.check_time(t)?;
        let total = self.g_static.cols();
        let mut dgq_dt = Mat::zeros(2, total);
        dgq_dt.set_block(0, self.offsets[1], &self.g_v);
        let drot = rotation_derivative(psi);
        let mut dgq_dpsi = Mat::zeros(2, total);
        dgq_dpsi.set_block(0, self.offsets[2], &drot.mul(&self.g_e).scale(-1.0));
        let dce = drot.mulv(&self.c_e);

        let sh_t = dgq_dt.mulv(&self.a_pinv_b);
        let sh_psi = dgq_dpsi.mulv(&self.a_pinv_b);
        Ok(FlowGcDerivatives {
            dg_dpsi: dgq_dpsi.mul(&self.nul),
            dg_dt: dgq_dt.mul(&self.nul),
            dc_dpsi: (0..2).map(|i| -dce[i] + sh_psi[i]).collect(),
            dc_dt: (0..2).map(|i| self.c_v[i] + sh_t[i]).collect(),
        })
    }

    /// The smoothed generator function `f(η)` with the inner shift
    /// `ln(G + 1)/γ`.
    pub fn smoothed_f(&self) -> SmoothMax<'_> {
        SmoothMax::new(
            &self.sliced,
            self.gamma,
            SmoothMax::inner_shift(self.gens.len(), self.gamma),
        )
    }

    /// `Q̂(ψ, t)` as an explicit set, built with the set operations.
    pub fn unsafe_set(&self, psi: f64, t: f64) -> Result<Ccg, FlowError> {
        self.check_time(t)?;
        let dt = self.elapsed(t);
        let neg_rot = rotation(psi).scale(-1.0);
        let set = self
            .r_hat
            .minkowski_sum(&self.bodies.velocity_set.scale(dt))?
            .minkowski_sum(&self.bodies.ego_shape.affine_map(&neg_rot, &[0.0, 0.0])?)?
            .minkowski_sum(&self.bodies.obstacle_shape)?;
        Ok(set)
    }

    /// Constraint data `A ξ = b` of the combined set (independent of `(ψ, t)`).
    pub fn constraints(&self) -> (&Mat, &[f64]) {
        (&self.a, &self.b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rotation_examples() {
        assert_eq!(rotation(0.0), Mat::identity(2));
        let r = rotation(std::f64::consts::FRAC_PI_2);
        let want = Mat::from_rows(&[&[0.0, -1.0], &[1.0, 0.0]]);
        assert!(r.sub(&want).unwrap().max_abs() < 1e-15);
        for psi in [-2.0, 0.3, 1.7] {
            let h = 1e-6;
            let fd = rotation(psi + h).sub(&rotation(psi - h)).unwrap().scale(0.5 / h);
            assert!(fd.sub(&rotation_derivative(psi)).unwrap().max_abs() < 1e-8);
        }
    }
}
