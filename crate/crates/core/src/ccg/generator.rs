use serde::{Deserialize, Serialize};

use crate::numerics::Mat;

/// Smooth strictly convex function whose zero-sublevel set is one generator
/// block. Both variants satisfy `g(0) = -1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorFn {
    /// `‖ξ‖² − 1`
    Ball2 { dim: usize },
    /// `Σ ξᵢ^{2m} + ε‖ξ‖² − 1`, a smooth stand-in for the unit box.
    SmoothBox { dim: usize, power: u32, reg: f64 },
}

impl GeneratorFn {
    pub fn ball(dim: usize) -> Self {
        Self::Ball2 { dim }
    }

    pub fn smooth_box(dim: usize, power: u32, reg: f64) -> Self {
        Self::SmoothBox { dim, power, reg }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Ball2 { dim } | Self::SmoothBox { dim, .. } => dim,
        }
    }

    pub(crate) fn validate(&self) -> Result<(), String> {
        match *self {
            Self::Ball2 { dim } if dim == 0 => Err("ball generator with zero dimension".into()),
            Self::SmoothBox { dim, power, reg } => {
                if dim == 0 {
                    Err("smooth box with zero dimension".into())
                } else if power == 0 {
                    Err("smooth box power must be >= 1".into())
                } else if !(reg > 0.0 && reg.is_finite()) {
                    Err(format!("smooth box regularization {reg} must be positive"))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn value(&self, xi: &[f64]) -> f64 {
        debug_assert_eq!(xi.len(), self.dim());
        match *self {
            Self::Ball2 { .. } => xi.iter().map(|x| x * x).sum::<f64>() - 1.0,
            Self::SmoothBox { power, reg, .. } => {
                let e = 2 * power as i32;
                xi.iter().map(|x| x.powi(e) + reg * x * x).sum::<f64>() - 1.0
            }
        }
    }

    pub fn gradient(&self, xi: &[f64]) -> Vec<f64> {
        match *self {
            Self::Ball2 { .. } => xi.iter().map(|x| 2.0 * x).collect(),
            Self::SmoothBox { power, reg, .. } => {
                let m2 = 2.0 * f64::from(power);
                let e = 2 * power as i32 - 1;
                xi.iter().map(|x| m2 * x.powi(e) + 2.0 * reg * x).collect()
            }
        }
    }

    /// Diagonal of the Hessian (both variants are separable).
    pub fn hessian_diag(&self, xi: &[f64]) -> Vec<f64> {
        match *self {
            Self::Ball2 { .. } => vec![2.0; xi.len()],
            Self::SmoothBox { power, reg, .. } => {
                let m2 = 2.0 * f64::from(power);
                let e = 2 * power as i32 - 2;
                xi.iter().map(|x| m2 * (m2 - 1.0) * x.powi(e) + 2.0 * reg).collect()
            }
        }
    }

    pub fn hessian(&self, xi: &[f64]) -> Mat {
        Mat::from_diag(&self.hessian_diag(xi))
    }

    /// Scale `s ≥ 1` such that `s·{g ≤ 0}` contains the unit box `[-1, 1]^dim`
    /// with the corners on the boundary. Balls need `√dim`.
    pub fn box_enclosing_scale(&self) -> f64 {
        let n = self.dim() as f64;
        match *self {
            Self::Ball2 { .. } => n.sqrt(),
            Self::SmoothBox { power, reg, .. } => {
                // n·s^{-2m} + ε·n·s^{-2} = 1, decreasing in s
                let e = 2 * power as i32;
                let f = |s: f64| n * s.powi(-e) + reg * n * s.powi(-2) - 1.0;
                let (mut lo, mut hi) = (1.0_f64, 2.0_f64);
                while f(hi) > 0.0 {
                    hi *= 2.0;
                }
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                hi
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_jacobian, symmetric_eigenvalues, RngState};

    fn variants() -> Vec<GeneratorFn> {
        vec![
            GeneratorFn::ball(1),
            GeneratorFn::ball(3),
            GeneratorFn::smooth_box(2, 4, 1e-3),
            GeneratorFn::smooth_box(3, 1, 0.5),
        ]
    }

    #[test]
    fn origin_value_is_minus_one() {
        for g in variants() {
            assert_eq!(g.value(&vec![0.0; g.dim()]), -1.0);
        }
    }

    #[test]
    fn derivatives_match_finite_differences_and_hessian_is_pd() {
        let mut rng = RngState::new(17);
        for g in variants() {
            for _ in 0..20 {
                let x: Vec<f64> = (0..g.dim()).map(|_| rng.uniform_range(-1.5, 1.5)).collect();
                let fd = finite_diff_jacobian(|v| vec![g.value(v)], &x, 1e-6).unwrap();
                let grad = g.gradient(&x);
                for j in 0..g.dim() {
                    assert!((fd[(0, j)] - grad[j]).abs() < 1e-5 * (1.0 + grad[j].abs()));
                }
                let fdh = finite_diff_jacobian(|v| g.gradient(v), &x, 1e-6).unwrap();
                let h = g.hessian(&x);
                assert!(fdh.sub(&h).unwrap().max_abs() < 1e-4 * (1.0 + h.max_abs()));
                let ev = symmetric_eigenvalues(&h).unwrap();
                assert!(ev[0] > 0.0);
            }
        }
    }

    #[test]
    fn enclosing_scale_puts_corner_on_boundary() {
        let g = GeneratorFn::smooth_box(2, 4, 1e-3);
        let s = g.box_enclosing_scale();
        assert!(s > 1.0 && s < 1.1);
        assert!(g.value(&[1.0 / s, 1.0 / s]).abs() < 1e-12);
        assert!((GeneratorFn::ball(2).box_enclosing_scale() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters_rejected() {
        assert!(GeneratorFn::smooth_box(2, 0, 1e-3).validate().is_err());
        assert!(GeneratorFn::smooth_box(2, 4, 0.0).validate().is_err());
        assert!(GeneratorFn::ball(0).validate().is_err());
    }
}
