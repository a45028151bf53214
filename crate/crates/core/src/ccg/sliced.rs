//! Generator constraints restricted to an affine slice `ξ = ξ₀ + N η`, and
//! the log-sum-exp smoothing of their maximum.

use super::GeneratorFn;
use crate::numerics::{Mat, Objective};

#[derive(Debug, Clone)]
struct Block {
    gen: GeneratorFn,
    offset: Vec<f64>,
    map: Mat,
}

/// The functions `η ↦ g_i(S_i(ξ₀ + N η))`, where `S_i` selects the
/// coordinates of generator block `i`.
#[derive(Debug, Clone)]
pub struct SlicedGenerators {
    blocks: Vec<Block>,
    free_dim: usize,
}

/// Values, gradients and Hessians of all components at one point.
#[derive(Debug, Clone)]
pub struct ComponentDerivs {
    pub values: Vec<f64>,
    pub gradients: Vec<Vec<f64>>,
    pub hessians: Vec<Mat>,
}

impl SlicedGenerators {
    /// `xi0` and `basis` must have as many rows as the generators have
    /// coordinates in total.
    pub fn new(gens: &[GeneratorFn], xi0: &[f64], basis: &Mat) -> Self {
        let total: usize = gens.iter().map(GeneratorFn::dim).sum();
        assert_eq!(xi0.len(), total, "slice offset length");
        assert_eq!(basis.rows(), total, "slice basis rows");
        let mut start = 0;
        let blocks = gens
            .iter()
            .map(|g| {
                let d = g.dim();
                let b = Block {
                    gen: g.clone(),
                    offset: xi0[start..start + d].to_vec(),
                    map: basis.row_range(start, start + d),
                };
                start += d;
                b
            })
            .collect();
        Self {
            blocks,
            free_dim: basis.cols(),
        }
    }

    pub fn count(&self) -> usize {
        self.blocks.len()
    }

    pub fn free_dim(&self) -> usize {
        self.free_dim
    }

    fn local(b: &Block, eta: &[f64]) -> Vec<f64> {
        let mut x = b.map.mulv(eta);
        for (xi, o) in x.iter_mut().zip(&b.offset) {
            *xi += o;
        }
        x
    }

    pub fn values(&self, eta: &[f64]) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| b.gen.value(&Self::local(b, eta)))
            .collect()
    }

    pub fn max_value(&self, eta: &[f64]) -> f64 {
        self.values(eta).into_iter().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn values_gradients(&self, eta: &[f64]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut vals = Vec::with_capacity(self.blocks.len());
        let mut grads = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let x = Self::local(b, eta);
            vals.push(b.gen.value(&x));
            grads.push(b.map.tmulv(&b.gen.gradient(&x)));
        }
        (vals, grads)
    }

    pub fn derivs(&self, eta: &[f64]) -> ComponentDerivs {
        let n = self.free_dim;
        let mut out = ComponentDerivs {
            values: Vec::with_capacity(self.blocks.len()),
            gradients: Vec::with_capacity(self.blocks.len()),
            hessians: Vec::with_capacity(self.blocks.len()),
        };
        for b in &self.blocks {
            let x = Self::local(b, eta);
            out.values.push(b.gen.value(&x));
            out.gradients.push(b.map.tmulv(&b.gen.gradient(&x)));
            // Mᵀ diag(h) M
            let h = b.gen.hessian_diag(&x);
            let mut hess = Mat::zeros(n, n);
            for (k, hk) in h.iter().enumerate() {
                let row = b.map.row(k);
                hess.add_outer(*hk, row, row);
            }
            out.hessians.push(hess);
        }
        out
    }
}

/// `γ⁻¹ ln Σ exp(γ vᵢ)` together with the softmax weights, computed with the
/// maximum shifted out.
pub fn log_sum_exp(values: &[f64], gamma: f64) -> (f64, Vec<f64>) {
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !vmax.is_finite() {
        return (vmax, vec![f64::NAN; values.len()]);
    }
    let mut w: Vec<f64> = values.iter().map(|v| (gamma * (v - vmax)).exp()).collect();
    let sum: f64 = w.iter().sum();
    for wi in &mut w {
        *wi /= sum;
    }
    (vmax + sum.ln() / gamma, w)
}

/// `f(η) = γ⁻¹ ln Σ exp(γ gᵢ(η)) − shift`.
///
/// With `shift = ln(G + 1)/γ` and `G` components the zero sublevel set of
/// `f` lies inside the intersection of the `gᵢ ≤ 0`.
#[derive(Debug, Clone)]
pub struct SmoothMax<'a> {
    pub sliced: &'a SlicedGenerators,
    pub gamma: f64,
    pub shift: f64,
}

impl<'a> SmoothMax<'a> {
    pub fn new(sliced: &'a SlicedGenerators, gamma: f64, shift: f64) -> Self {
        Self {
            sliced,
            gamma,
            shift,
        }
    }

    /// The inner-approximating shift `ln(G + 1)/γ`.
    pub fn inner_shift(count: usize, gamma: f64) -> f64 {
        ((count + 1) as f64).ln() / gamma
    }

    pub fn value(&self, eta: &[f64]) -> f64 {
        log_sum_exp(&self.sliced.values(eta), self.gamma).0 - self.shift
    }

    pub fn value_gradient_hessian(&self, eta: &[f64]) -> (f64, Vec<f64>, Mat) {
        let n = self.sliced.free_dim();
        let d = self.sliced.derivs(eta);
        let (f, w) = log_sum_exp(&d.values, self.gamma);
        let mut grad = vec![0.0; n];
        let mut hess = Mat::zeros(n, n);
        for i in 0..w.len() {
            for (g, gi) in grad.iter_mut().zip(&d.gradients[i]) {
                *g += w[i] * gi;
            }
            hess.add_scaled(w[i], &d.hessians[i]);
            hess.add_outer(self.gamma * w[i], &d.gradients[i], &d.gradients[i]);
        }
        hess.add_outer(-self.gamma, &grad, &grad);
        hess.symmetrize();
        (f - self.shift, grad, hess)
    }
}

impl Objective for SmoothMax<'_> {
    fn value(&self, eta: &[f64]) -> f64 {
        SmoothMax::value(self, eta)
    }

    fn gradient(&self, eta: &[f64]) -> Vec<f64> {
        let (vals, grads) = self.sliced.values_gradients(eta);
        let (_, w) = log_sum_exp(&vals, self.gamma);
        let mut g = vec![0.0; self.sliced.free_dim()];
        for (wi, gi) in w.iter().zip(&grads) {
            for (a, b) in g.iter_mut().zip(gi) {
                *a += wi * b;
            }
        }
        g
    }

    fn hessian(&self, eta: &[f64]) -> Mat {
        self.value_gradient_hessian(eta).2
    }

    fn gradient_hessian(&self, eta: &[f64]) -> (Vec<f64>, Mat) {
        let (_, g, h) = self.value_gradient_hessian(eta);
        (g, h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{finite_diff_jacobian, RngState};

    #[test]
    fn log_sum_exp_bounds_the_max() {
        let v = [0.3, -1.0, 0.29];
        for gamma in [1.0, 10.0, 1e4] {
            let (f, w) = log_sum_exp(&v, gamma);
            assert!(f >= 0.3 && f <= 0.3 + (3f64).ln() / gamma + 1e-15);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        }
        // no overflow for large arguments
        let (f, _) = log_sum_exp(&[1e3, 1e3], 100.0);
        assert!((f - 1e3 - 2f64.ln() / 100.0).abs() < 1e-9);
    }

    #[test]
    fn smooth_max_derivatives_match_finite_differences() {
        let gens = vec![
            GeneratorFn::ball(2),
            GeneratorFn::smooth_box(2, 2, 1e-2),
            GeneratorFn::ball(1),
        ];
        let mut rng = RngState::new(5);
        let basis = Mat::new(5, 3, (0..15).map(|_| rng.uniform_range(-1.0, 1.0)).collect()).unwrap();
        let xi0: Vec<f64> = (0..5).map(|_| rng.uniform_range(-0.3, 0.3)).collect();
        let sliced = SlicedGenerators::new(&gens, &xi0, &basis);
        for gamma in [3.0, 30.0] {
            let sm = SmoothMax::new(&sliced, gamma, SmoothMax::inner_shift(3, gamma));
            for _ in 0..10 {
                let eta: Vec<f64> = (0..3).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
                let (_, g, h) = sm.value_gradient_hessian(&eta);
                let fd = finite_diff_jacobian(|e| vec![sm.value(e)], &eta, 1e-6).unwrap();
                let fdh = finite_diff_jacobian(|e| sm.gradient(e), &eta, 1e-6).unwrap();
                for j in 0..3 {
                    assert!((fd[(0, j)] - g[j]).abs() < 1e-6 * (1.0 + g[j].abs()));
                }
                assert!(fdh.sub(&h).unwrap().max_abs() < 1e-4 * (1.0 + h.max_abs()));
            }
        }
    }
}
