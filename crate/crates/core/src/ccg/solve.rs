//! Support function and membership oracles.
//!
//! Both reduce to the affine slice `ξ = ξ₀ + N η` cut out by the equality
//! constraints. Membership asks whether `min_η max_i g_i ≤ tol`; the inner
//! min-max is bracketed by log-sum-exp smoothing with increasing sharpness,
//! using `F_γ − ln(G)/γ ≤ min max g ≤ max g(η_γ)`. The support function uses
//! a log barrier started from a strictly feasible point found the same way.

use super::sliced::{SlicedGenerators, SmoothMax};
use super::{Ccg, CcgError};
use crate::numerics::{
    cholesky, cholesky_solve, dot, norm, nullspace_basis, pseudo_inverse, Mat, NumericsError,
    DEFAULT_RANK_TOL,
};

const GAMMAS: [f64; 11] = [1.0, 1e1, 1e2, 1e3, 1e4, 1e5, 1e6, 1e7, 1e8, 1e9, 1e10];
const BARRIER_GAP: f64 = 1e-10;

/// Slack on the equality constraints below which a slice is consistent.
const CONSISTENCY_TOL: f64 = 1e-9;

/// Default tolerance of [`Ccg::contains`] style queries.
pub const DEFAULT_CONTAINS_TOL: f64 = 1e-9;

struct Slice {
    xi0: Vec<f64>,
    basis: Mat,
}

/// `{ξ : E ξ = rhs}` as `ξ₀ + N η`, or `None` when inconsistent.
fn affine_slice(e: &Mat, rhs: &[f64]) -> Result<Option<Slice>, CcgError> {
    let n = e.cols();
    if e.rows() == 0 {
        return Ok(Some(Slice {
            xi0: vec![0.0; n],
            basis: Mat::identity(n),
        }));
    }
    let pinv = pseudo_inverse(e, DEFAULT_RANK_TOL)?;
    let xi0 = pinv.mulv(rhs);
    let resid: f64 = norm(
        &e.mulv(&xi0)
            .iter()
            .zip(rhs)
            .map(|(a, b)| a - b)
            .collect::<Vec<_>>(),
    );
    let scale = 1.0 + norm(rhs).max(e.frobenius_norm() * norm(&xi0));
    if resid > CONSISTENCY_TOL * scale {
        return Ok(None);
    }
    let basis = nullspace_basis(e, DEFAULT_RANK_TOL)?;
    Ok(Some(Slice { xi0, basis }))
}

struct Bracket {
    eta: Vec<f64>,
    lower: f64,
    upper: f64,
}

/// Tightens `lower ≤ min_η max_i g_i(η) ≤ upper` until `decide` returns a
/// verdict. `upper` is always attained at the returned `eta`.
fn bracket_min_max<T>(
    sliced: &SlicedGenerators,
    mut decide: impl FnMut(&Bracket) -> Option<T>,
) -> Result<(T, Bracket), CcgError> {
    let k = sliced.free_dim();
    let count = sliced.count();
    if count == 0 || k == 0 {
        let eta = vec![0.0; k];
        let m = sliced.max_value(&eta);
        let br = Bracket {
            eta,
            lower: m,
            upper: m,
        };
        return match decide(&br) {
            Some(v) => Ok((v, br)),
            None => Err(CcgError::Indeterminate(format!("max generator value {m:e} at tolerance"))),
        };
    }
    let mut eta = vec![0.0; k];
    let mut best: Option<Bracket> = None;
    let lng = (count as f64).ln();
    for gamma in GAMMAS {
        let obj = SmoothMax::new(sliced, gamma, 0.0);
        let res = damped_newton(
            |e| obj.value(e),
            |e| {
                let (_, g, h) = obj.value_gradient_hessian(e);
                (g, h)
            },
            eta.clone(),
        );
        let (sol, half_dec) = match res {
            Ok(r) => r,
            Err(_) if best.is_some() => break,
            Err(e) => return Err(e.into()),
        };
        eta = sol;
        let f = obj.value(&eta);
        let upper = sliced.max_value(&eta);
        let lower = f - lng / gamma - half_dec;
        let br = match best.take() {
            Some(b) => Bracket {
                lower: b.lower.max(lower),
                upper: if upper < b.upper { upper } else { b.upper },
                eta: if upper < b.upper { eta.clone() } else { b.eta },
            },
            None => Bracket {
                eta: eta.clone(),
                lower,
                upper,
            },
        };
        if let Some(v) = decide(&br) {
            return Ok((v, br));
        }
        best = Some(br);
    }
    let b = best.expect("at least one sharpness level solved");
    Err(CcgError::Indeterminate(format!(
        "min-max generator value in [{:e}, {:e}]",
        b.lower, b.upper
    )))
}

impl Ccg {
    fn sliced(&self, slice: &Slice) -> SlicedGenerators {
        SlicedGenerators::new(self.gens(), &slice.xi0, &slice.basis)
    }

    /// Whether `x` lies in the set, with generator constraints relaxed to
    /// `g_i ≤ tol`. Returns [`CcgError::Indeterminate`] when `x` is within
    /// solver accuracy of the relaxed boundary.
    pub fn contains(&self, x: &[f64], tol: f64) -> Result<bool, CcgError> {
        if x.len() != self.dim() {
            return Err(CcgError::DimensionMismatch(format!(
                "point of length {} for set of dimension {}",
                x.len(),
                self.dim()
            )));
        }
        let e = self.a().vstack(self.g())?;
        let mut rhs = self.b().to_vec();
        rhs.extend(x.iter().zip(self.c()).map(|(xi, ci)| xi - ci));
        let Some(slice) = affine_slice(&e, &rhs)? else {
            return Ok(false);
        };
        let sliced = self.sliced(&slice);
        let (v, _) = bracket_min_max(&sliced, |b| {
            if b.upper <= tol {
                Some(true)
            } else if b.lower > tol {
                Some(false)
            } else {
                None
            }
        })?;
        Ok(v)
    }

    /// Verifies that the set is nonempty. Returns the smallest achievable
    /// generator maximum bound on failure.
    pub fn check_feasible(&self) -> Result<(), CcgError> {
        let Some(slice) = affine_slice(self.a(), self.b())? else {
            return Err(CcgError::Infeasible {
                min_max: f64::INFINITY,
            });
        };
        let sliced = self.sliced(&slice);
        let (ok, br) = bracket_min_max(&sliced, |b| {
            if b.upper <= 0.0 {
                Some(true)
            } else if b.lower > 0.0 {
                Some(false)
            } else {
                None
            }
        })?;
        if ok {
            Ok(())
        } else {
            Err(CcgError::Infeasible { min_max: br.lower })
        }
    }

    /// Support function `max { dᵀx : x ∈ Z }`.
    pub fn support(&self, d: &[f64]) -> Result<f64, CcgError> {
        Ok(self.support_point(d)?.0)
    }

    /// Support value together with a maximizer.
    pub fn support_point(&self, d: &[f64]) -> Result<(f64, Vec<f64>), CcgError> {
        if d.len() != self.dim() {
            return Err(CcgError::DimensionMismatch(format!(
                "direction of length {} for set of dimension {}",
                d.len(),
                self.dim()
            )));
        }
        let Some(slice) = affine_slice(self.a(), self.b())? else {
            return Err(CcgError::Infeasible {
                min_max: f64::INFINITY,
            });
        };
        let sliced = self.sliced(&slice);
        let gd = self.g().tmulv(d);
        let cvec = slice.basis.tmulv(&gd);
        let point_at = |eta: &[f64]| {
            let mut xi = slice.basis.mulv(eta);
            for (x, o) in xi.iter_mut().zip(&slice.xi0) {
                *x += o;
            }
            let mut x = self.g().mulv(&xi);
            for (xv, c) in x.iter_mut().zip(self.c()) {
                *xv += c;
            }
            x
        };

        // strictly feasible start; a set with empty relative interior is
        // accepted when its generator maximum is zero to solver accuracy
        let (strict, br) = bracket_min_max(&sliced, |b| {
            if b.upper < 0.0 {
                Some(true)
            } else if b.lower > 0.0 {
                Some(false)
            } else if b.upper <= CONSISTENCY_TOL {
                Some(true)
            } else {
                None
            }
        })?;
        if !strict {
            return Err(CcgError::Infeasible { min_max: br.lower });
        }
        if br.upper >= 0.0 || sliced.count() == 0 || sliced.free_dim() == 0 {
            let x = point_at(&br.eta);
            return Ok((dot(d, &x), x));
        }

        let count = sliced.count() as f64;
        let cnorm = norm(&cvec);
        let mut eta = br.eta;
        let mut t = 1.0 / cnorm.max(1e-300);
        loop {
            let obj = Barrier {
                sliced: &sliced,
                cvec: &cvec,
                t,
            };
            eta = obj.center(eta)?;
            if cnorm == 0.0 || count / t <= BARRIER_GAP * (1.0 + dot(&cvec, &eta).abs()) {
                break;
            }
            t *= 10.0;
        }
        let x = point_at(&eta);
        Ok((dot(d, &x), x))
    }
}

/// Unconstrained damped Newton with Armijo backtracking on the value, which
/// may be `+∞` outside the domain. Stops when half the Newton decrement
/// falls below a relative threshold or rounding prevents further decrease.
/// Returns the point and the final half decrement.
fn damped_newton(
    value: impl Fn(&[f64]) -> f64,
    grad_hess: impl Fn(&[f64]) -> (Vec<f64>, Mat),
    mut eta: Vec<f64>,
) -> Result<(Vec<f64>, f64), NumericsError> {
    let mut f = value(&eta);
    let mut half_dec = f64::INFINITY;
    for _ in 0..300 {
        let (g, h) = grad_hess(&eta);
        let step = match cholesky(&h) {
            Ok(l) => cholesky_solve(&l, &g),
            Err(_) => {
                let mut hr = h.clone();
                let eps = 1e-12 * h.max_abs().max(1e-300);
                for i in 0..hr.rows() {
                    hr[(i, i)] += eps;
                }
                cholesky_solve(&cholesky(&hr)?, &g)
            }
        };
        let decrement = dot(&g, &step);
        if !decrement.is_finite() {
            return Err(NumericsError::InvalidArgument("Newton step not finite".into()));
        }
        half_dec = decrement / 2.0;
        if half_dec <= 1e-15 * (1.0 + f.abs()) {
            return Ok((eta, half_dec));
        }
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..60 {
            let trial: Vec<f64> = eta.iter().zip(&step).map(|(e, d)| e - s * d).collect();
            let ft = value(&trial);
            if ft < f && ft <= f - 0.25 * s * decrement {
                eta = trial;
                f = ft;
                moved = true;
                break;
            }
            s *= 0.5;
        }
        if !moved {
            // rounding floor reached
            return Ok((eta, half_dec));
        }
    }
    Err(NumericsError::NoConvergence {
        iterations: 300,
        residual: half_dec,
    })
}

/// `−t cᵀη − Σ ln(−g_i(η))`.
struct Barrier<'a> {
    sliced: &'a SlicedGenerators,
    cvec: &'a [f64],
    t: f64,
}

impl Barrier<'_> {
    /// `+∞` outside the strict interior.
    fn value(&self, eta: &[f64]) -> f64 {
        let vals = self.sliced.values(eta);
        if vals.iter().any(|v| !(*v < 0.0)) {
            return f64::INFINITY;
        }
        -self.t * dot(self.cvec, eta) - vals.iter().map(|v| (-v).ln()).sum::<f64>()
    }

    fn center(&self, eta: Vec<f64>) -> Result<Vec<f64>, CcgError> {
        Ok(damped_newton(|e| self.value(e), |e| self.gradient_hessian(e), eta)?.0)
    }

    fn gradient_hessian(&self, eta: &[f64]) -> (Vec<f64>, Mat) {
        let d = self.sliced.derivs(eta);
        let n = eta.len();
        let mut g: Vec<f64> = self.cvec.iter().map(|c| -self.t * c).collect();
        let mut h = Mat::zeros(n, n);
        for i in 0..d.values.len() {
            let v = d.values[i];
            for (a, b) in g.iter_mut().zip(&d.gradients[i]) {
                *a -= b / v;
            }
            h.add_scaled(-1.0 / v, &d.hessians[i]);
            h.add_outer(1.0 / (v * v), &d.gradients[i], &d.gradients[i]);
        }
        h.symmetrize();
        (g, h)
    }
}
