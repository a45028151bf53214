//! Equality-constrained Newton solver and central-difference Jacobians.

use super::linalg::Lu;
use super::matrix::{all_finite, axpy, norm, Mat};
use super::NumericsError;

/// Twice differentiable convex objective for [`kkt_newton_solve`].
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
    fn hessian(&self, x: &[f64]) -> Mat;

    /// Gradient and Hessian together; override when they share work.
    fn gradient_hessian(&self, x: &[f64]) -> (Vec<f64>, Mat) {
        (self.gradient(x), self.hessian(x))
    }
}

/// Adapts closures to [`Objective`].
pub struct FnObjective<V, G, H> {
    pub value: V,
    pub grad: G,
    pub hess: H,
}

impl<V, G, H> Objective for FnObjective<V, G, H>
where
    V: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
    H: Fn(&[f64]) -> Mat,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.grad)(x)
    }

    fn hessian(&self, x: &[f64]) -> Mat {
        (self.hess)(x)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Bound on the stationarity and feasibility residual norms, relative to
    /// `max(1, ‖∇f‖)` and `max(1, ‖rhs‖)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Step halvings allowed per iteration before giving up.
    pub max_halvings: usize,
    /// Added to the Hessian diagonal, relative to `max(1, max|H|)`, when
    /// forming the step. Guards against weights that underflow to zero; the
    /// convergence test still uses the exact gradient.
    pub hessian_floor: f64,
    /// Longest step, relative to `1 + ‖η‖`.
    pub max_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 30,
            hessian_floor: 1e-10,
            max_step: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KktSolution {
    pub eta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub iterations: usize,
    pub dual_residual: f64,
    pub primal_residual: f64,
}

/// Solves the symmetric KKT system after Ruiz scaling, which keeps the
/// constraint block from looking singular next to a large Hessian.
fn equilibrated_solve(kkt: &mut Mat, b: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let n = kkt.rows();
    let mut d = vec![1.0; n];
    for _ in 0..12 {
        let mut r = vec![0.0_f64; n];
        for i in 0..n {
            for j in 0..n {
                r[i] = r[i].max(kkt[(i, j)].abs());
            }
        }
        if r.iter().all(|v| (v - 1.0).abs() < 1e-2 || *v == 0.0) {
            break;
        }
        let s: Vec<f64> = r.iter().map(|&v| if v > 0.0 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        for i in 0..n {
            for j in 0..n {
                let v = kkt[(i, j)] * s[i] * s[j];
                kkt[(i, j)] = v;
            }
            d[i] *= s[i];
        }
    }
    let lu = Lu::new(kkt, 1e-13).map_err(|e| match e {
        NumericsError::Singular { index } => NumericsError::SingularKkt { index },
        other => other,
    })?;
    let scaled_b: Vec<f64> = b.iter().zip(&d).map(|(v, s)| v * s).collect();
    Ok(lu.solve(&scaled_b).iter().zip(&d).map(|(v, s)| v * s).collect())
}

fn kkt_matrix(hess: &Mat, geq: &Mat) -> Mat {
    let (m, n) = geq.shape();
    let mut kkt = Mat::zeros(n + m, n + m);
    kkt.set_block(0, 0, hess);
    kkt.set_block(0, n, &geq.transpose());
    kkt.set_block(n, 0, geq);
    kkt
}

fn primal_residual(geq: &Mat, rhs: &[f64], eta: &[f64]) -> f64 {
    let mut r = geq.mulv(eta);
    axpy(&mut r, -1.0, rhs);
    norm(&r)
}

/// Relative step length below which an iterate that admits no decrease is
/// taken as converged.
const STEP_RESOLUTION: f64 = 1e-12;

/// Relative stationarity residual accepted when the iteration stalls or runs
/// out before reaching the tolerance, i.e. at the roundoff floor.
const STALL_TOL: f64 = 1e-8;

/// Minimizes a strictly convex objective subject to `Geq η = rhs`.
///
/// The start is first projected onto the affine set. Each iteration then
/// solves `[H Gᵀ; G 0][Δη; λ] = [−∇f; rhs − Gη]` and backtracks on the
/// objective value. The solve stops once `‖∇f + Gᵀλ‖` and `‖Gη − rhs‖` are
/// both below the relative tolerance, with `λ` the multiplier of the last
/// system.
pub fn kkt_newton_solve<O: Objective + ?Sized>(
    obj: &O,
    geq: &Mat,
    rhs: &[f64],
    eta0: &[f64],
    opts: &NewtonOptions,
) -> Result<KktSolution, NumericsError> {
    let n = eta0.len();
    let m = rhs.len();
    if geq.shape() != (m, n) {
        return Err(NumericsError::DimensionMismatch {
            op: "kkt_newton_solve",
            left: geq.shape(),
            right: (m, n),
        });
    }
    if !all_finite(eta0) || !all_finite(rhs) || !geq.is_finite() {
        return Err(NumericsError::InvalidArgument("kkt_newton_solve: non-finite input".into()));
    }

    let mut eta = eta0.to_vec();
    if m > 0 && primal_residual(geq, rhs, &eta) > 0.0 {
        // Two feasible candidates: the least-norm correction, and the full
        // Newton step in the local Hessian metric (better from a warm start).
        let mut b = vec![0.0; n + m];
        let geta = geq.mulv(&eta);
        for i in 0..m {
            b[n + i] = rhs[i] - geta[i];
        }
        let sol = equilibrated_solve(&mut kkt_matrix(&Mat::identity(n), geq), &b)?;
        let mut least_norm = eta.clone();
        axpy(&mut least_norm, 1.0, &sol[..n]);

        let (grad, mut hess) = obj.gradient_hessian(&eta);
        let mut best = least_norm;
        if all_finite(&grad) && hess.is_finite() {
            let floor = opts.hessian_floor * hess.max_abs().max(1.0);
            for i in 0..n {
                hess[(i, i)] += floor;
                b[i] = -grad[i];
            }
            if let Ok(sol) = equilibrated_solve(&mut kkt_matrix(&hess, geq), &b) {
                let mut newton = eta.clone();
                axpy(&mut newton, 1.0, &sol[..n]);
                let fn_ = obj.value(&newton);
                if fn_.is_finite() && fn_ < obj.value(&best) {
                    best = newton;
                }
            }
        }
        eta = best;
    }

    let mut f = obj.value(&eta);
    let mut last_residual = f64::INFINITY;
    let mut stalled: Option<KktSolution> = None;
    for iter in 1..=opts.max_iter {
        let (grad, mut hess) = obj.gradient_hessian(&eta);
        if !f.is_finite() || !all_finite(&grad) || !hess.is_finite() {
            return Err(NumericsError::InvalidArgument(format!(
                "kkt_newton_solve: objective not finite at iteration {iter}"
            )));
        }
        let floor = opts.hessian_floor * hess.max_abs().max(1.0);
        for i in 0..n {
            hess[(i, i)] += floor;
        }
        let mut b = Vec::with_capacity(n + m);
        b.extend(grad.iter().map(|g| -g));
        let geta = geq.mulv(&eta);
        b.extend(rhs.iter().zip(&geta).map(|(r, g)| r - g));
        let sol = equilibrated_solve(&mut kkt_matrix(&hess, geq), &b)?;
        let lambda = &sol[n..];

        let mut dual = grad.clone();
        axpy(&mut dual, 1.0, &geq.tmulv(lambda));
        let dual = norm(&dual);
        let primal = primal_residual(geq, rhs, &eta);
        last_residual = dual.hypot(primal);
        let primal_ok = primal <= opts.tol * norm(rhs).max(1.0);
        // A Newton step below the resolution of η cannot be carried out in
        // floating point; the iterate is then stationary to roundoff.
        let negligible = norm(&sol[..n]) <= STEP_RESOLUTION * (1.0 + norm(&eta));
        if primal_ok && (dual <= opts.tol * norm(&grad).max(1.0) || negligible) {
            return Ok(KktSolution {
                eta,
                lambda: lambda.to_vec(),
                iterations: iter,
                dual_residual: dual,
                primal_residual: primal,
            });
        }
        if primal_ok
            && dual <= STALL_TOL * norm(&grad).max(1.0)
            && stalled.as_ref().map_or(true, |s| dual < s.dual_residual)
        {
            stalled = Some(KktSolution {
                eta: eta.clone(),
                lambda: lambda.to_vec(),
                iterations: iter,
                dual_residual: dual,
                primal_residual: primal,
            });
        }
        // Cap the step length: with exponentially small weights some
        // directions are numerically flat and the raw step is meaningless.
        let mut step = sol[..n].to_vec();
        let cap = opts.max_step * (1.0 + norm(&eta));
        let len = norm(&step);
        if len > cap {
            step.iter_mut().for_each(|v| *v *= cap / len);
        }
        let step = &step[..];

        let slope: f64 = grad.iter().zip(step).map(|(g, d)| g * d).sum();
        // Once the predicted decrease is below what the value can resolve,
        // rank trial points by the stationarity residual instead.
        let resolvable = -slope > 1e-12 * f.abs().max(1.0);
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let mut eta_t = eta.clone();
            axpy(&mut eta_t, s, step);
            let ft = obj.value(&eta_t);
            let ok = ft.is_finite()
                && if resolvable {
                    ft < f && ft <= f + 1e-4 * s * slope
                } else {
                    let mut r = obj.gradient(&eta_t);
                    axpy(&mut r, 1.0, &geq.tmulv(lambda));
                    norm(&r) < dual
                };
            if ok {
                eta = eta_t;
                f = ft;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            if let Some(sol) = stalled {
                return Ok(sol);
            }
            return Err(NumericsError::NoConvergence {
                iterations: iter,
                residual: last_residual,
            });
        }
    }
    if let Some(sol) = stalled {
        return Ok(sol);
    }
    Err(NumericsError::NoConvergence {
        iterations: opts.max_iter,
        residual: last_residual,
    })
}

/// Central-difference Jacobian; column `j` is
/// `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn finite_diff_jacobian<F>(f: F, x: &[f64], step: f64) -> Result<Mat, NumericsError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    try_finite_diff_jacobian(|v| Ok::<_, NumericsError>(f(v)), x, step)
}

/// [`finite_diff_jacobian`] for fallible functions.
pub fn try_finite_diff_jacobian<F, E>(f: F, x: &[f64], step: f64) -> Result<Mat, E>
where
    F: Fn(&[f64]) -> Result<Vec<f64>, E>,
    E: From<NumericsError>,
{
    if !(step > 0.0) {
        return Err(NumericsError::InvalidArgument(format!("finite difference step {step}")).into());
    }
    let mut jac: Option<Mat> = None;
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        xp[j] = x[j] + step;
        let fp = f(&xp)?;
        xp[j] = x[j] - step;
        let fm = f(&xp)?;
        xp[j] = x[j];
        if !all_finite(&fp) || !all_finite(&fm) || fp.len() != fm.len() {
            return Err(NumericsError::InvalidArgument(
                "finite difference: function returned non-finite values".into(),
            )
            .into());
        }
        let jm = jac.get_or_insert_with(|| Mat::zeros(fp.len(), x.len()));
        for i in 0..fp.len() {
            jm[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    match jac {
        Some(m) => Ok(m),
        None => {
            let f0 = f(x)?;
            Ok(Mat::zeros(f0.len(), 0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::solve;

    fn sq_norm() -> FnObjective<impl Fn(&[f64]) -> f64, impl Fn(&[f64]) -> Vec<f64>, impl Fn(&[f64]) -> Mat> {
        FnObjective {
            value: |x: &[f64]| x.iter().map(|v| v * v).sum(),
            grad: |x: &[f64]| x.iter().map(|v| 2.0 * v).collect(),
            hess: |x: &[f64]| Mat::identity(x.len()).scale(2.0),
        }
    }

    #[test]
    fn constrained_quadratic_analytic() {
        let geq = Mat::from_rows(&[&[1.0, 0.0]]);
        let sol =
            kkt_newton_solve(&sq_norm(), &geq, &[2.0], &[0.3, -0.7], &NewtonOptions::default())
                .unwrap();
        assert!((sol.eta[0] - 2.0).abs() < 1e-9 && sol.eta[1].abs() < 1e-9);
        assert!((sol.lambda[0] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_minimum() {
        let sol = kkt_newton_solve(&sq_norm(), &Mat::zeros(0, 3), &[], &[1.0, 2.0, 3.0], &NewtonOptions::default())
            .unwrap();
        assert!(sol.eta.iter().all(|v| v.abs() < 1e-12));
        assert!(sol.lambda.is_empty());
    }

    #[test]
    fn warm_start_at_solution_takes_one_iteration() {
        let geq = Mat::from_rows(&[&[1.0, 0.0]]);
        let sol =
            kkt_newton_solve(&sq_norm(), &geq, &[2.0], &[2.0, 0.0], &NewtonOptions::default()).unwrap();
        assert_eq!(sol.iterations, 1);
    }

    #[test]
    fn matches_direct_linear_solve_on_quadratic() {
        // f = ½ xᵀQx + qᵀx, one constraint
        let q = Mat::from_rows(&[&[4.0, 1.0, 0.0], &[1.0, 3.0, 0.5], &[0.0, 0.5, 2.0]]);
        let lin = [1.0, -2.0, 0.5];
        let geq = Mat::from_rows(&[&[1.0, 1.0, 1.0]]);
        let obj = FnObjective {
            value: |x: &[f64]| 0.5 * x.iter().zip(q.mulv(x)).map(|(a, b)| a * b).sum::<f64>()
                + x.iter().zip(&lin).map(|(a, b)| a * b).sum::<f64>(),
            grad: |x: &[f64]| {
                let mut g = q.mulv(x);
                axpy(&mut g, 1.0, &lin);
                g
            },
            hess: |_x: &[f64]| q.clone(),
        };
        let sol = kkt_newton_solve(&obj, &geq, &[1.0], &[0.0; 3], &NewtonOptions::default()).unwrap();
        let mut kkt = Mat::zeros(4, 4);
        kkt.set_block(0, 0, &q);
        kkt.set_block(0, 3, &geq.transpose());
        kkt.set_block(3, 0, &geq);
        let direct = solve(&kkt, &[-1.0, 2.0, -0.5, 1.0]).unwrap();
        for i in 0..3 {
            assert!((sol.eta[i] - direct[i]).abs() < 1e-10);
        }
        assert!((sol.lambda[0] - direct[3]).abs() < 1e-10);
    }

    #[test]
    fn damped_steps_on_non_quadratic() {
        // f = Σ exp(x_i) + ½‖x‖² (strictly convex, Newton needs damping from far away)
        let obj = FnObjective {
            value: |x: &[f64]| x.iter().map(|v| v.exp() + 0.5 * v * v).sum(),
            grad: |x: &[f64]| x.iter().map(|v| v.exp() + v).collect(),
            hess: |x: &[f64]| Mat::from_diag(&x.iter().map(|v| v.exp() + 1.0).collect::<Vec<_>>()),
        };
        let geq = Mat::from_rows(&[&[1.0, -1.0]]);
        let sol = kkt_newton_solve(&obj, &geq, &[0.5], &[20.0, -20.0], &NewtonOptions::default())
            .unwrap();
        assert!(sol.dual_residual <= 1e-10 && sol.primal_residual <= 1e-10);
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let opts = NewtonOptions {
            max_iter: 1,
            ..Default::default()
        };
        let obj = FnObjective {
            value: |x: &[f64]| x.iter().map(|v| v.exp() - v).sum(),
            grad: |x: &[f64]| x.iter().map(|v| v.exp() - 1.0).collect(),
            hess: |x: &[f64]| Mat::from_diag(&x.iter().map(|v| v.exp()).collect::<Vec<_>>()),
        };
        match kkt_newton_solve(&obj, &Mat::zeros(0, 1), &[], &[5.0], &opts) {
            Err(NumericsError::NoConvergence { residual, .. }) => assert!(residual > 0.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rank_deficient_constraints_are_singular() {
        let geq = Mat::from_rows(&[&[1.0, 0.0], &[2.0, 0.0]]);
        let r = kkt_newton_solve(&sq_norm(), &geq, &[1.0, 2.0], &[0.0, 0.0], &NewtonOptions::default());
        assert!(matches!(r, Err(NumericsError::SingularKkt { .. })));
    }

    #[test]
    fn fd_jacobian_examples() {
        let id = finite_diff_jacobian(|x| x.to_vec(), &[0.3, -1.0], 1e-5).unwrap();
        assert!(id.sub(&Mat::identity(2)).unwrap().max_abs() < 1e-10);
        let j = finite_diff_jacobian(|x| vec![x[0] * x[0], x[0] * x[1]], &[1.0, 1.0], 1e-5).unwrap();
        let exact = Mat::from_rows(&[&[2.0, 0.0], &[1.0, 1.0]]);
        assert!(j.sub(&exact).unwrap().max_abs() < 1e-8);
        let c = finite_diff_jacobian(|_| vec![3.0, 4.0], &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(c, Mat::zeros(2, 3));
        assert!(finite_diff_jacobian(|_| vec![f64::NAN], &[1.0], 1e-5).is_err());
        assert!(finite_diff_jacobian(|x| x.to_vec(), &[1.0], 0.0).is_err());
    }
}
