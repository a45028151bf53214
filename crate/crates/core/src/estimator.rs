//! Sliding-window least-squares estimate of the obstacle position and its
//! chi-square confidence ellipsoid.
//!
//! Over a window of `N` samples the trajectory is modeled as `Θᵀφ(t)` with a
//! polynomial basis `φ`. The fitted position at the newest sample is linear
//! in the measurements, `r̂ = Σ a_i y_i`, so its error covariance is
//! `Π = Σ a_i² Σ_i` when the per-sample noises are independent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::ccg::{make_ellipsoid, Ccg, CcgError};
use crate::numerics::{chi2_quantile, cholesky, pseudo_inverse, svd, Mat, NumericsError};

const RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EstimatorError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("estimator not ready: {have} of {need} samples")]
    NotReady { have: usize, need: usize },
    #[error("design matrix has numerical rank {rank}, need {needed}")]
    RankDeficient { rank: usize, needed: usize },
    #[error("degenerate error covariance: {0}")]
    Degenerate(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Set(#[from] CcgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisKind {
    Polynomial,
}

/// Basis `φ(t) = (1, τ, …, τ^d)` with `τ = t − t_first` when re-centered.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisSpec {
    pub kind: BasisKind,
    pub degree: usize,
    pub recenter: bool,
}

impl BasisSpec {
    pub fn polynomial(degree: usize) -> Self {
        Self {
            kind: BasisKind::Polynomial,
            degree,
            recenter: true,
        }
    }

    /// Number of basis functions `q`.
    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn eval(&self, tau: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        let mut p = 1.0;
        for _ in 0..self.len() {
            v.push(p);
            p *= tau;
        }
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub t: f64,
    pub y: Vec<f64>,
    pub cov: Mat,
}

/// The `N` most recent measurements, oldest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorWindow {
    capacity: usize,
    entries: VecDeque<Measurement>,
}

impl EstimatorWindow {
    pub fn new(capacity: usize) -> Result<Self, EstimatorError> {
        if capacity == 0 {
            return Err(EstimatorError::InvalidArgument("window capacity must be >= 1".into()));
        }
        Ok(Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_ready(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn entries(&self) -> impl Iterator<Item = &Measurement> {
        self.entries.iter()
    }

    pub fn latest(&self) -> Option<&Measurement> {
        self.entries.back()
    }

    /// Appends a sample, evicting the oldest one when full.
    pub fn push_measurement(&mut self, t: f64, y: Vec<f64>, cov: Mat) -> Result<(), EstimatorError> {
        if !t.is_finite() || y.iter().any(|v| !v.is_finite()) {
            return Err(EstimatorError::InvalidArgument("non-finite measurement".into()));
        }
        if let Some(last) = self.entries.back() {
            if t <= last.t {
                return Err(EstimatorError::InvalidArgument(format!(
                    "measurement time {t} not after {}",
                    last.t
                )));
            }
            if y.len() != last.y.len() {
                return Err(EstimatorError::InvalidArgument(format!(
                    "measurement of length {} after length {}",
                    y.len(),
                    last.y.len()
                )));
            }
        }
        if cov.shape() != (y.len(), y.len()) || cov.asymmetry() > 1e-12 * (1.0 + cov.max_abs()) {
            return Err(EstimatorError::InvalidArgument(
                "noise covariance must be symmetric and match the measurement".into(),
            ));
        }
        cholesky(&cov).map_err(|_| {
            EstimatorError::InvalidArgument("noise covariance not positive definite".into())
        })?;
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back(Measurement { t, y, cov });
        Ok(())
    }
}

/// Fitted position at the newest sample time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionEstimate {
    pub t_k: f64,
    pub r_hat: Vec<f64>,
    /// Error covariance of `r_hat`.
    pub pi: Mat,
    /// Weights with `r_hat = Σ a_i y_i`.
    pub a: Vec<f64>,
    /// Coefficients in the (possibly re-centered) basis, `q×p`.
    pub theta_hat: Mat,
}

/// Least-squares fit over a full window.
pub fn fit(w: &EstimatorWindow, basis: &BasisSpec) -> Result<PositionEstimate, EstimatorError> {
    if !w.is_ready() {
        return Err(EstimatorError::NotReady {
            have: w.len(),
            need: w.capacity(),
        });
    }
    let n = w.len();
    let q = basis.len();
    let p = w.latest().map(|m| m.y.len()).unwrap_or(0);
    let t0 = if basis.recenter {
        w.entries.front().map(|m| m.t).unwrap_or(0.0)
    } else {
        0.0
    };
    let mut phi = Mat::zeros(n, q);
    let mut y = Mat::zeros(n, p);
    for (i, m) in w.entries().enumerate() {
        for (j, v) in basis.eval(m.t - t0).into_iter().enumerate() {
            phi[(i, j)] = v;
        }
        for (j, v) in m.y.iter().enumerate() {
            y[(i, j)] = *v;
        }
    }
    let rank = svd(&phi)?.rank(RANK_TOL);
    if rank < q {
        return Err(EstimatorError::RankDeficient { rank, needed: q });
    }
    let pinv = pseudo_inverse(&phi, RANK_TOL)?;
    let theta_hat = pinv.mul(&y);
    let t_k = w.latest().map(|m| m.t).unwrap_or(0.0);
    let phi_k = basis.eval(t_k - t0);
    let r_hat = theta_hat.tmulv(&phi_k);
    let a = pinv.tmulv(&phi_k);
    let mut pi = Mat::zeros(p, p);
    for (ai, m) in a.iter().zip(w.entries()) {
        pi.add_scaled(ai * ai, &m.cov);
    }
    pi.symmetrize();
    Ok(PositionEstimate {
        t_k,
        r_hat,
        pi,
        a,
        theta_hat,
    })
}

/// The `(1 − α)` confidence ellipsoid `{x : (x − r̂)ᵀ Π⁻¹ (x − r̂) ≤ χ²_p(1 − α)}`.
pub fn confidence_ellipsoid(est: &PositionEstimate, alpha: f64) -> Result<Ccg, EstimatorError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(EstimatorError::InvalidArgument(format!("confidence level alpha = {alpha}")));
    }
    let p = est.r_hat.len();
    let q = chi2_quantile(p as u32, 1.0 - alpha)?;
    if cholesky(&est.pi).is_err() {
        return Err(EstimatorError::Degenerate("error covariance is singular".into()));
    }
    Ok(make_ellipsoid(&est.r_hat, &est.pi.scale(q))?)
}

/// Reduces `z = H r + v`, `v ~ N(0, Σ̄)`, to a direct position measurement
/// `y = H† z` with covariance `H† Σ̄ H†ᵀ`.
pub fn preprocess_linear_sensing(
    z: &[f64],
    h: &Mat,
    sigma_bar: &Mat,
) -> Result<(Vec<f64>, Mat), EstimatorError> {
    if h.rows() != z.len() || sigma_bar.shape() != (z.len(), z.len()) {
        return Err(EstimatorError::InvalidArgument(format!(
            "sensing matrix {:?} with {} readings and covariance {:?}",
            h.shape(),
            z.len(),
            sigma_bar.shape()
        )));
    }
    let rank = svd(h)?.rank(RANK_TOL);
    if rank < h.cols() {
        return Err(EstimatorError::RankDeficient {
            rank,
            needed: h.cols(),
        });
    }
    let pinv = pseudo_inverse(h, RANK_TOL)?;
    let mut cov = pinv.mul(sigma_bar).mul(&pinv.transpose());
    cov.symmetrize();
    Ok((pinv.mulv(z), cov))
}
