//! Monte Carlo check of the confidence-set coverage.

use serde::{Deserialize, Serialize};

use crate::estimator::{fit, BasisSpec, EstimatorWindow};
use crate::numerics::{chi2_quantile, gaussian_sample, inverse_quadratic_form, Mat, RngState};

use super::config::{ObstacleMotion, ScenarioConfig};
use super::obstacle::ObstacleTruth;
use super::SimError;

/// Two-sided 99% standard normal quantile.
const Z_99: f64 = 2.575_829_303_548_901;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub runs: usize,
    pub hits: usize,
    pub frequency: f64,
    pub target: f64,
    pub band: f64,
    /// 99% Wilson score interval for the frequency.
    pub ci_low: f64,
    pub ci_high: f64,
    /// Noise-free data: the fit reproduces the truth and the ellipsoid
    /// degenerates to a point.
    pub degenerate: bool,
    pub pass: bool,
}

/// Wilson score interval for `hits` successes in `n` trials.
pub fn wilson_interval(hits: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let mid = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((mid - half).max(0.0), (mid + half).min(1.0))
}

/// Fits `runs` independent windows of the configured length to noisy
/// samples of a cubic-polynomial obstacle and counts how often the truth
/// lies in the confidence ellipsoid. Window end times are uniform over the
/// horizon; run `i` draws from stream `i + 1` of the seed.
pub fn coverage_trial(cfg: &ScenarioConfig, runs: usize) -> Result<CoverageReport, SimError> {
    cfg.validate()?;
    if !matches!(cfg.obstacle.motion, ObstacleMotion::CubicPolynomial { .. }) {
        return Err(SimError::InvalidConfig(
            "coverage needs a cubic_polynomial obstacle so that the basis represents it exactly".into(),
        ));
    }
    if runs == 0 {
        return Err(SimError::InvalidConfig("coverage needs at least one run".into()));
    }
    let e = &cfg.estimator;
    if e.degree < 3 {
        return Err(SimError::InvalidConfig(format!(
            "basis degree {} cannot represent a cubic obstacle",
            e.degree
        )));
    }
    let truth = ObstacleTruth::new(&cfg.obstacle).map_err(SimError::InvalidConfig)?;
    let basis = BasisSpec::polynomial(e.degree);
    let chi2 = chi2_quantile(2, 1.0 - e.alpha)?;
    let degenerate = e.sigma == 0.0;
    // the weights do not depend on a common covariance, so noise-free runs
    // fit with unit covariance and test exact recovery instead
    let cov = if degenerate {
        Mat::identity(2)
    } else {
        Mat::from_diag(&[e.sigma * e.sigma, e.sigma * e.sigma])
    };
    let span = (e.window - 1) as f64 * cfg.sample_time;
    let mut hits = 0;
    for run in 0..runs {
        let mut rng = RngState::with_stream(cfg.seed, run as u64 + 1);
        let t_end = span + rng.uniform() * cfg.horizon;
        let mut w = EstimatorWindow::new(e.window)?;
        for i in 0..e.window {
            let t = t_end - (e.window - 1 - i) as f64 * cfg.sample_time;
            let r = truth.position(t);
            let y = if degenerate {
                r.to_vec()
            } else {
                gaussian_sample(&mut rng, &r, &cov)?
            };
            w.push_measurement(t, y, cov.clone())?;
        }
        let est = fit(&w, &basis)?;
        let r = truth.position(est.t_k);
        let err = [r[0] - est.r_hat[0], r[1] - est.r_hat[1]];
        let inside = if degenerate {
            let scale = 1.0 + r[0].abs().max(r[1].abs());
            err[0].hypot(err[1]) <= 1e-9 * scale
        } else {
            inverse_quadratic_form(&est.pi.scale(chi2), &err)? <= 1.0
        };
        hits += usize::from(inside);
    }
    let frequency = hits as f64 / runs as f64;
    let target = 1.0 - e.alpha;
    let (ci_low, ci_high) = wilson_interval(hits, runs, Z_99);
    let pass = if degenerate {
        hits == runs
    } else {
        (frequency - target).abs() <= cfg.coverage.band
    };
    Ok(CoverageReport {
        runs,
        hits,
        frequency,
        target,
        band: cfg.coverage.band,
        ci_low,
        ci_high,
        degenerate,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_known_values() {
        // 95 of 100 at z = 1.96
        let (lo, hi) = wilson_interval(95, 100, 1.96);
        assert!((lo - 0.88825).abs() < 1e-4 && (hi - 0.97847).abs() < 1e-4, "{lo} {hi}");
        let (lo, hi) = wilson_interval(0, 10, Z_99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 1.0);
        assert_eq!(wilson_interval(0, 0, Z_99), (0.0, 1.0));
    }
}
