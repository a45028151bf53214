//! Seedable random state and Gaussian sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::linalg::cholesky_semidefinite;
use super::matrix::Mat;
use super::NumericsError;

/// Reproducible random state. ChaCha is counter based, so independent
/// streams come from the same seed with a different stream id.
#[derive(Debug, Clone)]
pub struct RngState {
    seed: u64,
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            inner,
            spare: None,
        }
    }

    /// A fresh generator on another stream of the same seed.
    pub fn split(&self, stream: u64) -> Self {
        Self::with_stream(self.seed, stream)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Standard normal sample (Box–Muller, caching the second variate).
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1]
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Draws `mean + L z` with `L Lᵀ = cov` and `z` standard normal.
pub fn gaussian_sample(
    rng: &mut RngState,
    mean: &[f64],
    cov: &Mat,
) -> Result<Vec<f64>, NumericsError> {
    if cov.shape() != (mean.len(), mean.len()) {
        return Err(NumericsError::DimensionMismatch {
            op: "gaussian_sample",
            left: cov.shape(),
            right: (mean.len(), 1),
        });
    }
    let l = cholesky_semidefinite(cov, 1e-12)?;
    let z: Vec<f64> = (0..mean.len()).map(|_| rng.standard_normal()).collect();
    let lz = l.mulv(&z);
    Ok(mean.iter().zip(&lz).map(|(m, d)| m + d).collect())
}
