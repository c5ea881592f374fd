//! Jittering kernels for the parameter particles.
//!
//! With probability `1 - epsilon` a particle keeps its value; otherwise it is
//! redrawn from a Gaussian centred at the old value with diagonal covariance,
//! truncated to the parameter box. Truncation makes the proposal mean differ
//! from the old value whenever the box is not symmetric about it; this is the
//! kernel as used in the Lorenz experiment and is deliberately not re-centred.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::model::{ParameterBox, ParameterVector};

/// Rejection attempts per coordinate before switching to inverse-CDF sampling.
const MAX_REJECTIONS: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JitterConfig {
    epsilon: f64,
    p_exponent: f64,
    covariance_diag: Vec<f64>,
    #[serde(rename = "box")]
    bounds: ParameterBox,
}

impl JitterConfig {
    pub fn new(
        epsilon: f64,
        p_exponent: f64,
        covariance_diag: Vec<f64>,
        bounds: ParameterBox,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::invalid(format!("jitter epsilon must lie in (0, 1], got {epsilon}")));
        }
        if !(p_exponent >= 1.0) {
            return Err(Error::invalid(format!("jitter exponent p must be >= 1, got {p_exponent}")));
        }
        if covariance_diag.len() != bounds.dim() {
            return Err(Error::invalid(format!(
                "jitter covariance has {} entries for a {}-dimensional box",
                covariance_diag.len(),
                bounds.dim()
            )));
        }
        if covariance_diag.iter().any(|&c| !(c > 0.0 && c.is_finite())) {
            return Err(Error::invalid("jitter covariance entries must be positive"));
        }
        Ok(JitterConfig { epsilon, p_exponent, covariance_diag, bounds })
    }

    /// `epsilon = N^(-p/2)`, the largest mixture weight that keeps the
    /// displacement moments of order `p` within `O(N^(-p/2))`.
    pub fn rate_faithful(
        n: usize,
        p_exponent: f64,
        covariance_diag: Vec<f64>,
        bounds: ParameterBox,
    ) -> Result<Self> {
        let eps = (n.max(1) as f64).powf(-p_exponent / 2.0);
        Self::new(eps, p_exponent, covariance_diag, bounds)
    }

    /// Delta-only limit: the rejuvenation branch is taken only if a uniform
    /// draw is exactly zero.
    pub fn frozen(covariance_diag: Vec<f64>, bounds: ParameterBox) -> Result<Self> {
        Self::new(f64::MIN_POSITIVE, 1.0, covariance_diag, bounds)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn p_exponent(&self) -> f64 {
        self.p_exponent
    }

    pub fn covariance_diag(&self) -> &[f64] {
        &self.covariance_diag
    }

    pub fn bounds(&self) -> &ParameterBox {
        &self.bounds
    }

    /// Checks `epsilon <= N^(-p/2)`.
    pub fn check_rate(&self, n: usize) -> Result<()> {
        let limit = (n as f64).powf(-self.p_exponent / 2.0);
        if self.epsilon > limit * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "epsilon {} exceeds N^(-p/2) = {limit} for N = {n}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Draws from the jittering kernel centred at `prev`.
pub fn jitter_sample<R: Rng + ?Sized>(
    cfg: &JitterConfig,
    prev: &ParameterVector,
    rng: &mut R,
) -> Result<ParameterVector> {
    if !cfg.bounds.contains(prev) {
        return Err(Error::invalid(format!("{:?} lies outside the jitter box", prev.coords())));
    }
    if rng.random::<f64>() < cfg.epsilon {
        Ok(rejuvenate(cfg, prev, rng))
    } else {
        Ok(prev.clone())
    }
}

/// The rejuvenation branch: a truncated Gaussian draw centred at `prev`.
pub fn rejuvenate<R: Rng + ?Sized>(cfg: &JitterConfig, prev: &ParameterVector, rng: &mut R) -> ParameterVector {
    let coords = prev
        .coords()
        .iter()
        .enumerate()
        .map(|(k, &centre)| {
            let sd = cfg.covariance_diag[k].sqrt();
            truncated_normal(centre, sd, cfg.bounds.lower()[k], cfg.bounds.upper()[k], rng)
        })
        .collect();
    ParameterVector(coords)
}

fn truncated_normal<R: Rng + ?Sized>(mean: f64, sd: f64, lo: f64, hi: f64, rng: &mut R) -> f64 {
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = rng.sample(StandardNormal);
        let v = mean + sd * z;
        if v >= lo && v <= hi {
            return v;
        }
    }
    let std = Normal::standard();
    let a = std.cdf((lo - mean) / sd);
    let b = std.cdf((hi - mean) / sd);
    let u = a + (b - a) * rng.random::<f64>();
    (mean + sd * std.inverse_cdf(u)).clamp(lo, hi)
}

/// Monte Carlo estimate of `E[f(theta)]` for `theta` drawn from the kernel at `prev`.
pub fn jitter_expectation<R, F>(
    cfg: &JitterConfig,
    prev: &ParameterVector,
    n_samples: usize,
    rng: &mut R,
    mut f: F,
) -> Result<f64>
where
    R: Rng + ?Sized,
    F: FnMut(&ParameterVector) -> f64,
{
    if n_samples == 0 {
        return Err(Error::invalid("n_samples must be at least 1"));
    }
    let mut acc = 0.0;
    for _ in 0..n_samples {
        let theta = jitter_sample(cfg, prev, rng)?;
        acc += f(&theta);
    }
    Ok(acc / n_samples as f64)
}

/// Monte Carlo estimate of `E ||theta - prev||^p` under the kernel at `prev`.
pub fn jitter_moment_check<R: Rng + ?Sized>(
    cfg: &JitterConfig,
    prev: &ParameterVector,
    p: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64> {
    jitter_expectation(cfg, prev, n_samples, rng, |theta| {
        let d2: f64 = theta.coords().iter().zip(prev.coords()).map(|(a, b)| (a - b) * (a - b)).sum();
        d2.sqrt().powf(p)
    })
}
