//! Scalar linear-Gaussian model and its exact Kalman filter.
//!
//! `X_0 ~ N(m0, v0)`, `X_t = a X_{t-1} + N(0, q)`, `Y_t = X_t + N(0, r)`,
//! with the autoregression coefficient `a` as the unknown parameter and a
//! uniform prior on `[a_min, a_max]`.

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{gaussian_log_density, log_sum_exp, Observation, ParameterBox, ParameterVector, StateSpaceModel};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinearGaussianSpec {
    pub a_min: f64,
    pub a_max: f64,
    pub process_var: f64,
    pub obs_var: f64,
    pub prior_mean: f64,
    pub prior_var: f64,
}

impl Default for LinearGaussianSpec {
    fn default() -> Self {
        LinearGaussianSpec { a_min: 0.3, a_max: 0.95, process_var: 1.0, obs_var: 0.5, prior_mean: 0.0, prior_var: 2.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LinearGaussian {
    spec: LinearGaussianSpec,
    bounds: ParameterBox,
}

impl LinearGaussian {
    pub fn new(spec: LinearGaussianSpec) -> Result<Self> {
        let bounds = ParameterBox::new(vec![spec.a_min], vec![spec.a_max])?;
        for (name, v) in [("process_var", spec.process_var), ("obs_var", spec.obs_var), ("prior_var", spec.prior_var)] {
            if !(v > 0.0) {
                return Err(crate::Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(LinearGaussian { spec, bounds })
    }

    pub fn spec(&self) -> &LinearGaussianSpec {
        &self.spec
    }

    /// Default jitter covariance: a standard deviation of a tenth of the prior range.
    pub fn default_jitter_cov(&self) -> Vec<f64> {
        let w = 0.1 * (self.spec.a_max - self.spec.a_min);
        vec![w * w]
    }

    /// Simulates `x_0..=x_T` and `y_1..=y_T` with coefficient `a`.
    pub fn simulate<R: Rng + ?Sized>(&self, a: f64, steps: usize, rng: &mut R) -> (Vec<f64>, Vec<Observation>) {
        let s = &self.spec;
        let mut x = s.prior_mean + s.prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let mut path = vec![x];
        let mut obs = Vec::with_capacity(steps);
        for t in 1..=steps {
            x = a * x + s.process_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            let y = x + s.obs_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
            path.push(x);
            obs.push(Observation::new(t, vec![y]));
        }
        (path, obs)
    }

    /// Exact Kalman filter at coefficient `a`.
    pub fn kalman(&self, a: f64, observations: &[Observation]) -> KalmanOutput {
        let s = &self.spec;
        let (mut m, mut p) = (s.prior_mean, s.prior_var);
        let mut out = KalmanOutput::default();
        for y in observations {
            let y = y.coords[0];
            let mp = a * m;
            let pp = a * a * p + s.process_var;
            let sv = pp + s.obs_var;
            out.predictive_means.push(mp);
            out.predictive_vars.push(pp);
            out.log_likelihoods.push(gaussian_log_density(y, mp, sv));
            let gain = pp / sv;
            m = mp + gain * (y - mp);
            p = (1.0 - gain) * pp;
            out.filter_means.push(m);
            out.filter_vars.push(p);
        }
        out
    }

    /// Posterior mean of `a` after each observation, by midpoint quadrature
    /// of prior times Kalman evidence over `nodes` points. Entry 0 is the
    /// prior mean.
    pub fn param_posterior_means(&self, observations: &[Observation], nodes: usize) -> Vec<f64> {
        let (lo, hi) = (self.spec.a_min, self.spec.a_max);
        let h = (hi - lo) / nodes as f64;
        let grid: Vec<f64> = (0..nodes).map(|i| lo + (i as f64 + 0.5) * h).collect();
        let runs: Vec<Vec<f64>> = grid.iter().map(|&a| self.kalman(a, observations).log_likelihoods).collect();
        let mut log_post = vec![0.0; nodes];
        let mut means = vec![0.5 * (lo + hi)];
        for t in 0..observations.len() {
            for (lp, run) in log_post.iter_mut().zip(&runs) {
                *lp += run[t];
            }
            let z = log_sum_exp(&log_post);
            means.push(grid.iter().zip(&log_post).map(|(a, lp)| a * (lp - z).exp()).sum());
        }
        means
    }
}

#[derive(Clone, Debug, Default)]
pub struct KalmanOutput {
    pub predictive_means: Vec<f64>,
    pub predictive_vars: Vec<f64>,
    pub filter_means: Vec<f64>,
    pub filter_vars: Vec<f64>,
    /// `log p(y_t | y_{1:t-1})`.
    pub log_likelihoods: Vec<f64>,
}

impl KalmanOutput {
    pub fn log_evidence(&self) -> f64 {
        self.log_likelihoods.iter().sum()
    }
}

impl StateSpaceModel for LinearGaussian {
    fn param_dim(&self) -> usize {
        1
    }

    fn state_dim(&self) -> usize {
        1
    }

    fn obs_dim(&self) -> usize {
        1
    }

    fn param_box(&self) -> &ParameterBox {
        &self.bounds
    }

    fn sample_param_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        self.bounds.sample_uniform(rng)
    }

    fn sample_state_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out[0] = self.spec.prior_mean + self.spec.prior_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        _t: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        out[0] = theta.coords()[0] * prev[0] + self.spec.process_var.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    fn log_likelihood(&self, _theta: &ParameterVector, x: &[f64], y: &Observation) -> f64 {
        gaussian_log_density(y.coords[0], x[0], self.spec.obs_var)
    }
}
