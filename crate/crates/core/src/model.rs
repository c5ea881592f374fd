//! State-space model abstraction shared by every filter in the crate.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the static-parameter space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(pub Vec<f64>);

impl ParameterVector {
    pub fn new(coords: Vec<f64>) -> Self {
        ParameterVector(coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl From<Vec<f64>> for ParameterVector {
    fn from(v: Vec<f64>) -> Self {
        ParameterVector(v)
    }
}

/// Compact axis-aligned support of the parameter prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ParameterBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::invalid(format!(
                "parameter box bounds have lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (k, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::invalid(format!(
                    "parameter box coordinate {k} has empty interior: [{lo}, {hi}]"
                )));
            }
        }
        Ok(ParameterBox { lower, upper })
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains_coord(&self, k: usize, v: f64) -> bool {
        v >= self.lower[k] && v <= self.upper[k]
    }

    pub fn contains(&self, theta: &ParameterVector) -> bool {
        theta.dim() == self.dim()
            && theta.coords().iter().enumerate().all(|(k, &v)| self.contains_coord(k, v))
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    pub fn half_widths(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)).collect()
    }

    /// Largest Euclidean distance between two points of the box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    /// Independent uniform draw on the box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        use rand::RngExt;
        ParameterVector(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(&l, &u)| l + (u - l) * rng.random::<f64>())
                .collect(),
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateVector(pub Vec<f64>);

impl StateVector {
    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub coords: Vec<f64>,
    pub time_index: usize,
}

impl Observation {
    pub fn new(time_index: usize, coords: Vec<f64>) -> Self {
        Observation { coords, time_index }
    }
}

/// A discrete-time state-space Markov model with a static parameter.
///
/// States are passed as plain slices so that filters can keep their particle
/// clouds in flat buffers. All randomness comes from the caller's RNG, so an
/// implementation must be free of interior mutability and safe to share
/// between worker threads.
pub trait StateSpaceModel: Sync {
    fn param_dim(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn param_box(&self) -> &ParameterBox;

    /// Draws from the parameter prior.
    fn sample_param_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector;

    /// Draws from the state prior into `out` (length `state_dim`).
    fn sample_state_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]);

    /// Draws `X_t` given `X_{t-1} = prev` and the parameter, writing into `out`.
    fn sample_transition<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        t: usize,
        rng: &mut R,
        out: &mut [f64],
    );

    /// Log-density of `y` given the state, up to an additive constant that
    /// must not depend on the state or the parameter.
    fn log_likelihood(&self, theta: &ParameterVector, x: &[f64], y: &Observation) -> f64;

    /// Moves a flat cloud `prev` into `out` particle by particle. Overrides
    /// must consume the random stream exactly as the default does.
    fn propagate_flat<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        t: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let d = self.state_dim();
        for (p, o) in prev.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
            self.sample_transition(theta, p, t, rng, o);
        }
    }

    /// Log-likelihood of `y` for every particle of a flat cloud, in order.
    fn log_likelihood_flat(&self, theta: &ParameterVector, states: &[f64], y: &Observation) -> Vec<f64> {
        states.chunks_exact(self.state_dim()).map(|x| self.log_likelihood(theta, x, y)).collect()
    }

    /// Maps a jittered parameter back onto the model's parameter support.
    ///
    /// Continuous models keep the default identity. Models whose parameter
    /// space is a finite set of points override this to snap to the nearest
    /// admissible point, which turns the truncated-Gaussian jitter into its
    /// discretised counterpart.
    fn snap_param(&self, theta: ParameterVector) -> ParameterVector {
        theta
    }
}

/// Evaluates the log-likelihood of `y` for each state, preserving order.
pub fn log_likelihood_batch<M: StateSpaceModel>(
    model: &M,
    theta: &ParameterVector,
    states: &[StateVector],
    y: &Observation,
) -> Result<Vec<f64>> {
    let dx = model.state_dim();
    if let Some(bad) = states.iter().position(|s| s.dim() != dx) {
        return Err(Error::invalid(format!(
            "state {bad} has dimension {}, model expects {dx}",
            states[bad].dim()
        )));
    }
    if y.coords.len() != model.obs_dim() {
        return Err(Error::invalid(format!(
            "observation has dimension {}, model expects {}",
            y.coords.len(),
            model.obs_dim()
        )));
    }
    Ok(states.iter().map(|s| model.log_likelihood(theta, s.coords(), y)).collect())
}

/// Projects each coordinate onto `[lower, upper]`.
pub fn clamp_to_box(theta: &ParameterVector, bounds: &ParameterBox) -> ParameterVector {
    debug_assert_eq!(theta.dim(), bounds.dim());
    ParameterVector(
        theta
            .coords()
            .iter()
            .zip(bounds.lower().iter().zip(bounds.upper()))
            .map(|(&v, (&l, &u))| v.clamp(l, u))
            .collect(),
    )
}

/// `log(sum(exp(values)))`, computed stably. Returns `-inf` for an empty slice
/// or when every value is `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Log-density of `N(mean, var)` at `x`.
pub fn gaussian_log_density(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * (2.0 * std::f64::consts::PI * var).ln()
}
