//! The nested particle filter.
//!
//! Each recursive step jitters every outer parameter particle, advances its
//! inner bootstrap filter by one observation, weights the outer particle by
//! the inner estimate of the parameter likelihood, and finally resamples
//! `(theta, inner cloud)` pairs jointly.
//!
//! The per-particle work is spread over the current rayon pool. Every outer
//! particle draws from its own stream keyed by `(step, particle index)` and
//! the outer resampling from a stream keyed by the step alone, so results are
//! bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::inner::{multinomial_indices, normalize_log_weights, propagate, resample_cloud, weigh, InnerCloud};
use crate::jitter::{jitter_sample, JitterConfig};
use crate::metrics::{RunTrace, StepRecord, TraceContext};
use crate::model::{Observation, ParameterVector, StateSpaceModel};
use crate::rng::{tags, StreamKey};

#[derive(Clone, Debug, PartialEq)]
pub struct OuterParticle {
    pub theta: ParameterVector,
    pub cloud: InnerCloud,
    /// Unnormalised log-weight at the current step.
    pub log_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NestedFilterState {
    pub outer: Vec<OuterParticle>,
    /// Number of observations processed so far.
    pub t: usize,
    /// `log((1/N) sum_i u_t^M(theta_bar_i))` for the last step.
    pub last_log_norm: f64,
}

impl NestedFilterState {
    pub fn n(&self) -> usize {
        self.outer.len()
    }

    pub fn m(&self) -> usize {
        self.outer.first().map_or(0, |p| p.cloud.len())
    }

    pub fn thetas(&self) -> Vec<ParameterVector> {
        self.outer.iter().map(|p| p.theta.clone()).collect()
    }

    /// The unweighted post-resampling ensemble as a snapshot.
    pub fn uniform_snapshot(&self) -> PosteriorSnapshot {
        let n = self.n();
        PosteriorSnapshot {
            thetas: self.thetas(),
            weights: vec![1.0 / n as f64; n],
            state_means: self.outer.iter().map(|p| p.cloud.mean()).collect(),
            step: self.t,
        }
    }
}

/// Weighted parameter sample before outer resampling.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorSnapshot {
    /// Jittered parameters `theta_bar_i`.
    pub thetas: Vec<ParameterVector>,
    /// Normalised outer weights.
    pub weights: Vec<f64>,
    /// Mean of each inner cloud after its own resampling.
    pub state_means: Vec<Vec<f64>>,
    pub step: usize,
}

/// Result of one recursive step.
#[derive(Clone, Debug)]
pub struct NestedStep {
    pub state: NestedFilterState,
    pub snapshot: PosteriorSnapshot,
    /// `state.outer[i]` is a copy of snapshot entry `ancestors[i]`.
    pub ancestors: Vec<usize>,
}

/// Draws `N` parameters from the prior and `M` prior states for each.
pub fn nested_init<M: StateSpaceModel>(model: &M, n: usize, m: usize, key: StreamKey) -> Result<NestedFilterState> {
    if n == 0 || m == 0 {
        return Err(Error::invalid(format!("need N >= 1 and M >= 1, got N = {n}, M = {m}")));
    }
    let log_w = -(n as f64).ln();
    let outer = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = key.path(&[tags::INIT, i as u64]).rng();
            let theta = model.sample_param_prior(&mut rng);
            let cloud = InnerCloud::sample_prior(model, m, &mut rng);
            OuterParticle { theta, cloud, log_weight: log_w }
        })
        .collect();
    Ok(NestedFilterState { outer, t: 0, last_log_norm: 0.0 })
}

/// One recursive step of the nested filter for observation `y`.
pub fn nested_step<M: StateSpaceModel>(
    state: &NestedFilterState,
    model: &M,
    jitter: &JitterConfig,
    y: &Observation,
    key: StreamKey,
) -> Result<NestedStep> {
    let step = state.t + 1;
    if y.time_index != step {
        return Err(Error::invalid(format!(
            "observation carries time index {} but the filter expects {step}",
            y.time_index
        )));
    }
    let fail = |e| Error::StepFailure { step, source: Box::new(e) };

    let advanced: Vec<(ParameterVector, InnerCloud, f64)> = state
        .outer
        .par_iter()
        .enumerate()
        .map(|(i, particle)| {
            let mut rng = key.path(&[tags::STEP, step as u64, i as u64]).rng();
            let theta = model.snap_param(jitter_sample(jitter, &particle.theta, &mut rng)?);
            let mut predicted = propagate(model, &theta, &particle.cloud, step, &mut rng);
            match weigh(model, &theta, &mut predicted, y) {
                Ok(w) => {
                    let cloud = resample_cloud(&predicted, &w.weights, &mut rng)?;
                    Ok((theta, cloud, w.log_mean_lik))
                }
                // a zero likelihood estimate only removes this outer particle
                Err(Error::DegenerateWeights { .. }) => Ok((theta, predicted, f64::NEG_INFINITY)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()
        .map_err(fail)?;

    let log_weights: Vec<f64> = advanced.iter().map(|a| a.2).collect();
    let (weights, lse) = normalize_log_weights(&log_weights).map_err(fail)?;
    let n = advanced.len();

    let mut rng = key.path(&[tags::OUTER_RESAMPLE, step as u64]).rng();
    let ancestors = multinomial_indices(&weights, &mut rng).map_err(fail)?;
    let uniform = -(n as f64).ln();
    let outer = ancestors
        .iter()
        .map(|&l| OuterParticle { theta: advanced[l].0.clone(), cloud: advanced[l].1.clone(), log_weight: uniform })
        .collect();

    let snapshot = PosteriorSnapshot {
        state_means: advanced.iter().map(|a| a.1.mean()).collect(),
        thetas: advanced.into_iter().map(|a| a.0).collect(),
        weights,
        step,
    };
    Ok(NestedStep {
        state: NestedFilterState { outer, t: step, last_log_norm: lse - (n as f64).ln() },
        snapshot,
        ancestors,
    })
}

/// Receives the filter output after every step (and once for the prior).
pub trait StepSink {
    fn on_step(&mut self, state: &NestedFilterState, snapshot: &PosteriorSnapshot) -> Result<()>;
}

impl StepSink for () {
    fn on_step(&mut self, _: &NestedFilterState, _: &PosteriorSnapshot) -> Result<()> {
        Ok(())
    }
}

impl<F> StepSink for F
where
    F: FnMut(&NestedFilterState, &PosteriorSnapshot) -> Result<()>,
{
    fn on_step(&mut self, state: &NestedFilterState, snapshot: &PosteriorSnapshot) -> Result<()> {
        self(state, snapshot)
    }
}

/// Runs the nested filter over all observations.
///
/// The returned trace has one record for the prior (step 0) followed by one
/// per observation. `ctx` supplies optional ground truth for error columns.
pub fn run_nested<M: StateSpaceModel, S: StepSink + ?Sized>(
    model: &M,
    observations: &[Observation],
    n: usize,
    m: usize,
    jitter: &JitterConfig,
    ctx: &TraceContext,
    sink: &mut S,
    key: StreamKey,
) -> Result<RunTrace> {
    let mut state = nested_init(model, n, m, key.child(tags::INIT))?;
    let prior = state.uniform_snapshot();
    sink.on_step(&state, &prior)?;
    let mut trace = RunTrace::default();
    trace.records.push(StepRecord::from_snapshot(&prior, 0.0, ctx)?);
    let step_key = key.child(tags::STEP);
    for (k, y) in observations.iter().enumerate() {
        let out = nested_step(&state, model, jitter, y, step_key).map_err(|e| match e {
            Error::StepFailure { .. } => e,
            other => Error::StepFailure { step: k + 1, source: Box::new(other) },
        })?;
        state = out.state;
        sink.on_step(&state, &out.snapshot)?;
        trace.records.push(StepRecord::from_snapshot(&out.snapshot, state.last_log_norm, ctx)?);
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::GridHmm;

    #[test]
    fn init_rejects_empty_ensembles() {
        let h = GridHmm::three_point_example();
        assert!(nested_init(&h, 0, 5, StreamKey::new(1)).is_err());
        assert!(nested_init(&h, 5, 0, StreamKey::new(1)).is_err());
    }

    #[test]
    fn step_requires_next_time_index() {
        let h = GridHmm::three_point_example();
        let state = nested_init(&h, 4, 4, StreamKey::new(1)).unwrap();
        let jitter = JitterConfig::frozen(vec![0.01], h.param_box().clone()).unwrap();
        let y = Observation::new(2, vec![0.0]);
        assert!(matches!(nested_step(&state, &h, &jitter, &y, StreamKey::new(2)), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn joint_resampling_keeps_pairs_together() {
        let h = GridHmm::three_point_example();
        let jitter = JitterConfig::new(0.5, 1.0, vec![0.05], h.param_box().clone()).unwrap();
        let mut state = nested_init(&h, 16, 8, StreamKey::new(3)).unwrap();
        let (_, ys) = h.simulate(2, 10, &mut StreamKey::new(4).rng());
        for y in &ys {
            let out = nested_step(&state, &h, &jitter, y, StreamKey::new(5)).unwrap();
            for (i, &l) in out.ancestors.iter().enumerate() {
                assert_eq!(out.state.outer[i].theta, out.snapshot.thetas[l]);
                assert_eq!(out.state.outer[i].cloud.mean(), out.snapshot.state_means[l]);
            }
            let lw = out.state.outer[0].log_weight;
            assert!(out.state.outer.iter().all(|p| p.log_weight == lw));
            assert_eq!(out.state.n(), 16);
            assert_eq!(out.state.m(), 8);
            state = out.state;
        }
    }
}
