//! Bootstrap particle filters conditional on a parameter value.
//!
//! [`propagate`], [`weigh`] and [`resample_multinomial`] are the building
//! blocks shared with the nested filter; [`bootstrap_run`] runs them for a
//! fixed parameter and [`bootstrap_run_chain_param`] for a parameter that
//! follows a jitter-kernel Markov chain.

use rand::{Rng, RngExt};

use crate::error::{Error, Result};
use crate::jitter::{jitter_sample, JitterConfig};
use crate::model::{Observation, ParameterVector, StateSpaceModel, StateVector};

/// `M` state particles stored row-major in one buffer.
///
/// Equality compares the particles only, not the cached likelihood sum.
#[derive(Clone, Debug)]
pub struct InnerCloud {
    dim: usize,
    data: Vec<f64>,
    /// `log sum_j g(x_bar_j)` from the most recent weighting, if any.
    pub last_loglik_sum: f64,
}

impl PartialEq for InnerCloud {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.data == other.data
    }
}

impl InnerCloud {
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 || data.is_empty() {
            return Err(Error::invalid(format!(
                "cannot split {} values into particles of dimension {dim}",
                data.len()
            )));
        }
        Ok(InnerCloud { dim, data, last_loglik_sum: f64::NAN })
    }

    pub fn from_states(states: &[StateVector]) -> Result<Self> {
        let dim = states.first().map(StateVector::dim).unwrap_or(0);
        if states.iter().any(|s| s.dim() != dim) {
            return Err(Error::invalid("states of mixed dimension"));
        }
        Self::from_flat(dim, states.iter().flat_map(|s| s.coords().iter().copied()).collect())
    }

    /// `m` i.i.d. draws from the model's state prior.
    pub fn sample_prior<M: StateSpaceModel, R: Rng + ?Sized>(model: &M, m: usize, rng: &mut R) -> Self {
        let dim = model.state_dim();
        let mut data = vec![0.0; dim * m];
        for chunk in data.chunks_exact_mut(dim) {
            model.sample_state_prior(rng, chunk);
        }
        InnerCloud { dim, data, last_loglik_sum: f64::NAN }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn particle(&self, j: usize) -> &[f64] {
        &self.data[j * self.dim..(j + 1) * self.dim]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn to_states(&self) -> Vec<StateVector> {
        self.iter().map(|p| StateVector(p.to_vec())).collect()
    }

    /// Unweighted particle mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for p in self.iter() {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += v;
            }
        }
        let m = self.len() as f64;
        acc.iter_mut().for_each(|a| *a /= m);
        acc
    }

    /// Weighted particle mean.
    pub fn weighted_mean(&self, weights: &[f64]) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim];
        for (p, w) in self.iter().zip(weights) {
            for (a, v) in acc.iter_mut().zip(p) {
                *a += w * v;
            }
        }
        acc
    }
}

/// Normalised weights together with the log of the mean likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct Weighing {
    pub weights: Vec<f64>,
    /// `log((1/M) sum_j g(x_bar_j))`, the log of the parameter-likelihood estimate.
    pub log_mean_lik: f64,
}

/// Moves every particle through the transition kernel under `theta`.
pub fn propagate<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    cloud: &InnerCloud,
    t: usize,
    rng: &mut R,
) -> InnerCloud {
    let mut data = vec![0.0; cloud.data.len()];
    model.propagate_flat(theta, &cloud.data, t, rng, &mut data);
    InnerCloud { dim: cloud.dim, data, last_loglik_sum: f64::NAN }
}

/// Normalises log-weights with log-sum-exp.
///
/// Returns the normalised weights and `log sum exp(log_weights)`.
pub fn normalize_log_weights(log_weights: &[f64]) -> Result<(Vec<f64>, f64)> {
    if log_weights.is_empty() {
        return Err(Error::invalid("no weights to normalise"));
    }
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() || log_weights.iter().any(|v| v.is_nan()) {
        return Err(Error::DegenerateWeights { count: log_weights.len() });
    }
    let mut weights: Vec<f64> = log_weights.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= sum);
    Ok((weights, max + sum.ln()))
}

/// Computes normalised likelihood weights of the cloud and the estimate of
/// the parameter likelihood `u_t^M(theta)` in log form.
pub fn weigh<M: StateSpaceModel>(
    model: &M,
    theta: &ParameterVector,
    cloud: &mut InnerCloud,
    y: &Observation,
) -> Result<Weighing> {
    if cloud.is_empty() {
        return Err(Error::invalid("cannot weigh an empty cloud"));
    }
    let log_lik = model.log_likelihood_flat(theta, &cloud.data, y);
    let (weights, lse) = normalize_log_weights(&log_lik)?;
    cloud.last_loglik_sum = lse;
    Ok(Weighing { weights, log_mean_lik: lse - (cloud.len() as f64).ln() })
}

/// Draws `weights.len()` i.i.d. ancestor indices from `Categorical(weights)`.
pub fn multinomial_indices<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> Result<Vec<usize>> {
    let total: f64 = weights.iter().sum();
    if weights.is_empty() || (total - 1.0).abs() > 1e-9 || weights.iter().any(|w| !(*w >= 0.0)) {
        return Err(Error::invalid(format!("resampling weights are not normalised (sum {total})")));
    }
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    let last = weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1);
    Ok((0..weights.len())
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            // first index whose cumulative weight exceeds u; never lands on a zero weight
            cdf.partition_point(|&c| c <= u).min(last)
        })
        .collect())
}

/// Multinomial resampling with replacement.
pub fn resample_multinomial<T: Clone, R: Rng + ?Sized>(items: &[T], weights: &[f64], rng: &mut R) -> Result<Vec<T>> {
    if items.len() != weights.len() {
        return Err(Error::invalid(format!("{} items but {} weights", items.len(), weights.len())));
    }
    Ok(multinomial_indices(weights, rng)?.into_iter().map(|i| items[i].clone()).collect())
}

/// Multinomial resampling of a particle cloud.
pub fn resample_cloud<R: Rng + ?Sized>(cloud: &InnerCloud, weights: &[f64], rng: &mut R) -> Result<InnerCloud> {
    if cloud.len() != weights.len() {
        return Err(Error::invalid(format!("{} particles but {} weights", cloud.len(), weights.len())));
    }
    let idx = multinomial_indices(weights, rng)?;
    let mut data = Vec::with_capacity(cloud.data.len());
    for i in idx {
        data.extend_from_slice(cloud.particle(i));
    }
    Ok(InnerCloud { dim: cloud.dim, data, last_loglik_sum: cloud.last_loglik_sum })
}

/// Output of a conditional bootstrap filter run.
#[derive(Clone, Debug)]
pub struct BootstrapRun {
    /// Clouds at times `0..=T`; entry 0 is the prior sample, later entries are
    /// post-resampling.
    pub clouds: Vec<InnerCloud>,
    /// Weighted pre-resampling filter means `sum_j v_j x_bar_j`, times `1..=T`.
    pub filter_means: Vec<Vec<f64>>,
    /// Predictive means `(1/M) sum_j x_bar_j`, times `1..=T`.
    pub predictive_means: Vec<Vec<f64>>,
    /// `sum_t log u_t^M`.
    pub log_evidence: f64,
}

/// One predict/update/resample cycle; returns the resampled cloud, the
/// weighing, and the predictive cloud.
fn filter_step<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    cloud: &InnerCloud,
    y: &Observation,
    rng: &mut R,
) -> Result<(InnerCloud, Weighing, InnerCloud)> {
    let mut predicted = propagate(model, theta, cloud, y.time_index, rng);
    let w = weigh(model, theta, &mut predicted, y)?;
    let resampled = resample_cloud(&predicted, &w.weights, rng)?;
    Ok((resampled, w, predicted))
}

/// Bootstrap filter with the parameter held fixed at `theta`.
pub fn bootstrap_run<M: StateSpaceModel, R: Rng + ?Sized>(
    model: &M,
    theta: &ParameterVector,
    observations: &[Observation],
    m: usize,
    rng: &mut R,
) -> Result<BootstrapRun> {
    if m == 0 {
        return Err(Error::invalid("inner filter needs at least one particle"));
    }
    let mut clouds = vec![InnerCloud::sample_prior(model, m, rng)];
    let mut filter_means = Vec::with_capacity(observations.len());
    let mut predictive_means = Vec::with_capacity(observations.len());
    let mut log_evidence = 0.0;
    for (k, y) in observations.iter().enumerate() {
        let prev = clouds.last().expect("nonempty");
        let (next, w, predicted) = filter_step(model, theta, prev, y, rng)
            .map_err(|e| Error::StepFailure { step: k + 1, source: Box::new(e) })?;
        log_evidence += w.log_mean_lik;
        filter_means.push(predicted.weighted_mean(&w.weights));
        predictive_means.push(predicted.mean());
        clouds.push(next);
    }
    Ok(BootstrapRun { clouds, filter_means, predictive_means, log_evidence })
}

/// Output of [`bootstrap_run_chain_param`].
#[derive(Clone, Debug)]
pub struct ChainRun {
    pub filter: BootstrapRun,
    /// `theta_0, theta_1, ..., theta_T`.
    pub theta_path: Vec<ParameterVector>,
}

/// Bootstrap filter whose parameter follows the jitter-kernel chain
/// `theta_0 ~ prior`, `theta_t ~ kappa(. | theta_{t-1})`.
///
/// The chain is driven by `chain_rng` and the particles by `filter_rng`, so
/// a chain that never moves reproduces [`bootstrap_run`] at `theta_0` draw
/// for draw.
pub fn bootstrap_run_chain_param<M, R1, R2>(
    model: &M,
    chain_cfg: &JitterConfig,
    observations: &[Observation],
    m: usize,
    filter_rng: &mut R1,
    chain_rng: &mut R2,
) -> Result<ChainRun>
where
    M: StateSpaceModel,
    R1: Rng + ?Sized,
    R2: Rng + ?Sized,
{
    if m == 0 {
        return Err(Error::invalid("inner filter needs at least one particle"));
    }
    let mut theta = model.sample_param_prior(chain_rng);
    let mut theta_path = vec![theta.clone()];
    let mut clouds = vec![InnerCloud::sample_prior(model, m, filter_rng)];
    let mut filter_means = Vec::with_capacity(observations.len());
    let mut predictive_means = Vec::with_capacity(observations.len());
    let mut log_evidence = 0.0;
    for (k, y) in observations.iter().enumerate() {
        let step = k + 1;
        let wrap = |e| Error::StepFailure { step, source: Box::new(e) };
        theta = model.snap_param(jitter_sample(chain_cfg, &theta, chain_rng).map_err(wrap)?);
        let prev = clouds.last().expect("nonempty");
        let (next, w, predicted) = filter_step(model, &theta, prev, y, filter_rng).map_err(wrap)?;
        log_evidence += w.log_mean_lik;
        filter_means.push(predicted.weighted_mean(&w.weights));
        predictive_means.push(predicted.mean());
        clouds.push(next);
        theta_path.push(theta.clone());
    }
    Ok(ChainRun {
        filter: BootstrapRun { clouds, filter_means, predictive_means, log_evidence },
        theta_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{LinearGaussian, LinearGaussianSpec};
    use crate::rng::StreamKey;
    use crate::model::ParameterBox;
    use proptest::prelude::*;

    /// `x' = 2x + 1` with no noise; the likelihood reads a per-particle value
    /// from the state itself so tests can dictate log-weights.
    struct Affine {
        bounds: ParameterBox,
    }

    impl Affine {
        fn new() -> Self {
            Affine { bounds: ParameterBox::new(vec![0.0], vec![1.0]).unwrap() }
        }
    }

    impl StateSpaceModel for Affine {
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
            out[0] = rng.random::<f64>();
        }
        fn sample_transition<R: Rng + ?Sized>(&self, _: &ParameterVector, prev: &[f64], _: usize, _: &mut R, out: &mut [f64]) {
            out[0] = 2.0 * prev[0] + 1.0;
        }
        fn log_likelihood(&self, _: &ParameterVector, x: &[f64], y: &Observation) -> f64 {
            x[0] + y.coords[0]
        }
    }

    fn theta() -> ParameterVector {
        ParameterVector(vec![0.5])
    }

    fn cloud(values: &[f64]) -> InnerCloud {
        InnerCloud::from_flat(1, values.to_vec()).unwrap()
    }

    #[test]
    fn weigh_two_particle_example() {
        let mut c = cloud(&[0.0, 3f64.ln()]);
        let w = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![0.0])).unwrap();
        assert!((w.weights[0] - 0.25).abs() < 1e-15 && (w.weights[1] - 0.75).abs() < 1e-15);
        assert!((w.log_mean_lik - 2f64.ln()).abs() < 1e-15);
        assert!((c.last_loglik_sum - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn weigh_identical_particles_is_uniform() {
        let mut c = cloud(&[-1.7; 5]);
        let w = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![0.2])).unwrap();
        assert!(w.weights.iter().all(|v| (v - 0.2).abs() < 1e-15));
        assert!((w.log_mean_lik + 1.5).abs() < 1e-14);
    }

    #[test]
    fn weigh_ignores_constant_offsets() {
        let mut c = cloud(&[0.1, -2.0, 3.5, 0.0]);
        let a = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![0.0])).unwrap();
        let b = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![-700.0])).unwrap();
        for (x, y) in a.weights.iter().zip(&b.weights) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!((a.log_mean_lik - b.log_mean_lik - 700.0).abs() < 1e-9);
    }

    #[test]
    fn weigh_reports_total_underflow() {
        let mut c = cloud(&[f64::NEG_INFINITY; 3]);
        let err = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![0.0])).unwrap_err();
        assert!(matches!(err, Error::DegenerateWeights { count: 3 }));
    }

    #[test]
    fn resample_degenerate_weights() {
        let mut rng = StreamKey::new(1).rng();
        let out = resample_multinomial(&["a", "b", "c", "d"], &[1.0, 0.0, 0.0, 0.0], &mut rng).unwrap();
        assert_eq!(out, vec!["a"; 4]);
        let out = resample_multinomial(&[1, 2, 3], &[0.0, 0.0, 1.0], &mut rng).unwrap();
        assert_eq!(out, vec![3; 3]);
    }

    #[test]
    fn resample_rejects_bad_weights() {
        let mut rng = StreamKey::new(1).rng();
        assert!(resample_multinomial(&[1, 2], &[0.5, 0.6], &mut rng).is_err());
        assert!(resample_multinomial(&[1, 2], &[1.5, -0.5], &mut rng).is_err());
        assert!(resample_multinomial(&[1, 2, 3], &[0.5, 0.5], &mut rng).is_err());
        assert!(resample_multinomial::<i32, _>(&[], &[], &mut rng).is_err());
    }

    #[test]
    fn uniform_resampling_frequencies() {
        // 10^5 draws over 10 categories; each count is Binomial(1e5, 0.1).
        let k = 10;
        let trials = 10_000;
        let mut counts = vec![0usize; k];
        let mut rng = StreamKey::new(2).rng();
        let w = vec![1.0 / k as f64; k];
        for _ in 0..trials {
            for i in multinomial_indices(&w, &mut rng).unwrap() {
                counts[i] += 1;
            }
        }
        let total = (trials * k) as f64;
        let sd = (total * 0.1 * 0.9).sqrt();
        for c in counts {
            assert!((c as f64 - total * 0.1).abs() < 4.0 * sd, "count {c}");
        }
    }

    #[test]
    fn resampling_is_unbiased() {
        let values = [0.3, -1.0, 2.5, 4.0, 0.0];
        let weights = [0.1, 0.4, 0.2, 0.05, 0.25];
        let target: f64 = values.iter().zip(&weights).map(|(v, w)| v * w).sum();
        let second: f64 = values.iter().zip(&weights).map(|(v, w)| v * v * w).sum();
        let var_one = second - target * target;
        let reps = 20_000;
        let mut rng = StreamKey::new(3).rng();
        let mut acc = 0.0;
        for _ in 0..reps {
            let out = resample_multinomial(&values, &weights, &mut rng).unwrap();
            acc += out.iter().sum::<f64>() / out.len() as f64;
        }
        let mean = acc / reps as f64;
        let se = (var_one / (values.len() * reps) as f64).sqrt();
        assert!((mean - target).abs() < 4.0 * se, "{mean} vs {target}");
    }

    #[test]
    fn propagate_deterministic_transition() {
        let c = cloud(&[0.0, 1.0, -2.5]);
        let out = propagate(&Affine::new(), &theta(), &c, 1, &mut StreamKey::new(1).rng());
        assert_eq!(out.as_flat(), &[1.0, 3.0, -4.0]);
    }

    #[test]
    fn single_particle_matches_direct_simulation() {
        let lg = LinearGaussian::new(LinearGaussianSpec::default()).unwrap();
        let a = ParameterVector(vec![0.7]);
        let mut rng = StreamKey::new(9).rng();
        let mut c = cloud(&[0.4]);
        for t in 1..=5 {
            c = propagate(&lg, &a, &c, t, &mut rng);
        }
        let mut direct = StreamKey::new(9).rng();
        let mut x = [0.4];
        for t in 1..=5 {
            let prev = x;
            lg.sample_transition(&a, &prev, t, &mut direct, &mut x);
        }
        assert_eq!(c.as_flat(), &x);
    }

    #[test]
    fn zero_observations_leave_the_prior_cloud() {
        let lg = LinearGaussian::new(LinearGaussianSpec::default()).unwrap();
        let run = bootstrap_run(&lg, &ParameterVector(vec![0.5]), &[], 7, &mut StreamKey::new(4).rng()).unwrap();
        assert_eq!(run.clouds.len(), 1);
        assert_eq!(run.clouds[0].len(), 7);
        assert_eq!(run.log_evidence, 0.0);
        let direct = InnerCloud::sample_prior(&lg, 7, &mut StreamKey::new(4).rng());
        assert_eq!(run.clouds[0].as_flat(), direct.as_flat());
        assert!(bootstrap_run(&lg, &ParameterVector(vec![0.5]), &[], 0, &mut StreamKey::new(4).rng()).is_err());
    }

    #[test]
    fn frozen_chain_reproduces_fixed_parameter_run() {
        let lg = LinearGaussian::new(LinearGaussianSpec::default()).unwrap();
        let (_, obs) = lg.simulate(0.8, 30, &mut StreamKey::new(5).rng());
        let cfg = JitterConfig::frozen(lg.default_jitter_cov(), lg.param_box().clone()).unwrap();
        let chain = bootstrap_run_chain_param(
            &lg,
            &cfg,
            &obs,
            50,
            &mut StreamKey::new(6).rng(),
            &mut StreamKey::new(7).rng(),
        )
        .unwrap();
        assert!(chain.theta_path.iter().all(|t| *t == chain.theta_path[0]));
        assert_eq!(chain.theta_path.len(), 31);
        let fixed = bootstrap_run(&lg, &chain.theta_path[0], &obs, 50, &mut StreamKey::new(6).rng()).unwrap();
        for (a, b) in fixed.clouds.iter().zip(&chain.filter.clouds) {
            assert_eq!(a.as_flat(), b.as_flat());
        }
        assert_eq!(fixed.log_evidence, chain.filter.log_evidence);
    }

    #[test]
    fn moving_chain_stays_in_the_box() {
        let lg = LinearGaussian::new(LinearGaussianSpec::default()).unwrap();
        let (_, obs) = lg.simulate(0.8, 200, &mut StreamKey::new(5).rng());
        let cfg = JitterConfig::new(0.5, 1.0, vec![0.04], lg.param_box().clone()).unwrap();
        let chain = bootstrap_run_chain_param(
            &lg,
            &cfg,
            &obs,
            10,
            &mut StreamKey::new(6).rng(),
            &mut StreamKey::new(7).rng(),
        )
        .unwrap();
        assert!(chain.theta_path.iter().all(|t| lg.param_box().contains(t)));
        assert!(chain.theta_path.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn step_failure_carries_the_step() {
        struct Blind(Affine);
        impl StateSpaceModel for Blind {
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
                &self.0.bounds
            }
            fn sample_param_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
                self.0.sample_param_prior(rng)
            }
            fn sample_state_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
                self.0.sample_state_prior(rng, out)
            }
            fn sample_transition<R: Rng + ?Sized>(&self, t: &ParameterVector, p: &[f64], s: usize, r: &mut R, o: &mut [f64]) {
                self.0.sample_transition(t, p, s, r, o)
            }
            fn log_likelihood(&self, _: &ParameterVector, _: &[f64], y: &Observation) -> f64 {
                if y.time_index == 3 { f64::NEG_INFINITY } else { 0.0 }
            }
        }
        let obs: Vec<_> = (1..=5).map(|t| Observation::new(t, vec![0.0])).collect();
        let err = bootstrap_run(&Blind(Affine::new()), &theta(), &obs, 4, &mut StreamKey::new(1).rng()).unwrap_err();
        assert_eq!(err.failed_step(), Some(3));
    }

    proptest! {
        #[test]
        fn weights_lie_on_the_simplex(logs in prop::collection::vec(-50.0f64..50.0, 1..40)) {
            let mut c = cloud(&logs);
            let w = weigh(&Affine::new(), &theta(), &mut c, &Observation::new(1, vec![0.0])).unwrap();
            prop_assert!(w.weights.iter().all(|v| *v >= 0.0));
            prop_assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn resampling_conserves_count_and_support(
            raw in prop::collection::vec(0.0f64..1.0, 1..60),
            seed in any::<u64>(),
        ) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let weights: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let values: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
            let c = cloud(&values);
            let out = resample_cloud(&c, &weights, &mut StreamKey::new(seed).rng()).unwrap();
            prop_assert_eq!(out.len(), c.len());
            for x in out.iter() {
                let i = x[0] as usize;
                prop_assert!(weights[i] > 0.0);
            }
        }
    }
}
