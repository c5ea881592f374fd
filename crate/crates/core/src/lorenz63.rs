//! Stochastic Lorenz 63 model under Euler-Maruyama discretisation, observed
//! every `decimation` steps through the first and third coordinates scaled by
//! an unknown factor `k_o`.
//!
//! The parameter vector is `(S, R, B, k_o)`.

use std::io::Write;

use rand::{Rng, RngExt};
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{gaussian_log_density, Observation, ParameterBox, ParameterVector, StateSpaceModel, StateVector};

pub const PRIOR_LOWER: [f64; 4] = [5.0, 18.0, 1.0, 0.5];
pub const PRIOR_UPPER: [f64; 4] = [20.0, 50.0, 8.0, 3.0];
/// Diagonal of the truncated-Gaussian jitter covariance.
pub const JITTER_COV: [f64; 4] = [0.5, 0.5, 0.2, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz63Params {
    pub s: f64,
    pub r: f64,
    pub b: f64,
    pub k_o: f64,
}

impl Lorenz63Params {
    /// `(10, 28, 8/3, 0.8)`: the chaotic regime used to generate data.
    pub fn reference() -> Self {
        Lorenz63Params { s: 10.0, r: 28.0, b: 8.0 / 3.0, k_o: 0.8 }
    }

    pub fn from_vector(theta: &ParameterVector) -> Self {
        let c = theta.coords();
        Lorenz63Params { s: c[0], r: c[1], b: c[2], k_o: c[3] }
    }

    pub fn to_vector(self) -> ParameterVector {
        ParameterVector(vec![self.s, self.r, self.b, self.k_o])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Lorenz63Config {
    /// Euler step in continuous-time units.
    pub delta: f64,
    /// Euler steps between consecutive observations.
    pub decimation: usize,
    pub obs_noise_var: f64,
    pub state_prior_mean: [f64; 3],
    pub state_prior_var: f64,
}

impl Default for Lorenz63Config {
    fn default() -> Self {
        Lorenz63Config {
            delta: 1e-3,
            decimation: 40,
            obs_noise_var: 0.1,
            state_prior_mean: [-5.91652, -5.52332, 24.5723],
            state_prior_var: 10.0,
        }
    }
}

impl Lorenz63Config {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || self.decimation == 0 || !(self.obs_noise_var > 0.0) || !(self.state_prior_var > 0.0) {
            return Err(Error::Config(format!("invalid Lorenz 63 configuration: {self:?}")));
        }
        Ok(())
    }

    /// Continuous time between observations.
    pub fn obs_interval(&self) -> f64 {
        self.delta * self.decimation as f64
    }

    /// Number of observations covering `time_units` of continuous time.
    pub fn observations_for(&self, time_units: f64) -> usize {
        (time_units / self.obs_interval() + 1e-9).floor() as usize
    }
}

/// One Euler-Maruyama step of the stochastic Lorenz 63 system.
#[inline]
pub fn euler_step(p: &Lorenz63Params, x: [f64; 3], delta: f64, noise: [f64; 3]) -> [f64; 3] {
    let sd = delta.sqrt();
    [
        x[0] - delta * p.s * (x[0] - x[1]) + sd * noise[0],
        x[1] + delta * (p.r * x[0] - x[1] - x[0] * x[2]) + sd * noise[1],
        x[2] + delta * (x[0] * x[1] - p.b * x[2]) + sd * noise[2],
    ]
}

/// Applies `decimation` Euler steps with i.i.d. standard normal noise.
pub fn composite_transition<R: Rng + ?Sized>(
    p: &Lorenz63Params,
    x: [f64; 3],
    decimation: usize,
    delta: f64,
    rng: &mut R,
) -> [f64; 3] {
    let mut x = x;
    for _ in 0..decimation {
        let noise = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
        x = euler_step(p, x, delta, noise);
    }
    x
}

/// Log-density of `y = (y1, y3)` given the state.
pub fn observe_loglik(p: &Lorenz63Params, x: &[f64], y: &Observation, obs_noise_var: f64) -> f64 {
    gaussian_log_density(y.coords[0], p.k_o * x[0], obs_noise_var)
        + gaussian_log_density(y.coords[1], p.k_o * x[2], obs_noise_var)
}

/// The Lorenz 63 model with uniform parameter prior and Gaussian state prior.
#[derive(Clone, Debug)]
pub struct Lorenz63 {
    cfg: Lorenz63Config,
    bounds: ParameterBox,
}

impl Lorenz63 {
    pub fn new(cfg: Lorenz63Config) -> Result<Self> {
        cfg.validate()?;
        let bounds = ParameterBox::new(PRIOR_LOWER.to_vec(), PRIOR_UPPER.to_vec())?;
        Ok(Lorenz63 { cfg, bounds })
    }

    pub fn config(&self) -> &Lorenz63Config {
        &self.cfg
    }
}

impl StateSpaceModel for Lorenz63 {
    fn param_dim(&self) -> usize {
        4
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn obs_dim(&self) -> usize {
        2
    }

    fn param_box(&self) -> &ParameterBox {
        &self.bounds
    }

    fn sample_param_prior<R: Rng + ?Sized>(&self, rng: &mut R) -> ParameterVector {
        self.bounds.sample_uniform(rng)
    }

    fn sample_state_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let sd = self.cfg.state_prior_var.sqrt();
        for (o, m) in out.iter_mut().zip(self.cfg.state_prior_mean) {
            *o = m + sd * rng.sample::<f64, _>(StandardNormal);
        }
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        _t: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let p = Lorenz63Params::from_vector(theta);
        let x = composite_transition(&p, [prev[0], prev[1], prev[2]], self.cfg.decimation, self.cfg.delta, rng);
        out.copy_from_slice(&x);
    }

    fn log_likelihood(&self, theta: &ParameterVector, x: &[f64], y: &Observation) -> f64 {
        gaussian_log_density(y.coords[0], theta.coords()[3] * x[0], self.cfg.obs_noise_var)
            + gaussian_log_density(y.coords[1], theta.coords()[3] * x[2], self.cfg.obs_noise_var)
    }
}

/// Synthetic data set with its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct Lorenz63Dataset {
    /// Hidden state at every Euler step `0..=decimation * n_obs`.
    pub path: Vec<[f64; 3]>,
    pub observations: Vec<Observation>,
    pub truth: Lorenz63Params,
    pub cfg: Lorenz63Config,
}

impl Lorenz63Dataset {
    /// Hidden state at each observation time, entry 0 being the initial state.
    pub fn observed_states(&self) -> Vec<StateVector> {
        self.path.iter().step_by(self.cfg.decimation).map(|x| StateVector(x.to_vec())).collect()
    }

    /// Writes `states` (step, x1, x2, x3) and `observations` (n, y1, y3) as
    /// comma-separated text, each preceded by a `#` header line with the
    /// seed, Euler step, decimation and true parameters.
    pub fn write<W1: Write, W2: Write>(&self, seed: u64, mut states: W1, mut observations: W2) -> Result<()> {
        let header = format!(
            "# seed={seed} delta={} decimation={} S={} R={} B={} k_o={}",
            self.cfg.delta, self.cfg.decimation, self.truth.s, self.truth.r, self.truth.b, self.truth.k_o
        );
        writeln!(states, "{header}")?;
        let mut w = csv::Writer::from_writer(states);
        w.write_record(["step", "x1", "x2", "x3"])?;
        for (k, x) in self.path.iter().enumerate() {
            w.write_record([k.to_string(), x[0].to_string(), x[1].to_string(), x[2].to_string()])?;
        }
        w.flush()?;
        writeln!(observations, "{header}")?;
        let mut w = csv::Writer::from_writer(observations);
        w.write_record(["n", "y1", "y3"])?;
        for y in &self.observations {
            w.write_record([y.time_index.to_string(), y.coords[0].to_string(), y.coords[1].to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Draws `x_0 ~ N(x*, v0 I)`, simulates the discretised dynamics and emits an
/// observation every `decimation` steps.
pub fn generate_synthetic<R: Rng + ?Sized>(
    truth: Lorenz63Params,
    cfg: &Lorenz63Config,
    n_observations: usize,
    rng: &mut R,
) -> Result<Lorenz63Dataset> {
    cfg.validate()?;
    let sd0 = cfg.state_prior_var.sqrt();
    let mut x = [0.0; 3];
    for (o, m) in x.iter_mut().zip(cfg.state_prior_mean) {
        *o = m + sd0 * rng.sample::<f64, _>(StandardNormal);
    }
    let mut path = Vec::with_capacity(n_observations * cfg.decimation + 1);
    path.push(x);
    let obs_sd = cfg.obs_noise_var.sqrt();
    let mut observations = Vec::with_capacity(n_observations);
    for n in 1..=n_observations {
        for _ in 0..cfg.decimation {
            let noise = [rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal)];
            x = euler_step(&truth, x, cfg.delta, noise);
            path.push(x);
        }
        let y1 = truth.k_o * x[0] + obs_sd * rng.sample::<f64, _>(StandardNormal);
        let y3 = truth.k_o * x[2] + obs_sd * rng.sample::<f64, _>(StandardNormal);
        observations.push(Observation::new(n, vec![y1, y3]));
    }
    Ok(Lorenz63Dataset { path, observations, truth, cfg: cfg.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    const STD: Lorenz63Params = Lorenz63Params { s: 10.0, r: 28.0, b: 8.0 / 3.0, k_o: 0.8 };

    #[test]
    fn origin_is_a_drift_fixed_point() {
        assert_eq!(euler_step(&STD, [0.0; 3], 1e-3, [0.0; 3]), [0.0; 3]);
    }

    #[test]
    fn golden_values() {
        // (x, expected) pairs computed by hand from the three drift formulas, delta = 1e-3.
        let cases: [([f64; 3], [f64; 3]); 5] = [
            ([1.0, 1.0, 1.0], [1.0, 1.026, 1.0 - 1e-3 * (5.0 / 3.0)]),
            ([1.0, 0.0, 0.0], [0.99, 0.028, 1.0 * 0.0]),
            ([0.0, 1.0, 0.0], [0.01, 0.999, 0.0]),
            ([0.0, 0.0, 3.0], [0.0, 0.0, 3.0 - 1e-3 * 8.0]),
            ([2.0, -1.0, 5.0], [1.97, -1.0 + 1e-3 * (56.0 + 1.0 - 10.0), 5.0 + 1e-3 * (-2.0 - 40.0 / 3.0)]),
        ];
        for (x, want) in cases {
            let got = euler_step(&STD, x, 1e-3, [0.0; 3]);
            for k in 0..3 {
                assert!((got[k] - want[k]).abs() < 1e-14, "x = {x:?}: {got:?} vs {want:?}");
            }
        }
        let got = euler_step(&STD, [1.0; 3], 1e-3, [0.0; 3]);
        assert!((got[2] - 0.998_333_333_333_333_3).abs() < 1e-15);
    }

    #[test]
    fn noise_enters_additively() {
        let x = [1.5, -2.0, 20.0];
        let noise = [0.3, -1.2, 2.5];
        let base = euler_step(&STD, x, 1e-3, [0.0; 3]);
        let noisy = euler_step(&STD, x, 1e-3, noise);
        for k in 0..3 {
            assert!((noisy[k] - base[k] - 1e-3f64.sqrt() * noise[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn composite_matches_iterated_euler_without_noise() {
        // Zero-noise reference: iterate the deterministic map directly.
        let mut x = [-5.9, -5.5, 24.5];
        for _ in 0..40 {
            let sd = 0.0;
            x = [
                x[0] - 1e-3 * STD.s * (x[0] - x[1]) + sd,
                x[1] + 1e-3 * (STD.r * x[0] - x[1] - x[0] * x[2]) + sd,
                x[2] + 1e-3 * (x[0] * x[1] - STD.b * x[2]) + sd,
            ];
        }
        let mut y = [-5.9, -5.5, 24.5];
        for _ in 0..40 {
            y = euler_step(&STD, y, 1e-3, [0.0; 3]);
        }
        assert_eq!(x, y);
        // decimation 1 is a single step with one noise triple
        let mut r1 = StreamKey::new(1).rng();
        let mut r2 = StreamKey::new(1).rng();
        let one = composite_transition(&STD, [1.0; 3], 1, 1e-3, &mut r1);
        let noise = [r2.sample(StandardNormal), r2.sample(StandardNormal), r2.sample(StandardNormal)];
        assert_eq!(one, euler_step(&STD, [1.0; 3], 1e-3, noise));
    }

    #[test]
    fn composite_is_deterministic_per_stream() {
        let a = composite_transition(&STD, [1.0, 2.0, 3.0], 40, 1e-3, &mut StreamKey::new(5).rng());
        let b = composite_transition(&STD, [1.0, 2.0, 3.0], 40, 1e-3, &mut StreamKey::new(5).rng());
        assert_eq!(a, b);
    }

    #[test]
    fn short_time_variance_grows_linearly() {
        // At the origin the drift Jacobian is small over a few steps, so the
        // per-coordinate variance is close to decimation * delta.
        let var_after = |steps: usize| {
            let mut rng = StreamKey::new(8).child(steps as u64).rng();
            let reps = 10_000;
            let xs: Vec<[f64; 3]> =
                (0..reps).map(|_| composite_transition(&STD, [0.0; 3], steps, 1e-3, &mut rng)).collect();
            (0..3)
                .map(|k| {
                    let m = xs.iter().map(|x| x[k]).sum::<f64>() / reps as f64;
                    xs.iter().map(|x| (x[k] - m).powi(2)).sum::<f64>() / (reps - 1) as f64
                })
                .collect::<Vec<_>>()
        };
        let v5 = var_after(5);
        let v20 = var_after(20);
        for k in 0..3 {
            let ratio = v20[k] / v5[k];
            assert!((ratio - 4.0).abs() < 0.6, "coord {k}: ratio {ratio}");
            assert!((v5[k] / 5e-3 - 1.0).abs() < 0.1);
        }
    }

    #[test]
    fn loglik_at_mode_and_quadratic_offset() {
        let p = STD;
        let x = [2.0, 99.0, 7.0];
        let y = Observation::new(1, vec![p.k_o * x[0], p.k_o * x[2]]);
        let mode = observe_loglik(&p, &x, &y, 0.1);
        assert!((mode + (2.0 * std::f64::consts::PI * 0.1).ln()).abs() < 1e-14);
        let delta = 0.37;
        let shifted = Observation::new(1, vec![p.k_o * x[0] + delta, p.k_o * x[2]]);
        let lg = observe_loglik(&p, &x, &shifted, 0.1);
        assert!((lg - (mode - delta * delta / 0.2)).abs() < 1e-13);
        // x2 is not observed
        assert_eq!(observe_loglik(&p, &[2.0, -50.0, 7.0], &y, 0.1), mode);
        // the model wrapper agrees and only k_o matters among the parameters
        let model = Lorenz63::new(Lorenz63Config::default()).unwrap();
        let theta = ParameterVector(vec![6.0, 40.0, 2.0, 0.8]);
        assert_eq!(model.log_likelihood(&theta, &x, &y), mode);
    }

    #[test]
    fn synthetic_data_shape_and_reproducibility() {
        let cfg = Lorenz63Config::default();
        let empty = generate_synthetic(STD, &cfg, 0, &mut StreamKey::new(1).rng()).unwrap();
        assert_eq!(empty.path.len(), 1);
        assert!(empty.observations.is_empty());
        let a = generate_synthetic(STD, &cfg, 25, &mut StreamKey::new(2).rng()).unwrap();
        let b = generate_synthetic(STD, &cfg, 25, &mut StreamKey::new(2).rng()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.path.len(), 25 * 40 + 1);
        assert_eq!(a.observed_states().len(), 26);
        assert_eq!(a.observations[24].time_index, 25);
        assert_eq!(cfg.observations_for(5.0), 125);
        assert_eq!(cfg.observations_for(50.0), 1250);
    }

    #[test]
    fn trajectories_stay_on_the_attractor() {
        let cfg = Lorenz63Config::default();
        let n_obs = cfg.observations_for(25.0);
        for seed in 0..20 {
            let d = generate_synthetic(STD, &cfg, n_obs, &mut StreamKey::new(seed).rng()).unwrap();
            let max = d.path.iter().map(|x| (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()).fold(0.0, f64::max);
            assert!(max < 100.0, "seed {seed}: max norm {max}");
        }
    }

    #[test]
    fn dataset_files_carry_header() {
        let cfg = Lorenz63Config::default();
        let d = generate_synthetic(STD, &cfg, 2, &mut StreamKey::new(2).rng()).unwrap();
        let (mut s, mut o) = (Vec::new(), Vec::new());
        d.write(42, &mut s, &mut o).unwrap();
        let s = String::from_utf8(s).unwrap();
        let o = String::from_utf8(o).unwrap();
        assert!(s.starts_with("# seed=42 delta=0.001 decimation=40 S=10 R=28 B=2.6666666666666665 k_o=0.8\nstep,x1,x2,x3\n"));
        assert_eq!(s.lines().count(), 2 + 81);
        assert_eq!(o.lines().nth(1), Some("n,y1,y3"));
        assert_eq!(o.lines().count(), 4);
    }
}
