//! Finite-state hidden Markov models indexed by a finite parameter grid.
//!
//! On such a model both the conditional filter for each grid point and the
//! full parameter posterior are computable exactly, which makes it the
//! reference against which the particle filters are checked.

use rand::{Rng, RngExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, ParameterBox, ParameterVector, StateSpaceModel};

pub const MAX_STATES: usize = 8;
pub const MAX_PARAMS: usize = 16;

const SIMPLEX_TOL: f64 = 1e-9;

/// Serializable description of a [`GridHmm`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridHmmSpec {
    pub param_points: Vec<Vec<f64>>,
    pub param_prior: Vec<f64>,
    /// Distribution of `X_0`; uniform when absent.
    #[serde(default)]
    pub initial: Option<Vec<f64>>,
    /// `transitions[k][i][j] = P(X_t = j | X_{t-1} = i)` under parameter `k`.
    pub transitions: Vec<Vec<Vec<f64>>>,
    /// `emissions[k][i][s] = P(Y_t = s | X_t = i)` under parameter `k`.
    pub emissions: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct GridHmm {
    spec: GridHmmSpec,
    initial: Vec<f64>,
    n_states: usize,
    n_symbols: usize,
    bounds: ParameterBox,
    log_emissions: Vec<Vec<Vec<f64>>>,
    cumulative_transitions: Vec<Vec<Vec<f64>>>,
    cumulative_initial: Vec<f64>,
    cumulative_prior: Vec<f64>,
}

fn check_simplex(v: &[f64], what: &str) -> Result<()> {
    let s: f64 = v.iter().sum();
    if v.iter().any(|p| !(*p >= 0.0)) || (s - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Config(format!("{what} is not a probability vector: {v:?}")));
    }
    Ok(())
}

fn cumulative(v: &[f64]) -> Vec<f64> {
    v.iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect()
}

fn draw_categorical<R: Rng + ?Sized>(cdf: &[f64], rng: &mut R) -> usize {
    let u = rng.random::<f64>() * cdf[cdf.len() - 1];
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

impl GridHmm {
    pub fn new(spec: GridHmmSpec) -> Result<Self> {
        let n_params = spec.param_points.len();
        if n_params == 0 || n_params > MAX_PARAMS {
            return Err(Error::Config(format!("grid must have 1..={MAX_PARAMS} points, got {n_params}")));
        }
        let d = spec.param_points[0].len();
        if d == 0 || spec.param_points.iter().any(|p| p.len() != d) {
            return Err(Error::Config("grid points must share a positive dimension".into()));
        }
        if spec.param_prior.len() != n_params
            || spec.transitions.len() != n_params
            || spec.emissions.len() != n_params
        {
            return Err(Error::Config("prior, transitions and emissions need one entry per grid point".into()));
        }
        check_simplex(&spec.param_prior, "parameter prior")?;
        let n_states = spec.transitions[0].len();
        if n_states == 0 || n_states > MAX_STATES {
            return Err(Error::Config(format!("HMM must have 1..={MAX_STATES} states, got {n_states}")));
        }
        let n_symbols = spec.emissions[0].first().map_or(0, Vec::len);
        if n_symbols == 0 {
            return Err(Error::Config("emission tables need at least one symbol".into()));
        }
        for k in 0..n_params {
            if spec.transitions[k].len() != n_states || spec.emissions[k].len() != n_states {
                return Err(Error::Config(format!("grid point {k}: tables must have {n_states} rows")));
            }
            for (i, row) in spec.transitions[k].iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::Config(format!("grid point {k}: transition row {i} has wrong length")));
                }
                check_simplex(row, &format!("transition row {i} of grid point {k}"))?;
            }
            for (i, row) in spec.emissions[k].iter().enumerate() {
                if row.len() != n_symbols || row.iter().any(|&e| !(e > 0.0)) {
                    return Err(Error::Config(format!(
                        "grid point {k}: emission row {i} must have {n_symbols} positive entries"
                    )));
                }
                check_simplex(row, &format!("emission row {i} of grid point {k}"))?;
            }
        }
        let initial = spec.initial.clone().unwrap_or_else(|| vec![1.0 / n_states as f64; n_states]);
        if initial.len() != n_states {
            return Err(Error::Config("initial distribution has wrong length".into()));
        }
        check_simplex(&initial, "initial distribution")?;

        // Bounding box of the grid, padded by half the smallest spacing so that
        // every grid point sits in the interior of its own Voronoi cell.
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for p in &spec.param_points {
            for c in 0..d {
                lower[c] = lower[c].min(p[c]);
                upper[c] = upper[c].max(p[c]);
            }
        }
        for c in 0..d {
            let mut vals: Vec<f64> = spec.param_points.iter().map(|p| p[c]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            let gap = vals.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
            let pad = if gap.is_finite() { 0.5 * gap } else { 0.5 };
            lower[c] -= pad;
            upper[c] += pad;
        }
        let bounds = ParameterBox::new(lower, upper)?;

        let log_emissions = spec
            .emissions
            .iter()
            .map(|t| t.iter().map(|row| row.iter().map(|e| e.ln()).collect()).collect())
            .collect();
        let cumulative_transitions = spec
            .transitions
            .iter()
            .map(|t| t.iter().map(|row| cumulative(row)).collect())
            .collect();
        Ok(GridHmm {
            cumulative_initial: cumulative(&initial),
            cumulative_prior: cumulative(&spec.param_prior),
            initial,
            n_states,
            n_symbols,
            bounds,
            log_emissions,
            cumulative_transitions,
            spec,
        })
    }

    /// Three-point grid `theta in {0.3, 0.6, 0.9}` of the family
    /// [`Self::emission_family`].
    pub fn three_point_example() -> Self {
        Self::emission_family(&[0.3, 0.6, 0.9])
    }

    /// Two-state chain with `P(stay) = 0.85` where `theta` sets the rate of
    /// symbol 1: `P(Y = 1 | X = 0) = theta - 0.05` and
    /// `P(Y = 1 | X = 1) = theta + 0.05`. Uniform prior over `levels`, which
    /// must lie in `(0.05, 0.95)`.
    pub fn emission_family(levels: &[f64]) -> Self {
        let n = levels.len();
        let trans = vec![vec![0.85, 0.15], vec![0.15, 0.85]];
        let row = |p: f64| vec![1.0 - p, p];
        GridHmm::new(GridHmmSpec {
            param_points: levels.iter().map(|&a| vec![a]).collect(),
            param_prior: vec![1.0 / n as f64; n],
            initial: None,
            transitions: vec![trans; n],
            emissions: levels.iter().map(|&a| vec![row(a - 0.05), row(a + 0.05)]).collect(),
        })
        .expect("valid built-in grid")
    }

    pub fn spec(&self) -> &GridHmmSpec {
        &self.spec
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    pub fn n_params(&self) -> usize {
        self.spec.param_points.len()
    }

    pub fn param_point(&self, k: usize) -> ParameterVector {
        ParameterVector(self.spec.param_points[k].clone())
    }

    pub fn param_points(&self) -> Vec<ParameterVector> {
        (0..self.n_params()).map(|k| self.param_point(k)).collect()
    }

    pub fn transition(&self, k: usize) -> &[Vec<f64>] {
        &self.spec.transitions[k]
    }

    pub fn emission(&self, k: usize) -> &[Vec<f64>] {
        &self.spec.emissions[k]
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    /// Index of the grid point nearest to `theta` (ties go to the lower index).
    pub fn nearest(&self, theta: &[f64]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (k, p) in self.spec.param_points.iter().enumerate() {
            let d: f64 = p.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    /// Fraction of `thetas` in the Voronoi cell of each grid point.
    pub fn cell_fractions(&self, thetas: &[ParameterVector]) -> Vec<f64> {
        let mut counts = vec![0.0; self.n_params()];
        for t in thetas {
            counts[self.nearest(t.coords())] += 1.0;
        }
        let n = thetas.len().max(1) as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    }

    /// Weighted mass in the Voronoi cell of each grid point.
    pub fn cell_weights(&self, thetas: &[ParameterVector], weights: &[f64]) -> Vec<f64> {
        let mut mass = vec![0.0; self.n_params()];
        for (t, w) in thetas.iter().zip(weights) {
            mass[self.nearest(t.coords())] += w;
        }
        mass
    }

    fn symbol(&self, y: &Observation) -> Result<usize> {
        let s = y.coords.first().copied().unwrap_or(f64::NAN);
        if y.coords.len() != 1 || s.fract() != 0.0 || s < 0.0 || s as usize >= self.n_symbols {
            return Err(Error::invalid(format!("observation {:?} is not a symbol of the alphabet", y.coords)));
        }
        Ok(s as usize)
    }

    /// Simulates `T` observations under grid point `k`.
    ///
    /// Returns the hidden path `x_0..=x_T` and the observations `y_1..=y_T`.
    pub fn simulate<R: Rng + ?Sized>(&self, k: usize, steps: usize, rng: &mut R) -> (Vec<usize>, Vec<Observation>) {
        let emission_cdf: Vec<Vec<f64>> = self.spec.emissions[k].iter().map(|r| cumulative(r)).collect();
        let mut x = draw_categorical(&self.cumulative_initial, rng);
        let mut path = vec![x];
        let mut obs = Vec::with_capacity(steps);
        for t in 1..=steps {
            x = draw_categorical(&self.cumulative_transitions[k][x], rng);
            let s = draw_categorical(&emission_cdf[x], rng);
            path.push(x);
            obs.push(Observation::new(t, vec![s as f64]));
        }
        (path, obs)
    }

    /// Exact predictive and filter distributions of the hidden state given
    /// grid point `k`, and the one-step observation likelihoods `u_t(theta_k)`.
    pub fn exact_conditional_filter(&self, k: usize, observations: &[Observation]) -> Result<ConditionalFilter> {
        let s = self.n_states;
        let trans = &self.spec.transitions[k];
        let emis = &self.spec.emissions[k];
        let mut filter = vec![self.initial.clone()];
        let mut predictive = Vec::with_capacity(observations.len());
        let mut likelihoods = Vec::with_capacity(observations.len());
        for y in observations {
            let sym = self.symbol(y)?;
            let prev = filter.last().expect("nonempty");
            let mut xi = vec![0.0; s];
            for (i, p) in prev.iter().enumerate() {
                for j in 0..s {
                    xi[j] += p * trans[i][j];
                }
            }
            let u: f64 = (0..s).map(|j| xi[j] * emis[j][sym]).sum();
            let phi: Vec<f64> = (0..s).map(|j| xi[j] * emis[j][sym] / u).collect();
            predictive.push(xi);
            likelihoods.push(u);
            filter.push(phi);
        }
        Ok(ConditionalFilter { predictive, filter, likelihoods })
    }

    /// Exact parameter posterior over the grid after each observation; entry
    /// 0 is the prior.
    pub fn exact_param_posterior(&self, observations: &[Observation]) -> Result<Vec<Vec<f64>>> {
        let n = self.n_params();
        let per_param: Vec<Vec<f64>> = (0..n)
            .map(|k| self.exact_conditional_filter(k, observations).map(|f| f.likelihoods))
            .collect::<Result<_>>()?;
        let mut out = vec![self.spec.param_prior.clone()];
        for t in 0..observations.len() {
            let prev = out.last().expect("nonempty");
            let unnorm: Vec<f64> = (0..n).map(|k| prev[k] * per_param[k][t]).collect();
            let z: f64 = unnorm.iter().sum();
            out.push(unnorm.iter().map(|v| v / z).collect());
        }
        Ok(out)
    }

    /// Posterior mean of the parameter under a grid distribution.
    pub fn grid_mean(&self, probs: &[f64]) -> ParameterVector {
        let d = self.spec.param_points[0].len();
        let mut m = vec![0.0; d];
        for (p, pt) in probs.iter().zip(&self.spec.param_points) {
            for c in 0..d {
                m[c] += p * pt[c];
            }
        }
        ParameterVector(m)
    }
}

/// Exact conditional filtering output for one grid point.
#[derive(Clone, Debug)]
pub struct ConditionalFilter {
    /// `xi_t`, times `1..=T`.
    pub predictive: Vec<Vec<f64>>,
    /// `phi_t`, times `0..=T` (entry 0 is the initial distribution).
    pub filter: Vec<Vec<f64>>,
    /// `u_t(theta_k) = (g^{y_t}, xi_t)`, times `1..=T`.
    pub likelihoods: Vec<f64>,
}

impl StateSpaceModel for GridHmm {
    fn param_dim(&self) -> usize {
        self.spec.param_points[0].len()
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
        self.param_point(draw_categorical(&self.cumulative_prior, rng))
    }

    fn sample_state_prior<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        out[0] = draw_categorical(&self.cumulative_initial, rng) as f64;
    }

    fn sample_transition<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        _t: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let k = self.nearest(theta.coords());
        out[0] = draw_categorical(&self.cumulative_transitions[k][prev[0] as usize], rng) as f64;
    }

    fn log_likelihood(&self, theta: &ParameterVector, x: &[f64], y: &Observation) -> f64 {
        let k = self.nearest(theta.coords());
        self.log_emissions[k][x[0] as usize][y.coords[0] as usize]
    }

    fn propagate_flat<R: Rng + ?Sized>(
        &self,
        theta: &ParameterVector,
        prev: &[f64],
        _t: usize,
        rng: &mut R,
        out: &mut [f64],
    ) {
        let rows = &self.cumulative_transitions[self.nearest(theta.coords())];
        for (p, o) in prev.iter().zip(out.iter_mut()) {
            *o = draw_categorical(&rows[*p as usize], rng) as f64;
        }
    }

    fn log_likelihood_flat(&self, theta: &ParameterVector, states: &[f64], y: &Observation) -> Vec<f64> {
        let table = &self.log_emissions[self.nearest(theta.coords())];
        let sym = y.coords[0] as usize;
        states.iter().map(|&x| table[x as usize][sym]).collect()
    }

    fn snap_param(&self, theta: ParameterVector) -> ParameterVector {
        self.param_point(self.nearest(theta.coords()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamKey;

    fn obs(symbols: &[usize]) -> Vec<Observation> {
        symbols.iter().enumerate().map(|(t, &s)| Observation::new(t + 1, vec![s as f64])).collect()
    }

    fn two_param(u: [f64; 2]) -> GridHmm {
        // a single state with emission probability of symbol 0 equal to u[k]
        GridHmm::new(GridHmmSpec {
            param_points: vec![vec![0.0], vec![1.0]],
            param_prior: vec![0.5, 0.5],
            initial: None,
            transitions: vec![vec![vec![1.0]]; 2],
            emissions: vec![vec![vec![u[0], 1.0 - u[0]]], vec![vec![u[1], 1.0 - u[1]]]],
        })
        .unwrap()
    }

    #[test]
    fn rejects_bad_tables() {
        let mut spec = GridHmm::three_point_example().spec().clone();
        spec.transitions[1][0] = vec![0.5, 0.6];
        assert!(GridHmm::new(spec).is_err());
        let mut spec = GridHmm::three_point_example().spec().clone();
        spec.emissions[0][0] = vec![1.0, 0.0];
        assert!(GridHmm::new(spec).is_err());
        let mut spec = GridHmm::three_point_example().spec().clone();
        spec.param_prior = vec![0.5, 0.5, 0.5];
        assert!(GridHmm::new(spec).is_err());
    }

    #[test]
    fn box_pads_grid_by_half_spacing() {
        let h = GridHmm::three_point_example();
        let b = h.param_box();
        assert!((b.lower()[0] - 0.15).abs() < 1e-12);
        assert!((b.upper()[0] - 1.05).abs() < 1e-12);
        assert_eq!(h.nearest(&[0.44]), 0);
        assert_eq!(h.nearest(&[0.46]), 1);
        assert_eq!(h.nearest(&[1.0]), 2);
    }

    #[test]
    fn uniform_model_keeps_filter_uniform() {
        let h = GridHmm::new(GridHmmSpec {
            param_points: vec![vec![0.0]],
            param_prior: vec![1.0],
            initial: None,
            transitions: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
            emissions: vec![vec![vec![0.5, 0.5], vec![0.5, 0.5]]],
        })
        .unwrap();
        let f = h.exact_conditional_filter(0, &obs(&[0, 1, 1, 0])).unwrap();
        for phi in &f.filter {
            assert_eq!(phi, &vec![0.5, 0.5]);
        }
        assert!(f.likelihoods.iter().all(|&u| (u - 0.5).abs() < 1e-15));
    }

    #[test]
    fn two_state_filter_by_hand() {
        // Transition [[0.9, 0.1], [0.2, 0.8]], emissions [[0.8, 0.2], [0.3, 0.7]],
        // uniform start, observations 0, 0, 1.
        let h = GridHmm::new(GridHmmSpec {
            param_points: vec![vec![0.0]],
            param_prior: vec![1.0],
            initial: None,
            transitions: vec![vec![vec![0.9, 0.1], vec![0.2, 0.8]]],
            emissions: vec![vec![vec![0.8, 0.2], vec![0.3, 0.7]]],
        })
        .unwrap();
        let f = h.exact_conditional_filter(0, &obs(&[0, 0, 1])).unwrap();
        // step 1: xi = (0.55, 0.45); u = 0.44 + 0.135 = 0.575; phi0 = 0.44/0.575
        assert!((f.predictive[0][0] - 0.55).abs() < 1e-15);
        assert!((f.likelihoods[0] - 0.575).abs() < 1e-15);
        let phi1 = 0.44 / 0.575;
        assert!((f.filter[1][0] - phi1).abs() < 1e-15);
        // step 2: xi0 = 0.9 phi1 + 0.2 (1 - phi1)
        let xi0 = 0.9 * phi1 + 0.2 * (1.0 - phi1);
        let u2 = 0.8 * xi0 + 0.3 * (1.0 - xi0);
        let phi2 = 0.8 * xi0 / u2;
        assert!((f.likelihoods[1] - u2).abs() < 1e-15);
        assert!((f.filter[2][0] - phi2).abs() < 1e-15);
        // step 3: symbol 1 pulls mass towards state 1
        let xi0 = 0.9 * phi2 + 0.2 * (1.0 - phi2);
        let u3 = 0.2 * xi0 + 0.7 * (1.0 - xi0);
        assert!((f.likelihoods[2] - u3).abs() < 1e-15);
        assert!((f.filter[3][0] - 0.2 * xi0 / u3).abs() < 1e-15);
        assert!(f.filter[3][0] < f.filter[2][0]);
    }

    #[test]
    fn single_state_is_point_mass() {
        let h = two_param([0.3, 0.6]);
        let f = h.exact_conditional_filter(1, &obs(&[0, 1, 0])).unwrap();
        assert!(f.filter.iter().all(|phi| phi == &vec![1.0]));
    }

    #[test]
    fn one_step_bayes() {
        // u_1 = (0.2, 0.6) under a uniform prior gives (0.25, 0.75)
        let h = two_param([0.2, 0.6]);
        let post = h.exact_param_posterior(&obs(&[0])).unwrap();
        assert!((post[1][0] - 0.25).abs() < 1e-15);
        assert!((post[1][1] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn constant_likelihood_leaves_posterior_unchanged() {
        let h = two_param([0.4, 0.4]);
        let post = h.exact_param_posterior(&obs(&[0, 1, 1, 0, 1])).unwrap();
        for p in &post {
            assert!((p[0] - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_symbols_outside_alphabet() {
        let h = GridHmm::three_point_example();
        assert!(h.exact_param_posterior(&obs(&[0, 2])).is_err());
        assert!(h.exact_param_posterior(&[Observation::new(1, vec![0.5])]).is_err());
    }

    #[test]
    fn posterior_identifies_generating_point() {
        let h = GridHmm::three_point_example();
        let mut rng = StreamKey::new(11).rng();
        let (_, y) = h.simulate(2, 400, &mut rng);
        let post = h.exact_param_posterior(&y).unwrap();
        assert!(post[400][2] > 0.999, "{:?}", post[400]);
        // mass on the truth grows on average over time
        let early: f64 = post[1..50].iter().map(|p| p[2]).sum::<f64>() / 49.0;
        let late: f64 = post[350..].iter().map(|p| p[2]).sum::<f64>() / 51.0;
        assert!(late > early);
    }
}
