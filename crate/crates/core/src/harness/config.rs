use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jitter::JitterConfig;
use crate::lorenz63::{Lorenz63Config, JITTER_COV};
use crate::model::ParameterBox;
use crate::oracle::{GridHmmSpec, LinearGaussianSpec};

/// Number of observations for discrete-time models when `steps` is unset.
pub const DEFAULT_STEPS: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    #[default]
    Lorenz63,
    GridHmm,
    LinearGaussian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Single,
    RateStudy,
    IdentificationStudy,
    MeanErrorStudy,
    ChainStudy,
}

/// Jitter kernel settings. The mixing probability defaults to `N^(-p/2)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JitterSettings {
    pub epsilon: Option<f64>,
    pub p_exponent: f64,
    /// Per-coordinate variance of the rejuvenation Gaussian; model default when unset.
    pub covariance_diag: Option<Vec<f64>>,
    /// Disables rejuvenation entirely.
    pub frozen: bool,
}

impl Default for JitterSettings {
    fn default() -> Self {
        JitterSettings { epsilon: None, p_exponent: 1.0, covariance_diag: None, frozen: false }
    }
}

impl JitterSettings {
    pub fn build(&self, n: usize, default_cov: Vec<f64>, bounds: &ParameterBox) -> Result<JitterConfig> {
        let cov = self.covariance_diag.clone().unwrap_or(default_cov);
        if self.frozen {
            return JitterConfig::frozen(cov, bounds.clone());
        }
        match self.epsilon {
            Some(eps) => JitterConfig::new(eps, self.p_exponent, cov, bounds.clone()),
            None => JitterConfig::rate_faithful(n, self.p_exponent, cov, bounds.clone()),
        }
    }
}

/// Everything needed to reproduce an experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub mode: Mode,
    /// Outer (parameter) particles.
    pub n: usize,
    /// Inner (state) particles per outer particle; equals `n` when unset.
    pub m: Option<usize>,
    /// Outer ensemble sizes compared by the studies.
    pub n_list: Vec<usize>,
    pub seed: u64,
    /// Seed of the synthetic data; `seed` when unset.
    pub data_seed: Option<u64>,
    pub replicates: usize,
    /// Continuous-time horizon of Lorenz 63 runs.
    pub time_units: f64,
    /// Observation count; overrides `time_units` when set.
    pub steps: Option<usize>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Parameter that generates the data; model default when unset.
    pub truth: Option<Vec<f64>>,
    pub jitter: JitterSettings,
    pub lorenz63: Lorenz63Config,
    /// Grid model; the built-in three-point grid when unset.
    pub grid_hmm: Option<GridHmmSpec>,
    pub linear_gaussian: LinearGaussianSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Lorenz63,
            mode: Mode::Single,
            n: 100,
            m: None,
            n_list: vec![50, 100, 200, 400, 800],
            seed: 0,
            data_seed: None,
            replicates: 10,
            time_units: 50.0,
            steps: None,
            out_dir: PathBuf::from("out"),
            workers: None,
            truth: None,
            jitter: JitterSettings::default(),
            lorenz63: Lorenz63Config::default(),
            grid_hmm: None,
            linear_gaussian: LinearGaussianSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m == Some(0) {
            return Err(Error::Config("N and M must be at least 1".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.n_list.contains(&0) {
            return Err(Error::Config("n_list entries must be at least 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        // header lines are written as TOML, whose integers are signed 64-bit
        if self.seed > i64::MAX as u64 || self.data_seed.is_some_and(|s| s > i64::MAX as u64) {
            return Err(Error::Config(format!("seed must be at most {}", i64::MAX)));
        }
        if !(self.time_units > 0.0) {
            return Err(Error::Config("time_units must be positive".into()));
        }
        if self.steps == Some(0) && self.mode != Mode::Single {
            return Err(Error::Config("studies need at least one observation".into()));
        }
        self.lorenz63.validate()
    }

    /// Root of the data streams.
    pub fn data_key(&self) -> crate::rng::StreamKey {
        crate::rng::StreamKey::new(self.data_seed.unwrap_or(self.seed)).child(crate::rng::tags::DATA)
    }

    /// Inner ensemble size paired with outer size `n`.
    pub fn m_for(&self, n: usize) -> usize {
        self.m.unwrap_or(n)
    }

    /// Number of observations to generate.
    pub fn horizon(&self) -> usize {
        match (self.steps, self.model) {
            (Some(s), _) => s,
            (None, ModelKind::Lorenz63) => self.lorenz63.observations_for(self.time_units),
            (None, _) => DEFAULT_STEPS,
        }
    }

    /// Continuous time per observation, or 0 for discrete-time models.
    pub fn time_per_step(&self) -> f64 {
        match self.model {
            ModelKind::Lorenz63 => self.lorenz63.obs_interval(),
            _ => 0.0,
        }
    }

    /// The configuration as written into outputs: the worker count and the
    /// output directory do not influence results and are left out, so that
    /// reruns elsewhere or with other pool sizes write identical files.
    pub fn recorded(&self) -> ExperimentConfig {
        ExperimentConfig { workers: None, out_dir: PathBuf::new(), ..self.clone() }
    }

    /// `# `-prefixed copy of [`Self::recorded`] for file headers.
    pub fn header_lines(&self) -> Result<Vec<String>> {
        Ok(self.recorded().to_toml_string()?.lines().map(|l| format!("# {l}")).collect())
    }
}

pub(crate) fn lorenz_default_cov() -> Vec<f64> {
    JITTER_COV.to_vec()
}
