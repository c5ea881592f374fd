use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::harness::config::{lorenz_default_cov, ExperimentConfig, ModelKind};
use crate::lorenz63::{generate_synthetic, Lorenz63, Lorenz63Dataset, Lorenz63Params};
use crate::model::{Observation, ParameterBox, ParameterVector, StateSpaceModel};
use crate::oracle::{GridHmm, LinearGaussian};
use crate::rng::StreamKey;

/// A model instantiated from an [`ExperimentConfig`].
#[derive(Clone, Debug)]
pub enum BuiltModel {
    Lorenz63(Lorenz63),
    GridHmm(GridHmm),
    LinearGaussian(LinearGaussian),
}

/// Runs `$body` with `$m` bound to the concrete model inside a [`BuiltModel`].
macro_rules! with_model {
    ($model:expr, |$m:ident| $body:expr) => {
        match $model {
            $crate::harness::BuiltModel::Lorenz63($m) => $body,
            $crate::harness::BuiltModel::GridHmm($m) => $body,
            $crate::harness::BuiltModel::LinearGaussian($m) => $body,
        }
    };
}
pub(crate) use with_model;

impl BuiltModel {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(match cfg.model {
            ModelKind::Lorenz63 => BuiltModel::Lorenz63(Lorenz63::new(cfg.lorenz63.clone())?),
            ModelKind::GridHmm => BuiltModel::GridHmm(match &cfg.grid_hmm {
                Some(spec) => GridHmm::new(spec.clone())?,
                None => GridHmm::three_point_example(),
            }),
            ModelKind::LinearGaussian => BuiltModel::LinearGaussian(LinearGaussian::new(cfg.linear_gaussian.clone())?),
        })
    }

    pub fn param_box(&self) -> &ParameterBox {
        with_model!(self, |m| m.param_box())
    }

    /// Data-generating parameter used when the configuration names none: the
    /// chaotic Lorenz regime, the last grid point, or `a = 0.8` clamped to
    /// the prior range.
    pub fn default_truth(&self) -> ParameterVector {
        match self {
            BuiltModel::Lorenz63(_) => Lorenz63Params::reference().to_vector(),
            BuiltModel::GridHmm(h) => h.param_point(h.n_params() - 1),
            BuiltModel::LinearGaussian(lg) => {
                ParameterVector(vec![0.8f64.clamp(lg.spec().a_min, lg.spec().a_max)])
            }
        }
    }

    pub fn default_jitter_cov(&self) -> Vec<f64> {
        match self {
            BuiltModel::Lorenz63(_) => lorenz_default_cov(),
            BuiltModel::GridHmm(h) => {
                let b = h.param_box();
                b.lower().iter().zip(b.upper()).map(|(l, u)| (0.25 * (u - l)).powi(2)).collect()
            }
            BuiltModel::LinearGaussian(lg) => lg.default_jitter_cov(),
        }
    }

    pub fn truth(&self, cfg: &ExperimentConfig) -> Result<ParameterVector> {
        let truth = cfg.truth.clone().map(ParameterVector).unwrap_or_else(|| self.default_truth());
        if truth.dim() != self.param_box().dim() {
            return Err(Error::Config(format!(
                "truth has {} coordinates, model has {}",
                truth.dim(),
                self.param_box().dim()
            )));
        }
        if let BuiltModel::GridHmm(h) = self {
            let k = h.nearest(truth.coords());
            if h.param_point(k) != truth {
                return Err(Error::Config(format!("truth {:?} is not a grid point", truth.coords())));
            }
        }
        Ok(truth)
    }
}

/// Observations together with the ground truth that produced them.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub truth: ParameterVector,
    /// Hidden state at each observation time; entry 0 is the initial state.
    pub true_states: Vec<Vec<f64>>,
    /// Full-resolution Lorenz path, when the model is Lorenz 63.
    pub lorenz: Option<Lorenz63Dataset>,
}

/// Simulates `steps` observations from `model` at parameter `truth`.
pub fn generate_dataset(model: &BuiltModel, truth: &ParameterVector, steps: usize, key: StreamKey) -> Result<Dataset> {
    let mut rng = key.rng();
    Ok(match model {
        BuiltModel::Lorenz63(l) => {
            let d = generate_synthetic(Lorenz63Params::from_vector(truth), l.config(), steps, &mut rng)?;
            Dataset {
                observations: d.observations.clone(),
                truth: truth.clone(),
                true_states: d.observed_states().into_iter().map(|s| s.0).collect(),
                lorenz: Some(d),
            }
        }
        BuiltModel::GridHmm(h) => {
            let (path, observations) = h.simulate(h.nearest(truth.coords()), steps, &mut rng);
            Dataset {
                observations,
                truth: truth.clone(),
                true_states: path.into_iter().map(|x| vec![x as f64]).collect(),
                lorenz: None,
            }
        }
        BuiltModel::LinearGaussian(lg) => {
            let (path, observations) = lg.simulate(truth.coords()[0], steps, &mut rng);
            Dataset { observations, truth: truth.clone(), true_states: path.into_iter().map(|x| vec![x]).collect(), lorenz: None }
        }
    })
}

fn write_header(out: &mut impl Write, header: &[String]) -> Result<()> {
    for line in header {
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Writes `states.csv` and `observations.csv` into `dir`, each preceded by
/// `header` comment lines.
pub fn write_dataset(data: &Dataset, dir: &Path, seed: u64, header: &[String]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut states = BufWriter::new(File::create(dir.join("states.csv"))?);
    let mut obs = BufWriter::new(File::create(dir.join("observations.csv"))?);
    write_header(&mut states, header)?;
    write_header(&mut obs, header)?;
    if let Some(d) = &data.lorenz {
        d.write(seed, &mut states, &mut obs)?;
    } else {
        let dx = data.true_states.first().map_or(0, Vec::len);
        let dy = data.observations.first().map_or(0, |y| y.coords.len());
        let mut w = csv::Writer::from_writer(&mut states);
        let mut cols = vec!["step".to_string()];
        cols.extend((1..=dx).map(|k| format!("x{k}")));
        w.write_record(&cols)?;
        for (t, x) in data.true_states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        drop(w);
        let mut w = csv::Writer::from_writer(&mut obs);
        let mut cols = vec!["n".to_string()];
        cols.extend((1..=dy).map(|k| format!("y{k}")));
        w.write_record(&cols)?;
        for y in &data.observations {
            let mut row = vec![y.time_index.to_string()];
            row.extend(y.coords.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
    }
    states.flush()?;
    obs.flush()?;
    Ok(())
}
