use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::{ExperimentConfig, Mode};
use crate::harness::data::{generate_dataset, with_model, BuiltModel, Dataset};
use crate::harness::single::write_summary;
use crate::inner::bootstrap_run_chain_param;
use crate::metrics::{d_omega, fit_rate, Measure, OmegaSet, RateFit, TraceContext};
use crate::model::{Observation, StateSpaceModel};
use crate::nested::{run_nested, NestedFilterState, PosteriorSnapshot};
use crate::rng::{tags, StreamKey};

/// Errors for one ensemble size across replicates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub m: usize,
    /// Mean over replicates of the terminal error.
    pub mean_error: f64,
    /// Sample variance of the terminal error; absent for a single replicate.
    pub error_variance: Option<f64>,
    pub terminal_errors: Vec<f64>,
    /// Error at each step `0..=T` averaged over replicates.
    #[serde(skip)]
    pub mean_curve: Vec<f64>,
}

/// Per-parameter error curves indexed `[step][parameter]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParameterCurves {
    pub time: Vec<f64>,
    pub mean_abs_error: Vec<Vec<f64>>,
    pub variance: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub study: Mode,
    pub config: ExperimentConfig,
    pub steps: usize,
    pub replicates: usize,
    pub per_n: Vec<PerN>,
    pub rate: Option<RateFit>,
    pub final_mean_abs_error: Option<Vec<f64>>,
    #[serde(skip)]
    pub parameter_curves: Option<ParameterCurves>,
}

fn mean_and_variance(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = (values.len() > 1).then(|| values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0));
    (mean, var)
}

/// Groups per-run curves (ordered by N, then replicate) into [`PerN`] rows.
fn aggregate(cfg: &ExperimentConfig, n_values: &[usize], curves: &[Vec<f64>]) -> Vec<PerN> {
    n_values
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let runs = &curves[i * cfg.replicates..(i + 1) * cfg.replicates];
            let terminal: Vec<f64> = runs.iter().map(|c| c.last().copied().unwrap_or(0.0)).collect();
            let (mean_error, error_variance) = mean_and_variance(&terminal);
            let len = runs[0].len();
            let mean_curve =
                (0..len).map(|t| runs.iter().map(|c| c[t]).sum::<f64>() / runs.len() as f64).collect();
            PerN { n, m: cfg.m_for(n), mean_error, error_variance, terminal_errors: terminal, mean_curve }
        })
        .collect()
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| Error::Config(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Runs `replicates` filters for every `n` and reduces each run to a
/// per-step error curve with `error(state)`.
fn replicate_curves<'d, M, D, E>(
    model: &M,
    cfg: &ExperimentConfig,
    n_values: &[usize],
    default_cov: &[f64],
    data_for: D,
    error: E,
) -> Result<Vec<PerN>>
where
    M: StateSpaceModel,
    D: Fn(usize) -> &'d Dataset + Sync,
    E: Fn(usize, &Dataset, &NestedFilterState) -> f64 + Sync,
{
    let root = StreamKey::new(cfg.seed);
    let jobs: Vec<(usize, usize)> =
        n_values.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    let curves: Vec<Vec<f64>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let data = data_for(r);
            let jitter = cfg.jitter.build(n, default_cov.to_vec(), model.param_box())?;
            let mut curve = Vec::with_capacity(data.observations.len() + 1);
            let mut sink = |s: &NestedFilterState, _: &PosteriorSnapshot| {
                curve.push(error(r, data, s));
                Ok(())
            };
            let key = root.path(&[tags::FILTER, n as u64, r as u64]);
            run_nested(model, &data.observations, n, cfg.m_for(n), &jitter, &TraceContext::default(), &mut sink, key)?;
            Ok(curve)
        })
        .collect::<Result<_>>()?;
    Ok(aggregate(cfg, n_values, &curves))
}

fn shared_dataset(model: &BuiltModel, cfg: &ExperimentConfig) -> Result<Dataset> {
    let truth = model.truth(cfg)?;
    generate_dataset(model, &truth, cfg.horizon(), cfg.data_key())
}

fn replicate_datasets(model: &BuiltModel, cfg: &ExperimentConfig) -> Result<Vec<Dataset>> {
    let truth = model.truth(cfg)?;
    let root = cfg.data_key();
    (0..cfg.replicates)
        .map(|r| generate_dataset(model, &truth, cfg.horizon(), root.path(&[tags::REPLICATE, r as u64])))
        .collect()
}

/// Whether replicates share one data set or each draw their own.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DataPolicy {
    Shared,
    PerReplicate,
}

/// Error of the resampled parameter ensemble against the exact posterior,
/// per step.
///
/// For the grid model the error is the largest gap between particle and
/// exact posterior masses over the grid points; for the linear-Gaussian
/// model it is the gap between the ensemble mean and the quadrature
/// posterior mean.
pub fn oracle_error_curves(cfg: &ExperimentConfig, n_values: &[usize], policy: DataPolicy) -> Result<Vec<PerN>> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let data = match policy {
        DataPolicy::Shared => vec![shared_dataset(&model, cfg)?],
        DataPolicy::PerReplicate => replicate_datasets(&model, cfg)?,
    };
    let pick = |r: usize| if data.len() == 1 { 0 } else { r };
    let cov = model.default_jitter_cov();
    with_workers(cfg.workers, || match &model {
        BuiltModel::GridHmm(h) => {
            let exact: Vec<Vec<Vec<f64>>> =
                data.iter().map(|d| h.exact_param_posterior(&d.observations)).collect::<Result<_>>()?;
            replicate_curves(h, cfg, n_values, &cov, |r| &data[pick(r)], |r, _, s| {
                let est = h.cell_fractions(&s.thetas());
                exact[pick(r)][s.t].iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
            })
        }
        BuiltModel::LinearGaussian(lg) => {
            let exact: Vec<Vec<f64>> =
                data.iter().map(|d| lg.param_posterior_means(&d.observations, QUADRATURE_NODES)).collect();
            replicate_curves(lg, cfg, n_values, &cov, |r| &data[pick(r)], |r, _, s| {
                let mean = s.outer.iter().map(|p| p.theta.coords()[0]).sum::<f64>() / s.n() as f64;
                (mean - exact[pick(r)][s.t]).abs()
            })
        }
        BuiltModel::Lorenz63(_) => Err(Error::Config("oracle studies need the grid-hmm or linear-gaussian model".into())),
    })?
}

const QUADRATURE_NODES: usize = 2000;

fn distinct_count(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v.dedup();
    v.len()
}

fn rate_of(per_n: &[PerN]) -> Option<RateFit> {
    fit_rate(&per_n.iter().map(|p| (p.n as f64, p.mean_error)).collect::<Vec<_>>()).ok()
}

fn write_curves(path: &Path, header: &[String], columns: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for line in header {
        writeln!(out, "{line}")?;
    }
    let mut w = csv::Writer::from_writer(&mut out);
    w.write_record(columns)?;
    for row in rows {
        w.write_record(row.iter().map(f64::to_string))?;
    }
    w.flush()?;
    drop(w);
    out.flush()?;
    Ok(())
}

fn write_per_n_outputs(cfg: &ExperimentConfig, summary: &StudySummary, curve_name: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    let header = cfg.header_lines()?;
    let mut columns = vec!["step".to_string()];
    columns.extend(summary.per_n.iter().map(|p| format!("{curve_name}_n{}", p.n)));
    let len = summary.per_n.first().map_or(0, |p| p.mean_curve.len());
    let rows: Vec<Vec<f64>> = (0..len)
        .map(|t| std::iter::once(t as f64).chain(summary.per_n.iter().map(|p| p.mean_curve[t])).collect())
        .collect();
    write_curves(&cfg.out_dir.join("curves.csv"), &header, &columns, &rows)?;
    let mut errors = vec![];
    for p in &summary.per_n {
        for (r, e) in p.terminal_errors.iter().enumerate() {
            errors.push(vec![p.n as f64, p.m as f64, r as f64, *e]);
        }
    }
    let cols = ["n", "m", "replicate", "terminal_error"].map(String::from);
    write_curves(&cfg.out_dir.join("terminal_errors.csv"), &header, &cols, &errors)?;
    write_summary(&cfg.out_dir.join("summary.json"), summary)
}

/// Terminal oracle error for each N in `n_list` on one fixed data set, with
/// a log-log rate fit.
pub fn run_rate_study(cfg: &ExperimentConfig) -> Result<StudySummary> {
    if distinct_count(&cfg.n_list) < 3 {
        return Err(Error::Config(format!("a rate study needs at least 3 distinct N, got {:?}", cfg.n_list)));
    }
    let per_n = oracle_error_curves(cfg, &cfg.n_list, DataPolicy::Shared)?;
    let summary = StudySummary {
        study: Mode::RateStudy,
        config: cfg.recorded(),
        steps: cfg.horizon(),
        replicates: cfg.replicates,
        rate: rate_of(&per_n),
        per_n,
        final_mean_abs_error: None,
        parameter_curves: None,
    };
    write_per_n_outputs(cfg, &summary, "mean_error")?;
    Ok(summary)
}

/// `d_Omega(mu_t^N, delta_theta*)` per step averaged over replicates, each
/// replicate on its own data set (shared across N).
pub fn identification_curves(cfg: &ExperimentConfig, n_values: &[usize]) -> Result<Vec<PerN>> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let BuiltModel::GridHmm(h) = &model else {
        return Err(Error::Config("identification studies need the grid-hmm model".into()));
    };
    let data = replicate_datasets(&model, cfg)?;
    let omega = OmegaSet::default_for_box(h.param_box());
    let cov = model.default_jitter_cov();
    with_workers(cfg.workers, || {
        replicate_curves(h, cfg, n_values, &cov, |r| &data[r], |_, d, s| {
            let thetas = s.thetas();
            d_omega(Measure::Uniform(&thetas), Measure::PointMass(&d.truth), &omega)
        })
    })?
}

pub fn run_identification_study(cfg: &ExperimentConfig) -> Result<StudySummary> {
    let per_n = identification_curves(cfg, &cfg.n_list)?;
    let summary = StudySummary {
        study: Mode::IdentificationStudy,
        config: cfg.recorded(),
        steps: cfg.horizon(),
        replicates: cfg.replicates,
        rate: rate_of(&per_n),
        per_n,
        final_mean_abs_error: None,
        parameter_curves: None,
    };
    write_per_n_outputs(cfg, &summary, "d_omega")?;
    Ok(summary)
}

fn theta_hat_paths<M: StateSpaceModel>(
    model: &M,
    cfg: &ExperimentConfig,
    data: &[Dataset],
    default_cov: Vec<f64>,
) -> Result<Vec<Vec<Vec<f64>>>> {
    let root = StreamKey::new(cfg.seed);
    let jitter = cfg.jitter.build(cfg.n, default_cov, model.param_box())?;
    (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let key = root.path(&[tags::REPLICATE, r as u64, tags::FILTER]);
            let trace = run_nested(
                model,
                &data[r].observations,
                cfg.n,
                cfg.m_for(cfg.n),
                &jitter,
                &TraceContext::default(),
                &mut (),
                key,
            )?;
            Ok(trace.records.into_iter().map(|rec| rec.theta_hat).collect())
        })
        .collect()
}

/// Per-parameter absolute error of the posterior mean, averaged over
/// independent replicates (each with its own data set).
pub fn run_mean_error_study(cfg: &ExperimentConfig) -> Result<StudySummary> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let data = replicate_datasets(&model, cfg)?;
    let cov = model.default_jitter_cov();
    let paths = with_workers(cfg.workers, || with_model!(&model, |m| theta_hat_paths(m, cfg, &data, cov)))??;
    let truth = data[0].truth.coords();
    let d = truth.len();
    let steps = paths[0].len();
    let mut mae = vec![vec![0.0; d]; steps];
    let mut var = vec![vec![0.0; d]; steps];
    for t in 0..steps {
        for j in 0..d {
            let errs: Vec<f64> = paths.iter().map(|p| (p[t][j] - truth[j]).abs()).collect();
            let (m, v) = mean_and_variance(&errs);
            mae[t][j] = m;
            var[t][j] = v.unwrap_or(f64::NAN);
        }
    }
    let dt = cfg.time_per_step();
    let time: Vec<f64> = (0..steps).map(|t| if dt > 0.0 { t as f64 * dt } else { t as f64 }).collect();
    let curves = ParameterCurves {
        time,
        mean_abs_error: mae,
        variance: (cfg.replicates > 1).then_some(var),
    };
    let summary = StudySummary {
        study: Mode::MeanErrorStudy,
        config: cfg.recorded(),
        steps: cfg.horizon(),
        replicates: cfg.replicates,
        per_n: Vec::new(),
        rate: None,
        final_mean_abs_error: curves.mean_abs_error.last().cloned(),
        parameter_curves: Some(curves),
    };
    write_parameter_curves(cfg, &summary)?;
    Ok(summary)
}

fn write_parameter_curves(cfg: &ExperimentConfig, summary: &StudySummary) -> Result<()> {
    let curves = summary.parameter_curves.as_ref().expect("mean-error curves");
    fs::create_dir_all(&cfg.out_dir)?;
    let d = curves.mean_abs_error.first().map_or(0, Vec::len);
    let mut columns = vec!["step".to_string(), "time".to_string()];
    columns.extend((0..d).map(|j| format!("mae_{j}")));
    if curves.variance.is_some() {
        columns.extend((0..d).map(|j| format!("var_{j}")));
    }
    let rows: Vec<Vec<f64>> = (0..curves.time.len())
        .map(|t| {
            let mut row = vec![t as f64, curves.time[t]];
            row.extend(&curves.mean_abs_error[t]);
            if let Some(v) = &curves.variance {
                row.extend(&v[t]);
            }
            row
        })
        .collect();
    write_curves(&cfg.out_dir.join("mean_error.csv"), &cfg.header_lines()?, &columns, &rows)?;
    write_summary(&cfg.out_dir.join("summary.json"), summary)
}

/// Deviation of the chain-driven bootstrap filter's predictive mean from the
/// exact Kalman predictive mean at the chain's current value, per step.
///
/// Each N uses chain mixing probability `N^(-p/2)` and `M` inner particles;
/// all runs share one data set.
pub fn chain_deviation_curves(cfg: &ExperimentConfig, n_values: &[usize]) -> Result<Vec<PerN>> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let BuiltModel::LinearGaussian(lg) = &model else {
        return Err(Error::Config("chain studies need the linear-gaussian model".into()));
    };
    let data = shared_dataset(&model, cfg)?;
    let root = StreamKey::new(cfg.seed);
    let jobs: Vec<(usize, usize)> =
        n_values.iter().flat_map(|&n| (0..cfg.replicates).map(move |r| (n, r))).collect();
    let obs: &[Observation] = &data.observations;
    let curves: Vec<Vec<f64>> = with_workers(cfg.workers, || {
        jobs.par_iter()
            .map(|&(n, r)| {
                let jitter = cfg.jitter.build(n, lg.default_jitter_cov(), lg.param_box())?;
                let run = bootstrap_run_chain_param(
                    lg,
                    &jitter,
                    obs,
                    cfg.m_for(n),
                    &mut root.path(&[tags::FILTER, n as u64, r as u64]).rng(),
                    &mut root.path(&[tags::CHAIN, n as u64, r as u64]).rng(),
                )?;
                Ok((1..=obs.len())
                    .map(|t| {
                        let a = run.theta_path[t].coords()[0];
                        let exact = lg.kalman(a, &obs[..t]).predictive_means[t - 1];
                        (run.filter.predictive_means[t - 1][0] - exact).abs()
                    })
                    .collect())
            })
            .collect::<Result<_>>()
    })??;
    Ok(aggregate(cfg, n_values, &curves))
}

pub fn run_chain_study(cfg: &ExperimentConfig) -> Result<StudySummary> {
    let per_n = chain_deviation_curves(cfg, &cfg.n_list)?;
    let summary = StudySummary {
        study: Mode::ChainStudy,
        config: cfg.recorded(),
        steps: cfg.horizon(),
        replicates: cfg.replicates,
        rate: rate_of(&per_n),
        per_n,
        final_mean_abs_error: None,
        parameter_curves: None,
    };
    write_per_n_outputs(cfg, &summary, "deviation")?;
    Ok(summary)
}
