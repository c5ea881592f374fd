use std::fs::{self, File};
use std::io::{BufWriter, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::data::{generate_dataset, with_model, write_dataset, BuiltModel, Dataset};
use crate::metrics::{OmegaSet, RunTrace, StepRecord, TraceContext};
use crate::model::StateSpaceModel;
use crate::nested::{run_nested, NestedFilterState, PosteriorSnapshot};
use crate::oracle::GridHmm;
use crate::rng::{tags, StreamKey};

/// Compact machine-readable result of a single run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub steps: usize,
    pub completed_steps: usize,
    /// Step at which the run failed, if it did.
    pub failed_step: Option<usize>,
    pub error: Option<String>,
    pub truth: Vec<f64>,
    pub final_theta_hat: Option<Vec<f64>>,
    /// Posterior mean averaged over the final fifth of the run.
    pub tail_mean_theta_hat: Option<Vec<f64>>,
    /// Time-averaged NSTD over each quarter of the run, `[quarter][parameter]`.
    pub nstd_quarter_means: Option<Vec<Vec<f64>>>,
    /// Largest terminal gap between the particle and exact grid posteriors.
    pub oracle_max_abs_error: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SingleRun {
    pub trace: RunTrace,
    pub summary: RunSummary,
    pub data: Dataset,
}

fn column_mean(rows: &[StepRecord], f: impl Fn(&StepRecord) -> Option<&Vec<f64>>) -> Option<Vec<f64>> {
    let first = f(rows.first()?)?;
    let mut acc = vec![0.0; first.len()];
    for r in rows {
        for (a, v) in acc.iter_mut().zip(f(r)?) {
            *a += v;
        }
    }
    acc.iter_mut().for_each(|a| *a /= rows.len() as f64);
    Some(acc)
}

/// Appends the exact grid posterior and the particle cell masses of the
/// resampled ensemble as extra trace columns.
struct GridOracleSink<'a> {
    hmm: &'a GridHmm,
    exact: Vec<Vec<f64>>,
    rows: Vec<Vec<f64>>,
}

impl GridOracleSink<'_> {
    fn columns(&self) -> Vec<String> {
        let k = self.hmm.n_params();
        let mut cols: Vec<String> = (0..k).map(|i| format!("exact_post_{i}")).collect();
        cols.extend((0..k).map(|i| format!("particle_post_{i}")));
        cols.push("oracle_max_abs_error".into());
        cols
    }

    fn push(&mut self, state: &NestedFilterState) {
        let exact = &self.exact[state.t];
        let est = self.hmm.cell_fractions(&state.thetas());
        let err = exact.iter().zip(&est).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut row = exact.clone();
        row.extend(est);
        row.push(err);
        self.rows.push(row);
    }
}

fn filter_run<M: StateSpaceModel>(
    model: &M,
    grid: Option<&GridHmm>,
    cfg: &ExperimentConfig,
    data: &Dataset,
    default_cov: Vec<f64>,
    key: StreamKey,
) -> Result<RunTrace> {
    let n = cfg.n;
    let jitter = cfg.jitter.build(n, default_cov, model.param_box())?;
    let ctx = TraceContext {
        true_params: Some(data.truth.clone()),
        true_states: Some(data.true_states.clone()),
        time_per_step: cfg.time_per_step(),
        omega: Some(OmegaSet::default_for_box(model.param_box())),
    };
    match grid {
        Some(hmm) => {
            let mut sink = GridOracleSink { hmm, exact: hmm.exact_param_posterior(&data.observations)?, rows: Vec::new() };
            let mut on_step = |s: &NestedFilterState, _: &PosteriorSnapshot| {
                sink.push(s);
                Ok(())
            };
            let mut trace = run_nested(model, &data.observations, n, cfg.m_for(n), &jitter, &ctx, &mut on_step, key)?;
            trace.extra_columns = sink.columns();
            for (r, row) in trace.records.iter_mut().zip(sink.rows) {
                r.extra = row;
            }
            Ok(trace)
        }
        None => run_nested(model, &data.observations, n, cfg.m_for(n), &jitter, &ctx, &mut (), key),
    }
}

/// Generates data and runs the nested filter once, without touching disk.
pub fn execute_single(cfg: &ExperimentConfig) -> Result<SingleRun> {
    execute(cfg)?.map_err(|(_, e)| e)
}

type Attempt = std::result::Result<SingleRun, (Box<RunSummary>, Error)>;

/// The outer error covers setup problems; the inner one a failed filter run,
/// returned alongside a summary naming the failing step.
fn execute(cfg: &ExperimentConfig) -> Result<Attempt> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let truth = model.truth(cfg)?;
    let steps = cfg.horizon();
    let root = StreamKey::new(cfg.seed);
    let data = generate_dataset(&model, &truth, steps, cfg.data_key())?;
    let cov = model.default_jitter_cov();
    let key = root.child(tags::FILTER);
    let result = match &model {
        BuiltModel::GridHmm(h) => filter_run(h, Some(h), cfg, &data, cov, key),
        other => with_model!(other, |m| filter_run(m, None, cfg, &data, cov, key)),
    };
    let mut summary = RunSummary {
        config: cfg.recorded(),
        n: cfg.n,
        m: cfg.m_for(cfg.n),
        steps,
        completed_steps: 0,
        failed_step: None,
        error: None,
        truth: truth.0.clone(),
        final_theta_hat: None,
        tail_mean_theta_hat: None,
        nstd_quarter_means: None,
        oracle_max_abs_error: None,
    };
    let trace = match result {
        Ok(trace) => trace,
        Err(e) => {
            summary.failed_step = e.failed_step();
            summary.completed_steps = e.failed_step().map_or(0, |s| s - 1);
            summary.error = Some(e.to_string());
            return Ok(Err((Box::new(summary), e)));
        }
    };
    let rows = &trace.records[1..];
    summary.completed_steps = rows.len();
    summary.final_theta_hat = trace.records.last().map(|r| r.theta_hat.clone());
    if !rows.is_empty() {
        let tail = rows.len().div_ceil(5);
        summary.tail_mean_theta_hat = column_mean(&rows[rows.len() - tail..], |r| Some(&r.theta_hat));
        if rows.len() >= 4 {
            let q = rows.len() / 4;
            summary.nstd_quarter_means =
                (0..4).map(|k| column_mean(&rows[k * q..(k + 1) * q], |r| r.nstd.as_ref())).collect();
        }
    }
    if !trace.extra_columns.is_empty() {
        summary.oracle_max_abs_error = trace.records.last().and_then(|r| r.extra.last().copied());
    }
    Ok(Ok(SingleRun { trace, summary, data }))
}

pub(crate) fn write_summary<T: Serialize>(path: &std::path::Path, value: &T) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

/// Runs one experiment and writes `states.csv`, `observations.csv`,
/// `trace.csv` and `summary.json` into the configured output directory.
///
/// On a step failure the summary records the failing step and the error is
/// returned.
pub fn run_single(cfg: &ExperimentConfig) -> Result<SingleRun> {
    fs::create_dir_all(&cfg.out_dir)?;
    let header = cfg.header_lines()?;
    let run = match execute(cfg)? {
        Ok(run) => run,
        Err((summary, e)) => {
            write_summary(&cfg.out_dir.join("summary.json"), &summary)?;
            return Err(e);
        }
    };
    write_dataset(&run.data, &cfg.out_dir, cfg.seed, &header)?;
    let mut trace_out = BufWriter::new(File::create(cfg.out_dir.join("trace.csv"))?);
    for line in &header {
        writeln!(trace_out, "{line}")?;
    }
    run.trace.write_csv(&mut trace_out, &[])?;
    trace_out.flush()?;
    write_summary(&cfg.out_dir.join("summary.json"), &run.summary)?;
    Ok(run)
}

/// Generates and writes the dataset only.
pub fn generate_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    cfg.validate()?;
    let model = BuiltModel::from_config(cfg)?;
    let truth = model.truth(cfg)?;
    let data = generate_dataset(&model, &truth, cfg.horizon(), cfg.data_key())?;
    fs::create_dir_all(&cfg.out_dir)?;
    write_dataset(&data, &cfg.out_dir, cfg.seed, &cfg.header_lines()?)?;
    Ok(data)
}
