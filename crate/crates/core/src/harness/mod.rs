//! Experiment configuration, orchestration and persistence.
//!
//! Every study derives all of its random streams from the configured seed,
//! keyed by replicate and ensemble size, so output files are byte-identical
//! for any worker count.

mod config;
mod data;
mod single;
mod study;

pub use config::{ExperimentConfig, JitterSettings, Mode, ModelKind, DEFAULT_STEPS};
pub use data::{generate_dataset, write_dataset, BuiltModel, Dataset};
pub use single::{execute_single, generate_data, run_single, RunSummary, SingleRun};
pub use study::{
    chain_deviation_curves, identification_curves, oracle_error_curves, run_chain_study, run_identification_study,
    run_mean_error_study, run_rate_study, with_workers, DataPolicy, ParameterCurves, PerN, StudySummary,
};

use crate::error::Result;

/// Result of [`run_experiment`].
#[derive(Clone, Debug)]
pub enum Outcome {
    Single(Box<SingleRun>),
    Study(Box<StudySummary>),
}

/// Runs the experiment selected by `cfg.mode` and writes its outputs.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    Ok(match cfg.mode {
        Mode::Single => Outcome::Single(Box::new(with_workers(cfg.workers, || run_single(cfg))??)),
        Mode::RateStudy => Outcome::Study(Box::new(run_rate_study(cfg)?)),
        Mode::IdentificationStudy => Outcome::Study(Box::new(run_identification_study(cfg)?)),
        Mode::MeanErrorStudy => Outcome::Study(Box::new(run_mean_error_study(cfg)?)),
        Mode::ChainStudy => Outcome::Study(Box::new(run_chain_study(cfg)?)),
    })
}
