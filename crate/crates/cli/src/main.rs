use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nested_smc::harness::{
    self, write_dataset, ExperimentConfig, Mode, ModelKind, Outcome, StudySummary,
};

#[derive(Parser, Debug)]
#[command(name = "nsmc", version, about = "Nested particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One filter run on synthetic data: dataset, per-step trace and summary.
    Run(Common),
    /// Error against the exact oracle over several N on one fixed dataset.
    RateStudy(Common),
    /// Distance of the parameter ensemble to the generating point.
    Identify(Common),
    /// Absolute-error curves averaged over independent replicates.
    MeanError(Common),
    /// Deviation of a moving-parameter filter from the Kalman filter.
    ChainStudy(Common),
    /// Writes a synthetic dataset without filtering.
    GenData(Common),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Lorenz63,
    GridHmm,
    LinearGaussian,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lorenz63 => ModelKind::Lorenz63,
            ModelArg::GridHmm => ModelKind::GridHmm,
            ModelArg::LinearGaussian => ModelKind::LinearGaussian,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// Outer (parameter) particles.
    #[arg(long)]
    n: Option<usize>,
    /// Inner (state) particles per outer particle.
    #[arg(long)]
    m: Option<usize>,
    /// Comma-separated outer ensemble sizes for the studies.
    #[arg(long, value_delimiter = ',')]
    n_list: Option<Vec<usize>>,
    #[arg(long)]
    replicates: Option<usize>,
    /// Observation count.
    #[arg(long)]
    steps: Option<usize>,
    /// Horizon of Lorenz 63 runs in model time.
    #[arg(long)]
    time_units: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "NSMC_WORKERS")]
    workers: Option<usize>,
}

impl Common {
    fn into_config(self, mode: Mode) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        cfg.mode = mode;
        if let Some(m) = self.model {
            cfg.model = m.into();
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.data_seed {
            cfg.data_seed = Some(v);
        }
        if let Some(v) = self.n {
            cfg.n = v;
        }
        if let Some(v) = self.m {
            cfg.m = Some(v);
        }
        if let Some(v) = self.n_list {
            cfg.n_list = v;
        }
        if let Some(v) = self.replicates {
            cfg.replicates = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = Some(v);
        }
        if let Some(v) = self.time_units {
            cfg.time_units = v;
        }
        if let Some(v) = self.out {
            cfg.out_dir = v;
        }
        if self.workers.is_some() {
            cfg.workers = self.workers;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn report_study(s: &StudySummary) {
    for p in &s.per_n {
        println!("N={:<6} M={:<6} mean_error={:.6}", p.n, p.m, p.mean_error);
    }
    if let Some(rate) = &s.rate {
        println!("fitted slope {:.4}", rate.slope);
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, mode) = match cli.command {
        Command::Run(c) => (c, Some(Mode::Single)),
        Command::RateStudy(c) => (c, Some(Mode::RateStudy)),
        Command::Identify(c) => (c, Some(Mode::IdentificationStudy)),
        Command::MeanError(c) => (c, Some(Mode::MeanErrorStudy)),
        Command::ChainStudy(c) => (c, Some(Mode::ChainStudy)),
        Command::GenData(c) => (c, None),
    };
    let Some(mode) = mode else {
        let cfg = common.into_config(Mode::Single)?;
        let data = harness::generate_data(&cfg)?;
        write_dataset(&data, &cfg.out_dir, cfg.data_seed.unwrap_or(cfg.seed), &cfg.header_lines()?)?;
        println!("wrote {} observations to {}", data.observations.len(), cfg.out_dir.display());
        return Ok(());
    };
    let cfg = common.into_config(mode)?;
    match harness::run_experiment(&cfg)? {
        Outcome::Single(run) => {
            let s = &run.summary;
            println!("completed {} of {} steps", s.completed_steps, s.steps);
            println!("final theta_hat {:?}", s.final_theta_hat);
        }
        Outcome::Study(s) => report_study(&s),
    }
    println!("outputs in {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // library errors already embed their cause in the message
            let mut msg = e.to_string();
            for cause in e.chain().skip(1).map(ToString::to_string) {
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
