use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pspf_harness::{data, estimate, experiment, trace, Config, HarnessError, Result};

#[derive(Parser)]
#[command(name = "pspf", version, about = "Pre-smoothed particle filter experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output CSV path; a JSON sidecar is written next to it.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed of the selected section.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for replications.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a data set from the configured model.
    Simulate(Common),
    /// Run replicated filter comparisons.
    Experiment {
        #[command(flatten)]
        common: Common,
        /// Overrides the number of replications.
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Simulated maximum likelihood over several filter seeds.
    Estimate(Common),
    /// Per-step smoothing parameters of the PSPF on a data set.
    BandwidthTrace {
        #[command(flatten)]
        common: Common,
        /// Data set written by `simulate`.
        #[arg(long)]
        data: PathBuf,
    },
}

fn load(c: &Common) -> Result<(Config, String)> {
    let (mut cfg, text) = Config::load(&c.config)?;
    if let Some(s) = c.seed {
        if let Some(x) = cfg.simulate.as_mut() {
            x.seed = s;
        }
        if let Some(x) = cfg.experiment.as_mut() {
            x.seed = s;
        }
        if let Some(x) = cfg.estimate.as_mut() {
            x.seed = s;
        }
        if let Some(x) = cfg.trace.as_mut() {
            x.seed = s;
        }
    }
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(HarnessError::Validation("--threads must be positive".into()));
        }
        if let Some(x) = cfg.experiment.as_mut() {
            x.threads = Some(t);
        }
        if let Some(x) = cfg.estimate.as_mut() {
            x.threads = Some(t);
        }
    }
    Ok((cfg, text))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(c) => {
            let (cfg, text) = load(&c)?;
            let tr = pspf_harness::run_simulate(&cfg)?;
            pspf_harness::write_simulation(&tr, &cfg, &text, &c.out)
        }
        Command::Experiment { common, replications } => {
            let (mut cfg, text) = load(&common)?;
            if let (Some(r), Some(e)) = (replications, cfg.experiment.as_mut()) {
                e.replications = r;
            }
            cfg.validate()?;
            let report = experiment::run_experiment(&cfg)?;
            for t in &report.timings {
                log::info!("{}: {:.4} s per replication", t.filter, t.mean_seconds);
            }
            experiment::write_experiment(&report, &cfg, &text, &common.out)
        }
        Command::Estimate(c) => {
            let (cfg, text) = load(&c)?;
            let report = estimate::run_estimate(&cfg)?;
            estimate::write_estimate(&report, &cfg, &text, &c.out)
        }
        Command::BandwidthTrace { common, data } => {
            let (cfg, text) = load(&common)?;
            let ds = data::read_dataset(&data)?;
            let run = trace::run_trace(&cfg, &ds)?;
            trace::write_trace(&run, &ds, &cfg, &text, &common.out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
