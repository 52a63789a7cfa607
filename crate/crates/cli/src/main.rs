use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mlgp::experiment::{self, ExperimentConfig, Problem};
use mlgp::{ErrorKind, Result};

#[derive(Parser)]
#[command(name = "mlgp", version, about = "Multi-layer Gaussian field priors for inverse problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Replaces the configured seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Draws fields from the layered prior.
    SamplePrior {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 4)]
        count: usize,
    },
    /// Samples the posterior and writes chain archives, acceptance logs and summaries.
    RunMcmc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<u64>,
        #[arg(long, default_value_t = 1)]
        chains: u32,
    },
    /// Tikhonov reconstruction from the simulated measurements.
    Tikhonov {
        #[command(flatten)]
        common: Common,
    },
    /// Writes the simulated measurements.
    Sinogram {
        #[command(flatten)]
        common: Common,
    },
    /// Summarizes the chain archives found in `--out`.
    Summarize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<u64>,
    },
    /// Compares a reconstruction (CSV last column or PGM) with the truth.
    Metrics {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Also writes the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common, iterations: Option<u64>) -> Result<ExperimentConfig> {
    ExperimentConfig::load(&common.config)?.with_overrides(common.seed, iterations)
}

fn print(value: &impl serde::Serialize) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_report(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    experiment::configure_parallelism();
    match cli.command {
        Command::SamplePrior { common, count } => {
            let cfg = load(&common, None)?;
            let n = experiment::sample_prior_draws(&cfg, &common.out, count)?;
            print(&serde_json::json!({ "draws": n, "out": common.out }))
        }
        Command::RunMcmc {
            common,
            iterations,
            chains,
        } => {
            let cfg = load(&common, iterations)?;
            print(&experiment::run_mcmc(&cfg, &common.out, chains)?)
        }
        Command::Tikhonov { common } => {
            let cfg = load(&common, None)?;
            print(&experiment::run_tikhonov(&cfg, &common.out)?)
        }
        Command::Sinogram { common } => {
            let cfg = load(&common, None)?;
            let n = experiment::write_sinogram(&cfg, &common.out)?;
            print(&serde_json::json!({ "measurements": n, "out": common.out }))
        }
        Command::Summarize { common, iterations } => {
            let cfg = load(&common, iterations)?;
            let problem = Problem::build(&cfg)?;
            let (report, _) = experiment::write_summary(&problem, &common.out)?;
            print(&report)
        }
        Command::Metrics { recon, truth, out } => {
            let report = experiment::compare_files(&recon, &truth)?;
            if let Some(path) = out {
                write_report(&path, &report)?;
            }
            print(&report)
        }
    }
}

fn fail(kind: ErrorKind, message: String) -> ExitCode {
    let body = serde_json::json!({ "error": { "kind": kind.as_str(), "message": message } });
    eprintln!("{body}");
    ExitCode::from(kind.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return fail(ErrorKind::Config, e.to_string()),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.kind(), e.to_string()),
    }
}
