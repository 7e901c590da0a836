use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dtcs_lab::config::{ExperimentConfig, Overrides};
use dtcs_lab::{report, runner, LabError};

#[derive(Parser)]
#[command(
    name = "dtcs",
    version,
    about = "Multi-domain training lab: soft diverse targets + contribution balancing"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train every (seed × target) job and write run artifacts.
    Run(RunArgs),
    /// Remove each method component in turn and tabulate target accuracy.
    Ablate(RunArgs),
    /// Grid-search hyperparameters, selecting by source-validation accuracy.
    Sweep(RunArgs),
    /// Aggregate finished run directories into a comparison report.
    Report(ReportArgs),
    /// Emit the configured dataset as a CSV file.
    GenData(GenDataArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file; omitted → built-in defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["dtcs", "erm", "agr-sum"])]
    method: Option<String>,
    #[arg(long, value_parser = ["me", "se", "mp", "mc"])]
    prophet: Option<String>,
    /// Weight on the hard-label loss term, in [0, 1].
    #[arg(long)]
    alpha: Option<f64>,
    /// Soft-target temperature.
    #[arg(long)]
    tau: Option<f64>,
    /// Initial contribution-balancing momentum.
    #[arg(long)]
    momentum: Option<f64>,
    /// Disable contribution balancing.
    #[arg(long)]
    no_dcb: bool,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Held-out domain id, or `all` for the full leave-one-out sweep.
    #[arg(long)]
    target_domain: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn load(&self) -> dtcs_lab::Result<ExperimentConfig> {
        let overrides = Overrides {
            method: self.method.clone(),
            prophet: self.prophet.clone(),
            alpha: self.alpha,
            tau: self.tau,
            momentum: self.momentum,
            no_dcb: self.no_dcb,
            seeds: self.seeds.clone(),
            target_domain: self.target_domain.clone(),
            out: self.out.as_ref().map(|p| p.display().to_string()),
        };
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Args)]
struct ReportArgs {
    /// Run directories, or parents to scan for them.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Where report.md and the CSVs go (default: `report`).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenDataArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// CSV file to write (default: `dataset.csv`).
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> dtcs_lab::Result<()> {
    match cli.cmd {
        Cmd::Run(args) => runner::cmd_run(&args.load()?).map(|_| ()),
        Cmd::Ablate(args) => runner::cmd_ablate(&args.load()?).map(|_| ()),
        Cmd::Sweep(args) => runner::cmd_sweep(&args.load()?).map(|_| ()),
        Cmd::Report(args) => {
            let out = args.out.unwrap_or_else(|| PathBuf::from("report"));
            report::cmd_report(&args.paths, &out).map(|_| ())
        }
        Cmd::GenData(args) => {
            let cfg = ExperimentConfig::load(args.config.as_deref(), &Overrides::default())?;
            let out = args.out.unwrap_or_else(|| PathBuf::from("dataset.csv"));
            runner::cmd_gen_data(&cfg, &out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ LabError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
