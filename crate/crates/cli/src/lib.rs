//! Command-line driver: data preparation, multi-chain sampling runs, the
//! no-data prior-recovery check and one-shot PD-completion.

pub mod commands;
pub mod config;
pub mod error;
pub mod prior_check;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use stgraph::{CompletionAlgorithm, CompletionSettings};

use crate::config::RunConfig;
use crate::error::{CliError, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK};

#[derive(Debug, Parser)]
#[command(name = "stgraph", version, about = "MCMC graph structure learning for Gaussian data")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set sampler.iterations=20000`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref(), &self.overrides)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Select the most variable columns, optionally quantile-normalize, and
    /// write normalized.csv plus a report.
    Prepare(ConfigArgs),
    /// Run the sampler and write traces, edge probabilities and summaries.
    Run(ConfigArgs),
    /// Run without data and test the graph marginals against the exact prior.
    PriorCheck {
        #[command(flatten)]
        args: ConfigArgs,
        /// Drop the graph proposal ratio (negative control; the check should fail).
        #[arg(long, hide = true)]
        corrupt_acceptance: bool,
    },
    /// PD-complete a covariance matrix on a graph.
    Complete {
        /// Square CSV matrix.
        #[arg(long)]
        sigma: PathBuf,
        /// Edge list: a `p=<n>` line, then one `i j` pair (1-based) per line.
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value = "hastie")]
        algorithm: CompletionAlgorithm,
        /// Output CSV for Q.
        #[arg(long, default_value = "q.csv")]
        out: PathBuf,
        #[arg(long, default_value_t = stgraph::tolerances::COMPLETION_TOL)]
        tol: f64,
        #[arg(long, default_value_t = stgraph::tolerances::COMPLETION_MAX_SWEEPS)]
        max_sweeps: usize,
    },
}

fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Prepare(args) => {
            let report = commands::cmd_prepare(&args.load()?)?;
            print!("{report}");
            Ok(EXIT_OK)
        }
        Command::Run(args) => {
            let summary = commands::cmd_run(&args.load()?)?;
            println!("output = {}", summary.output_dir.display());
            println!("retained_samples = {}", summary.samples);
            println!("accept_rate_graph = {}", summary.merged.accept_rate_graph());
            println!("accept_rate_sigma = {}", summary.merged.accept_rate_sigma());
            println!("completion_failures = {}", summary.merged.completion_failures);
            Ok(EXIT_OK)
        }
        Command::PriorCheck { args, corrupt_acceptance } => {
            let report = commands::cmd_prior_check(&args.load()?, corrupt_acceptance)?;
            print!("{report}");
            Ok(if report.passes() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Complete { sigma, graph, algorithm, out, tol, max_sweeps } => {
            let settings = CompletionSettings { tol, max_sweeps };
            settings.validate().map_err(|e| CliError::config("--tol/--max-sweeps", e))?;
            let outcome = commands::cmd_complete(&sigma, &graph, algorithm, &settings, &out)?;
            print!("{}", outcome.report);
            Ok(if outcome.result.converged { EXIT_OK } else { EXIT_NUMERIC })
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
