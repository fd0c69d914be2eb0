use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ecoflow_cli::commands::{self, CompareArgs, SolveArgs, TrainArgs};
use ecoflow_cli::config::RunConfig;
use ecoflow_cli::error::CliResult;

/// Ecological-discharge scheduling experiments.
///
/// Exit codes: 0 success, 2 configuration error, 3 training diverged,
/// 4 solve not converged-feasible, 5 every comparison cell failed.
#[derive(Parser)]
#[command(name = "ecoflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Run configuration (TOML); the built-in default when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replaces the configuration's global seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the configured scenarios as JSON + CSV pairs.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the predictor and write its parameters and loss history.
    Train {
        #[command(flatten)]
        common: Common,
        /// Scenario files to train on (repeatable); the configured
        /// training scenarios when omitted.
        #[arg(long)]
        scenario: Vec<PathBuf>,
        /// Parameter file to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from this parameter file.
        #[arg(long)]
        params: Option<PathBuf>,
    },
    /// Solve one scenario under one policy.
    Solve {
        #[command(flatten)]
        common: Common,
        /// Scenario file or configured scenario name.
        #[arg(long)]
        scenario: Option<String>,
        /// Configured policy name; the first policy when omitted.
        #[arg(long)]
        policy: Option<String>,
        /// Parameter file for an adaptive policy.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every configured policy on every scenario and report.
    Compare {
        #[command(flatten)]
        common: Common,
        /// Scenario files (repeatable); the configured set when omitted.
        #[arg(long)]
        scenario: Vec<PathBuf>,
        /// Parameter file for adaptive policies.
        #[arg(long)]
        params: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(common: &Common) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::load(common.config.as_deref())?;
    if let Some(seed) = common.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<commands::Partial> {
    match cli.command {
        Command::Gen { common, out } => Ok((commands::gen(&load(&common)?, out.as_deref())?, None)),
        Command::Train {
            common,
            scenario,
            out,
            params,
        } => {
            let args = TrainArgs {
                scenarios: &scenario,
                out: out.as_deref(),
                resume: params.as_deref(),
            };
            Ok((commands::train_cmd(&load(&common)?, args)?, None))
        }
        Command::Solve {
            common,
            scenario,
            policy,
            params,
            out,
        } => {
            let args = SolveArgs {
                scenario: scenario.as_deref(),
                policy: policy.as_deref(),
                params: params.as_deref(),
                out: out.as_deref(),
            };
            commands::solve_cmd(&load(&common)?, args)
        }
        Command::Compare {
            common,
            scenario,
            params,
            out,
        } => {
            let args = CompareArgs {
                scenarios: &scenario,
                params: params.as_deref(),
                out: out.as_deref(),
            };
            commands::compare_cmd(&load(&common)?, args)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (lines, err) = match run(cli) {
        Ok(r) => r,
        Err(e) => (Vec::new(), Some(e)),
    };
    for l in lines {
        println!("{l}");
    }
    match err {
        None => ExitCode::SUCCESS,
        Some(e) => {
            eprintln!("ecoflow: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
