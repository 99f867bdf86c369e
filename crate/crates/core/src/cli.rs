//! Command-line interface: `solve | optimize | certify | path | mms`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::runner::{self, CandidateFiles, RunOptions, EXIT_CONFIG};

#[derive(Debug, Parser)]
#[command(name = "strongstat", version, about = "Solve, optimize and certify the regularized control problem")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output_dir` in the config; default `out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for direction sampling (overrides `[certify] seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Parallel instances for parameter sweeps.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Finish and report instead of failing on solver non-convergence.
    #[arg(long)]
    pub best_effort: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the state equation for `[solver] g`.
    Solve(Common),
    /// Optimize, then certify the result.
    Optimize(Common),
    /// Certify externally supplied fields.
    Certify {
        #[command(flatten)]
        common: Common,
        /// Control grid dump.
        #[arg(long)]
        control: PathBuf,
        /// State grid dump (requires --adjoint and --multiplier).
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long)]
        adjoint: Option<PathBuf>,
        #[arg(long)]
        multiplier: Option<PathBuf>,
    },
    /// Follow the mollified regularization path.
    Path(Common),
    /// Manufactured-solution convergence study.
    Mms(Common),
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { out: self.out.clone(), seed: self.seed, jobs: self.jobs, best_effort: self.best_effort }
    }
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let common = match &cli.command {
        Command::Solve(c) | Command::Optimize(c) | Command::Path(c) | Command::Mms(c) => c,
        Command::Certify { common, .. } => common,
    };
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{}: {e}", common.config.display());
            return EXIT_CONFIG;
        }
    };
    let opts = common.options();
    let result = match &cli.command {
        Command::Solve(_) => runner::cmd_solve(&cfg, &opts),
        Command::Optimize(_) => runner::cmd_optimize(&cfg, &opts),
        Command::Path(_) => runner::cmd_path(&cfg, &opts),
        Command::Mms(_) => runner::cmd_mms(&cfg, &opts),
        Command::Certify { control, state, adjoint, multiplier, .. } => {
            let files = CandidateFiles {
                control: control.clone(),
                state: state.clone(),
                adjoint: adjoint.clone(),
                multiplier: multiplier.clone(),
            };
            runner::cmd_certify(&cfg, &files, &opts)
        }
    };
    match result {
        Ok(outcome) => {
            println!("{}", outcome.summary);
            outcome.code
        }
        Err(e) => {
            eprintln!("error: {e}");
            runner::exit_code(&e)
        }
    }
}
