//! `rpad` command-line front end: dataset preparation, match-model
//! lifecycle, panel evaluation and plot-ready report files.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod setup;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::{MatchMode, Overrides, Resolved};
use crate::error::{classify, ExitKind};

#[derive(Debug, Parser)]
#[command(name = "rpad", version, about = "Relative agreement of algorithmic diagnoses with an expert panel")]
pub struct Cli {
    /// TOML run config; relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Serve oracle slots from the scripted stub instead of endpoints.
    #[arg(long, global = true)]
    pub stub_oracles: bool,
    /// Fail on validation issues and enforce full-length bags.
    #[arg(long, global = true)]
    pub strict: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Normalize the panel and report unusable diagnoses.
    Prepare,
    /// Featurize the training pairs and fit the match model.
    TrainMatch,
    /// Score the match model on the test pairs.
    EvalMatch,
    /// Permutation importance and feature correlations.
    ExplainMatch,
    /// Write the decision matrix for every comparison up to k_max.
    Match {
        /// Overrides `match_mode` from the config.
        #[arg(long, value_parser = ["model", "exact"])]
        mode: Option<String>,
    },
    /// Pairwise, relative, σ and κ reports from the decision matrix.
    Evaluate,
    /// Relative precision and recall for k = 1..k_max at each swept hardness.
    SweepK,
}

/// Runs one command and returns its exit status. Errors are printed to
/// stderr.
pub fn run(cli: Cli) -> ExitKind {
    let overrides = Overrides {
        seed: cli.seed,
        stub_oracles: cli.stub_oracles,
        strict: cli.strict,
    };
    let result = Resolved::load(cli.config.as_deref(), &overrides)
        .and_then(|r| Run::start(r, &cli.out))
        .and_then(|run| match &cli.command {
            Command::Prepare => commands::prepare(&run),
            Command::TrainMatch => commands::train_match(&run),
            Command::EvalMatch => commands::eval_match(&run),
            Command::ExplainMatch => commands::explain_match(&run),
            Command::Match { mode } => {
                let mode = match mode.as_deref() {
                    Some("exact") => MatchMode::Exact,
                    Some(_) => MatchMode::Model,
                    None => run.r.config.match_mode,
                };
                commands::match_pairs(&run, mode)
            }
            Command::Evaluate => commands::evaluate(&run),
            Command::SweepK => commands::sweep_k(&run),
        });
    match result {
        Ok(kind) => kind,
        Err(e) => {
            eprintln!("error: {e:#}");
            classify(&e)
        }
    }
}
