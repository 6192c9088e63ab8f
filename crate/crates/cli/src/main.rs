//! `hardmax`: simulate token dynamics, check the cluster structure of a run,
//! and train or query the sentiment model.

mod config;
mod dynamics_cmd;
mod error;
mod sentiment_cmd;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser)]
#[command(name = "hardmax", version, about = "Hardmax attention dynamics and a tiny sentiment model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the dynamics from a JSON config and write trajectory files to OUT.
    Simulate {
        config: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Detect leaders and clusters in a simulated run; writes report.json.
    Analyze {
        dir: PathBuf,
        #[arg(long, default_value_t = hardmax::cluster::DEFAULT_CLUSTER_RADIUS)]
        radius: f64,
    },
    /// Train a sentiment model on a `label<TAB>text` file.
    Train(sentiment_cmd::TrainArgs),
    /// Score one text with a trained model.
    Predict(sentiment_cmd::PredictArgs),
    /// Loss, accuracy and leader statistics of a model on a dataset.
    Evaluate(sentiment_cmd::EvaluateArgs),
    /// Write the synthetic planted-marker corpus as a dataset file.
    Corpus(sentiment_cmd::CorpusArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { config, out } => dynamics_cmd::simulate(&config, &out),
        Command::Analyze { dir, radius } => dynamics_cmd::analyze(&dir, radius),
        Command::Train(args) => sentiment_cmd::train(&args),
        Command::Predict(args) => sentiment_cmd::predict(&args),
        Command::Evaluate(args) => sentiment_cmd::evaluate(&args),
        Command::Corpus(args) => sentiment_cmd::corpus(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if !matches!(e, CliError::Verdict) {
                eprintln!("error: {e}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
