//! `poselift` command line: synthesize data, train, evaluate, predict, plot.

mod commands;
mod config;
mod svg;

use clap::{Parser, Subcommand};

/// Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Numerical(m) => m,
        }
    }
}

impl From<poselift::Error> for CliError {
    fn from(e: poselift::Error) -> Self {
        use poselift::Error as E;
        match &e {
            E::NonFiniteLoss { .. } | E::NonFiniteGradient { .. } | E::NonFinite { .. } => {
                CliError::Numerical(e.to_string())
            }
            E::Config(_) | E::Architecture(_) | E::Invalid { .. } => CliError::Usage(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "poselift",
    version,
    about = "Lift 2d human poses to 3d with a weakly-supervised two-module network"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic train/val/test pose files
    Synth(commands::synth::SynthArgs),
    /// Train the lifter and re-projector on pose files
    Train(commands::train::TrainArgs),
    /// Evaluate a checkpoint (or a predictions file) against labeled data
    Eval(commands::eval::EvalArgs),
    /// Predict 3d poses for a 2d pose file
    Predict(commands::predict::PredictArgs),
    /// Render loss curves and skeletons as SVG
    Plot(commands::plot::PlotArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => commands::synth::run(args),
        Command::Train(args) => commands::train::run(args),
        Command::Eval(args) => commands::eval::run(args),
        Command::Predict(args) => commands::predict::run(args),
        Command::Plot(args) => commands::plot::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
