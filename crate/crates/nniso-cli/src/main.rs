//! `nniso` — train, transform, and audit non-negative isomorphic networks.

mod commands;
mod config;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "nniso",
    version,
    about = "Non-negative isomorphic neural networks with photonic activations",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a preset network with plain SGD and write model + metrics
    Train(commands::train::TrainArgs),
    /// Rewrite a model into its non-negative isomorphic form
    Transform(commands::transform::TransformArgs),
    /// Check a model pair for exact equivalence and non-negativity
    Verify(commands::verify::VerifyArgs),
    /// Continue training a pretrained model in a non-negative manner
    Posttrain(commands::posttrain::PosttrainArgs),
    /// Fully non-negative training from scratch
    Scratch(commands::scratch::ScratchArgs),
    /// Finite-difference audit of the hand-written backward passes
    Gradcheck(commands::gradcheck::GradcheckArgs),
}

fn main() {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Train(args) => commands::train::run(args),
        Command::Transform(args) => commands::transform::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Posttrain(args) => commands::posttrain::run(args),
        Command::Scratch(args) => commands::scratch::run(args),
        Command::Gradcheck(args) => commands::gradcheck::run(args),
    };
    match outcome {
        Ok(passed) => {
            if !passed {
                std::process::exit(1);
            }
        }
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    }
}
