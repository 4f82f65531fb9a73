mod error;
mod experiments;
mod inputs;
mod learn;
mod project;
mod service;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

/// Learn, inspect and serve mixture models over factored utility functions.
#[derive(Debug, Parser)]
#[command(name = "prefdens", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a utility database, searching structures unless given.
    Learn(learn::LearnArgs),
    /// Project utility vectors onto a learned type's basis.
    Project(project::ProjectArgs),
    /// Log likelihood of a database under a model, optionally with the CS score.
    Score(project::ScoreArgs),
    /// Sample a synthetic utility database.
    Gen(experiments::GenArgs),
    /// Learning-curve experiment.
    Curve(experiments::CurveArgs),
    /// Structure-recovery experiment.
    Recover(experiments::RecoverArgs),
    /// MAP versus least-squares projection experiment.
    Compare(experiments::CompareArgs),
    /// Run the HTTP session API.
    Serve(service::ServeArgs),
    /// Interactive elicitation against a running server.
    Elicit(service::ElicitArgs),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Learn(a) => learn::run(a),
        Command::Project(a) => project::run_project(a),
        Command::Score(a) => project::run_score(a),
        Command::Gen(a) => experiments::run_gen(a),
        Command::Curve(a) => experiments::run_curve(a),
        Command::Recover(a) => experiments::run_recover(a),
        Command::Compare(a) => experiments::run_compare(a),
        Command::Serve(a) => service::serve(a),
        Command::Elicit(a) => service::elicit(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
