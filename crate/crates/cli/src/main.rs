//! `inodo`: simulate datasets, train the window regressor, run the SINS, PDR
//! and IONet trackers and evaluate their trajectories.

mod config;
mod error;
mod eval;
mod manifest;
mod simulate;
mod track;
mod train;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "inodo", version, about = "Windowed inertial odometry toolkit")]
#[command(
    after_help = "Outputs go to --output-dir, the config's output_dir, $INODO_OUTPUT_DIR or ./inodo-out, in that order."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a truth track and its (optionally corrupted) IMU stream.
    Simulate(simulate::SimulateArgs),
    /// Train the window regressor on one or more datasets.
    Train(train::TrainArgs),
    /// Run trackers on an IMU stream and write `t,x,y,psi` trajectories.
    Track(track::TrackArgs),
    /// Compare trajectories with truth and write a metric report.
    Eval(eval::EvalArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Train(a) => train::run(a),
        Command::Track(a) => track::run(a),
        Command::Eval(a) => eval::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
