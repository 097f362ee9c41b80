//! `ssnet`: synthesize data, train, evaluate, forecast, check gradients and
//! run the benchmark grid.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure (divergence or a failed gradient check).

mod commands;
mod config;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Debug, Parser)]
#[command(name = "ssnet", version, about = "State-space recurrent CO2 forecasting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a room and write the hourly CSV to <out>/synth.csv.
    Synth(Overrides),
    /// Fit one model; writes checkpoint, history and gap report to <out>.
    Train(Overrides),
    /// Score a checkpoint on the test split of the configured data.
    Eval(Overrides),
    /// Forecast from the most recent window of the configured data.
    Predict {
        #[command(flatten)]
        overrides: Overrides,
        /// Last input hour (e.g. 2019-09-02T13:00); defaults to the final row.
        #[arg(long)]
        end: Option<String>,
    },
    /// Finite-difference check of the analytic gradients on a random window.
    Gradcheck(Overrides),
    /// Train and score every variant at every horizon; writes the report grid.
    Bench(Overrides),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { commands::EXIT_USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Synth(o) => commands::synth(&o),
        Command::Train(o) => commands::train(&o),
        Command::Eval(o) => commands::eval(&o),
        Command::Predict { overrides, end } => commands::predict(&overrides, end.as_deref()),
        Command::Gradcheck(o) => commands::gradcheck(&o),
        Command::Bench(o) => commands::bench(&o),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
