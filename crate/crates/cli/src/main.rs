//! `campus`: sensor records in, forecasts and allocation decisions out.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 infeasible problem,
//! 4 numerical failure.

mod bus;
mod carpark;
mod cleanse;
mod forecast;
mod io;
mod rooms;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Parser)]
#[command(name = "campus", version, about = "Campus car park, classroom and bus-stop analytics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options every subcommand accepts.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// JSON file with the command's settings; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory receiving the outputs and manifest.json.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
}

#[derive(Subcommand)]
enum Command {
    /// Clean plate reads, match stays, count hourly rates and cluster users.
    Cleanse(cleanse::CleanseArgs),
    /// Forecast the next days' hourly arrival and departure rates.
    Forecast(forecast::ForecastArgs),
    /// Predict normalised class attendance with a quantile model.
    ForecastAttendance(forecast::AttendanceArgs),
    /// Run the occupancy chain over one horizon and trace expected rejections.
    SimulateCarpark(carpark::SimulateArgs),
    /// Expected daily rejections for every partition scheme.
    SchemeTable(carpark::SchemeTableArgs),
    /// Choose one partition scheme per day, minimising rejection cost.
    OptimizePartition(carpark::PartitionArgs),
    /// Assign each day's class meetings to rooms at minimum total capacity.
    AllocateRooms(rooms::AllocateArgs),
    /// Estimate queue length from the distance-sensor array.
    InferQueue(bus::QueueArgs),
    /// Search bus dispatch times that minimise passenger wait.
    OptimizeBus(bus::OptimizeArgs),
    /// Wait-time breakdown of a given bus schedule.
    EvaluateBus(bus::EvaluateArgs),
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use campus_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Infeasible(_) => 3,
                E::Numerical(_) | E::Singular { .. } => 4,
                _ => 2,
            };
        }
        if cause.downcast_ref::<io::InputError>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Cleanse(a) => cleanse::run(a),
        Command::Forecast(a) => forecast::run(a),
        Command::ForecastAttendance(a) => forecast::run_attendance(a),
        Command::SimulateCarpark(a) => carpark::simulate(a),
        Command::SchemeTable(a) => carpark::scheme_table(a),
        Command::OptimizePartition(a) => carpark::optimize(a),
        Command::AllocateRooms(a) => rooms::run(a),
        Command::InferQueue(a) => bus::infer_queue(a),
        Command::OptimizeBus(a) => bus::optimize(a),
        Command::EvaluateBus(a) => bus::evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
