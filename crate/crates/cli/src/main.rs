//! `vi`: build skeleton graphs, replay and simulate scenarios, estimate over
//! recorded logs, and serve a live steering session.

mod commands;
mod serve;

use std::net::IpAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "vi", version, about = "Warehouse worker intention estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rasterize a layout and export its skeleton graph.
    BuildGvd {
        layout: PathBuf,
        /// Graph JSON destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Grid resolution in meters, overriding the layout's.
        #[arg(long, value_name = "M")]
        cell_size: Option<f64>,
        /// Split graph edges longer than this many meters.
        #[arg(long, value_name = "M")]
        max_edge_length: Option<f64>,
        /// Also write the occupancy grid as a binary PGM.
        #[arg(long, value_name = "FILE")]
        pgm: Option<PathBuf>,
    },
    /// Run a scenario to completion and write its trace CSV.
    Replay {
        scenario: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the trace as JSON.
        #[arg(long, value_name = "FILE")]
        json: Option<PathBuf>,
    },
    /// Run a scenario and record pose and robot logs for `estimate`.
    Simulate {
        scenario: PathBuf,
        /// Replace every robot's motion model.
        #[arg(long, value_enum)]
        robots: Option<RobotMode>,
        #[arg(long, value_name = "S")]
        duration: Option<f64>,
        /// Directory for poses.jsonl, robots.jsonl and trace.csv.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Estimate intentions offline from recorded pose and robot logs.
    Estimate {
        layout: PathBuf,
        pose_log: PathBuf,
        robot_log: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Take goals, map and estimator settings, events and record mode
        /// from this scenario.
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Serve a live session: websocket frames, commands and the UI.
    Serve {
        scenario: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        bind: IpAddr,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        rate: f64,
        /// Keep the scenario's worker script instead of waiting for steering.
        #[arg(long)]
        scripted: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum RobotMode {
    Random,
    Deterministic,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn input(e: impl Into<anyhow::Error>) -> Self {
        Self::Input(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        Self::Runtime(e.into())
    }

    fn code(&self) -> u8 {
        match self {
            Self::Input(_) => 1,
            Self::Runtime(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("VI_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::BuildGvd {
            layout,
            output,
            cell_size,
            max_edge_length,
            pgm,
        } => commands::build_gvd(&layout, output.as_deref(), cell_size, max_edge_length, pgm.as_deref()),
        Command::Replay {
            scenario,
            output,
            seed,
            json,
        } => commands::replay(&scenario, output.as_deref(), seed, json.as_deref()),
        Command::Simulate {
            scenario,
            robots,
            duration,
            out_dir,
        } => commands::simulate(&scenario, robots.map(commands::motion_model), duration, &out_dir),
        Command::Estimate {
            layout,
            pose_log,
            robot_log,
            output,
            scenario,
        } => commands::estimate(&layout, &pose_log, &robot_log, output.as_deref(), scenario.as_deref()),
        Command::Serve {
            scenario,
            port,
            bind,
            rate,
            scripted,
        } => serve::serve(serve::Options {
            scenario,
            port,
            bind,
            rate,
            scripted,
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (Failure::Input(e) | Failure::Runtime(e)) = &f;
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}
