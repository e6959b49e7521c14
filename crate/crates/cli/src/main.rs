use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use racestack_cli::config::RunArgs;
use racestack_cli::{cmd_gen_track, cmd_plot, cmd_run, GenTrackArgs, EXIT_ERROR};

#[derive(Parser)]
#[command(name = "racestack", version, about = "Driverless racing pipeline simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one mission and write trajectory.csv, map.csv and metrics.json.
    Run {
        #[arg(long)]
        track: PathBuf,
        /// trackdrive, skidpad or acceleration
        #[arg(long)]
        mission: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        laps: Option<u32>,
        /// TOML configuration file
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run perception and localization on separate threads.
        #[arg(long)]
        parallel: bool,
    },
    /// Generate a track CSV.
    GenTrack {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        kind: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        cone_spacing: Option<f64>,
        #[arg(long)]
        min_radius: Option<f64>,
        #[arg(long)]
        length: Option<f64>,
    },
    /// Render the SVG report of a run directory.
    Plot {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR as u8 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { track, mission, seed, laps, config, out, parallel } => cmd_run(&RunArgs {
            track,
            mission,
            seed,
            laps,
            config,
            out,
            parallel,
        }),
        Command::GenTrack { seed, kind, out, width, cone_spacing, min_radius, length } => cmd_gen_track(&GenTrackArgs {
            seed,
            kind,
            out,
            width,
            cone_spacing,
            min_radius,
            length,
        }),
        Command::Plot { run_dir, out } => cmd_plot(&run_dir, &out),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
