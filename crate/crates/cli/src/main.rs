//! `diffloc`: synthesize, localize and plot knife-edge curves from the
//! command line.
//!
//! Exit codes: 0 success, 1 configuration or validation error, 2 the
//! pipeline rejected the measurement.

mod commands;
mod config;
mod wav;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug, Parser)]
#[command(name = "diffloc", version, about = "Locate hidden impulsive sources from edge-diffracted sound")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory.
    #[arg(long, global = true, env = "DIFFLOC_OUT", default_value = ".")]
    out: PathBuf,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render multichannel traces for a scene and source to WAV.
    Synth(SynthArgs),
    /// Doorway pipeline: wavefront fit plus heatmap.
    LocalizeDoorway(LocalizeArgs),
    /// Single-edge pipeline: two wavefront fits plus spectral ratio.
    LocalizeEdge(LocalizeArgs),
    /// Knife-edge loss and ratio curves as CSV.
    Curves(CurvesArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Scene file (TOML) with a [source] table.
    #[arg(long)]
    pub scene: PathBuf,
    /// Noise and reverberation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Peak diffracted amplitude over noise standard deviation, dB.
    #[arg(long)]
    pub snr_db: Option<f64>,
    /// Trace length, seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Base name of the WAV and its `.meta.toml` sidecar.
    #[arg(long, default_value = "synth")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Scene file (TOML). Defaults to the scene stored in the input's sidecar.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Multichannel WAV recording.
    #[arg(long)]
    pub input: PathBuf,
    /// Analysis band, `lo:hi` in Hz.
    #[arg(long, value_parser = commands::parse_band)]
    pub band: Option<(f64, f64)>,
    /// Spectral window (edge), milliseconds.
    #[arg(long)]
    pub window_ms: Option<f64>,
    /// Heatmap gate (doorway), milliseconds.
    #[arg(long)]
    pub gate_ms: Option<f64>,
    /// Heatmap grid step (doorway), meters.
    #[arg(long)]
    pub grid_step_m: Option<f64>,
    /// Restrict heatmap cells (doorway) to diffracted paths within this many
    /// meters of the fitted range.
    #[arg(long)]
    pub range_window_m: Option<f64>,
    /// Smallest accepted envelope peak-to-background ratio.
    #[arg(long)]
    pub min_snr: Option<f64>,
    /// Largest accepted wavefront-fit RMS residual, milliseconds.
    #[arg(long)]
    pub max_rmse_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CurvesArgs {
    /// Scene file (TOML) with a [curves] table.
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Comma-separated azimuths in degrees; an empty string writes nothing.
    #[arg(long)]
    pub thetas: Option<String>,
    #[arg(long)]
    pub delta_theta: Option<f64>,
    /// Source to edge distance, meters.
    #[arg(long)]
    pub d1: Option<f64>,
    /// Edge to receiver distance, meters.
    #[arg(long)]
    pub d2: Option<f64>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
    #[arg(long)]
    pub n_freq: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = match &cli.command {
        Command::Synth(a) => commands::synth(a, &cli.out),
        Command::LocalizeDoorway(a) => commands::localize_doorway(a, &cli.out),
        Command::LocalizeEdge(a) => commands::localize_edge(a, &cli.out),
        Command::Curves(a) => commands::curves(a, &cli.out),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.code())
        }
    }
}
