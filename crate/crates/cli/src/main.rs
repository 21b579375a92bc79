mod commands;
mod error;

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Spatio-temporal graph forecasting of bike-share stations.
#[derive(Debug, Parser)]
#[command(name = "bikecast", version)]
struct Cli {
    /// Log filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every command that reads a run config.
#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// Run config (TOML); relative data paths resolve against its directory.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `train.max_epochs`.
    #[arg(long)]
    pub epochs: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Preset {
    Dublin,
    Nyc,
    Synthetic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print a preset run config as TOML.
    Config {
        #[arg(long, value_enum, default_value = "dublin")]
        preset: Preset,
    },
    /// Write synthetic raw CSVs (snapshots, weather, trips) plus a run config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 12)]
        stations: usize,
        #[arg(long, default_value_t = 14)]
        days: u32,
    },
    /// Read raw inputs and build the sample cache.
    Ingest(RunArgs),
    /// Train one model; writes checkpoint, epoch log and test report.
    Train(RunArgs),
    /// Evaluate a checkpoint on one split.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Station CSV, MAE histogram and GeoJSON for evaluation reports.
    Report {
        /// Report JSON files written by `train` or `eval`.
        #[arg(long, required = true, num_args = 1..)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train every model × adjacency cell and tabulate test MAE.
    Compare(RunArgs),
    /// Train one ST-GCN per feature subset and tabulate test MAE.
    Ablation(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).format_timestamp_secs().init();
    let result = match cli.command {
        Command::Config { preset } => commands::config(preset),
        Command::Synth {
            out,
            seed,
            stations,
            days,
        } => commands::synth(&out, seed, stations, days),
        Command::Ingest(args) => commands::ingest(&args),
        Command::Train(args) => commands::train(&args),
        Command::Eval {
            run,
            checkpoint,
            split,
        } => commands::eval(&run, &checkpoint, split),
        Command::Report { reports, out } => commands::report(&reports, &out),
        Command::Compare(args) => commands::compare(&args),
        Command::Ablation(args) => commands::ablation(&args),
    };
    match result {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

impl From<SplitArg> for bikecast::data::SplitTag {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Self::Train,
            SplitArg::Val => Self::Val,
            SplitArg::Test => Self::Test,
        }
    }
}

