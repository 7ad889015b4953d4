//! `boilgen`: simulate boiling campaigns and build, inspect and score datasets.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "boilgen", version, about)]
struct Cli {
    /// INI file with [sim] [thermal] [eos] [dataset] [diagnostics] sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run campaigns and write one frame container per dataset.
    Simulate(SimulateArgs),
    /// Estimate the phase threshold from frame containers.
    Threshold(ThresholdArgs),
    /// Turn frame containers into input stacks.
    Dataset(DatasetArgs),
    /// Turn segmented experimental masks into input stacks.
    Ingest(IngestArgs),
    /// Heat flux, void fraction and regimes of a frame or stack container.
    Diagnose(DiagnoseArgs),
    /// Score predicted temperature maps against ground truth.
    Evaluate(EvaluateArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Dataset ids from 1 to 9.
    #[arg(long, value_delimiter = ',', required = true)]
    pub datasets: Vec<u32>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Simulate only the 256x256 crop, recording every 100 steps.
    #[arg(long)]
    pub desk: bool,
}

#[derive(Args)]
pub struct ThresholdArgs {
    /// Frame containers.
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// One of minimum, li, isodata, otsu, triangle, mean, or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Use this threshold instead of an estimate.
    #[arg(long)]
    pub value: Option<f64>,
    /// Write the chosen threshold as JSON for `dataset --threshold`.
    #[arg(long)]
    pub save: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct DatasetArgs {
    /// Frame containers; alternatively use --split with --dir.
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub split: Option<String>,
    /// Directory holding dataset_<id>.boil for --split.
    #[arg(long)]
    pub dir: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub mirror: bool,
    /// Threshold value, or a JSON file written by `threshold --save`.
    #[arg(long)]
    pub threshold: Option<String>,
}

#[derive(Args)]
pub struct IngestArgs {
    /// Directory of instance masks (.pgm or .png), frame order by file name.
    #[arg(long)]
    pub masks: PathBuf,
    /// CSV with columns frame,T_K.
    #[arg(long)]
    pub thermocouple: PathBuf,
    /// Image row of the heater contact line (row 0 at the top).
    #[arg(long)]
    pub line_row: usize,
    #[arg(long)]
    pub x_start: usize,
    /// One past the last heater column.
    #[arg(long)]
    pub x_end: usize,
    /// Physical heater length in metres.
    #[arg(long)]
    pub length: f64,
    #[arg(long)]
    pub p: Option<usize>,
    /// Nearest-neighbour enlargement applied to every stack.
    #[arg(long, default_value_t = 1)]
    pub upscale: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct DiagnoseArgs {
    /// Frame container, or stack container with targets.
    pub input: PathBuf,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    /// Prediction containers, paired in order with --truth.
    #[arg(long, num_args = 1..)]
    pub pred: Vec<PathBuf>,
    /// Stack containers with targets.
    #[arg(long, num_args = 1..)]
    pub truth: Vec<PathBuf>,
    /// train, test1, test2, test3 or all; reads dataset_<id>.pred.boil and dataset_<id>.stacks.boil.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub pred_dir: Option<PathBuf>,
    #[arg(long)]
    pub truth_dir: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Compare inputs produced under different configurations.
    #[arg(long)]
    pub force: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Simulate(a) => commands::simulate(config, &a),
        Command::Threshold(a) => commands::threshold(config, &a),
        Command::Dataset(a) => commands::dataset(config, &a),
        Command::Ingest(a) => commands::ingest(config, &a),
        Command::Diagnose(a) => commands::diagnose(config, &a),
        Command::Evaluate(a) => commands::evaluate(config, &a),
    }
}
