//! Command-line arguments.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::Engine;

#[derive(Debug, Parser)]
#[command(name = "immunet", version, about = "Danger-theory anomaly detection toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic traces with ground-truth labels.
    Generate(GenerateArgs),
    /// Train a TLR model from normal traces.
    Train(TrainArgs),
    /// Run a detector over traces and write its report.
    Run(RunArgs),
    /// Score a report against ground-truth labels.
    Evaluate(EvaluateArgs),
    /// Run and evaluate the detector over a range of one parameter.
    Sweep(SweepArgs),
    /// Accept collector connections and run the detector live.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Dca,
    Tlr,
}

impl From<EngineArg> for Engine {
    fn from(e: EngineArg) -> Self {
        match e {
            EngineArg::Dca => Engine::Dca,
            EngineArg::Tlr => Engine::Tlr,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(subcommand)]
    pub scenario: ScenarioArgs,
}

#[derive(Debug, Subcommand)]
pub enum ScenarioArgs {
    /// Four processes with one ping scan (DCA input).
    PingScan(PingScanArgs),
    /// Labelled syscall sessions plus normal training traces (TLR input).
    Sessions(SessionsArgs),
}

#[derive(Debug, Args)]
pub struct PingScanArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub duration: Option<u64>,
    #[arg(long)]
    pub scan_start: Option<u64>,
    #[arg(long)]
    pub scan_end: Option<u64>,
    /// Drop the scanner and its parent process.
    #[arg(long)]
    pub no_scanner: bool,
}

#[derive(Debug, Args)]
pub struct SessionsArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[arg(long)]
    pub n_training: Option<usize>,
    #[arg(long)]
    pub n_normal: Option<usize>,
    #[arg(long)]
    pub n_anomalous: Option<usize>,
    #[arg(long)]
    pub session_length: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub antigen: PathBuf,
    #[arg(long)]
    pub signals: PathBuf,
    /// Model file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the engine named in the config.
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Overrides the seed named in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Antigen trace (dca).
    #[arg(long)]
    pub antigen: Option<PathBuf>,
    /// Signal trace (dca).
    #[arg(long)]
    pub signals: Option<PathBuf>,
    /// Trained model (tlr).
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Directory of session trace pairs (tlr).
    #[arg(long)]
    pub sessions: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// `mcav.csv` or `verdicts.csv` from a run.
    #[arg(long)]
    pub report: PathBuf,
    #[arg(long)]
    pub labels: PathBuf,
    /// Count labelled entities missing from the report as predicted normal.
    #[arg(long)]
    pub unscored_as_negative: bool,
    /// Write the evaluation here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    #[value(name = "population_size")]
    PopulationSize,
    #[value(name = "antigen_vector_size")]
    AntigenVectorSize,
    #[value(name = "threshold_range")]
    ThresholdRange,
    #[value(name = "weights-perturbation")]
    WeightsPerturbation,
    #[value(name = "dc_lifespan")]
    DcLifespan,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to vary.
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Comma-separated sweep values.
    #[arg(long, conflicts_with = "range", required_unless_present = "range")]
    pub values: Option<String>,
    /// Inclusive range `lo:hi:step`.
    #[arg(long)]
    pub range: Option<String>,
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the engine named in the config.
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    /// Directory written by `generate` for the engine in use.
    #[arg(long)]
    pub data: PathBuf,
    /// Count labelled entities missing from the report as predicted normal.
    #[arg(long)]
    pub unscored_as_negative: bool,
    /// CSV file to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Config file; defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the engine named in the config.
    #[arg(long, value_enum)]
    pub engine: Option<EngineArg>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "127.0.0.1:7878")]
    pub addr: String,
    /// Stop after this many clients have disconnected.
    #[arg(long, default_value_t = 1)]
    pub clients: usize,
    /// Trained model (tlr).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}
