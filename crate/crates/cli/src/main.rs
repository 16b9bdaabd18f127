//! `bet`: batch front end for trajectory collection, student training,
//! evaluation, explanations and comparison reports.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use bet_core::BetError;

#[derive(Debug, Parser)]
#[command(name = "bet", version, about = "Backbone Extract Tree distillation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
enum Command {
    /// Roll out a teacher (or export a dataset) into a trajectory file.
    Collect(CollectArgs),
    /// Fit a student model on a trajectory file.
    Train(TrainArgs),
    /// Score a model by fidelity on recorded decisions or by reward in an environment.
    Eval(EvalArgs),
    /// Risk maps, decision-flipping perturbations, or the bone catalog of a BET model.
    Explain(ExplainArgs),
    /// Repeated distillation runs comparing BET against the baselines.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EnvName {
    Gridpursuit,
    Moons,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum TeacherName {
    Scripted,
}

#[derive(Debug, Args, Serialize)]
struct CollectArgs {
    #[arg(long, value_enum)]
    env: EnvName,
    #[arg(long, value_enum, default_value = "scripted")]
    teacher: TeacherName,
    /// Episodes to roll out (gridpursuit).
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    /// Points per class (moons).
    #[arg(long, default_value_t = 100)]
    per_class: usize,
    /// Gaussian noise on point coordinates (moons).
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Bet,
    Cart,
    Id3,
    Knn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum DistanceArg {
    Euclidean,
    SquaredEuclidean,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Trajectory file written by `collect`.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    model: ModelKind,
    #[arg(long, default_value_t = 4)]
    n_bones: usize,
    /// Depth limit for bet, cart and id3.
    #[arg(long, default_value_t = 4)]
    max_depth: usize,
    #[arg(long, default_value_t = 2)]
    min_split: usize,
    #[arg(long, value_enum, default_value = "euclidean")]
    distance: DistanceArg,
    /// Fixed kernel width; the per-node median distance is used when absent.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 100)]
    lloyd_max_iters: usize,
    #[arg(long, default_value_t = 1e-9)]
    lloyd_tol: f64,
    /// Neighbour count for knn.
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum EvalMode {
    Fidelity,
    Reward,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    /// Model file, or `scripted` for the scripted teacher itself.
    #[arg(long)]
    model: String,
    #[arg(long, value_enum)]
    mode: EvalMode,
    /// Trajectory file whose recorded actions are the reference (fidelity).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Environment to roll out in (reward).
    #[arg(long, value_enum, default_value = "gridpursuit")]
    env: EnvName,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
enum ExplainMode {
    Risk,
    Perturb,
    Bones,
}

#[derive(Debug, Args, Serialize)]
struct ExplainArgs {
    /// BET model file.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, value_enum)]
    mode: ExplainMode,
    /// Probe states, one JSON array per line (risk, perturb).
    #[arg(long)]
    states: Option<PathBuf>,
    /// Square probe grid `LO:HI:N` over the first two state coordinates (risk).
    #[arg(long)]
    grid: Option<String>,
    /// Trajectory file used for bone provenance (bones).
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-3)]
    tol: f64,
    /// Restrict perturbations to these target actions.
    #[arg(long, value_delimiter = ',')]
    targets: Option<Vec<usize>>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct ReportArgs {
    #[arg(long, value_enum, default_value = "gridpursuit")]
    env: EnvName,
    #[arg(long, default_value_t = 10)]
    runs: u64,
    #[arg(long, default_value_t = 200)]
    episodes: usize,
    #[arg(long, default_value_t = 1000)]
    decisions: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

/// Failure categories mapped to process exit codes.
#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
        }
    }
}

impl From<BetError> for CliError {
    fn from(e: BetError) -> Self {
        if e.is_config() {
            CliError::Usage(e.to_string())
        } else {
            CliError::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let result = match &cli.command {
        Command::Collect(a) => commands::collect(a),
        Command::Train(a) => commands::train(a),
        Command::Eval(a) => commands::eval(a),
        Command::Explain(a) => commands::explain(a),
        Command::Report(a) => commands::report(a),
    }
    .and_then(|outputs| manifest::write(&cli.command, &argv, &outputs));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (CliError::Usage(msg) | CliError::Data(msg)) = &e;
            eprintln!("error: {msg}");
            ExitCode::from(e.code())
        }
    }
}
