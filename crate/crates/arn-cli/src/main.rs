//! `arn`: batch experiments and reports for the resonance network simulator.

mod classify;
mod hardware;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use arn::approx::Method;
use arn::arnnet::NodeEval;
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Data(#[from] arn::dataio::DataError),
    #[error(transparent)]
    Arn(#[from] arn::arnnet::ArnError),
    #[error(transparent)]
    Lut(#[from] arn::approx::LutError),
    #[error(transparent)]
    Adder(#[from] arn::moadder::AdderError),
    #[error(transparent)]
    Neuron(#[from] arn::neuron::NeuronError),
    #[error(transparent)]
    Fx(#[from] arn::fxp::FxError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Usage(String),
}

/// Whether every oracle check inside a command held.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    OracleFailed,
}

#[derive(Parser, Debug)]
#[command(name = "arn", version, about = "Auto resonance network simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the two-layer classifier and write a model file.
    Train(classify::TrainArgs),
    /// Evaluate a model on a seeded test sample.
    Test(classify::TestArgs),
    /// Error tables for the activation lookup tables.
    EvalApprox(hardware::ApproxArgs),
    /// Carry-bound sweep and adder checks.
    VerifyAdder(hardware::AdderArgs),
    /// Serial versus parallel operation counts over time.
    BenchThroughput(hardware::ThroughputArgs),
    /// Stage-by-stage dump of the 16-input neurons.
    NeuronSim(hardware::NeuronArgs),
}

#[derive(Args, Debug, Clone)]
pub struct OutArgs {
    /// Directory for all report files.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

impl OutArgs {
    pub fn write(&self, name: &str, text: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(&self.out).map_err(|source| io_err(&self.out, source))?;
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|source| io_err(&path, source))?;
        Ok(path)
    }
}

pub fn io_err(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn unit_open(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err("must lie strictly between 0 and 1".into())
    }
}

pub fn positive(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err("must be positive".into())
    }
}

pub fn method(s: &str) -> Result<Method, String> {
    s.parse()
}

pub fn node_eval(s: &str) -> Result<NodeEval, String> {
    s.parse()
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    match cli.command {
        Command::Train(a) => classify::train(&a),
        Command::Test(a) => classify::test(&a),
        Command::EvalApprox(a) => hardware::eval_approx(&a),
        Command::VerifyAdder(a) => hardware::verify_adder(&a),
        Command::BenchThroughput(a) => hardware::bench_throughput(&a),
        Command::NeuronSim(a) => hardware::neuron_sim(&a),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::OracleFailed) => {
            eprintln!("arn: oracle check failed");
            ExitCode::from(1)
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("arn: usage: {msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("arn: {e}");
            ExitCode::from(1)
        }
    }
}
