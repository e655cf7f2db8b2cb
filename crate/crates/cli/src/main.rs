//! `cshap`: explanations and checks for complex-valued networks.
//!
//! Exit codes: 0 success, 1 a check failed, 2 bad usage or unreadable or
//! invalid files, 3 the model holds a layer the method cannot handle.
//! `CSHAP_THREADS` caps the worker threads.

mod commands;
mod output;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use cshap_core::harness::Task;
use cshap_core::{Method, Part, Reduction};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cshap", version, about = "Explain complex-valued neural networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write saliency maps for every input
    Explain(ExplainArgs),
    /// Check local accuracy and missingness
    Axioms(AxiomsArgs),
    /// Run the channel-attribution or masking experiment
    Evaluate(EvaluateArgs),
    /// Cross-check the fast algorithms against brute-force oracles
    OracleCheck(OracleArgs),
    /// Train a model on a synthetic task
    TrainToy(TrainArgs),
    /// Compare a model's outputs on probe inputs with expected outputs
    Verify(VerifyArgs),
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse()
        .map_err(|_| "expected two_channel_synthetic (two-channel) or mini_digits (digits)".to_string())
}

/// Parses the command line; on a usage error prints the message followed
/// by the usage of the offending subcommand and exits with 2.
fn parse_cli() -> Cli {
    match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let mut cmd = Cli::command();
            cmd.build();
            let sub = std::env::args().nth(1).unwrap_or_default();
            let usage = match cmd.find_subcommand_mut(&sub) {
                Some(c) => c.render_usage(),
                None => cmd.render_usage(),
            };
            eprint!("{e}");
            eprintln!("\n{usage}");
            std::process::exit(2);
        }
        Err(e) => e.exit(),
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ReduceArg {
    Abs,
    Ri,
}

impl From<ReduceArg> for Reduction {
    fn from(r: ReduceArg) -> Self {
        match r {
            ReduceArg::Abs => Reduction::Abs,
            ReduceArg::Ri => Reduction::RealPlusImag,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PartArg {
    Re,
    Im,
    Full,
}

impl From<PartArg> for Part {
    fn from(p: PartArg) -> Self {
        match p {
            PartArg::Re => Part::Re,
            PartArg::Im => Part::Im,
            PartArg::Full => Part::Full,
        }
    }
}

#[derive(Args)]
struct ExplainArgs {
    #[arg(long)]
    model: PathBuf,
    /// tensor file(s); each may hold one tensor or an array of them
    #[arg(long, required = true, num_args = 1..)]
    input: Vec<PathBuf>,
    /// reference tensor file(s); all-zero reference when omitted
    #[arg(long, num_args = 1..)]
    reference: Vec<PathBuf>,
    /// deepcshap, grad, gradxinput, intgrad, guided-z or guided-c
    #[arg(long, default_value = "deepcshap", value_parser = parse_method)]
    method: Method,
    #[arg(long, value_enum, default_value = "ri")]
    reduce: ReduceArg,
    /// output directory, created if missing
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 0)]
    output_index: usize,
    /// part of the output explained
    #[arg(long, value_enum, default_value = "re")]
    part: PartArg,
    /// integrated-gradients steps
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// largest max-pool window explained by subset enumeration
    #[arg(long, default_value_t = 9)]
    enum_cap: usize,
}

#[derive(Args)]
struct AxiomsArgs {
    #[arg(long)]
    model: PathBuf,
    /// inputs to check; random inputs around the first reference when omitted
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long, num_args = 1..)]
    reference: Vec<PathBuf>,
    /// deepcshap or intgrad
    #[arg(long, default_value = "deepcshap", value_parser = parse_method)]
    method: Method,
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// chance that a random input feature copies the reference
    #[arg(long, default_value_t = 0.25)]
    missing: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// largest relative local-accuracy error accepted
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    /// report file; stdout when omitted
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// two_channel_synthetic or mini_digits
    #[arg(long, value_parser = parse_task)]
    task: Task,
    /// inputs (two-channel) or source-digit images (digits)
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    seed: u64,
    /// masked fraction(s) of the features
    #[arg(long, num_args = 1.., default_values_t = [0.2])]
    fraction: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    source: usize,
    #[arg(long, default_value_t = 3)]
    target: usize,
    #[arg(long, default_value_t = 5)]
    steps: usize,
    /// output directory, created if missing
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct OracleArgs {
    /// random cases per per-layer check
    #[arg(long, default_value_t = 1000)]
    cases: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    momentum: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    /// model file; the training report goes next to it as `<stem>.train.json`
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    model: PathBuf,
    /// probe inputs
    #[arg(long)]
    input: PathBuf,
    /// expected outputs, one per probe
    #[arg(long)]
    expected: PathBuf,
    #[arg(long, default_value_t = 1e-5)]
    tolerance: f64,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn configure_threads() -> Result<(), commands::CliError> {
    let Ok(v) = std::env::var("CSHAP_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| commands::CliError::usage(format!("CSHAP_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| commands::CliError::usage(e.to_string()))
}

fn main() -> ExitCode {
    let cli = parse_cli();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Explain(a) => commands::explain(a),
        Command::Axioms(a) => commands::axioms(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::TrainToy(a) => commands::train_toy(a),
        Command::Verify(a) => commands::verify(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cshap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
