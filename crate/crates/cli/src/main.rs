//! `topic-compose`: synthesize corpora, infer topic compositions, score them.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use topic_compose::estimators::TliSolver;
use topic_compose::padd::TauSchedule;

/// Exit status for bad invocations; clap uses the same code for parse errors.
const EXIT_USAGE: u8 = 2;
const EXIT_RUNTIME: u8 = 1;

#[derive(Parser, Debug)]
#[command(name = "topic-compose", version, about = "Topic composition inference for documents")]
pub struct Cli {
    /// Worker threads for parallel stages (defaults to all cores).
    #[arg(long, global = true, env = "TOPIC_COMPOSE_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample a synthetic corpus and its true compositions from a model.
    Synth(SynthArgs),
    /// Estimate per-document topic compositions.
    Infer(InferArgs),
    /// Score predicted compositions against the truth.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth(_) => "synth",
            Command::Infer(_) => "infer",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PriorKind {
    Dirichlet,
    LogisticNormal,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Model directory holding B.tsv and A.tsv.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value = "dirichlet")]
    pub prior: PriorKind,
    /// Symmetric Dirichlet total concentration; each topic gets scale / K.
    #[arg(long, default_value_t = 5.0)]
    pub alpha_scale: f64,
    /// Logistic-normal mean (dense TSV, K x 1 or 1 x K).
    #[arg(long, required_if_eq("prior", "logistic-normal"))]
    pub mu: Option<PathBuf>,
    /// Logistic-normal covariance (dense TSV, K x K).
    #[arg(long, required_if_eq("prior", "logistic-normal"))]
    pub sigma: Option<PathBuf>,
    /// Number of documents.
    #[arg(long)]
    pub docs: usize,
    /// Document length: a fixed count or poisson:<mean>.
    #[arg(long, default_value = "poisson:150")]
    pub len: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Spi,
    Tli,
    Padd,
    Rand,
}

#[derive(Args, Debug)]
pub struct InferArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Model directory holding B.tsv and A.tsv.
    #[arg(long)]
    pub model: PathBuf,
    /// Sparse corpus file.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Seed for --method rand.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// TLI bias budget.
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    #[arg(long, default_value_t = 4.5)]
    pub threshold_divisor: f64,
    #[arg(long, default_value = "lp", value_parser = parse_solver)]
    pub tli_solver: TliSolver,

    #[arg(long, default_value_t = 3.0)]
    pub gamma: f64,
    /// Douglas-Rachford relaxation, in (0, 2).
    #[arg(long, default_value_t = 1.9)]
    pub lambda: f64,
    #[arg(long, default_value_t = 15)]
    pub master_iters: usize,
    #[arg(long, default_value_t = 150)]
    pub slave_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    pub slave_tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tau0: f64,
    #[arg(long, default_value = "inv_sqrt", value_parser = parse_schedule)]
    pub tau_schedule: TauSchedule,
    #[arg(long, default_value_t = 1e-8)]
    pub ridge_eps: f64,
    /// Start each slave from the previous round's solution.
    #[arg(long)]
    pub warm_start_previous: bool,
    /// Per-round PADD diagnostics (default: <out>/diagnostics.tsv).
    #[arg(long)]
    pub diagnostics: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    /// True compositions (dense TSV, K x M).
    #[arg(long)]
    pub truth: PathBuf,
    /// Predicted compositions (dense TSV, K x M).
    #[arg(long)]
    pub pred: PathBuf,
    /// Reference topic-topic matrix for the prior distance.
    #[arg(long)]
    pub prior: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    pub prominent_mass: f64,
    /// Summary report.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-document metrics.
    #[arg(long)]
    pub per_doc: Option<PathBuf>,
}

fn parse_solver(s: &str) -> Result<TliSolver, String> {
    s.parse().map_err(|e: topic_compose::Error| e.to_string())
}

fn parse_schedule(s: &str) -> Result<TauSchedule, String> {
    s.parse().map_err(|e: topic_compose::Error| e.to_string())
}

/// One JSON object on one line, so scripts can parse failures.
fn report_error(subcommand: &str, code: u8, err: &anyhow::Error) {
    let message = format!("{err:#}").replace('\n', " ");
    let line = serde_json::json!({
        "error": message,
        "subcommand": subcommand,
        "exit_code": code,
    });
    eprintln!("{line}");
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<topic_compose::Error>() {
        Some(topic_compose::Error::Config(_)) => EXIT_USAGE,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let name = cli.command.name();
    let result = match cli.threads {
        Some(0) => Err(anyhow::Error::new(topic_compose::Error::Config(
            "--threads must be >= 1".into(),
        ))),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(anyhow::Error::from)
            .and_then(|pool| pool.install(|| commands::run(&cli))),
        None => commands::run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let code = exit_code_for(&err);
            report_error(name, code, &err);
            ExitCode::from(code)
        }
    }
}
