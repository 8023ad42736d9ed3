//! `badx`: persona-driven intersectional bias audits from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use badx_core::{Error, ErrorClass};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "badx", version, about = "Persona-driven intersectional bias audits of language models")]
struct Cli {
    /// Print a machine-readable JSON envelope on standard output.
    #[arg(long, global = true)]
    json: bool,

    /// Log progress to standard error (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Corpus utilities.
    #[command(subcommand)]
    Corpus(CorpusCommand),
    /// Static per-class bias scores (no personas).
    Task1(TaskArgs),
    /// Persona grid: BAD, PSI and volatility.
    Task2(TaskArgs),
    /// Token attributions for the generations of a run.
    Explain(ExplainArgs),
    /// Render tables, density curves and report.md for a run.
    Report(ReportArgs),
    /// Diff a run against a golden run directory.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Check every corpus invariant and list the findings.
    Validate { path: PathBuf },
    /// Fraction of records labeled intersectional-biased.
    Iibs { path: PathBuf },
}

#[derive(Args)]
pub struct TaskArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Serve generations from recorded transcripts instead of the network.
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Record failed scoring cells and continue.
    #[arg(long)]
    pub keep_going: bool,
    /// Run directory; defaults to the config's output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExplainArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Attribute a single metric instead of the three-metric mean.
    #[arg(long)]
    pub metric: Option<String>,
    /// Explain every generation, not only the first of each cell.
    #[arg(long)]
    pub all_generations: bool,
}

#[derive(Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// csv, json or md.
    #[arg(long, default_value = "csv")]
    pub format: String,
    #[arg(long, default_value_t = 512)]
    pub grid_n: usize,
    /// per-cell or per-persona.
    #[arg(long, default_value = "per-cell")]
    pub population: String,
    /// Floor for the KDE bandwidth; lets constant data produce a curve.
    #[arg(long)]
    pub min_bandwidth: Option<f64>,
}

#[derive(Args)]
pub struct CompareArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub golden: PathBuf,
}

/// What a command produced: its JSON result, human text, and whether it
/// found problems (validation findings, golden diffs).
pub struct Outcome {
    pub result: Value,
    pub text: String,
    pub findings: bool,
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Corpus(CorpusCommand::Validate { .. }) => "corpus validate",
        Command::Corpus(CorpusCommand::Iibs { .. }) => "corpus iibs",
        Command::Task1(_) => "task1",
        Command::Task2(_) => "task2",
        Command::Explain(_) => "explain",
        Command::Report(_) => "report",
        Command::Compare(_) => "compare",
    }
}

fn exit_code(e: &Error, command: &Command) -> u8 {
    match e.class() {
        ErrorClass::Config => 3,
        ErrorClass::Runtime => 2,
        ErrorClass::Validation => match command {
            Command::Corpus(_) | Command::Compare(_) => 1,
            _ => 2,
        },
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => tracing::Level::WARN,
        1 => tracing::Level::INFO,
        _ => tracing::Level::DEBUG,
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    init_logging(cli.verbose);
    let name = command_name(&cli.command);

    let outcome = match &cli.command {
        Command::Corpus(CorpusCommand::Validate { path }) => commands::corpus_validate(path),
        Command::Corpus(CorpusCommand::Iibs { path }) => commands::corpus_iibs(path),
        Command::Task1(a) => commands::task1(a),
        Command::Task2(a) => commands::task2(a),
        Command::Explain(a) => commands::explain(a),
        Command::Report(a) => commands::report(a),
        Command::Compare(a) => commands::compare(a),
    };

    let (code, envelope) = match outcome {
        Ok(o) => {
            let code = u8::from(o.findings);
            if !cli.json {
                print!("{}", o.text);
            }
            let env = json!({"command": name, "ok": code == 0, "exit_code": code, "result": o.result, "error": null});
            (code, env)
        }
        Err(e) => {
            let code = exit_code(&e, &cli.command);
            eprintln!("error: {e}");
            let env = json!({
                "command": name,
                "ok": false,
                "exit_code": code,
                "result": null,
                "error": {"kind": e.kind(), "message": e.to_string()},
            });
            (code, env)
        }
    };
    if cli.json {
        println!("{}", serde_json::to_string_pretty(&envelope).expect("json value serializes"));
    }
    ExitCode::from(code)
}
