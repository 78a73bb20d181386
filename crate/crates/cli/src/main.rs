//! `fuzztune` command-line front end.
//!
//! Exit codes: 0 ok, 1 usage or input error, 2 environment (compiler
//! missing, filesystem), 3 per-program failures above `max_failure_fraction`.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{ArgMatches, Args, FromArgMatches, Parser, Subcommand};
use fuzztune::corpus::{parse_ratio, Fraction, SplitUnit};
use fuzztune::eval::{self, EmbeddingTable, EvalError, Similarity};
use fuzztune::orchestrator::{self, OrchestratorError, PipelineConfig, RunSummary, Stage, Workspace};
use tracing_subscriber::EnvFilter;

const EXIT_USAGE: u8 = 1;
const EXIT_ENVIRONMENT: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "fuzztune", version, about = "Fuzzing-based test-case augmentation for code datasets")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Read a corpus into a (new or existing) workspace and split it.
    Ingest {
        #[command(flatten)]
        ws: WorkspaceArgs,
        /// Corpus root directory.
        #[arg(long)]
        corpus: PathBuf,
    },
    /// Repair every selected program until it compiles.
    Repair(StageArgs),
    /// Build instrumented and plain executables.
    Build(StageArgs),
    /// Run a fuzzing campaign per program.
    Fuzz(StageArgs),
    /// Replay queue entries into input/output pairs.
    Harvest(StageArgs),
    /// Write augmented records and dataset.jsonl.
    Emit(StageArgs),
    /// Replace the working splits by a nested subsample.
    Subsample {
        #[command(flatten)]
        ws: WorkspaceArgs,
        /// Fraction kept, e.g. 1/10 or 0.1.
        #[arg(long, value_parser = parse_ratio)]
        ratio: Fraction,
        #[arg(long, default_value = "programs")]
        unit: SplitUnit,
    },
    /// All stages: ingest (with --corpus), optional subsample, then through emit.
    Pipeline {
        #[command(flatten)]
        ws: WorkspaceArgs,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, value_parser = parse_ratio)]
        ratio: Option<Fraction>,
        #[arg(long, default_value = "programs")]
        unit: SplitUnit,
    },
    /// MAP@R over an embedding file, or error rate over label files.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct WorkspaceArgs {
    /// Workspace directory.
    #[arg(long, short = 'w')]
    workspace: PathBuf,
    /// Flat key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: ConfigFlags,
}

#[derive(Args, Debug)]
struct StageArgs {
    #[command(flatten)]
    ws: WorkspaceArgs,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Embedding file (header "n dim", then id<TAB>label<TAB>vector lines).
    #[arg(long, conflicts_with_all = ["predictions", "truth"], required_unless_present = "predictions")]
    embeddings: Option<PathBuf>,
    #[arg(long, default_value = "cosine")]
    similarity: Similarity,
    /// Per-problem breakdown as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Plot-ready per-problem series as JSON.
    #[arg(long)]
    series: Option<PathBuf>,
    /// id<TAB>label predictions.
    #[arg(long, requires = "truth")]
    predictions: Option<PathBuf>,
    /// id<TAB>label ground truth.
    #[arg(long, requires = "predictions")]
    truth: Option<PathBuf>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// One `--key value` flag per configuration key (underscores become dashes).
#[derive(Debug, Default)]
struct ConfigFlags(Vec<(String, String)>);

fn flag_name(key: &'static str) -> &'static str {
    Box::leak(key.replace('_', "-").into_boxed_str())
}

impl FromArgMatches for ConfigFlags {
    fn from_arg_matches(m: &ArgMatches) -> Result<Self, clap::Error> {
        let mut out = Vec::new();
        for key in PipelineConfig::keys() {
            if let Some(v) = m.get_one::<String>(key) {
                out.push((key.to_string(), v.clone()));
            }
        }
        Ok(ConfigFlags(out))
    }

    fn update_from_arg_matches(&mut self, m: &ArgMatches) -> Result<(), clap::Error> {
        *self = Self::from_arg_matches(m)?;
        Ok(())
    }
}

impl Args for ConfigFlags {
    fn augment_args(mut cmd: clap::Command) -> clap::Command {
        for key in PipelineConfig::keys() {
            cmd = cmd.arg(
                clap::Arg::new(key)
                    .long(flag_name(key))
                    .value_name("VALUE")
                    .help_heading("Configuration")
                    .help(format!("overrides `{key}`")),
            );
        }
        cmd
    }

    fn augment_args_for_update(cmd: clap::Command) -> clap::Command {
        Self::augment_args(cmd)
    }
}

impl WorkspaceArgs {
    fn build_config(&self) -> anyhow::Result<PipelineConfig> {
        let mut c = PipelineConfig::default();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            c.apply_kv(&text).map_err(OrchestratorError::Config)?;
        }
        for (k, v) in &self.keys.0 {
            c.set(k, v).map_err(OrchestratorError::Config)?;
        }
        Ok(c)
    }

    /// Creates the workspace if needed.
    fn init(&self) -> anyhow::Result<Workspace> {
        Ok(Workspace::init(&self.workspace, self.build_config()?)?)
    }

    /// Opens an existing workspace; a config file or flags may only repeat
    /// its output settings, or change runtime ones.
    fn open(&self) -> anyhow::Result<Workspace> {
        let ws = Workspace::open(&self.workspace)?;
        let mut overrides = Vec::new();
        if let Some(p) = &self.config {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let file = PipelineConfig::parse_kv(&text).map_err(OrchestratorError::Config)?;
            for key in PipelineConfig::keys() {
                overrides.push((key.to_string(), file.get(key).expect("known key")));
            }
        }
        overrides.extend(self.keys.0.iter().cloned());
        Ok(ws.with_overrides(&overrides)?)
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> anyhow::Result<()> {
    let mut out = io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_file(path: &Path, bytes: &[u8]) -> anyhow::Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn run_stage(ws: &Workspace, until: Stage) -> anyhow::Result<u8> {
    let summary: RunSummary = orchestrator::run(ws, until)?;
    print_json(&summary)?;
    if summary.over_threshold {
        eprintln!(
            "{} of {} programs failed ({:.1}%), above max_failure_fraction {}",
            summary.stats.failed,
            summary.stats.programs,
            100.0 * summary.stats.failure_fraction,
            ws.config().max_failure_fraction
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(0)
}

fn cmd_eval(a: &EvalArgs) -> anyhow::Result<u8> {
    let report = if let (Some(p), Some(t)) = (&a.predictions, &a.truth) {
        let pred = eval::read_labels(p)?;
        let truth = eval::read_labels(t)?;
        let truth_by_id: std::collections::HashMap<_, _> = truth.iter().cloned().collect();
        if pred.len() != truth.len() {
            return Err(EvalError::LengthMismatch {
                predictions: pred.len(),
                truth: truth.len(),
            }
            .into());
        }
        let mut ps = Vec::with_capacity(pred.len());
        let mut ts = Vec::with_capacity(pred.len());
        for (id, label) in &pred {
            let Some(t) = truth_by_id.get(id) else { bail!("no ground truth for {id}") };
            ps.push(label.as_str());
            ts.push(t.as_str());
        }
        serde_json::json!({ "error_rate": eval::error_rate(&ps, &ts)?, "n": ps.len() })
    } else {
        let path = a.embeddings.as_ref().expect("clap requires embeddings");
        let table = EmbeddingTable::read(path)?;
        let report = eval::map_at_r(&table, a.similarity)?;
        if let Some(csv) = &a.csv {
            let mut buf = Vec::new();
            eval::write_breakdown_csv(&eval::per_problem_breakdown(&report), &mut buf)?;
            write_file(csv, &buf)?;
        }
        if let Some(series) = &a.series {
            write_file(series, &serde_json::to_vec_pretty(&eval::breakdown_series(&report))?)?;
        }
        serde_json::to_value(&report)?
    };
    match &a.out {
        Some(p) => write_file(p, &serde_json::to_vec_pretty(&report)?)?,
        None => print_json(&report)?,
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Ingest { ws, corpus } => {
            let ws = ws.init()?;
            print_json(&orchestrator::ingest(&ws, corpus)?)?;
            Ok(0)
        }
        Command::Repair(a) => run_stage(&a.ws.open()?, Stage::Repaired),
        Command::Build(a) => run_stage(&a.ws.open()?, Stage::Built),
        Command::Fuzz(a) => run_stage(&a.ws.open()?, Stage::Fuzzed),
        Command::Harvest(a) => run_stage(&a.ws.open()?, Stage::Harvested),
        Command::Emit(a) => run_stage(&a.ws.open()?, Stage::Emitted),
        Command::Subsample { ws, ratio, unit } => {
            let ws = ws.open()?;
            print_json(&orchestrator::subsample(&ws, *ratio, *unit)?)?;
            Ok(0)
        }
        Command::Pipeline { ws, corpus, ratio, unit } => {
            let ws = match corpus {
                Some(root) => {
                    let w = ws.init()?;
                    orchestrator::ingest(&w, root)?;
                    w
                }
                None => ws.open()?,
            };
            if let Some(r) = ratio {
                orchestrator::subsample(&ws, *r, *unit)?;
            }
            run_stage(&ws, Stage::Emitted)
        }
        Command::Eval(a) => cmd_eval(a),
    }
}

fn exit_code_for(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<OrchestratorError>() {
        Some(o) if o.is_environment() => EXIT_ENVIRONMENT,
        Some(OrchestratorError::Io(_)) => EXIT_ENVIRONMENT,
        _ => EXIT_USAGE,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(level)))
        .with_writer(io::stderr)
        .init();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
