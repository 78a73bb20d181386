//! Stage driver over a persisted [`Workspace`].
//!
//! Programs move through ingested → repaired → built → fuzzed → harvested →
//! emitted. Each transition writes its artifacts, then the program's state
//! file; an interrupted transition is simply redone. A program whose repair,
//! build or campaign fails is still carried to `emitted` (with zero pairs) so
//! every selected program appears in the dataset, and the failure is kept in
//! its state for the statistics.

pub mod config;
pub mod workspace;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};

use crate::corpus::{self, CorpusError, Fraction, SplitManifest, SplitUnit, SubsampleEcho};
use crate::fuzzer::{self, store, Termination};
use crate::harvest::{self, TestCasePair};
use crate::prompt::{self, AugmentedRecord};
use crate::repair::{self, RepairError, RepairStatus, RepairedProgram};
use crate::target::{self, BuildError, CompiledBackend};
use crate::toolchain::ToolchainError;

pub use config::{ConfigError, Layout, PipelineConfig};
pub use workspace::{FuzzSummary, Manifest, ProgramMeta, ProgramState, Workspace};

use workspace::{read_json, write_atomic, write_json, DATASET_FILE, STATS_FILE};

const FULL_SPLITS_FILE: &str = "splits.full.json";
const UNSPLIT_TAG: &str = "unsplit";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingested,
    Repaired,
    Built,
    Fuzzed,
    Harvested,
    Emitted,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Ingested,
        Stage::Repaired,
        Stage::Built,
        Stage::Fuzzed,
        Stage::Harvested,
        Stage::Emitted,
    ];

    pub fn next(self) -> Option<Stage> {
        Stage::ALL.get(self as usize + 1).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingested => "ingested",
            Stage::Repaired => "repaired",
            Stage::Built => "built",
            Stage::Fuzzed => "fuzzed",
            Stage::Harvested => "harvested",
            Stage::Emitted => "emitted",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error(transparent)]
    Config(ConfigError),
    #[error("{0} is not a workspace (no config.kv); run ingest first")]
    NotAWorkspace(PathBuf),
    #[error("workspace has no manifest; run ingest first")]
    NotIngested,
    #[error("workspace was created with a different configuration ({0}); use a new workspace")]
    SnapshotMismatch(String),
    #[error("workspace has no splits to subsample")]
    NoSplits,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("environment: {0}")]
    Environment(String),
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

impl OrchestratorError {
    pub fn is_environment(&self) -> bool {
        matches!(self, OrchestratorError::Environment(_))
    }

    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            OrchestratorError::Config(_)
                | OrchestratorError::NotAWorkspace(_)
                | OrchestratorError::NotIngested
                | OrchestratorError::SnapshotMismatch(_)
                | OrchestratorError::NoSplits
        )
    }
}

impl From<ToolchainError> for OrchestratorError {
    fn from(e: ToolchainError) -> Self {
        OrchestratorError::Environment(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub programs: usize,
    pub problems: usize,
    pub warnings: usize,
    pub split: Option<[usize; 3]>,
}

/// Reads the corpus into the workspace and splits it (once). Re-running
/// on the same corpus changes nothing.
pub fn ingest(ws: &Workspace, corpus_root: &Path) -> Result<IngestSummary, OrchestratorError> {
    let corpus = match ws.config().layout {
        Layout::Poj104 => corpus::ingest_poj104(corpus_root)?,
        Layout::CodeNet(s) => corpus::ingest_codenet(corpus_root, s)?,
    };
    ws.store_corpus(&corpus, corpus_root)?;
    let existing = ws.splits()?;
    let splits = match existing {
        Some(m) => Some(m),
        None => {
            let spec = ws.config().split_spec();
            match corpus::split(&corpus, &spec) {
                Ok(splits) => {
                    let m = SplitManifest {
                        seed: spec.seed,
                        spec,
                        subsample: None,
                        splits,
                    };
                    ws.save_splits(&m)?;
                    Some(m)
                }
                Err(e) => {
                    warn!(error = %e, "corpus not split; records will be tagged {UNSPLIT_TAG}");
                    None
                }
            }
        }
    };
    info!(programs = corpus.len(), warnings = corpus.warnings.len(), "ingested");
    Ok(IngestSummary {
        programs: corpus.len(),
        problems: corpus.problems().len(),
        warnings: corpus.warnings.len(),
        split: splits.map(|m| [m.splits.train.len(), m.splits.val.len(), m.splits.test.len()]),
    })
}

/// Replaces the working splits by a subsample of the full ones.
pub fn subsample(ws: &Workspace, ratio: Fraction, unit: SplitUnit) -> Result<SplitManifest, OrchestratorError> {
    let full_path = ws.path(FULL_SPLITS_FILE);
    let full: SplitManifest = if full_path.exists() {
        read_json(&full_path)?
    } else {
        let m = ws.splits()?.ok_or(OrchestratorError::NoSplits)?;
        write_json(&full_path, &m)?;
        m
    };
    let corpus = ws.corpus()?;
    let seed = ws.config().seed;
    let splits = corpus::subsample(&corpus, &full.splits, ratio, unit, seed)?;
    let m = SplitManifest {
        spec: full.spec.clone(),
        seed: full.seed,
        subsample: Some(SubsampleEcho { ratio, unit, seed }),
        splits,
    };
    ws.save_splits(&m)?;
    Ok(m)
}

/// Programs the pipeline works on: those in the current splits, or all.
pub fn selected_programs(ws: &Workspace) -> Result<(Vec<ProgramMeta>, HashMap<String, String>), OrchestratorError> {
    let manifest = ws.manifest()?;
    match ws.splits()? {
        None => {
            let tags = manifest.programs.iter().map(|p| (p.id.clone(), UNSPLIT_TAG.to_string())).collect();
            Ok((manifest.programs, tags))
        }
        Some(m) => {
            let tags: HashMap<String, String> = m.splits.tags().into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
            let programs = manifest.programs.into_iter().filter(|p| tags.contains_key(&p.id)).collect();
            Ok((programs, tags))
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Campaign seed of one program, derived from the workspace seed.
pub fn program_seed(workspace_seed: u64, program_id: &str) -> u64 {
    splitmix64(workspace_seed ^ workspace::fnv1a(program_id.as_bytes()))
}

struct StageContext<'a> {
    ws: &'a Workspace,
    tags: &'a HashMap<String, String>,
    instrumented: CompiledBackend,
    plain: CompiledBackend,
}

fn env_error_repair(e: RepairError) -> Result<String, OrchestratorError> {
    match e {
        RepairError::Environment(t) => Err(t.into()),
        other => Ok(other.to_string()),
    }
}

fn env_error_build(e: BuildError) -> Result<String, OrchestratorError> {
    match e {
        BuildError::Environment(t) => Err(t.into()),
        other => Ok(other.to_string()),
    }
}

impl StageContext<'_> {
    fn fail(st: &mut ProgramState, stage: Stage, reason: String) {
        if st.failure.is_none() {
            st.failure = Some(workspace::Failure { stage, reason });
        }
    }

    fn advance(&self, meta: &ProgramMeta, until: Stage) -> Result<(), OrchestratorError> {
        let ws = self.ws;
        let id = meta.id.as_str();
        let dir = ws.program_dir(id);
        let cfg = ws.config();
        let mut st = ws.state(id)?;
        while st.stage < until {
            let next = st.stage.next().expect("below the last stage");
            match next {
                Stage::Ingested => unreachable!(),
                Stage::Repaired => {
                    let program = ws.load_program(meta)?;
                    let outcome = repair::adapter_for(program.language, &cfg.toolchain(), cfg.fix_options())
                        .and_then(|a| repair::repair_loop(&program, a.as_ref(), cfg.max_rounds));
                    match outcome {
                        Ok(r) => {
                            write_json(&dir.join("repair.json"), &r)?;
                            st.compiles = Some(r.status == RepairStatus::Compiles);
                            if r.status != RepairStatus::Compiles {
                                let why = r.actions.last().map_or(String::new(), |a| a.description.clone());
                                Self::fail(&mut st, Stage::Repaired, format!("unfixable: {why}"));
                            }
                        }
                        Err(e) => {
                            st.compiles = Some(false);
                            Self::fail(&mut st, Stage::Repaired, env_error_repair(e)?);
                        }
                    }
                }
                Stage::Built => {
                    if st.failure.is_none() {
                        let r: RepairedProgram = read_json(&dir.join("repair.json"))?;
                        let build_dir = dir.join("build");
                        let built = target::build(&r, &self.instrumented, &build_dir)
                            .and_then(|_| target::build(&r, &self.plain, &build_dir));
                        if let Err(e) = built {
                            Self::fail(&mut st, Stage::Built, env_error_build(e)?);
                        }
                    }
                }
                Stage::Fuzzed => {
                    if st.failure.is_none() {
                        match self.instrumented.open(id, &dir.join("build")) {
                            Ok(mut t) => {
                                let fc = cfg.fuzz_config(program_seed(cfg.seed, id));
                                let report = fuzzer::fuzz_program(&mut t, &[], &fc)
                                    .map_err(|e| OrchestratorError::Config(ConfigError::BadValue {
                                        key: "fuzz".into(),
                                        msg: e.to_string(),
                                    }))?;
                                store::save(&report, &dir.join("fuzz"))?;
                                st.fuzz = Some(FuzzSummary {
                                    queue_len: report.queue.len(),
                                    crashes: report.crashes.len(),
                                    hangs: report.hangs.len(),
                                    execs_total: report.stats.execs_total,
                                    edges_covered: report.stats.edges_covered,
                                    wall_time_ms: report.stats.wall_time_ms,
                                    termination: report.stats.termination,
                                });
                                if let Some(reason) = report.stats.abort_reason {
                                    Self::fail(&mut st, Stage::Fuzzed, reason);
                                }
                            }
                            Err(e) => Self::fail(&mut st, Stage::Fuzzed, e.to_string()),
                        }
                    }
                }
                Stage::Harvested => {
                    let fuzz_dir = dir.join("fuzz");
                    let mut pairs = Vec::new();
                    if fuzz_dir.join("stats.json").is_file() {
                        let report = store::load(&fuzz_dir)?;
                        match self.plain.open(id, &dir.join("build")) {
                            Ok(mut t) => pairs = harvest::harvest_program(&mut t, &report, &cfg.harvest_limits()),
                            Err(e) => Self::fail(&mut st, Stage::Harvested, e.to_string()),
                        }
                    }
                    harvest::write_testcases(&dir.join("testcases.jsonl"), id, &pairs)?;
                    st.pairs = Some(pairs.len());
                }
                Stage::Emitted => {
                    let program = ws.load_program(meta)?;
                    let tc = dir.join("testcases.jsonl");
                    let pairs: Vec<TestCasePair> = if tc.exists() { harvest::read_testcases(&tc)? } else { Vec::new() };
                    let tag = self.tags.get(id).map_or(UNSPLIT_TAG, String::as_str);
                    let record = prompt::build_record(
                        id,
                        &meta.problem_id,
                        &program.source,
                        &pairs,
                        &cfg.template_for(meta.language),
                        &cfg.budget(),
                        tag,
                    );
                    write_json(&dir.join("record.json"), &record)?;
                }
            }
            st.stage = next;
            ws.save_state(id, &st)?;
            info!(program = id, stage = %next, failed = st.failure.is_some(), "stage done");
        }
        Ok(())
    }
}

fn check_compiler(cxx: &str) -> Result<(), OrchestratorError> {
    match Command::new(cxx).arg("--version").output() {
        Ok(o) if o.status.success() => Ok(()),
        Ok(o) => Err(OrchestratorError::Environment(format!(
            "{cxx} --version failed: {}",
            String::from_utf8_lossy(&o.stderr).trim()
        ))),
        Err(e) => Err(OrchestratorError::Environment(format!("compiler {cxx:?} not runnable: {e}"))),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineStats {
    pub programs: usize,
    pub repaired: usize,
    pub compiled: usize,
    /// compiled / programs, in percent.
    pub compiled_pct: f64,
    pub built: usize,
    /// Campaigns that ended by exhaustion, timeout or exec limit.
    pub fuzzed: usize,
    /// fuzzed / compiled, in percent.
    pub fuzzed_pct: f64,
    pub mean_queue_size: f64,
    pub harvested: usize,
    pub pairs_total: usize,
    /// Mean pairs over harvested programs.
    pub pairs_per_program: f64,
    /// Fuzzed programs with at least one pair.
    pub fuzzed_with_pairs: usize,
    pub emitted: usize,
    pub failed: usize,
    pub failure_fraction: f64,
    pub failures_by_stage: BTreeMap<String, usize>,
    pub terminations: BTreeMap<String, usize>,
}

fn pct(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        100.0 * a as f64 / b as f64
    }
}

pub fn compute_stats(ws: &Workspace, programs: &[ProgramMeta]) -> Result<PipelineStats, OrchestratorError> {
    let mut s = PipelineStats {
        programs: programs.len(),
        ..PipelineStats::default()
    };
    let mut queue_total = 0usize;
    for meta in programs {
        let st = ws.state(&meta.id)?;
        if st.stage >= Stage::Repaired {
            s.repaired += 1;
        }
        if st.compiles == Some(true) {
            s.compiled += 1;
        }
        if st.stage >= Stage::Built && st.failure.as_ref().is_none_or(|f| f.stage > Stage::Built) {
            s.built += 1;
        }
        if let Some(f) = &st.fuzz {
            *s.terminations.entry(format!("{:?}", f.termination).to_lowercase()).or_default() += 1;
            if f.termination != Termination::Aborted {
                s.fuzzed += 1;
                queue_total += f.queue_len;
                if st.pairs.unwrap_or(0) > 0 {
                    s.fuzzed_with_pairs += 1;
                }
            }
        }
        if let Some(p) = st.pairs {
            s.harvested += 1;
            s.pairs_total += p;
        }
        if st.stage >= Stage::Emitted {
            s.emitted += 1;
        }
        if let Some(f) = &st.failure {
            s.failed += 1;
            *s.failures_by_stage.entry(f.stage.to_string()).or_default() += 1;
        }
    }
    s.compiled_pct = pct(s.compiled, s.programs);
    s.fuzzed_pct = pct(s.fuzzed, s.compiled);
    s.mean_queue_size = if s.fuzzed == 0 { 0.0 } else { queue_total as f64 / s.fuzzed as f64 };
    s.pairs_per_program = if s.harvested == 0 { 0.0 } else { s.pairs_total as f64 / s.harvested as f64 };
    s.failure_fraction = if s.programs == 0 { 0.0 } else { s.failed as f64 / s.programs as f64 };
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub until: Stage,
    pub stats: PipelineStats,
    /// failure_fraction above the configured maximum.
    pub over_threshold: bool,
}

/// Advances every selected program to `until` on a worker pool, then
/// writes stats (and the dataset when `until` is `Emitted`). Per-program
/// failures are recorded and never stop the batch; a missing compiler does.
pub fn run(ws: &Workspace, until: Stage) -> Result<RunSummary, OrchestratorError> {
    let cfg = ws.config();
    let (programs, tags) = selected_programs(ws)?;
    if until >= Stage::Repaired {
        check_compiler(&cfg.cxx)?;
    }
    let ctx = StageContext {
        ws,
        tags: &tags,
        instrumented: CompiledBackend::instrumented(cfg.toolchain(), cfg.exec_limits()),
        plain: CompiledBackend::plain(cfg.toolchain(), cfg.exec_limits()),
    };
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let fatal: Mutex<Option<OrchestratorError>> = Mutex::new(None);
    let workers = cfg.worker_count().min(programs.len()).max(1);
    info!(programs = programs.len(), workers, until = %until, "running");
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if stop.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(meta) = programs.get(i) else { break };
                if let Err(e) = ctx.advance(meta, until) {
                    if e.is_environment() {
                        stop.store(true, Ordering::Relaxed);
                        fatal.lock().expect("fatal slot").get_or_insert(e);
                        break;
                    }
                    warn!(program = %meta.id, error = %e, "program failed");
                    if let Ok(mut st) = ws.state(&meta.id) {
                        let at = st.stage.next().unwrap_or(Stage::Emitted);
                        StageContext::fail(&mut st, at, e.to_string());
                        let _ = ws.save_state(&meta.id, &st);
                    }
                }
            });
        }
    });
    if let Some(e) = fatal.into_inner().expect("fatal slot") {
        return Err(e);
    }
    if until == Stage::Emitted {
        write_dataset(ws, &programs)?;
    }
    let stats = compute_stats(ws, &programs)?;
    write_json(&ws.path(STATS_FILE), &stats)?;
    Ok(RunSummary {
        until,
        over_threshold: stats.failure_fraction > cfg.max_failure_fraction,
        stats,
    })
}

/// Concatenates the per-program records, in manifest order.
pub fn write_dataset(ws: &Workspace, programs: &[ProgramMeta]) -> Result<usize, OrchestratorError> {
    let mut records = Vec::new();
    for meta in programs {
        let p = ws.program_dir(&meta.id).join("record.json");
        if p.is_file() {
            records.push(read_json::<AugmentedRecord>(&p)?);
        }
    }
    let mut buf = Vec::new();
    prompt::write_jsonl(&mut buf, &records)?;
    write_atomic(&ws.path(DATASET_FILE), &buf)?;
    Ok(records.len())
}

pub fn read_dataset(path: &Path) -> Result<Vec<AugmentedRecord>, OrchestratorError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| OrchestratorError::Io(e.into())))
        .collect()
}
