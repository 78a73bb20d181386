//! Workspace directory:
//!
//! ```text
//! config.kv                  configuration snapshot, written once
//! manifest.json              ingested programs
//! splits.json                split manifest (possibly subsampled)
//! programs/<key>/source.<ext>
//!               /state.json  stage reached, failure, summaries
//!               /repair.json
//!               /build/      instrumented and plain executables
//!               /fuzz/       campaign store
//!               /testcases.jsonl
//!               /record.json
//! dataset.jsonl
//! stats.json
//! ```
//!
//! Every file is written to a temporary name and renamed into place.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::config::{ConfigError, PipelineConfig};
use super::{OrchestratorError, Stage};
use crate::corpus::{Corpus, IngestWarning, Language, Program, SplitManifest};
use crate::fuzzer::Termination;

pub const CONFIG_FILE: &str = "config.kv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SPLITS_FILE: &str = "splits.json";
pub const DATASET_FILE: &str = "dataset.jsonl";
pub const STATS_FILE: &str = "stats.json";

pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    io::Write::write_all(&mut tmp, bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> io::Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Directory name for a program id: readable, filesystem-safe, collision-free.
pub fn program_key(id: &str) -> String {
    let readable: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{readable}-{:08x}", fnv1a(id.as_bytes()) as u32)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramMeta {
    pub id: String,
    pub problem_id: String,
    pub language: Language,
    /// Path the program was ingested from.
    pub origin: PathBuf,
    pub byte_len: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub corpus_root: PathBuf,
    pub layout: String,
    pub programs: Vec<ProgramMeta>,
    pub warnings: Vec<IngestWarning>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: Stage,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzSummary {
    pub queue_len: usize,
    pub crashes: usize,
    pub hangs: usize,
    pub execs_total: u64,
    pub edges_covered: usize,
    pub wall_time_ms: u64,
    pub termination: Termination,
}

/// Per-program progress, rewritten after every stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramState {
    pub stage: Stage,
    /// Set once a stage fails; later stages then only carry the program
    /// through with zero pairs.
    pub failure: Option<Failure>,
    pub compiles: Option<bool>,
    pub fuzz: Option<FuzzSummary>,
    pub pairs: Option<usize>,
}

impl ProgramState {
    pub fn new() -> Self {
        ProgramState {
            stage: Stage::Ingested,
            failure: None,
            compiles: None,
            fuzz: None,
            pairs: None,
        }
    }
}

impl Default for ProgramState {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone)]
pub struct Workspace {
    root: PathBuf,
    config: PipelineConfig,
}

impl Workspace {
    /// Creates the workspace or reopens one whose snapshot produces the same
    /// outputs as `config`.
    pub fn init(root: &Path, config: PipelineConfig) -> Result<Self, OrchestratorError> {
        config.validate()?;
        let path = root.join(CONFIG_FILE);
        if path.exists() {
            let ws = Workspace::open(root)?;
            let diff = ws.config.output_differences(&config);
            if !diff.is_empty() {
                return Err(OrchestratorError::SnapshotMismatch(diff.join(", ")));
            }
            return Ok(Workspace { root: ws.root, config });
        }
        fs::create_dir_all(root)?;
        write_atomic(&path, config.to_kv().as_bytes())?;
        Ok(Workspace {
            root: root.to_path_buf(),
            config,
        })
    }

    pub fn open(root: &Path) -> Result<Self, OrchestratorError> {
        let path = root.join(CONFIG_FILE);
        let text = fs::read_to_string(&path).map_err(|_| OrchestratorError::NotAWorkspace(root.to_path_buf()))?;
        let config = PipelineConfig::parse_kv(&text)?;
        Ok(Workspace {
            root: root.to_path_buf(),
            config,
        })
    }

    /// Applies overrides; only runtime keys may change.
    pub fn with_overrides(mut self, overrides: &[(String, String)]) -> Result<Self, OrchestratorError> {
        let mut c = self.config.clone();
        for (k, v) in overrides {
            c.set(k, v)?;
        }
        let diff = self.config.output_differences(&c);
        if !diff.is_empty() {
            return Err(OrchestratorError::SnapshotMismatch(diff.join(", ")));
        }
        c.validate().map_err(OrchestratorError::Config)?;
        self.config = c;
        Ok(self)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn program_dir(&self, id: &str) -> PathBuf {
        self.root.join("programs").join(program_key(id))
    }

    pub fn source_path(&self, meta: &ProgramMeta) -> PathBuf {
        let ext = match meta.language {
            Language::Cpp => "cpp",
            Language::Java => "java",
            Language::Python => "py",
        };
        self.program_dir(&meta.id).join(format!("source.{ext}"))
    }

    pub fn has_manifest(&self) -> bool {
        self.path(MANIFEST_FILE).is_file()
    }

    pub fn manifest(&self) -> Result<Manifest, OrchestratorError> {
        read_json(&self.path(MANIFEST_FILE)).map_err(|_| OrchestratorError::NotIngested)
    }

    /// Copies the sources in and writes the manifest. Program states
    /// already present are kept.
    pub fn store_corpus(&self, corpus: &Corpus, corpus_root: &Path) -> Result<Manifest, OrchestratorError> {
        let mut programs = Vec::with_capacity(corpus.len());
        for p in &corpus.programs {
            let meta = ProgramMeta {
                id: p.id.clone(),
                problem_id: p.problem_id.clone(),
                language: p.language,
                origin: p.source_path.clone(),
                byte_len: p.byte_len,
            };
            let src = self.source_path(&meta);
            if fs::read(&src).ok().as_deref() != Some(p.source.as_bytes()) {
                write_atomic(&src, p.source.as_bytes())?;
            }
            if !self.state_path(&p.id).exists() {
                self.save_state(&p.id, &ProgramState::new())?;
            }
            programs.push(meta);
        }
        let manifest = Manifest {
            corpus_root: corpus_root.to_path_buf(),
            layout: self.config.layout.to_string(),
            programs,
            warnings: corpus.warnings.clone(),
        };
        write_json(&self.path(MANIFEST_FILE), &manifest)?;
        Ok(manifest)
    }

    pub fn load_program(&self, meta: &ProgramMeta) -> Result<Program, OrchestratorError> {
        let source = fs::read_to_string(self.source_path(meta))?;
        Ok(Program {
            id: meta.id.clone(),
            problem_id: meta.problem_id.clone(),
            language: meta.language,
            source_path: meta.origin.clone(),
            byte_len: source.len(),
            source,
        })
    }

    /// The corpus as stored in the workspace.
    pub fn corpus(&self) -> Result<Corpus, OrchestratorError> {
        let m = self.manifest()?;
        let programs = m.programs.iter().map(|p| self.load_program(p)).collect::<Result<_, _>>()?;
        Ok(Corpus {
            programs,
            warnings: m.warnings,
        })
    }

    pub fn splits(&self) -> Result<Option<SplitManifest>, OrchestratorError> {
        let p = self.path(SPLITS_FILE);
        if !p.exists() {
            return Ok(None);
        }
        Ok(Some(read_json(&p)?))
    }

    pub fn save_splits(&self, m: &SplitManifest) -> io::Result<()> {
        write_json(&self.path(SPLITS_FILE), m)
    }

    fn state_path(&self, id: &str) -> PathBuf {
        self.program_dir(id).join("state.json")
    }

    pub fn state(&self, id: &str) -> Result<ProgramState, OrchestratorError> {
        let p = self.state_path(id);
        if !p.exists() {
            return Ok(ProgramState::new());
        }
        Ok(read_json(&p)?)
    }

    pub fn save_state(&self, id: &str, s: &ProgramState) -> io::Result<()> {
        write_json(&self.state_path(id), s)
    }
}

impl From<ConfigError> for OrchestratorError {
    fn from(e: ConfigError) -> Self {
        OrchestratorError::Config(e)
    }
}
