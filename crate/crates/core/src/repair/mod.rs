//! Compile–diagnose–fix loop that removes build errors which do not change
//! what a program computes (missing includes, `void main`, a forgotten
//! struct semicolon, ...), so the program can be built and fuzzed.
//!
//! Only C/C++ has an adapter. Java and Python go through the same
//! [`LanguageAdapter`] interface but [`adapter_for`] reports them as
//! unsupported.

pub mod diagnostics;
pub mod fixes;
pub mod lex;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Language, Program};
use crate::toolchain::{Toolchain, ToolchainError};

pub use diagnostics::{Diagnostic, DiagnosticKind, Location};
pub use fixes::FixOptions;

pub const DEFAULT_MAX_ROUNDS: u32 = 10;

#[derive(Debug, Error)]
pub enum RepairError {
    #[error(transparent)]
    Environment(#[from] ToolchainError),
    #[error("no repair adapter for {0} programs")]
    UnsupportedLanguage(Language),
    #[error("scratch directory: {0}")]
    Scratch(#[from] std::io::Error),
    #[error("max_rounds must be at least 1")]
    ZeroRounds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairStatus {
    Compiles,
    Unfixable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairAction {
    pub kind: DiagnosticKind,
    pub location: Option<Location>,
    pub description: String,
}

/// Repair report for one program; serialized as `repair.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairedProgram {
    pub program_id: String,
    pub language: Language,
    pub final_source: String,
    pub actions: Vec<RepairAction>,
    pub status: RepairStatus,
    pub rounds_used: u32,
    /// Diagnostics of the last failing compile, empty when status is `compiles`.
    #[serde(default)]
    pub remaining: Vec<Diagnostic>,
}

pub trait LanguageAdapter: Send + Sync {
    fn language(&self) -> Language;

    /// Compiles `source` inside `scratch`; empty result means success.
    fn diagnose(&self, source: &str, scratch: &Path) -> Result<Vec<Diagnostic>, RepairError>;

    fn apply_fix(&self, source: &str, diag: &Diagnostic) -> String;
}

#[derive(Debug, Clone, Default)]
pub struct CppAdapter {
    pub toolchain: Toolchain,
    pub fix_options: FixOptions,
}

impl CppAdapter {
    pub fn new(toolchain: Toolchain, fix_options: FixOptions) -> Self {
        CppAdapter { toolchain, fix_options }
    }
}

const SCRATCH_SOURCE: &str = "prog.cpp";

impl LanguageAdapter for CppAdapter {
    fn language(&self) -> Language {
        Language::Cpp
    }

    fn diagnose(&self, source: &str, scratch: &Path) -> Result<Vec<Diagnostic>, RepairError> {
        let src_path = scratch.join(SCRATCH_SOURCE);
        fs::write(&src_path, source)?;
        let out = self.toolchain.compile(&src_path, &scratch.join("prog.out"), &[], &[])?;
        if out.status.success() {
            return Ok(Vec::new());
        }
        let stderr = String::from_utf8_lossy(&out.stderr);
        let mut diags = diagnostics::parse_compiler_output(source, SCRATCH_SOURCE, &stderr);
        if diags.is_empty() {
            diags.push(Diagnostic {
                kind: DiagnosticKind::Other,
                location: None,
                symbol: None,
                raw_message: stderr.trim().to_string(),
            });
        }
        Ok(diags)
    }

    fn apply_fix(&self, source: &str, diag: &Diagnostic) -> String {
        fixes::apply_fix(source, diag, &self.fix_options)
    }
}

pub fn adapter_for(language: Language, toolchain: &Toolchain, fix_options: FixOptions) -> Result<Box<dyn LanguageAdapter>, RepairError> {
    match language {
        Language::Cpp => Ok(Box::new(CppAdapter::new(toolchain.clone(), fix_options))),
        other => Err(RepairError::UnsupportedLanguage(other)),
    }
}

/// One compile of `source`, classified.
pub fn diagnose(source: &str, language: Language, toolchain: &Toolchain) -> Result<Vec<Diagnostic>, RepairError> {
    let adapter = adapter_for(language, toolchain, FixOptions::default())?;
    let scratch = tempfile::Builder::new().prefix("fuzztune-diag").tempdir()?;
    adapter.diagnose(source, scratch.path())
}

pub use fixes::apply_fix;

fn describe(diag: &Diagnostic) -> String {
    match (&diag.kind, &diag.symbol) {
        (DiagnosticKind::MissingHeader, Some(s)) => format!("prepended common headers for `{s}`"),
        (DiagnosticKind::MissingReturn, _) => "made main return int with a final `return 0;`".into(),
        (DiagnosticKind::ReservedKeywordMisuse, Some(s)) => format!("renamed `{s}` to `fixed_{s}`"),
        (DiagnosticKind::StructMissingSemicolon, _) => "inserted missing `;` in struct definition".into(),
        (DiagnosticKind::UndeclaredIdentifier, Some(s)) => format!("defined missing constant `{s}`"),
        (kind, _) => format!("{kind}: {}", diag.raw_message),
    }
}

// Recorded when the loop gives up, so that `actions` is empty only for
// programs that compiled as given.
fn terminal_action(first: &Diagnostic, why: &str) -> RepairAction {
    RepairAction {
        kind: DiagnosticKind::Other,
        location: first.location,
        description: format!("{why}: {}", first.raw_message),
    }
}

/// Runs diagnose→fix until the program compiles, no classified diagnostic
/// is left, a fix changes nothing, or `max_rounds` compiles were spent.
/// Each call uses its own scratch directory.
pub fn repair_loop(program: &Program, adapter: &dyn LanguageAdapter, max_rounds: u32) -> Result<RepairedProgram, RepairError> {
    if max_rounds == 0 {
        return Err(RepairError::ZeroRounds);
    }
    if adapter.language() != program.language {
        return Err(RepairError::UnsupportedLanguage(program.language));
    }
    let scratch = tempfile::Builder::new().prefix("fuzztune-repair").tempdir()?;
    let mut source = program.source.clone();
    let mut actions = Vec::new();
    let mut rounds = 0;
    let mut remaining = Vec::new();

    let status = loop {
        rounds += 1;
        let diags = adapter.diagnose(&source, scratch.path())?;
        if diags.is_empty() {
            remaining.clear();
            break RepairStatus::Compiles;
        }
        remaining = diags;
        if rounds >= max_rounds {
            actions.push(terminal_action(&remaining[0], "round limit reached"));
            break RepairStatus::Unfixable;
        }
        let Some(diag) = remaining.iter().find(|d| d.kind.is_classified()) else {
            actions.push(terminal_action(&remaining[0], "no repairable diagnostic"));
            break RepairStatus::Unfixable;
        };
        let fixed = adapter.apply_fix(&source, diag);
        if fixed == source {
            actions.push(RepairAction {
                kind: diag.kind,
                location: diag.location,
                description: format!("no-op: fix site not found ({})", diag.raw_message),
            });
            break RepairStatus::Unfixable;
        }
        actions.push(RepairAction {
            kind: diag.kind,
            location: diag.location,
            description: describe(diag),
        });
        source = fixed;
    };
    tracing::debug!(program = %program.id, ?status, rounds, "repair finished");
    Ok(RepairedProgram {
        program_id: program.id.clone(),
        language: program.language,
        final_source: source,
        actions,
        status,
        rounds_used: rounds,
        remaining,
    })
}
