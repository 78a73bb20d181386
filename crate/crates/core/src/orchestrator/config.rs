//! Flat `key=value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Every key has a
//! default; unknown keys are errors.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{CodeNetSubset, Fractions, SplitSpec, SplitUnit, Task};
use crate::fuzzer::FuzzConfig;
use crate::harvest::{DecodeMode, HarvestLimits};
use crate::prompt::{Budget, PromptTemplate, TemplateChoice, TemplateKind, DEFAULT_SEP};
use crate::repair::fixes::FixOptions;
use crate::target::ExecLimits;
use crate::toolchain::Toolchain;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("line {line}: expected key=value")]
    Syntax { line: usize },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {msg}")]
    BadValue { key: String, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layout {
    Poj104,
    CodeNet(CodeNetSubset),
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Layout::Poj104 => f.write_str("poj104"),
            Layout::CodeNet(s) => write!(f, "codenet:{s}"),
        }
    }
}

impl FromStr for Layout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "poj104" {
            return Ok(Layout::Poj104);
        }
        match s.strip_prefix("codenet:") {
            Some(sub) => sub.parse().map(Layout::CodeNet),
            None => Err(format!("unknown layout {s:?} (expected poj104 or codenet:<subset>)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub seed: u64,
    pub layout: Layout,
    pub task: Task,
    /// None: 64/16/24 for clone detection, 60/20/20 (POJ104) or 50/25/25
    /// (CodeNet) for classification.
    pub split: Option<Fractions>,

    pub cxx: String,
    pub cc: String,
    pub cxx_flags: String,
    pub max_rounds: u32,
    pub undeclared_const_value: i64,

    pub budget_minutes: f64,
    pub per_exec_timeout_ms: u64,
    pub max_input_len: usize,
    pub havoc_iterations: u32,
    pub splice_iterations: u32,
    /// 0 disables the exhaustion stop.
    pub exhaust_after: u64,
    /// 0 means unlimited.
    pub max_execs: u64,
    pub calibration_runs: u32,
    pub coverage_guided: bool,
    pub memory_limit_mb: u64,
    pub stdout_cap: usize,

    pub max_pairs: usize,
    pub max_pair_chars: usize,
    pub decode_mode: DecodeMode,

    pub template: TemplateChoice,
    pub sep_token: String,
    pub max_total_units: usize,
    pub code_fraction: f64,

    /// 0 means one per available CPU.
    pub workers: usize,
    pub max_failure_fraction: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let fuzz = FuzzConfig::default();
        let harvest = HarvestLimits::default();
        let budget = Budget::default();
        let tc = Toolchain::default();
        PipelineConfig {
            seed: 0,
            layout: Layout::Poj104,
            task: Task::CloneDetection,
            split: None,
            cxx: tc.cxx,
            cc: tc.cc,
            cxx_flags: tc.flags.join(" "),
            max_rounds: crate::repair::DEFAULT_MAX_ROUNDS,
            undeclared_const_value: FixOptions::default().undeclared_const_value,
            budget_minutes: fuzz.budget_minutes,
            per_exec_timeout_ms: fuzz.per_exec_timeout_ms,
            max_input_len: fuzz.max_input_len,
            havoc_iterations: fuzz.havoc_iterations_per_entry,
            splice_iterations: fuzz.splice_iterations_per_entry,
            exhaust_after: fuzz.exhaust_after.unwrap_or(0),
            max_execs: fuzz.max_execs.unwrap_or(0),
            calibration_runs: fuzz.calibration_runs,
            coverage_guided: fuzz.coverage_guided,
            memory_limit_mb: crate::target::DEFAULT_MEMORY_LIMIT >> 20,
            stdout_cap: crate::target::DEFAULT_STDOUT_CAP,
            max_pairs: harvest.max_pairs,
            max_pair_chars: harvest.max_pair_chars,
            decode_mode: harvest.decode_mode,
            template: TemplateChoice::PlAuto,
            sep_token: DEFAULT_SEP.to_string(),
            max_total_units: budget.max_total_units,
            code_fraction: budget.code_fraction,
            workers: 0,
            max_failure_fraction: 0.1,
        }
    }
}

/// Keys that only change how a run is executed, not what it produces;
/// they may differ from the workspace snapshot.
pub const RUNTIME_KEYS: [&str; 2] = ["workers", "max_failure_fraction"];

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        msg: e.to_string(),
    })
}

impl PipelineConfig {
    pub const KEYS: [&'static str; 29] = [
        "seed",
        "layout",
        "task",
        "split",
        "cxx",
        "cc",
        "cxx_flags",
        "max_rounds",
        "undeclared_const_value",
        "budget_minutes",
        "per_exec_timeout_ms",
        "max_input_len",
        "havoc_iterations",
        "splice_iterations",
        "exhaust_after",
        "max_execs",
        "calibration_runs",
        "coverage_guided",
        "memory_limit_mb",
        "stdout_cap",
        "max_pairs",
        "max_pair_chars",
        "decode_mode",
        "template",
        "sep_token",
        "max_total_units",
        "code_fraction",
        "workers",
        "max_failure_fraction",
    ];

    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "layout" => self.layout.to_string(),
            "task" => match self.task {
                Task::CloneDetection => "clone_detection".into(),
                Task::Classification => "classification".into(),
            },
            "split" => match &self.split {
                None => "default".into(),
                Some(f) => format!("{},{},{}", f.train, f.val, f.test),
            },
            "cxx" => self.cxx.clone(),
            "cc" => self.cc.clone(),
            "cxx_flags" => self.cxx_flags.clone(),
            "max_rounds" => self.max_rounds.to_string(),
            "undeclared_const_value" => self.undeclared_const_value.to_string(),
            "budget_minutes" => self.budget_minutes.to_string(),
            "per_exec_timeout_ms" => self.per_exec_timeout_ms.to_string(),
            "max_input_len" => self.max_input_len.to_string(),
            "havoc_iterations" => self.havoc_iterations.to_string(),
            "splice_iterations" => self.splice_iterations.to_string(),
            "exhaust_after" => self.exhaust_after.to_string(),
            "max_execs" => self.max_execs.to_string(),
            "calibration_runs" => self.calibration_runs.to_string(),
            "coverage_guided" => self.coverage_guided.to_string(),
            "memory_limit_mb" => self.memory_limit_mb.to_string(),
            "stdout_cap" => self.stdout_cap.to_string(),
            "max_pairs" => self.max_pairs.to_string(),
            "max_pair_chars" => self.max_pair_chars.to_string(),
            "decode_mode" => self.decode_mode.to_string(),
            "template" => self.template.to_string(),
            "sep_token" => self.sep_token.clone(),
            "max_total_units" => self.max_total_units.to_string(),
            "code_fraction" => self.code_fraction.to_string(),
            "workers" => self.workers.to_string(),
            "max_failure_fraction" => self.max_failure_fraction.to_string(),
            _ => return None,
        })
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<(), ConfigError> {
        let v = v.trim();
        match key {
            "seed" => self.seed = parse(key, v)?,
            "layout" => self.layout = parse(key, v)?,
            "task" => self.task = parse(key, v)?,
            "split" => {
                self.split = if v == "default" {
                    None
                } else {
                    let f: Fractions = parse(key, v)?;
                    f.validate().map_err(|e| ConfigError::BadValue {
                        key: key.into(),
                        msg: e.to_string(),
                    })?;
                    Some(f)
                }
            }
            "cxx" => self.cxx = v.to_string(),
            "cc" => self.cc = v.to_string(),
            "cxx_flags" => self.cxx_flags = v.to_string(),
            "max_rounds" => self.max_rounds = parse(key, v)?,
            "undeclared_const_value" => self.undeclared_const_value = parse(key, v)?,
            "budget_minutes" => self.budget_minutes = parse(key, v)?,
            "per_exec_timeout_ms" => self.per_exec_timeout_ms = parse(key, v)?,
            "max_input_len" => self.max_input_len = parse(key, v)?,
            "havoc_iterations" => self.havoc_iterations = parse(key, v)?,
            "splice_iterations" => self.splice_iterations = parse(key, v)?,
            "exhaust_after" => self.exhaust_after = parse(key, v)?,
            "max_execs" => self.max_execs = parse(key, v)?,
            "calibration_runs" => self.calibration_runs = parse(key, v)?,
            "coverage_guided" => self.coverage_guided = parse(key, v)?,
            "memory_limit_mb" => self.memory_limit_mb = parse(key, v)?,
            "stdout_cap" => self.stdout_cap = parse(key, v)?,
            "max_pairs" => self.max_pairs = parse(key, v)?,
            "max_pair_chars" => self.max_pair_chars = parse(key, v)?,
            "decode_mode" => self.decode_mode = parse(key, v)?,
            "template" => self.template = parse(key, v)?,
            // kept verbatim (leading/trailing spaces are significant here)
            "sep_token" => self.sep_token = v.to_string(),
            "max_total_units" => self.max_total_units = parse(key, v)?,
            "code_fraction" => self.code_fraction = parse(key, v)?,
            "workers" => self.workers = parse(key, v)?,
            "max_failure_fraction" => self.max_failure_fraction = parse(key, v)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn keys() -> impl Iterator<Item = &'static str> {
        Self::KEYS.into_iter()
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, msg: String| ConfigError::BadValue { key: key.into(), msg };
        self.fuzz_config(0)
            .validate()
            .map_err(|e| bad("budget_minutes/max_input_len/per_exec_timeout_ms", e.to_string()))?;
        self.budget().validate().map_err(|m| bad("code_fraction", m))?;
        self.split_spec().validate().map_err(|e| bad("split", e.to_string()))?;
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(bad("max_failure_fraction", "must be in [0, 1]".into()));
        }
        if self.max_rounds == 0 {
            return Err(bad("max_rounds", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parse_kv(text: &str) -> Result<Self, ConfigError> {
        let mut c = PipelineConfig::default();
        c.apply_kv(text)?;
        Ok(c)
    }

    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let l = line.trim_start();
            if l.is_empty() || l.starts_with('#') {
                continue;
            }
            let (k, v) = l.split_once('=').ok_or(ConfigError::Syntax { line: i + 1 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for k in Self::keys() {
            s.push_str(k);
            s.push('=');
            s.push_str(&self.get(k).expect("known key"));
            s.push('\n');
        }
        s
    }

    /// Keys whose values differ, runtime-only keys excluded.
    pub fn output_differences(&self, other: &PipelineConfig) -> Vec<&'static str> {
        Self::keys()
            .filter(|k| !RUNTIME_KEYS.contains(k))
            .filter(|k| self.get(k) != other.get(k))
            .collect()
    }

    pub fn split_spec(&self) -> SplitSpec {
        let default = match (self.task, self.layout) {
            (Task::CloneDetection, _) => (64, 16, 24),
            (Task::Classification, Layout::Poj104) => (60, 20, 20),
            (Task::Classification, Layout::CodeNet(_)) => (50, 25, 25),
        };
        let fractions = self
            .split
            .unwrap_or_else(|| Fractions::from_weights(default.0, default.1, default.2).expect("nonzero weights"));
        SplitSpec {
            task: self.task,
            unit: match self.task {
                Task::CloneDetection => SplitUnit::Problems,
                Task::Classification => SplitUnit::Programs,
            },
            fractions,
            seed: self.seed,
        }
    }

    pub fn toolchain(&self) -> Toolchain {
        Toolchain {
            cxx: self.cxx.clone(),
            cc: self.cc.clone(),
            flags: self.cxx_flags.split_whitespace().map(str::to_owned).collect(),
        }
    }

    pub fn fix_options(&self) -> FixOptions {
        FixOptions {
            undeclared_const_value: self.undeclared_const_value,
        }
    }

    pub fn exec_limits(&self) -> ExecLimits {
        ExecLimits {
            timeout_ms: self.per_exec_timeout_ms,
            memory_limit: self.memory_limit_mb << 20,
            stdout_cap: self.stdout_cap,
            max_input_len: self.max_input_len.max(1),
        }
    }

    pub fn fuzz_config(&self, rng_seed: u64) -> FuzzConfig {
        FuzzConfig {
            budget_minutes: self.budget_minutes,
            per_exec_timeout_ms: self.per_exec_timeout_ms,
            max_input_len: self.max_input_len,
            rng_seed,
            havoc_iterations_per_entry: self.havoc_iterations,
            splice_iterations_per_entry: self.splice_iterations,
            exhaust_after: (self.exhaust_after > 0).then_some(self.exhaust_after),
            max_execs: (self.max_execs > 0).then_some(self.max_execs),
            calibration_runs: self.calibration_runs,
            coverage_guided: self.coverage_guided,
        }
    }

    pub fn harvest_limits(&self) -> HarvestLimits {
        HarvestLimits {
            max_pairs: self.max_pairs,
            max_pair_chars: self.max_pair_chars,
            decode_mode: self.decode_mode,
        }
    }

    pub fn template_for(&self, language: crate::corpus::Language) -> PromptTemplate {
        let kind: TemplateKind = self.template.resolve(language);
        PromptTemplate {
            kind,
            sep_token: self.sep_token.clone(),
        }
    }

    pub fn budget(&self) -> Budget {
        Budget {
            max_total_units: self.max_total_units,
            code_fraction: self.code_fraction,
        }
    }

    pub fn worker_count(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}
