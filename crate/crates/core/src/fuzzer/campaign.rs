use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::coverage::{Accumulator, CoverageMap, Signature};
use super::mutate::{self, Stage};
use crate::target::{ExecError, ExecStatus, Target, TargetKind};

/// Used when a campaign is started without seeds.
pub const DEFAULT_SEED: &[u8] = b"\n";
pub const DEFAULT_BUDGET_MINUTES: f64 = 5.0;
pub const DEFAULT_EXHAUST_AFTER: u64 = 50_000;
pub const DEFAULT_MAX_INPUT_LEN: usize = 1024;
/// Upper bound on stored crash and hang inputs, each.
pub const MAX_SAVED_FAULTS: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuzzConfig {
    /// Wall-clock budget K, in minutes.
    pub budget_minutes: f64,
    pub per_exec_timeout_ms: u64,
    pub max_input_len: usize,
    pub rng_seed: u64,
    pub havoc_iterations_per_entry: u32,
    pub splice_iterations_per_entry: u32,
    /// Consecutive havoc/splice executions without new behavior after which
    /// a campaign whose deterministic stages are all done counts as
    /// exhausted. None: run until the budget.
    pub exhaust_after: Option<u64>,
    pub max_execs: Option<u64>,
    /// Extra runs of each new input to detect unstable coverage.
    pub calibration_runs: u32,
    /// False gives the coverage-blind ablation: only seeds are queued and
    /// nothing but crashes counts as interesting.
    pub coverage_guided: bool,
}

impl Default for FuzzConfig {
    fn default() -> Self {
        FuzzConfig {
            budget_minutes: DEFAULT_BUDGET_MINUTES,
            per_exec_timeout_ms: crate::target::DEFAULT_TIMEOUT_MS,
            max_input_len: DEFAULT_MAX_INPUT_LEN,
            rng_seed: 0,
            havoc_iterations_per_entry: 256,
            splice_iterations_per_entry: 32,
            exhaust_after: Some(DEFAULT_EXHAUST_AFTER),
            max_execs: None,
            calibration_runs: 3,
            coverage_guided: true,
        }
    }
}

impl FuzzConfig {
    pub fn validate(&self) -> Result<(), FuzzError> {
        if !(self.budget_minutes > 0.0) || !self.budget_minutes.is_finite() {
            return Err(FuzzError::InvalidConfig(format!("budget_minutes must be positive, got {}", self.budget_minutes)));
        }
        if self.max_input_len == 0 {
            return Err(FuzzError::InvalidConfig("max_input_len must be at least 1".into()));
        }
        if self.per_exec_timeout_ms == 0 {
            return Err(FuzzError::InvalidConfig("per_exec_timeout_ms must be positive".into()));
        }
        Ok(())
    }

    pub fn budget_ms(&self) -> u64 {
        (self.budget_minutes * 60_000.0).round() as u64
    }
}

#[derive(Debug, Error)]
pub enum FuzzError {
    #[error("invalid fuzz config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: u32,
    #[serde(skip)]
    pub input: Vec<u8>,
    pub signature: Signature,
    pub exec_time_ms: u64,
    pub parent: Option<u32>,
    pub stage_found: Stage,
    /// Calibration saw the signature change between runs.
    pub unstable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Exhausted,
    Timeout,
    /// Stopped at `max_execs`.
    ExecLimit,
    /// The target failed to execute; the report is partial.
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuzzStats {
    pub execs_total: u64,
    /// Distinct edges over all queue signatures.
    pub edges_covered: usize,
    /// Distinct edges seen by any execution, queued or not.
    pub edges_observed: usize,
    pub wall_time_ms: u64,
    pub termination: Termination,
    pub abort_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuzzReport {
    pub program_id: String,
    pub queue: Vec<QueueEntry>,
    pub crashes: Vec<Vec<u8>>,
    pub hangs: Vec<Vec<u8>>,
    pub stats: FuzzStats,
}

impl FuzzReport {
    pub fn aborted(&self) -> bool {
        self.stats.termination == Termination::Aborted
    }
}

/// Time source for the budget.
pub trait Clock {
    fn elapsed_ms(&self) -> u64;

    /// Called after every execution with the time the target reported.
    fn on_exec(&mut self, _exec_time_ms: u64) {}
}

pub struct SystemClock {
    start: Instant,
}

impl SystemClock {
    pub fn new() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn elapsed_ms(&self) -> u64 {
        self.start.elapsed().as_millis() as u64
    }
}

/// Advances by the reported execution time plus a fixed tick per
/// execution; makes budget behavior reproducible.
pub struct VirtualClock {
    now_ms: u64,
    tick_ms: u64,
}

impl VirtualClock {
    pub fn new(tick_ms: u64) -> Self {
        VirtualClock { now_ms: 0, tick_ms }
    }
}

impl Clock for VirtualClock {
    fn elapsed_ms(&self) -> u64 {
        self.now_ms
    }

    fn on_exec(&mut self, exec_time_ms: u64) {
        self.now_ms += exec_time_ms + self.tick_ms;
    }
}

/// Clock used by [`fuzz_program`]: virtual for scripted targets, real otherwise.
pub fn default_clock(kind: TargetKind) -> Box<dyn Clock> {
    match kind {
        TargetKind::Scripted => Box::new(VirtualClock::new(1)),
        _ => Box::new(SystemClock::new()),
    }
}

/// View of a running campaign, handed to observers after every execution.
pub struct Snapshot<'a> {
    pub execs: u64,
    pub accumulator: &'a Accumulator,
    pub queue: &'a [QueueEntry],
    pub elapsed_ms: u64,
}

pub struct Campaign<'a> {
    target: &'a mut dyn Target,
    config: FuzzConfig,
    clock: Box<dyn Clock>,
    rng: ChaCha8Rng,
    max_len: usize,
    acc: Accumulator,
    observed: Accumulator,
    crash_acc: Accumulator,
    hang_acc: Accumulator,
    queue: Vec<QueueEntry>,
    det_done: Vec<bool>,
    det_pending: usize,
    crashes: Vec<Vec<u8>>,
    hangs: Vec<Vec<u8>>,
    execs: u64,
    streak: u64,
    observer: Option<Box<dyn FnMut(&Snapshot<'_>) + 'a>>,
}

enum Outcome {
    Done,
    Stop(Termination),
}

impl<'a> Campaign<'a> {
    pub fn new(target: &'a mut dyn Target, config: FuzzConfig) -> Result<Self, FuzzError> {
        config.validate()?;
        let clock = default_clock(target.kind());
        let max_len = config.max_input_len.min(target.limits().max_input_len).max(1);
        Ok(Campaign {
            rng: ChaCha8Rng::seed_from_u64(config.rng_seed),
            target,
            config,
            clock,
            max_len,
            acc: Accumulator::new(),
            observed: Accumulator::new(),
            crash_acc: Accumulator::new(),
            hang_acc: Accumulator::new(),
            queue: Vec::new(),
            det_done: Vec::new(),
            det_pending: 0,
            crashes: Vec::new(),
            hangs: Vec::new(),
            execs: 0,
            streak: 0,
            observer: None,
        })
    }

    pub fn with_clock(mut self, clock: Box<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_observer(mut self, f: impl FnMut(&Snapshot<'_>) + 'a) -> Self {
        self.observer = Some(Box::new(f));
        self
    }

    pub fn run(mut self, seeds: &[Vec<u8>]) -> FuzzReport {
        let (termination, abort_reason) = match self.run_inner(seeds) {
            Ok(t) => (t, None),
            Err(e) => (Termination::Aborted, Some(e.to_string())),
        };
        let mut covered = Accumulator::new();
        for e in &self.queue {
            covered.merge(&e.signature);
        }
        FuzzReport {
            program_id: self.target.program_id().to_string(),
            stats: FuzzStats {
                execs_total: self.execs,
                edges_covered: covered.edge_count(),
                edges_observed: self.observed.edge_count(),
                wall_time_ms: self.clock.elapsed_ms(),
                termination,
                abort_reason,
            },
            queue: self.queue,
            crashes: self.crashes,
            hangs: self.hangs,
        }
    }

    fn run_inner(&mut self, seeds: &[Vec<u8>]) -> Result<Termination, ExecError> {
        let default = [DEFAULT_SEED.to_vec()];
        let seeds = if seeds.is_empty() { &default[..] } else { seeds };

        let mut fallback: Option<(Vec<u8>, CoverageMap, u64)> = None;
        for seed in seeds {
            if let Some(t) = self.stop_reason() {
                return Ok(t);
            }
            let mut input = seed.clone();
            input.truncate(self.max_len);
            let res = self.exec(&input)?;
            if res.status == ExecStatus::Ok {
                let queued = if self.config.coverage_guided {
                    self.consider(&input, &res.coverage, res.exec_time_ms, None, Stage::Seed)?
                } else {
                    self.enqueue_seed(&input, &res.coverage, res.exec_time_ms)
                };
                if !queued && fallback.is_none() {
                    fallback = Some((input, res.coverage, res.exec_time_ms));
                }
            }
        }
        if self.queue.is_empty() {
            // nothing looked new (e.g. no coverage at all): keep one runnable seed
            match fallback {
                Some((input, cov, t)) => {
                    self.enqueue_seed(&input, &cov, t);
                }
                None => return Ok(Termination::Exhausted),
            }
        }

        loop {
            let execs_before = self.execs;
            let mut idx = 0;
            while idx < self.queue.len() {
                if let Outcome::Stop(t) = self.fuzz_entry(idx)? {
                    return Ok(t);
                }
                idx += 1;
            }
            if self.execs == execs_before {
                return Ok(Termination::Exhausted);
            }
        }
    }

    fn fuzz_entry(&mut self, idx: usize) -> Result<Outcome, ExecError> {
        let parent = self.queue[idx].id;
        if !self.det_done[idx] {
            if let Outcome::Stop(t) = self.trim(idx)? {
                return Ok(Outcome::Stop(t));
            }
            let input = self.queue[idx].input.clone();
            for stage in Stage::DETERMINISTIC {
                for variant in mutate::deterministic(&input, stage) {
                    if let Outcome::Stop(t) = self.step(variant, parent, stage)? {
                        return Ok(Outcome::Stop(t));
                    }
                }
            }
            self.det_done[idx] = true;
            self.det_pending -= 1;
        }
        for _ in 0..self.config.havoc_iterations_per_entry {
            let m = mutate::havoc(&self.queue[idx].input, &mut self.rng, self.max_len);
            if let Outcome::Stop(t) = self.step(m, parent, Stage::Havoc)? {
                return Ok(Outcome::Stop(t));
            }
        }
        if self.queue.len() >= 2 {
            for _ in 0..self.config.splice_iterations_per_entry {
                let mut other = self.rng.gen_range(0..self.queue.len() - 1);
                if other >= idx {
                    other += 1;
                }
                let m = mutate::splice(&self.queue[idx].input, &self.queue[other].input, &mut self.rng, self.max_len);
                if let Outcome::Stop(t) = self.step(m, parent, Stage::Splice)? {
                    return Ok(Outcome::Stop(t));
                }
            }
        }
        // exhaustion can become true once this entry's deterministic stages finish
        Ok(match self.stop_reason() {
            Some(t) => Outcome::Stop(t),
            None => Outcome::Done,
        })
    }

    /// Drops chunks of a stable entry's input while its signature stays
    /// the same, halving the chunk size from len/16 down to 4 bytes.
    fn trim(&mut self, idx: usize) -> Result<Outcome, ExecError> {
        const MIN_CHUNK: usize = 4;
        if !self.config.coverage_guided || self.queue[idx].unstable || self.queue[idx].input.len() <= MIN_CHUNK {
            return Ok(Outcome::Done);
        }
        let mut input = self.queue[idx].input.clone();
        let mut chunk = (input.len().next_power_of_two() / 16).max(MIN_CHUNK);
        let floor = (input.len().next_power_of_two() / 1024).max(MIN_CHUNK);
        let mut out = Outcome::Done;
        'outer: while chunk >= floor && input.len() > MIN_CHUNK {
            let mut pos = 0;
            while pos < input.len() && input.len() > chunk {
                if let Some(t) = self.stop_reason() {
                    out = Outcome::Stop(t);
                    break 'outer;
                }
                let end = (pos + chunk).min(input.len());
                let mut cand = input[..pos].to_vec();
                cand.extend_from_slice(&input[end..]);
                let res = self.exec(&cand)?;
                if res.status == ExecStatus::Ok && res.coverage.signature() == self.queue[idx].signature {
                    input = cand;
                } else {
                    pos += chunk;
                }
            }
            chunk /= 2;
        }
        if input.len() < self.queue[idx].input.len() {
            self.queue[idx].input = input;
            self.notify();
        }
        Ok(out)
    }

    fn stop_reason(&self) -> Option<Termination> {
        if self.clock.elapsed_ms() >= self.config.budget_ms() {
            return Some(Termination::Timeout);
        }
        if self.config.max_execs.is_some_and(|m| self.execs >= m) {
            return Some(Termination::ExecLimit);
        }
        if let Some(n) = self.config.exhaust_after {
            if !self.queue.is_empty() && self.det_pending == 0 && self.streak >= n {
                return Some(Termination::Exhausted);
            }
        }
        None
    }

    /// Runs one mutant and files the result.
    fn step(&mut self, input: Vec<u8>, parent: u32, stage: Stage) -> Result<Outcome, ExecError> {
        if let Some(t) = self.stop_reason() {
            return Ok(Outcome::Stop(t));
        }
        let res = self.exec(&input)?;
        let new = match res.status {
            ExecStatus::Ok if self.config.coverage_guided => {
                self.consider(&input, &res.coverage, res.exec_time_ms, Some(parent), stage)?
            }
            _ => false,
        };
        if new {
            self.streak = 0;
        } else if matches!(stage, Stage::Havoc | Stage::Splice) {
            self.streak += 1;
        }
        Ok(Outcome::Done)
    }

    fn exec(&mut self, input: &[u8]) -> Result<crate::target::ExecResult, ExecError> {
        let res = self.target.execute(input)?;
        self.execs += 1;
        self.clock.on_exec(res.exec_time_ms);
        if self.observed.has_new_map(&res.coverage) {
            self.observed.merge(&res.coverage.signature());
        }
        match res.status {
            ExecStatus::Crash => {
                if self.crashes.len() < MAX_SAVED_FAULTS && (self.crashes.is_empty() || self.crash_acc.has_new_map(&res.coverage)) {
                    self.crash_acc.merge(&res.coverage.signature());
                    self.crashes.push(input.to_vec());
                }
            }
            ExecStatus::Hang => {
                if self.hangs.len() < MAX_SAVED_FAULTS && (self.hangs.is_empty() || self.hang_acc.has_new_map(&res.coverage)) {
                    self.hang_acc.merge(&res.coverage.signature());
                    self.hangs.push(input.to_vec());
                }
            }
            ExecStatus::Ok => {}
        }
        self.notify();
        Ok(res)
    }

    fn notify(&mut self) {
        if let Some(obs) = self.observer.as_mut() {
            obs(&Snapshot {
                execs: self.execs,
                accumulator: &self.acc,
                queue: &self.queue,
                elapsed_ms: self.clock.elapsed_ms(),
            });
        }
    }

    /// Calibrates an input whose first run showed new coverage and queues
    /// it if its stable signature is still new.
    fn consider(&mut self, input: &[u8], cov: &CoverageMap, exec_time_ms: u64, parent: Option<u32>, stage: Stage) -> Result<bool, ExecError> {
        if !self.acc.has_new_map(cov) {
            return Ok(false);
        }
        let mut sig = cov.signature();
        let mut unstable = false;
        for _ in 0..self.config.calibration_runs {
            if self.stop_reason().is_some_and(|t| t != Termination::Exhausted) {
                break;
            }
            let again = self.exec(input)?;
            let s = if again.status == ExecStatus::Ok {
                again.coverage.signature()
            } else {
                Signature::default()
            };
            if s != sig {
                unstable = true;
                sig = sig.intersect(&s);
            }
        }
        if !self.acc.has_new(&sig) {
            return Ok(false);
        }
        self.acc.merge(&sig);
        self.push(input, sig, exec_time_ms, parent, stage, unstable);
        Ok(true)
    }

    fn enqueue_seed(&mut self, input: &[u8], cov: &CoverageMap, exec_time_ms: u64) -> bool {
        let sig = cov.signature();
        if self.queue.iter().any(|e| e.signature == sig) {
            return false;
        }
        self.acc.merge(&sig);
        self.push(input, sig, exec_time_ms, None, Stage::Seed, false);
        true
    }

    fn push(&mut self, input: &[u8], signature: Signature, exec_time_ms: u64, parent: Option<u32>, stage: Stage, unstable: bool) {
        self.queue.push(QueueEntry {
            id: self.queue.len() as u32,
            input: input.to_vec(),
            signature,
            exec_time_ms,
            parent,
            stage_found: stage,
            unstable,
        });
        self.det_done.push(false);
        self.det_pending += 1;
        self.notify();
    }
}

/// Runs one campaign to completion. An empty seed list means
/// [`DEFAULT_SEED`]. Scripted targets run on a virtual clock.
pub fn fuzz_program(target: &mut dyn Target, seeds: &[Vec<u8>], config: &FuzzConfig) -> Result<FuzzReport, FuzzError> {
    Ok(Campaign::new(target, config.clone())?.run(seeds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::{ScriptOutcome, ScriptedTarget, Tracer};

    fn echo() -> ScriptedTarget {
        ScriptedTarget::new("echo", |input: &[u8], t: &mut Tracer| {
            t.hit(1);
            t.print(input);
            ScriptOutcome::Exit
        })
    }

    fn quick() -> FuzzConfig {
        FuzzConfig {
            exhaust_after: Some(500),
            ..FuzzConfig::default()
        }
    }

    #[test]
    fn branchless_target_exhausts_with_one_entry() {
        let mut t = echo();
        let r = fuzz_program(&mut t, &[b"hi".to_vec()], &quick()).unwrap();
        assert_eq!(r.queue.len(), 1);
        assert_eq!(r.stats.termination, Termination::Exhausted);
        assert_eq!(r.queue[0].stage_found, Stage::Seed);
        assert_eq!(r.queue[0].parent, None);
        assert_eq!(r.stats.edges_covered, 1);
    }

    #[test]
    fn crashes_are_never_queued() {
        let mut t = ScriptedTarget::new("crashy", |input: &[u8], t: &mut Tracer| {
            t.hit(1);
            if input.first() == Some(&b'X') {
                t.hit(2);
                return ScriptOutcome::Crash;
            }
            ScriptOutcome::Exit
        });
        let r = fuzz_program(&mut t, &[b"A".to_vec()], &quick()).unwrap();
        assert!(!r.crashes.is_empty());
        for c in &r.crashes {
            assert!(r.queue.iter().all(|e| &e.input != c));
        }
    }

    #[test]
    fn virtual_budget_is_respected() {
        let mut t = echo();
        let cfg = FuzzConfig {
            budget_minutes: 0.01,
            exhaust_after: None,
            ..FuzzConfig::default()
        };
        let r = fuzz_program(&mut t, &[], &cfg).unwrap();
        assert_eq!(r.stats.termination, Termination::Timeout);
        assert!(r.stats.wall_time_ms <= cfg.budget_ms() + cfg.per_exec_timeout_ms);
        assert_eq!(r.queue[0].input, DEFAULT_SEED);
    }

    #[test]
    fn exec_limit_stops() {
        let mut t = echo();
        let cfg = FuzzConfig {
            max_execs: Some(10),
            ..FuzzConfig::default()
        };
        let r = fuzz_program(&mut t, &[], &cfg).unwrap();
        assert_eq!(r.stats.execs_total, 10);
        assert_eq!(r.stats.termination, Termination::ExecLimit);
    }

    #[test]
    fn unstable_coverage_is_intersected() {
        use std::sync::atomic::{AtomicU32, Ordering};
        let n = AtomicU32::new(0);
        let mut t = ScriptedTarget::new("flaky", move |_: &[u8], t: &mut Tracer| {
            t.hit(1);
            if n.fetch_add(1, Ordering::Relaxed) % 2 == 0 {
                t.hit(2);
            }
            ScriptOutcome::Exit
        });
        let cfg = FuzzConfig {
            max_execs: Some(50),
            ..FuzzConfig::default()
        };
        let r = fuzz_program(&mut t, &[b"a".to_vec()], &cfg).unwrap();
        assert_eq!(r.queue[0].signature, Signature(vec![(1, 0)]));
        assert!(r.queue[0].unstable);
    }

    #[test]
    fn invalid_config_rejected() {
        let mut t = echo();
        let cfg = FuzzConfig {
            budget_minutes: 0.0,
            ..FuzzConfig::default()
        };
        assert!(fuzz_program(&mut t, &[], &cfg).is_err());
        let cfg = FuzzConfig {
            max_input_len: 0,
            ..FuzzConfig::default()
        };
        assert!(fuzz_program(&mut t, &[], &cfg).is_err());
    }
}
