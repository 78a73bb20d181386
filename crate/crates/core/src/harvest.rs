//! Replaying queue inputs on the plain build and turning the resulting
//! input/output byte pairs into text.

use std::fmt;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::fuzzer::FuzzReport;
use crate::target::{ExecError, ExecResult, ExecStatus, Target};

pub const DEFAULT_MAX_PAIRS: usize = 5;
pub const DEFAULT_MAX_PAIR_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    RawBytes,
    #[default]
    Utf8,
}

impl fmt::Display for DecodeMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DecodeMode::RawBytes => "raw_bytes",
            DecodeMode::Utf8 => "utf8",
        })
    }
}

impl FromStr for DecodeMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_bytes" | "bytes" | "raw" => Ok(DecodeMode::RawBytes),
            "utf8" | "utf-8" => Ok(DecodeMode::Utf8),
            other => Err(format!("unknown decode mode {other:?}")),
        }
    }
}

/// Bytes to text.
///
/// `Utf8`: lossy UTF-8 (invalid sequences become U+FFFD), control
/// characters other than `\n` and `\t` removed (`\r` included), runs of three
/// or more newlines cut to two. `RawBytes`: every byte written as `\xNN`.
pub fn decode(bytes: &[u8], mode: DecodeMode) -> String {
    match mode {
        DecodeMode::RawBytes => {
            let mut s = String::with_capacity(bytes.len() * 4);
            for b in bytes {
                s.push_str(&format!("\\x{b:02x}"));
            }
            s
        }
        DecodeMode::Utf8 => {
            let lossy = String::from_utf8_lossy(bytes);
            let mut out = String::with_capacity(lossy.len());
            let mut newlines = 0;
            for c in lossy.chars() {
                if c == '\n' {
                    newlines += 1;
                    if newlines <= 2 {
                        out.push(c);
                    }
                    continue;
                }
                if c.is_control() && c != '\t' {
                    continue;
                }
                newlines = 0;
                out.push(c);
            }
            out
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCasePair {
    pub input_bytes: Vec<u8>,
    pub output_bytes: Vec<u8>,
    pub input_text: String,
    pub output_text: String,
    pub status: ExecStatus,
    pub decode_mode: DecodeMode,
}

impl TestCasePair {
    pub fn new(input_bytes: Vec<u8>, output_bytes: Vec<u8>, decode_mode: DecodeMode) -> Self {
        TestCasePair {
            input_text: decode(&input_bytes, decode_mode),
            output_text: decode(&output_bytes, decode_mode),
            input_bytes,
            output_bytes,
            status: ExecStatus::Ok,
            decode_mode,
        }
    }

    pub fn redecode(&self, mode: DecodeMode) -> Self {
        TestCasePair::new(self.input_bytes.clone(), self.output_bytes.clone(), mode)
    }

    pub fn text_chars(&self) -> usize {
        self.input_text.chars().count() + self.output_text.chars().count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HarvestLimits {
    pub max_pairs: usize,
    /// Limit on input plus output text length, in characters.
    pub max_pair_chars: usize,
    pub decode_mode: DecodeMode,
}

impl Default for HarvestLimits {
    fn default() -> Self {
        HarvestLimits {
            max_pairs: DEFAULT_MAX_PAIRS,
            max_pair_chars: DEFAULT_MAX_PAIR_CHARS,
            decode_mode: DecodeMode::Utf8,
        }
    }
}

/// Runs one input; the plain build is expected.
pub fn replay(target: &mut dyn Target, input: &[u8]) -> Result<ExecResult, ExecError> {
    target.execute(input)
}

/// First `max_pairs` usable pairs from `inputs`, in order. Inputs that
/// crash, hang, overflow the output cap, fail to run, appear in `exclude`,
/// or decode to more than `max_pair_chars` are skipped.
pub fn harvest_inputs<'a>(
    target: &mut dyn Target,
    inputs: impl IntoIterator<Item = &'a [u8]>,
    exclude: &[Vec<u8>],
    limits: &HarvestLimits,
) -> Vec<TestCasePair> {
    let mut pairs = Vec::new();
    for input in inputs {
        if pairs.len() >= limits.max_pairs {
            break;
        }
        if exclude.iter().any(|e| e.as_slice() == input) {
            continue;
        }
        let res = match replay(target, input) {
            Ok(r) => r,
            Err(e) => {
                warn!(program = target.program_id(), error = %e, "replay failed, pair skipped");
                continue;
            }
        };
        if res.status != ExecStatus::Ok || res.stdout_truncated {
            continue;
        }
        let pair = TestCasePair::new(input.to_vec(), res.stdout, limits.decode_mode);
        if pair.text_chars() > limits.max_pair_chars {
            continue;
        }
        pairs.push(pair);
    }
    pairs
}

/// Harvests a finished campaign: queue order, crash and hang inputs excluded.
pub fn harvest_program(target: &mut dyn Target, report: &FuzzReport, limits: &HarvestLimits) -> Vec<TestCasePair> {
    let exclude: Vec<Vec<u8>> = report.crashes.iter().chain(&report.hangs).cloned().collect();
    harvest_inputs(target, report.queue.iter().map(|e| e.input.as_slice()), &exclude, limits)
}

/// One line of `testcases.jsonl`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCaseRecord {
    pub program_id: String,
    pub input_text: String,
    pub output_text: String,
    pub input_b64: String,
    pub output_b64: String,
    pub decode_mode: DecodeMode,
}

impl TestCaseRecord {
    pub fn from_pair(program_id: &str, pair: &TestCasePair) -> Self {
        TestCaseRecord {
            program_id: program_id.to_string(),
            input_text: pair.input_text.clone(),
            output_text: pair.output_text.clone(),
            input_b64: B64.encode(&pair.input_bytes),
            output_b64: B64.encode(&pair.output_bytes),
            decode_mode: pair.decode_mode,
        }
    }

    pub fn to_pair(&self) -> io::Result<TestCasePair> {
        let bad = |e: base64::DecodeError| io::Error::new(io::ErrorKind::InvalidData, e);
        Ok(TestCasePair {
            input_bytes: B64.decode(&self.input_b64).map_err(bad)?,
            output_bytes: B64.decode(&self.output_b64).map_err(bad)?,
            input_text: self.input_text.clone(),
            output_text: self.output_text.clone(),
            status: ExecStatus::Ok,
            decode_mode: self.decode_mode,
        })
    }
}

pub fn write_testcases(path: &Path, program_id: &str, pairs: &[TestCasePair]) -> io::Result<()> {
    let mut buf = Vec::new();
    for p in pairs {
        serde_json::to_writer(&mut buf, &TestCaseRecord::from_pair(program_id, p))?;
        buf.push(b'\n');
    }
    let tmp = path.with_extension("jsonl.tmp");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

pub fn read_testcases(path: &Path) -> io::Result<Vec<TestCasePair>> {
    let f = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: TestCaseRecord = serde_json::from_str(&line)?;
        out.push(rec.to_pair()?);
    }
    Ok(out)
}
