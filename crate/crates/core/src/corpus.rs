//! Corpus ingestion, train/validation/test splitting and subsampling.
//!
//! Two on-disk layouts are understood:
//!
//! - POJ104 style: `root/<problem>/<program file>`, every file is C/C++
//!   regardless of its extension.
//! - CodeNet style: `root/Project_CodeNet_<Subset>/<problem>/<program file>`
//!   (the bare `<Subset>` directory name is accepted too). Only files whose
//!   extension matches the subset language are taken.
//!
//! Directory and file names are sorted before anything random happens, so a
//! split is a pure function of the corpus contents and the seed.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

pub type Fraction = Ratio<u64>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus root {0} does not exist or is not a directory")]
    MissingRoot(PathBuf),
    #[error("corpus root {0} contains no programs")]
    EmptyRoot(PathBuf),
    #[error("subset directory for {subset} not found under {root}")]
    MissingSubset { subset: CodeNetSubset, root: PathBuf },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid split spec: {0}")]
    InvalidSpec(String),
    #[error("split would leave the {0} partition empty")]
    EmptySplit(&'static str),
    #[error("invalid subsample: {0}")]
    InvalidSubsample(String),
    #[error("unknown program id {0}")]
    UnknownProgram(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Cpp,
    Java,
    Python,
}

impl Language {
    pub fn from_extension(ext: &str) -> Option<Language> {
        match ext.to_ascii_lowercase().as_str() {
            "c" | "cc" | "cpp" | "cxx" | "c++" => Some(Language::Cpp),
            "java" => Some(Language::Java),
            "py" => Some(Language::Python),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Language::Cpp => "cpp",
            Language::Java => "java",
            Language::Python => "python",
        }
    }
}

impl fmt::Display for Language {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Language {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpp" | "c++" | "c" => Ok(Language::Cpp),
            "java" => Ok(Language::Java),
            "python" | "py" => Ok(Language::Python),
            other => Err(format!("unknown language {other:?}")),
        }
    }
}

/// One corpus entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    /// `<problem_id>/<file name>`, unique within a corpus.
    pub id: String,
    pub problem_id: String,
    pub language: Language,
    pub source_path: PathBuf,
    pub source: String,
    pub byte_len: usize,
}

impl Program {
    /// A program not backed by a corpus file; `id` must be `problem/name`.
    pub fn from_source(id: &str, language: Language, source: impl Into<String>) -> Self {
        let source = source.into();
        Program {
            id: id.to_string(),
            problem_id: id.split('/').next().unwrap_or(id).to_string(),
            language,
            source_path: PathBuf::from(id),
            byte_len: source.len(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestWarning {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Corpus {
    pub programs: Vec<Program>,
    pub warnings: Vec<IngestWarning>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.programs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.programs.is_empty()
    }

    /// Distinct problem ids in sorted order.
    pub fn problems(&self) -> Vec<String> {
        let set: BTreeSet<&str> = self.programs.iter().map(|p| p.problem_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Program> {
        self.programs.iter().find(|p| p.id == id)
    }

    fn problem_index(&self) -> HashMap<&str, &str> {
        self.programs
            .iter()
            .map(|p| (p.id.as_str(), p.problem_id.as_str()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeNetSubset {
    Java250,
    Python800,
    Cpp1000,
}

impl CodeNetSubset {
    fn dir_names(self) -> [&'static str; 2] {
        match self {
            CodeNetSubset::Java250 => ["Project_CodeNet_Java250", "Java250"],
            CodeNetSubset::Python800 => ["Project_CodeNet_Python800", "Python800"],
            CodeNetSubset::Cpp1000 => ["Project_CodeNet_C++1000", "C++1000"],
        }
    }

    pub fn language(self) -> Language {
        match self {
            CodeNetSubset::Java250 => Language::Java,
            CodeNetSubset::Python800 => Language::Python,
            CodeNetSubset::Cpp1000 => Language::Cpp,
        }
    }
}

impl fmt::Display for CodeNetSubset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodeNetSubset::Java250 => "java250",
            CodeNetSubset::Python800 => "python800",
            CodeNetSubset::Cpp1000 => "cpp1000",
        })
    }
}

impl FromStr for CodeNetSubset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "java250" => Ok(CodeNetSubset::Java250),
            "python800" => Ok(CodeNetSubset::Python800),
            "cpp1000" | "c++1000" => Ok(CodeNetSubset::Cpp1000),
            other => Err(format!("unknown CodeNet subset {other:?}")),
        }
    }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, CorpusError> {
    let mut entries = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort();
    Ok(entries)
}

/// Walks `root/<problem>/<file>`; `language_of` decides per file whether it
/// belongs to the corpus (None means "skip silently").
fn ingest_problem_dirs(
    root: &Path,
    language_of: impl Fn(&Path) -> Option<Language>,
) -> Result<Corpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_path_buf()));
    }
    let mut corpus = Corpus::default();
    for problem_dir in sorted_entries(root)? {
        if !problem_dir.is_dir() {
            continue;
        }
        let Some(problem_id) = problem_dir.file_name().and_then(|n| n.to_str()).map(str::to_owned) else {
            continue;
        };
        for path in sorted_entries(&problem_dir)? {
            if !path.is_file() {
                continue;
            }
            let Some(language) = language_of(&path) else {
                continue;
            };
            let file_name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let bytes = match fs::read(&path) {
                Ok(b) => b,
                Err(e) => {
                    warn!(path = %path.display(), error = %e, "skipping unreadable program");
                    corpus.warnings.push(IngestWarning {
                        path: path.clone(),
                        reason: format!("unreadable: {e}"),
                    });
                    continue;
                }
            };
            let byte_len = bytes.len();
            let source = match String::from_utf8(bytes) {
                Ok(s) => s,
                Err(e) => {
                    warn!(path = %path.display(), "skipping program that is not valid UTF-8");
                    corpus.warnings.push(IngestWarning {
                        path: path.clone(),
                        reason: format!("not valid UTF-8: {}", e.utf8_error()),
                    });
                    continue;
                }
            };
            corpus.programs.push(Program {
                id: format!("{problem_id}/{file_name}"),
                problem_id: problem_id.clone(),
                language,
                source_path: path,
                source,
                byte_len,
            });
        }
    }
    if corpus.programs.is_empty() {
        return Err(CorpusError::EmptyRoot(root.to_path_buf()));
    }
    tracing::info!(
        programs = corpus.programs.len(),
        problems = corpus.problems().len(),
        skipped = corpus.warnings.len(),
        "ingested corpus"
    );
    Ok(corpus)
}

/// POJ104 layout: one directory per problem, every regular file is a C/C++ program.
pub fn ingest_poj104(root: &Path) -> Result<Corpus, CorpusError> {
    ingest_problem_dirs(root, |_| Some(Language::Cpp))
}

pub fn ingest_codenet(root: &Path, subset: CodeNetSubset) -> Result<Corpus, CorpusError> {
    if !root.is_dir() {
        return Err(CorpusError::MissingRoot(root.to_path_buf()));
    }
    let dir = subset
        .dir_names()
        .iter()
        .map(|name| root.join(name))
        .find(|p| p.is_dir())
        .ok_or_else(|| CorpusError::MissingSubset {
            subset,
            root: root.to_path_buf(),
        })?;
    let want = subset.language();
    ingest_problem_dirs(&dir, |path| {
        let ext = path.extension()?.to_str()?;
        (Language::from_extension(ext) == Some(want)).then_some(want)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    CloneDetection,
    Classification,
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clone_detection" | "clone" => Ok(Task::CloneDetection),
            "classification" | "classify" => Ok(Task::Classification),
            other => Err(format!("unknown task {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitUnit {
    Problems,
    Programs,
}

impl FromStr for SplitUnit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "problems" => Ok(SplitUnit::Problems),
            "programs" => Ok(SplitUnit::Programs),
            other => Err(format!("unknown split unit {other:?}")),
        }
    }
}

/// Train/val/test fractions as exact rationals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fractions {
    #[serde(with = "ratio_str")]
    pub train: Fraction,
    #[serde(with = "ratio_str")]
    pub val: Fraction,
    #[serde(with = "ratio_str")]
    pub test: Fraction,
}

impl Fractions {
    /// Normalizes integer weights, e.g. `(64, 16, 24)` or `(2, 1, 1)`.
    pub fn from_weights(train: u64, val: u64, test: u64) -> Result<Self, CorpusError> {
        let total = train + val + test;
        if total == 0 {
            return Err(CorpusError::InvalidSpec("weights sum to zero".into()));
        }
        Ok(Fractions {
            train: Ratio::new(train, total),
            val: Ratio::new(val, total),
            test: Ratio::new(test, total),
        })
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let zero = Ratio::from_integer(0);
        if self.train <= zero || self.val <= zero || self.test <= zero {
            return Err(CorpusError::InvalidSpec("fractions must be strictly positive".into()));
        }
        if self.train + self.val + self.test != Ratio::from_integer(1) {
            return Err(CorpusError::InvalidSpec(format!(
                "fractions {}+{}+{} do not sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

impl FromStr for Fractions {
    type Err = String;

    /// Accepts `64:16:24` (weights) or `1/2,1/4,1/4` (rationals).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.contains(':') {
            let parts: Vec<u64> = s
                .split(':')
                .map(|p| p.trim().parse::<u64>().map_err(|e| format!("bad weight {p:?}: {e}")))
                .collect::<Result<_, _>>()?;
            let [a, b, c] = parts[..] else {
                return Err(format!("expected three weights in {s:?}"));
            };
            return Fractions::from_weights(a, b, c).map_err(|e| e.to_string());
        }
        let parts: Vec<Fraction> = s
            .split(',')
            .map(|p| parse_ratio(p.trim()))
            .collect::<Result<_, _>>()?;
        let [train, val, test] = parts[..] else {
            return Err(format!("expected three fractions in {s:?}"));
        };
        Ok(Fractions { train, val, test })
    }
}

/// Parses `a/b`, an integer, or a short decimal such as `0.16`.
pub fn parse_ratio(s: &str) -> Result<Fraction, String> {
    if let Some((n, d)) = s.split_once('/') {
        let n: u64 = n.trim().parse().map_err(|e| format!("bad numerator in {s:?}: {e}"))?;
        let d: u64 = d.trim().parse().map_err(|e| format!("bad denominator in {s:?}: {e}"))?;
        if d == 0 {
            return Err(format!("zero denominator in {s:?}"));
        }
        return Ok(Ratio::new(n, d));
    }
    if let Some(pct) = s.strip_suffix('%') {
        return parse_ratio(pct.trim()).map(|r| r / 100);
    }
    if let Some((int, frac)) = s.split_once('.') {
        if frac.len() > 12 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(format!("bad decimal {s:?}"));
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|e| format!("bad decimal {s:?}: {e}"))? };
        let denom = 10u64.pow(frac.len() as u32);
        let frac: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|e| format!("bad decimal {s:?}: {e}"))? };
        return Ok(Ratio::new(int * denom + frac, denom));
    }
    s.parse::<u64>()
        .map(Ratio::from_integer)
        .map_err(|e| format!("bad ratio {s:?}: {e}"))
}

mod ratio_str {
    use super::Fraction;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Fraction, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Fraction, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_ratio(&s).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub task: Task,
    pub unit: SplitUnit,
    pub fractions: Fractions,
    pub seed: u64,
}

impl SplitSpec {
    pub fn clone_detection(fractions: Fractions, seed: u64) -> Self {
        SplitSpec {
            task: Task::CloneDetection,
            unit: SplitUnit::Problems,
            fractions,
            seed,
        }
    }

    /// Stratified 60/20/20 by programs; override for other protocols.
    pub fn classification_default(seed: u64) -> Self {
        SplitSpec {
            task: Task::Classification,
            unit: SplitUnit::Programs,
            fractions: Fractions::from_weights(60, 20, 20).expect("nonzero weights"),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        self.fractions.validate()?;
        match (self.task, self.unit) {
            (Task::CloneDetection, SplitUnit::Problems) | (Task::Classification, SplitUnit::Programs) => Ok(()),
            (Task::CloneDetection, SplitUnit::Programs) => Err(CorpusError::InvalidSpec(
                "clone detection splits must partition problems".into(),
            )),
            (Task::Classification, SplitUnit::Problems) => Err(CorpusError::InvalidSpec(
                "classification splits must partition programs (labels are shared)".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl Splits {
    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Split tag for a program id, if it is a member of any partition.
    pub fn tag_of(&self, id: &str) -> Option<&'static str> {
        if self.train.iter().any(|x| x == id) {
            Some("train")
        } else if self.val.iter().any(|x| x == id) {
            Some("val")
        } else if self.test.iter().any(|x| x == id) {
            Some("test")
        } else {
            None
        }
    }

    pub fn tags(&self) -> HashMap<&str, &'static str> {
        let mut map = HashMap::with_capacity(self.len());
        for (ids, tag) in [(&self.train, "train"), (&self.val, "val"), (&self.test, "test")] {
            for id in ids {
                map.insert(id.as_str(), tag);
            }
        }
        map
    }
}

/// Splits plus the spec echo, written as the splits manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub subsample: Option<SubsampleEcho>,
    pub splits: Splits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsampleEcho {
    #[serde(with = "ratio_str")]
    pub ratio: Fraction,
    pub unit: SplitUnit,
    pub seed: u64,
}

fn floor_mul(n: usize, r: Fraction) -> usize {
    (Ratio::from_integer(n as u64) * r).to_integer() as usize
}

/// Partition sizes `(train, val, test)` for `n` units; test takes the rounding remainder.
fn partition_sizes(n: usize, f: &Fractions) -> (usize, usize, usize) {
    let train = floor_mul(n, f.train);
    let val = floor_mul(n, f.val);
    (train, val, n - train - val)
}

fn seeded_shuffle<T>(items: &mut [T], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    items.shuffle(&mut rng);
}

pub fn split(corpus: &Corpus, spec: &SplitSpec) -> Result<Splits, CorpusError> {
    spec.validate()?;
    if corpus.is_empty() {
        return Err(CorpusError::InvalidSpec("cannot split an empty corpus".into()));
    }
    let mut by_problem: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for p in &corpus.programs {
        by_problem.entry(p.problem_id.as_str()).or_default().push(p.id.as_str());
    }
    for ids in by_problem.values_mut() {
        ids.sort_unstable();
    }

    let mut splits = Splits::default();
    match spec.unit {
        SplitUnit::Problems => {
            let mut problems: Vec<&str> = by_problem.keys().copied().collect();
            seeded_shuffle(&mut problems, spec.seed);
            let (n_train, n_val, _) = partition_sizes(problems.len(), &spec.fractions);
            for (i, problem) in problems.iter().enumerate() {
                let dest = if i < n_train {
                    &mut splits.train
                } else if i < n_train + n_val {
                    &mut splits.val
                } else {
                    &mut splits.test
                };
                dest.extend(by_problem[problem].iter().map(|s| s.to_string()));
            }
        }
        SplitUnit::Programs => {
            // Stratified: each problem is split on its own with a derived seed.
            for (k, (_, ids)) in by_problem.iter().enumerate() {
                let mut ids = ids.clone();
                seeded_shuffle(&mut ids, spec.seed.wrapping_add(k as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                let (n_train, n_val, _) = partition_sizes(ids.len(), &spec.fractions);
                splits.train.extend(ids[..n_train].iter().map(|s| s.to_string()));
                splits.val.extend(ids[n_train..n_train + n_val].iter().map(|s| s.to_string()));
                splits.test.extend(ids[n_train + n_val..].iter().map(|s| s.to_string()));
            }
        }
    }
    for (name, part) in [("train", &splits.train), ("val", &splits.val), ("test", &splits.test)] {
        if part.is_empty() {
            return Err(CorpusError::EmptySplit(name));
        }
    }
    Ok(splits)
}

/// Reduces train and val; test is returned unchanged.
///
/// `Problems`: keeps `floor(ratio * n)` of the train problems and of the val
/// problems, with all their programs. `Programs`: draws `floor(ratio * pool)`
/// programs from the train+val pool, split 4:1 between train and val.
/// Both modes take prefixes of a single seeded permutation, so a smaller ratio
/// always yields a subset of a larger one. `ratio == 1` is the identity.
pub fn subsample(
    corpus: &Corpus,
    splits: &Splits,
    ratio: Fraction,
    unit: SplitUnit,
    seed: u64,
) -> Result<Splits, CorpusError> {
    let zero = Ratio::from_integer(0);
    let one = Ratio::from_integer(1);
    if ratio <= zero || ratio > one {
        return Err(CorpusError::InvalidSubsample(format!("ratio {ratio} outside (0, 1]")));
    }
    if ratio == one {
        return Ok(splits.clone());
    }
    let index = corpus.problem_index();
    let problem_of = |id: &str| -> Result<&str, CorpusError> {
        index
            .get(id)
            .copied()
            .ok_or_else(|| CorpusError::UnknownProgram(id.to_string()))
    };

    let (train, val) = match unit {
        SplitUnit::Problems => {
            let pick = |ids: &[String], salt: u64| -> Result<Vec<String>, CorpusError> {
                let mut problems: BTreeSet<&str> = BTreeSet::new();
                for id in ids {
                    problems.insert(problem_of(id)?);
                }
                let mut problems: Vec<&str> = problems.into_iter().collect();
                seeded_shuffle(&mut problems, seed ^ salt);
                let keep: BTreeSet<&str> = problems[..floor_mul(problems.len(), ratio)].iter().copied().collect();
                let mut out = Vec::new();
                for id in ids {
                    if keep.contains(problem_of(id)?) {
                        out.push(id.clone());
                    }
                }
                Ok(out)
            };
            (pick(&splits.train, 0x7472_6169_6e)?, pick(&splits.val, 0x76_616c)?)
        }
        SplitUnit::Programs => {
            let pool = splits.train.len() + splits.val.len();
            let total = floor_mul(pool, ratio);
            let n_train = floor_mul(total, Ratio::new(4, 5));
            let n_val = total - n_train;
            if n_train > splits.train.len() || n_val > splits.val.len() {
                return Err(CorpusError::InvalidSubsample(format!(
                    "4:1 subsample needs {n_train} train / {n_val} val programs but only {} / {} exist",
                    splits.train.len(),
                    splits.val.len()
                )));
            }
            let pick = |ids: &[String], n: usize, salt: u64| -> Vec<String> {
                let mut order: Vec<usize> = (0..ids.len()).collect();
                seeded_shuffle(&mut order, seed ^ salt);
                let mut chosen: Vec<usize> = order[..n].to_vec();
                chosen.sort_unstable();
                chosen.into_iter().map(|i| ids[i].clone()).collect()
            };
            (pick(&splits.train, n_train, 0x7472_6169_6e), pick(&splits.val, n_val, 0x76_616c))
        }
    };
    if train.is_empty() {
        return Err(CorpusError::InvalidSubsample(format!("ratio {ratio} leaves the train split empty")));
    }
    Ok(Splits {
        train,
        val,
        test: splits.test.clone(),
    })
}
