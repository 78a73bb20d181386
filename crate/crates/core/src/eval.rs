//! Retrieval and classification metrics.
//!
//! MAP@R: for a query whose class has `c` members, R = c - 1; the other
//! items are ranked by similarity (ties by ascending id) and
//! AP@R = (1/R) * sum over relevant ranks k <= R of precision@k.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid embedding table: {0}")]
    Invalid(String),
    #[error("class {0:?} has a single member; MAP@R needs at least two per class")]
    SingletonClass(String),
    #[error("{predictions} predictions for {truth} labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no predictions")]
    Empty,
    #[error("io error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Cosine,
    Dot,
}

impl FromStr for Similarity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "dot" => Ok(Similarity::Dot),
            other => Err(format!("unknown similarity {other:?}")),
        }
    }
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Cosine => "cosine",
            Similarity::Dot => "dot",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub ids: Vec<String>,
    pub labels: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, labels: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self, EvalError> {
        let t = EmbeddingTable { ids, labels, vectors };
        t.validate()?;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let n = self.ids.len();
        if self.labels.len() != n || self.vectors.len() != n {
            return Err(EvalError::Invalid(format!(
                "{} ids, {} labels, {} vectors",
                n,
                self.labels.len(),
                self.vectors.len()
            )));
        }
        let dim = self.dim();
        if n > 0 && dim == 0 {
            return Err(EvalError::Invalid("dimension must be at least 1".into()));
        }
        let mut seen = HashSet::with_capacity(n);
        for (i, v) in self.vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(EvalError::Invalid(format!("{} has dimension {}, expected {dim}", self.ids[i], v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(EvalError::Invalid(format!("{} has a non-finite component", self.ids[i])));
            }
            if !seen.insert(self.ids[i].as_str()) {
                return Err(EvalError::Invalid(format!("duplicate id {}", self.ids[i])));
            }
        }
        Ok(())
    }

    /// Parses `n dim` followed by `id<TAB>label<TAB>v1 v2 ...` lines.
    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(EvalError::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let hdr: Vec<&str> = header.split_whitespace().collect();
        let parse_usize = |s: &str, line| {
            s.parse::<usize>().map_err(|_| EvalError::Parse {
                line,
                msg: format!("expected a count, got {s:?}"),
            })
        };
        if hdr.len() != 2 {
            return Err(EvalError::Parse {
                line: 1,
                msg: "header must be `n dim`".into(),
            });
        }
        let n = parse_usize(hdr[0], 1)?;
        let dim = parse_usize(hdr[1], 1)?;
        let mut ids = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        let mut vectors = Vec::with_capacity(n);
        for (i, line) in lines {
            let lineno = i + 1;
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(label), Some(vals)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(EvalError::Parse {
                    line: lineno,
                    msg: "expected id<TAB>label<TAB>values".into(),
                });
            };
            let v = vals
                .split_whitespace()
                .map(|x| {
                    x.parse::<f64>().map_err(|_| EvalError::Parse {
                        line: lineno,
                        msg: format!("bad component {x:?}"),
                    })
                })
                .collect::<Result<Vec<f64>, _>>()?;
            if v.len() != dim {
                return Err(EvalError::Parse {
                    line: lineno,
                    msg: format!("{} components, header says {dim}", v.len()),
                });
            }
            ids.push(id.to_string());
            labels.push(label.to_string());
            vectors.push(v);
        }
        if ids.len() != n {
            return Err(EvalError::Parse {
                line: 1,
                msg: format!("header says {n} rows, found {}", ids.len()),
            });
        }
        EmbeddingTable::new(ids, labels, vectors)
    }

    pub fn read(path: &Path) -> Result<Self, EvalError> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn write(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "{} {}", self.len(), self.dim())?;
        for i in 0..self.len() {
            let vals: Vec<String> = self.vectors[i].iter().map(|x| format!("{x:?}")).collect();
            writeln!(w, "{}\t{}\t{}", self.ids[i], self.labels[i], vals.join(" "))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean AP@R over all queries.
    pub map_at_r: f64,
    /// Mean AP@R over the queries of each problem.
    pub per_problem: BTreeMap<String, f64>,
    pub n_queries: usize,
    pub per_problem_queries: BTreeMap<String, usize>,
    pub similarity: Similarity,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// AP@R of every row, in table order.
pub fn average_precisions(table: &EmbeddingTable, sim: Similarity) -> Result<Vec<f64>, EvalError> {
    table.validate()?;
    let mut class_size: HashMap<&str, usize> = HashMap::new();
    for l in &table.labels {
        *class_size.entry(l.as_str()).or_default() += 1;
    }
    let mut singles: Vec<&str> = class_size.iter().filter(|(_, &c)| c < 2).map(|(&l, _)| l).collect();
    singles.sort();
    if let Some(l) = singles.first() {
        return Err(EvalError::SingletonClass(l.to_string()));
    }

    let vecs: Vec<Vec<f64>> = match sim {
        Similarity::Dot => table.vectors.clone(),
        Similarity::Cosine => table
            .vectors
            .iter()
            .map(|v| {
                let norm = dot(v, v).sqrt();
                // a zero vector is equally dissimilar to everything
                if norm == 0.0 {
                    v.clone()
                } else {
                    v.iter().map(|x| x / norm).collect()
                }
            })
            .collect(),
    };

    let n = table.len();
    let mut aps = Vec::with_capacity(n);
    let mut others: Vec<(f64, usize)> = Vec::with_capacity(n);
    for q in 0..n {
        others.clear();
        // + 0.0 turns -0.0 into 0.0, which total_cmp would otherwise rank lower
        others.extend((0..n).filter(|&j| j != q).map(|j| (dot(&vecs[q], &vecs[j]) + 0.0, j)));
        others.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| table.ids[a.1].cmp(&table.ids[b.1])));
        let r = class_size[table.labels[q].as_str()] - 1;
        let mut hits = 0usize;
        let mut sum = 0.0;
        for (k, &(_, j)) in others.iter().take(r).enumerate() {
            if table.labels[j] == table.labels[q] {
                hits += 1;
                sum += hits as f64 / (k + 1) as f64;
            }
        }
        aps.push(sum / r as f64);
    }
    Ok(aps)
}

pub fn map_at_r(table: &EmbeddingTable, sim: Similarity) -> Result<EvalReport, EvalError> {
    let aps = average_precisions(table, sim)?;
    // sum in id order so row order cannot change the result
    let mut order: Vec<usize> = (0..table.len()).collect();
    order.sort_by(|&a, &b| table.ids[a].cmp(&table.ids[b]));
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    let mut total = 0.0;
    for &i in &order {
        total += aps[i];
        let e = sums.entry(table.labels[i].clone()).or_default();
        e.0 += aps[i];
        e.1 += 1;
    }
    let n = table.len();
    Ok(EvalReport {
        map_at_r: if n == 0 { 0.0 } else { total / n as f64 },
        per_problem: sums.iter().map(|(k, &(s, c))| (k.clone(), s / c as f64)).collect(),
        per_problem_queries: sums.iter().map(|(k, &(_, c))| (k.clone(), c)).collect(),
        n_queries: n,
        similarity: sim,
    })
}

/// Fraction of positions where prediction and truth differ.
pub fn error_rate<S: AsRef<str>>(predictions: &[S], truth: &[S]) -> Result<f64, EvalError> {
    if predictions.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(EvalError::Empty);
    }
    let wrong = predictions.iter().zip(truth).filter(|(p, t)| p.as_ref() != t.as_ref()).count();
    Ok(wrong as f64 / truth.len() as f64)
}

/// Reads `id<TAB>label` lines (header-free); used for predictions and truth files.
pub fn read_labels(path: &Path) -> Result<Vec<(String, String)>, EvalError> {
    let text = fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let mut it = l.splitn(2, '\t');
            match (it.next(), it.next()) {
                (Some(id), Some(label)) => Ok((id.to_string(), label.trim_end().to_string())),
                _ => Err(EvalError::Parse {
                    line: i + 1,
                    msg: "expected id<TAB>label".into(),
                }),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemRow {
    pub problem_id: String,
    pub map_at_r: f64,
    pub n_queries: usize,
}

/// One row per problem, in problem-id order.
pub fn per_problem_breakdown(report: &EvalReport) -> Vec<ProblemRow> {
    report
        .per_problem
        .iter()
        .map(|(p, &m)| ProblemRow {
            problem_id: p.clone(),
            map_at_r: m,
            n_queries: report.per_problem_queries.get(p).copied().unwrap_or(0),
        })
        .collect()
}

pub fn write_breakdown_csv(rows: &[ProblemRow], w: impl Write) -> Result<(), EvalError> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| EvalError::Io(io::Error::other(e)))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Plot-ready series: problems sorted by ascending MAP@R, with the
/// overall value for a reference line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakdownSeries {
    pub x: Vec<String>,
    pub y: Vec<f64>,
    pub n_queries: Vec<usize>,
    pub overall: f64,
}

pub fn breakdown_series(report: &EvalReport) -> BreakdownSeries {
    let mut rows = per_problem_breakdown(report);
    rows.sort_by(|a, b| a.map_at_r.total_cmp(&b.map_at_r).then_with(|| a.problem_id.cmp(&b.problem_id)));
    BreakdownSeries {
        x: rows.iter().map(|r| r.problem_id.clone()).collect(),
        y: rows.iter().map(|r| r.map_at_r).collect(),
        n_queries: rows.iter().map(|r| r.n_queries).collect(),
        overall: report.map_at_r,
    }
}
