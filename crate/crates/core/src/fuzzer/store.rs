//! On-disk campaign layout: `queue/`, `crashes/`, `hangs/` hold raw input
//! files named by six-digit ordinal; `stats.json` holds the statistics and
//! queue metadata.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::campaign::{FuzzReport, FuzzStats, QueueEntry};

#[derive(Debug, Serialize, Deserialize)]
struct StatsFile {
    program_id: String,
    stats: FuzzStats,
    queue: Vec<QueueEntry>,
    crashes: usize,
    hangs: usize,
}

fn ordinal(i: usize) -> String {
    format!("{i:06}")
}

fn write_inputs(dir: &Path, inputs: impl Iterator<Item = impl AsRef<[u8]>>) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for (i, input) in inputs.enumerate() {
        fs::write(dir.join(ordinal(i)), input)?;
    }
    Ok(())
}

fn read_inputs(dir: &Path, n: usize) -> io::Result<Vec<Vec<u8>>> {
    (0..n).map(|i| fs::read(dir.join(ordinal(i)))).collect()
}

/// Writes the report under `dir`, replacing any previous campaign there.
/// The directory appears complete or not at all.
pub fn save(report: &FuzzReport, dir: &Path) -> io::Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let staging = tempfile::Builder::new().prefix(".fuzz-staging").tempdir_in(parent)?;
    let root = staging.path();
    write_inputs(&root.join("queue"), report.queue.iter().map(|e| &e.input))?;
    write_inputs(&root.join("crashes"), report.crashes.iter())?;
    write_inputs(&root.join("hangs"), report.hangs.iter())?;
    let stats = StatsFile {
        program_id: report.program_id.clone(),
        stats: report.stats.clone(),
        queue: report.queue.clone(),
        crashes: report.crashes.len(),
        hangs: report.hangs.len(),
    };
    fs::write(root.join("stats.json"), serde_json::to_vec_pretty(&stats)?)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(staging.keep(), dir)?;
    Ok(())
}

pub fn load(dir: &Path) -> io::Result<FuzzReport> {
    let stats: StatsFile = serde_json::from_slice(&fs::read(dir.join("stats.json"))?)?;
    let inputs = read_inputs(&dir.join("queue"), stats.queue.len())?;
    let mut queue = stats.queue;
    for (e, input) in queue.iter_mut().zip(inputs) {
        e.input = input;
    }
    Ok(FuzzReport {
        program_id: stats.program_id,
        queue,
        crashes: read_inputs(&dir.join("crashes"), stats.crashes)?,
        hangs: read_inputs(&dir.join("hangs"), stats.hangs)?,
        stats: stats.stats,
    })
}
