//! Summaries rebuilt from `per_episode.csv` files on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::metrics::{episodes_to_threshold, final_window_mean, mean_std, summarize_timing, FINAL_WINDOW};
use crate::agents::{ActionMode, Algorithm};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Deserialize)]
pub struct EpisodeRow {
    pub run_id: String,
    pub algo: Algorithm,
    pub mode: ActionMode,
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub steps: usize,
    pub outcome: String,
    pub opt_ms: f64,
    pub extended_flag: u8,
}

/// All runs of one `per_episode.csv`.
#[derive(Debug, Clone)]
pub struct ExperimentRows {
    pub path: PathBuf,
    pub algo: Algorithm,
    pub mode: ActionMode,
    /// Rows grouped by seed, in episode order.
    pub runs: BTreeMap<u64, Vec<EpisodeRow>>,
}

impl ExperimentRows {
    pub fn rewards(&self, seed: u64) -> Vec<f64> {
        self.runs[&seed].iter().map(|r| r.reward).collect()
    }

    pub fn opt_seconds(&self, seed: u64) -> f64 {
        self.runs[&seed].iter().map(|r| r.opt_ms).sum::<f64>() / 1e3
    }

    pub fn extension_episode(&self) -> Option<usize> {
        self.runs
            .values()
            .flatten()
            .find(|r| r.extended_flag == 1)
            .map(|r| r.episode)
    }
}

pub fn read_per_episode(path: &Path) -> Result<ExperimentRows> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut runs: BTreeMap<u64, Vec<EpisodeRow>> = BTreeMap::new();
    let mut kind = None;
    for row in reader.deserialize() {
        let row: EpisodeRow = row?;
        match kind {
            None => kind = Some((row.algo, row.mode)),
            Some(k) if k != (row.algo, row.mode) => {
                return Err(Error::Config(format!("{}: mixed algorithms or modes", path.display())));
            }
            _ => {}
        }
        runs.entry(row.seed).or_default().push(row);
    }
    let (algo, mode) = kind.ok_or_else(|| Error::Config(format!("{}: no data rows", path.display())))?;
    for rows in runs.values_mut() {
        rows.sort_by_key(|r| r.episode);
    }
    Ok(ExperimentRows {
        path: path.to_path_buf(),
        algo,
        mode,
        runs,
    })
}

/// `per_episode.csv` in `dir` and in its immediate subdirectories, sorted.
pub fn find_experiments(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Config(format!("{} is not a directory", dir.display())));
    }
    let mut found = Vec::new();
    let direct = dir.join("per_episode.csv");
    if direct.is_file() {
        found.push(direct);
    }
    let mut subdirs: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        let p = d.join("per_episode.csv");
        if p.is_file() {
            found.push(p);
        }
    }
    if found.is_empty() {
        return Err(Error::Config(format!(
            "no per_episode.csv found under {}",
            dir.display()
        )));
    }
    Ok(found)
}

/// Text report over every experiment found under `dir`.
pub fn build_report(dir: &Path) -> Result<String> {
    let experiments = find_experiments(dir)?
        .iter()
        .map(|p| read_per_episode(p))
        .collect::<Result<Vec<_>>>()?;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<40}{:>6}{:>7}{:>10}{:>22}{:>20}{:>20}",
        "experiment", "seeds", "eps", "ext", "final-50 reward", "episodes to thr.", "opt time (s)"
    );
    let mut timing = Vec::new();
    for exp in &experiments {
        let seeds: Vec<u64> = exp.runs.keys().copied().collect();
        let finals: Vec<f64> = seeds
            .iter()
            .map(|&sd| final_window_mean(&exp.rewards(sd), FINAL_WINDOW))
            .collect();
        let ett: Vec<f64> = seeds
            .iter()
            .map(|&sd| episodes_to_threshold(&exp.rewards(sd)) as f64)
            .collect();
        let secs: Vec<f64> = seeds.iter().map(|&sd| exp.opt_seconds(sd)).collect();
        timing.extend(secs.iter().map(|&t| (exp.algo, exp.mode, t)));
        let name = exp
            .path
            .parent()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| exp.path.display().to_string());
        let episodes = exp.runs.values().map(Vec::len).max().unwrap_or(0);
        let ext = exp.extension_episode().map_or("-".into(), |e| e.to_string());
        let (fm, fs) = mean_std(&finals);
        let (em, es) = mean_std(&ett);
        let (tm, ts) = mean_std(&secs);
        let _ = writeln!(
            s,
            "{:<40}{:>6}{:>7}{:>10}{:>22}{:>20}{:>20}",
            format!("{name} ({} {})", exp.algo.as_str(), exp.mode.as_str()),
            seeds.len(),
            episodes,
            ext,
            format!("{fm:.3} ± {fs:.3}"),
            format!("{em:.1} ± {es:.1}"),
            format!("{tm:.3} ± {ts:.3}")
        );
    }
    let _ = writeln!(s);
    let _ = write!(s, "{}", summarize_timing(&timing));
    Ok(s)
}
