//! Learning-curve and timing statistics.

use std::collections::BTreeMap;
use std::fmt;

use crate::agents::{ActionMode, Algorithm};

pub const FINAL_WINDOW: usize = 50;
pub const SMOOTHING_WINDOW: usize = 10;
pub const THRESHOLD_FRACTION: f64 = 0.9;

/// Mean and sample standard deviation (0 for fewer than two values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Mean of the last `window` values (all of them if fewer).
pub fn final_window_mean(rewards: &[f64], window: usize) -> f64 {
    let start = rewards.len().saturating_sub(window);
    mean_std(&rewards[start..]).0
}

/// Number of episodes until the `SMOOTHING_WINDOW` moving average first
/// reaches `THRESHOLD_FRACTION` of the final-window mean, i.e. the
/// 1-based index of the last episode in that window. For a non-positive
/// final mean the threshold is `final − 0.1·|final|`. Returns the curve
/// length when the threshold is never reached.
pub fn episodes_to_threshold(rewards: &[f64]) -> usize {
    let w = SMOOTHING_WINDOW;
    if rewards.len() < w {
        return rewards.len();
    }
    let target = final_window_mean(rewards, FINAL_WINDOW);
    let threshold = target - (1.0 - THRESHOLD_FRACTION) * target.abs();
    let mut sum: f64 = rewards[..w].iter().sum();
    for end in w..=rewards.len() {
        if end > w {
            sum += rewards[end - 1] - rewards[end - 1 - w];
        }
        if sum / w as f64 >= threshold {
            return end;
        }
    }
    rewards.len()
}

/// Per-episode mean, min and max across runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregatePoint {
    pub episode: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

/// Aggregates equally long reward curves (one per seed, in seed order).
pub fn aggregate_curves(curves: &[Vec<f64>]) -> Vec<AggregatePoint> {
    let len = curves.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|e| {
            let vals: Vec<f64> = curves.iter().map(|c| c[e]).collect();
            AggregatePoint {
                episode: e,
                mean: vals.iter().sum::<f64>() / vals.len() as f64,
                min: vals.iter().copied().fold(f64::INFINITY, f64::min),
                max: vals.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            }
        })
        .collect()
}

/// Optimizer time totals in seconds, one entry per seed, keyed by
/// algorithm and action mode.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimingTable {
    pub cells: BTreeMap<(Algorithm, ActionMode), Vec<f64>>,
}

/// Reference totals in seconds (mean, std) for the published runs.
pub fn reference_timing(algo: Algorithm, mode: ActionMode) -> (f64, f64) {
    match (algo, mode) {
        (Algorithm::Ddpg, ActionMode::Dim3) => (628.0, 18.7),
        (Algorithm::Ddpg, ActionMode::Dim6) => (679.8, 27.4),
        (Algorithm::Ddpg, ActionMode::Pead) => (657.9, 43.6),
        (Algorithm::Ppo, ActionMode::Dim3) => (1563.7, 55.2),
        (Algorithm::Ppo, ActionMode::Dim6) => (1625.9, 52.6),
        (Algorithm::Ppo, ActionMode::Pead) => (1596.5, 78.3),
    }
}

/// Groups per-run optimizer totals (seconds) into a timing table.
pub fn summarize_timing(runs: &[(Algorithm, ActionMode, f64)]) -> TimingTable {
    let mut table = TimingTable::default();
    for &(algo, mode, secs) in runs {
        table.cells.entry((algo, mode)).or_default().push(secs);
    }
    table
}

impl TimingTable {
    pub fn mean_std(&self, algo: Algorithm, mode: ActionMode) -> Option<(f64, f64)> {
        self.cells.get(&(algo, mode)).map(|v| mean_std(v))
    }
}

fn cell(v: Option<(f64, f64)>) -> String {
    match v {
        Some((m, s)) => format!("{m:.3} ± {s:.3} s"),
        None => "-".into(),
    }
}

impl fmt::Display for TimingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "COMPARISON OF TIME-EFFICIENCY (optimizer + extension CPU time per run)"
        )?;
        writeln!(f, "{:<18}{:<26}{:<26}{:<26}", "Algorithm", "3-dim", "6-dim", "PEAD")?;
        let algos: std::collections::BTreeSet<Algorithm> = self.cells.keys().map(|k| k.0).collect();
        for algo in algos {
            let name = algo.as_str().to_uppercase();
            let row: Vec<String> = [ActionMode::Dim3, ActionMode::Dim6, ActionMode::Pead]
                .iter()
                .map(|&m| cell(self.mean_std(algo, m)))
                .collect();
            writeln!(f, "{:<18}{:<26}{:<26}{:<26}", name, row[0], row[1], row[2])?;
            let reference: Vec<String> = [ActionMode::Dim3, ActionMode::Dim6, ActionMode::Pead]
                .iter()
                .map(|&m| {
                    let (mean, std) = reference_timing(algo, m);
                    format!("{mean:.1} ± {std:.1} s")
                })
                .collect();
            writeln!(
                f,
                "{:<18}{:<26}{:<26}{:<26}",
                format!("{name} (reference)"),
                reference[0],
                reference[1],
                reference[2]
            )?;
        }
        Ok(())
    }
}
