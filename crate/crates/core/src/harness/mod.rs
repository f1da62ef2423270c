//! Experiment orchestration: training sweeps over seeds, CSV output,
//! summaries, evaluation and the command-line front end.
//!
//! Output files of a training run:
//!
//! * `per_episode.csv`: `run_id, algo, mode, seed, episode, reward, steps,
//!   outcome, opt_ms, extended_flag`
//! * `aggregate.csv`: `episode, mean, min, max` of reward across seeds
//! * `summary.txt`: final-window reward, episodes-to-threshold, optimizer
//!   time and the time-efficiency table
//! * `checkpoints/<run_id>.ckpt`

pub mod cli;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod report;

use std::fmt::Write as _;
use std::path::Path;

use crate::agents::checkpoint;
use crate::agents::{run_episode, ActionMode, Agent, Algorithm, EpisodeOptions, EpisodeRecord};
use crate::assembly_env::{AssemblyEnv, OBSERVATION_DIM};
use crate::error::{Error, Result};
pub use config::ExperimentConfig;
use metrics::{aggregate_curves, episodes_to_threshold, final_window_mean, mean_std, AggregatePoint, FINAL_WINDOW};

pub const PER_EPISODE_HEADER: [&str; 10] = [
    "run_id",
    "algo",
    "mode",
    "seed",
    "episode",
    "reward",
    "steps",
    "outcome",
    "opt_ms",
    "extended_flag",
];
pub const AGGREGATE_HEADER: [&str; 4] = ["episode", "mean", "min", "max"];

/// Reset seed of episode `episode` in the run with seed `seed`; the same
/// for every algorithm and action mode.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(episode as u64)
}

/// Seed of the agent's own random generator.
pub fn agent_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

pub fn run_id(algo: Algorithm, mode: ActionMode, seed: u64) -> String {
    format!("{}-{}-seed{seed}", algo.as_str(), mode.as_str())
}

/// One seed of an experiment.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub seed: u64,
    pub records: Vec<EpisodeRecord>,
    pub agent: Agent,
}

impl RunResult {
    pub fn rewards(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.reward).collect()
    }

    /// Optimizer plus extension CPU time, seconds.
    pub fn opt_seconds(&self) -> f64 {
        self.records.iter().map(|r| r.opt_ms).sum::<f64>() / 1e3
    }

    pub fn final_mean(&self) -> f64 {
        final_window_mean(&self.rewards(), FINAL_WINDOW)
    }

    pub fn episodes_to_threshold(&self) -> usize {
        episodes_to_threshold(&self.rewards())
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    /// In the order of `config.harness.seeds`.
    pub runs: Vec<RunResult>,
    pub aggregate: Vec<AggregatePoint>,
}

impl ExperimentResult {
    pub fn mean_final_reward(&self) -> f64 {
        mean_std(&self.runs.iter().map(RunResult::final_mean).collect::<Vec<_>>()).0
    }

    pub fn mean_episodes_to_threshold(&self) -> f64 {
        mean_std(
            &self
                .runs
                .iter()
                .map(|r| r.episodes_to_threshold() as f64)
                .collect::<Vec<_>>(),
        )
        .0
    }

    pub fn mean_opt_seconds(&self) -> f64 {
        mean_std(&self.runs.iter().map(RunResult::opt_seconds).collect::<Vec<_>>()).0
    }

    pub fn timing_entries(&self) -> Vec<(Algorithm, ActionMode, f64)> {
        let h = &self.config.harness;
        self.runs
            .iter()
            .map(|r| (h.algorithm, h.action_mode, r.opt_seconds()))
            .collect()
    }

    pub fn summary(&self) -> String {
        let h = &self.config.harness;
        let mut s = String::new();
        let _ = writeln!(s, "algorithm: {}", h.algorithm.as_str());
        let _ = writeln!(s, "action mode: {}", h.action_mode.as_str());
        let _ = writeln!(s, "episodes: {}", self.config.episodes());
        if let Some(scale) = self.config.extension_scale() {
            let _ = writeln!(s, "extension scale: {scale}");
        }
        let seeds: Vec<String> = h.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(s, "seeds: {}", seeds.join(" "));
        let per_seed = |f: &dyn Fn(&RunResult) -> f64| -> (f64, f64, String) {
            let v: Vec<f64> = self.runs.iter().map(f).collect();
            let (m, sd) = mean_std(&v);
            let list: Vec<String> = v.iter().map(|x| format!("{x:.3}")).collect();
            (m, sd, list.join(" "))
        };
        let (m, sd, list) = per_seed(&|r| r.final_mean());
        let _ = writeln!(s, "final-{FINAL_WINDOW} mean reward: {m:.3} ± {sd:.3} [{list}]");
        let (m, sd, list) = per_seed(&|r| r.episodes_to_threshold() as f64);
        let _ = writeln!(s, "episodes to threshold: {m:.1} ± {sd:.1} [{list}]");
        let (m, sd, list) = per_seed(&|r| {
            let start = r.records.len().saturating_sub(FINAL_WINDOW);
            let tail = &r.records[start..];
            tail.iter()
                .filter(|e| e.outcome == crate::assembly_env::Outcome::Success)
                .count() as f64
                / tail.len().max(1) as f64
        });
        let _ = writeln!(s, "final-{FINAL_WINDOW} success rate: {m:.3} ± {sd:.3} [{list}]");
        let (m, sd, list) = per_seed(&RunResult::opt_seconds);
        let _ = writeln!(s, "optimizer + extension CPU time: {m:.3} ± {sd:.3} s [{list}]");
        for r in &self.runs {
            if let Some(e) = r.records.iter().find(|e| e.extended) {
                let _ = writeln!(s, "seed {} extended at episode {}", r.seed, e.episode);
            }
        }
        let _ = writeln!(s);
        let _ = write!(s, "{}", metrics::summarize_timing(&self.timing_entries()));
        s
    }
}

/// Trains one seed of `cfg`.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<RunResult> {
    let h = &cfg.harness;
    let mut env = AssemblyEnv::new(cfg.assembly_env.clone())?;
    let mut agent = Agent::new(
        h.algorithm,
        h.action_mode,
        OBSERVATION_DIM,
        &cfg.agents,
        agent_seed(seed),
    )?;
    let range = cfg.pose_range();
    let extension = cfg.extension_scale();
    let episodes = cfg.episodes();
    let mut records = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        env.reset(episode_seed(seed, episode), &range)?;
        let mut opts = EpisodeOptions::training(seed, episode);
        opts.extend = extension == Some(episode);
        records.push(run_episode(&mut agent, &mut env, opts)?.record);
    }
    Ok(RunResult { seed, records, agent })
}

/// Runs every seed of `cfg` without touching the filesystem.
pub fn train(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let seeds = &cfg.harness.seeds;
    let workers = cfg.harness.workers.min(seeds.len());
    let runs: Vec<RunResult> = if workers <= 1 {
        seeds.iter().map(|&s| run_seed(cfg, s)).collect::<Result<_>>()?
    } else {
        let mut slots: Vec<Option<Result<RunResult>>> = (0..seeds.len()).map(|_| None).collect();
        for chunk in seeds.iter().enumerate().collect::<Vec<_>>().chunks(workers) {
            let done: Vec<(usize, Result<RunResult>)> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|&(i, &s)| (i, scope.spawn(move || run_seed(cfg, s))))
                    .collect();
                handles
                    .into_iter()
                    .map(|(i, h)| {
                        (
                            i,
                            h.join().unwrap_or_else(|_| Err(Error::Agent("worker panicked".into()))),
                        )
                    })
                    .collect()
            });
            for (i, r) in done {
                slots[i] = Some(r);
            }
        }
        slots
            .into_iter()
            .map(|r| r.expect("every seed ran"))
            .collect::<Result<_>>()?
    };
    let curves: Vec<Vec<f64>> = runs.iter().map(RunResult::rewards).collect();
    Ok(ExperimentResult {
        config: cfg.clone(),
        aggregate: aggregate_curves(&curves),
        runs,
    })
}

/// Trains and writes all outputs into `cfg.harness.output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let out = &cfg.harness.output_dir;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let result = train(cfg)?;
    write_outputs(&result, out)?;
    Ok(result)
}

pub fn write_outputs(result: &ExperimentResult, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let h = &result.config.harness;
    let mut w = csv::Writer::from_path(out.join("per_episode.csv"))?;
    w.write_record(PER_EPISODE_HEADER)?;
    for run in &result.runs {
        let id = run_id(h.algorithm, h.action_mode, run.seed);
        for r in &run.records {
            w.write_record([
                id.clone(),
                h.algorithm.as_str().to_string(),
                h.action_mode.as_str().to_string(),
                r.seed.to_string(),
                r.episode.to_string(),
                r.reward.to_string(),
                r.steps.to_string(),
                r.outcome.as_str().to_string(),
                format!("{:.6}", r.opt_ms),
                u8::from(r.extended).to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(out.join("per_episode.csv"), e))?;

    let mut w = csv::Writer::from_path(out.join("aggregate.csv"))?;
    w.write_record(AGGREGATE_HEADER)?;
    for p in &result.aggregate {
        w.write_record([
            p.episode.to_string(),
            p.mean.to_string(),
            p.min.to_string(),
            p.max.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(out.join("aggregate.csv"), e))?;

    let summary_path = out.join("summary.txt");
    std::fs::write(&summary_path, result.summary()).map_err(|e| Error::io(&summary_path, e))?;
    std::fs::write(out.join("config.toml"), result.config.to_toml()).map_err(|e| Error::io(out, e))?;

    if h.save_checkpoints {
        let dir = out.join("checkpoints");
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for run in &result.runs {
            let path = dir.join(format!("{}.ckpt", run_id(h.algorithm, h.action_mode, run.seed)));
            checkpoint::save(&run.agent, &path)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn episode_seeds_do_not_collide_across_runs() {
        let mut seen = std::collections::HashSet::new();
        for s in 0..5 {
            for e in 0..2000 {
                assert!(seen.insert(episode_seed(s, e)));
            }
        }
    }
}
