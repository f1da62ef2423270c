//! Paired evaluation of a trained agent against fixed compliance.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{run_episode, Agent, EpisodeOptions, EpisodeRecord, EpisodeResult};
use crate::assembly_env::{
    modulate_gains, AssemblyEnv, EnvConfig, Outcome, PoseRange, TrajectoryRow, TRAJECTORY_HEADER,
};
use crate::error::{Error, Result};

/// Corner of the standard error box: `sign · [0.2 mm ×3, 0.5° ×3]`.
pub fn corner_error(sign: f64) -> [f64; 6] {
    let r = PoseRange::standard().0;
    r.map(|v| sign * v)
}

/// Tag of an evaluation: the negative corner is the robustness case.
pub fn error_tag(error: &[f64; 6]) -> &'static str {
    if error.iter().all(|&v| v < 0.0) {
        "robustness"
    } else if error.iter().all(|&v| v == 0.0) {
        "aligned"
    } else {
        "nominal"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Policy {
    Trained,
    /// `a = 0` every step.
    Baseline,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Trained => "trained",
            Policy::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub tag: &'static str,
    pub policy: Policy,
    pub seed: u64,
    pub record: EpisodeRecord,
    pub trajectory: Vec<TrajectoryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicySummary {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_force_sum: f64,
    pub mean_moment_sum: f64,
    /// Mean of `Σ‖f‖ + Σ‖m‖` over successful episodes.
    pub effort_per_success: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub tag: &'static str,
    pub initial_error: [f64; 6],
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn summary(&self, policy: Policy) -> PolicySummary {
        let rows: Vec<&EpisodeRecord> = self
            .rows
            .iter()
            .filter(|r| r.policy == policy)
            .map(|r| &r.record)
            .collect();
        let n = rows.len().max(1) as f64;
        let successes: Vec<&&EpisodeRecord> = rows.iter().filter(|r| r.outcome == Outcome::Success).collect();
        PolicySummary {
            episodes: rows.len(),
            success_rate: successes.len() as f64 / n,
            mean_steps: rows.iter().map(|r| r.steps as f64).sum::<f64>() / n,
            mean_force_sum: rows.iter().map(|r| r.force_sum).sum::<f64>() / n,
            mean_moment_sum: rows.iter().map(|r| r.moment_sum).sum::<f64>() / n,
            effort_per_success: (!successes.is_empty())
                .then(|| successes.iter().map(|r| r.force_sum + r.moment_sum).sum::<f64>() / successes.len() as f64),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let e = self.initial_error;
        let _ = writeln!(
            s,
            "[{}] initial error: x {:.3} mm, y {:.3} mm, z {:.3} mm, alpha {:.3} deg, beta {:.3} deg, gamma {:.3} deg",
            self.tag,
            e[0],
            e[1],
            e[2],
            e[3].to_degrees(),
            e[4].to_degrees(),
            e[5].to_degrees()
        );
        let _ = writeln!(
            s,
            "{:<10}{:>9}{:>10}{:>12}{:>11}{:>14}{:>20}",
            "policy", "episodes", "success", "mean steps", "sum |f| N", "sum |m| N·mm", "effort per success"
        );
        for p in [Policy::Trained, Policy::Baseline] {
            let m = self.summary(p);
            let effort = m.effort_per_success.map_or("-".to_string(), |v| format!("{v:.1}"));
            let _ = writeln!(
                s,
                "{:<10}{:>9}{:>10.3}{:>12.1}{:>11.1}{:>14.1}{:>20}",
                p.as_str(),
                m.episodes,
                m.success_rate,
                m.mean_steps,
                m.mean_force_sum,
                m.mean_moment_sum,
                effort
            );
        }
        s
    }
}

/// Runs `env` (already reset) under constant zero modulation.
pub fn run_baseline_episode(env: &mut AssemblyEnv, seed: u64, record_trajectory: bool) -> Result<EpisodeResult> {
    let gains = modulate_gains(
        &[0.0; 6],
        &[0.0; 6],
        &env.config().baseline_gains,
        env.config().modulation_clamp,
    );
    let mut trajectory = Vec::new();
    let push = |env: &AssemblyEnv, reward: f64, t: &mut Vec<TrajectoryRow>| {
        let s = env.state();
        t.push(TrajectoryRow {
            step: s.step_index,
            pose: s.pose,
            wrench: s.wrench,
            reward,
        });
    };
    if record_trajectory {
        push(env, 0.0, &mut trajectory);
    }
    let (mut total, mut force_sum, mut moment_sum) = (0.0, 0.0, 0.0);
    while !env.state().done.is_terminal() {
        let reward = env.step(&gains)?;
        total += reward;
        force_sum += env.state().wrench.force_norm();
        moment_sum += env.state().wrench.moment_norm();
        if record_trajectory {
            push(env, reward, &mut trajectory);
        }
    }
    Ok(EpisodeResult {
        record: EpisodeRecord {
            seed,
            episode: 0,
            reward: total,
            steps: env.state().step_index,
            outcome: env.state().done,
            opt_ms: 0.0,
            extended: false,
            action_dim: 0,
            force_sum,
            moment_sum,
        },
        trajectory,
    })
}

/// Initial error for one evaluation seed: `base` plus a uniform offset of
/// up to `jitter` times the standard half-width in each component.
pub fn jittered_error(base: &[f64; 6], jitter: f64, seed: u64) -> [f64; 6] {
    if jitter == 0.0 {
        return *base;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let range = PoseRange::standard().0;
    let mut e = *base;
    for i in 0..6 {
        e[i] += jitter * range[i] * rng.random_range(-1.0..=1.0);
    }
    e
}

/// Runs the trained agent greedily and the fixed-compliance baseline from
/// the same initial poses, one pair per seed.
pub fn evaluate_policy(
    agent: &Agent,
    env_cfg: &EnvConfig,
    initial_error: &[f64; 6],
    seeds: &[u64],
    jitter: f64,
) -> Result<EvalReport> {
    let mut env = AssemblyEnv::new(env_cfg.clone())?;
    let mut agent = agent.clone();
    let tag = error_tag(initial_error);
    let mut rows = Vec::with_capacity(2 * seeds.len());
    for &seed in seeds {
        let error = jittered_error(initial_error, jitter, seed);
        env.reset_to_error(&error);
        let mut opts = EpisodeOptions::evaluation(seed);
        opts.record_trajectory = true;
        let trained = run_episode(&mut agent, &mut env, opts)?;
        rows.push(EvalRow {
            tag,
            policy: Policy::Trained,
            seed,
            record: trained.record,
            trajectory: trained.trajectory,
        });
        env.reset_to_error(&error);
        let base = run_baseline_episode(&mut env, seed, true)?;
        rows.push(EvalRow {
            tag,
            policy: Policy::Baseline,
            seed,
            record: base.record,
            trajectory: base.trajectory,
        });
    }
    Ok(EvalReport {
        tag,
        initial_error: *initial_error,
        rows,
    })
}

pub const EVAL_HEADER: [&str; 9] = [
    "tag",
    "policy",
    "seed",
    "outcome",
    "steps",
    "reward",
    "force_sum",
    "moment_sum",
    "effort",
];

/// Writes `eval.csv`, `eval_summary.txt` and per-episode trajectories
/// (`trajectories/<tag>_<policy>_seed<seed>.csv`, first `max_traj` seeds).
pub fn write_reports(reports: &[EvalReport], out: &Path, max_traj: usize) -> Result<()> {
    std::fs::create_dir_all(out.join("trajectories")).map_err(|e| Error::io(out, e))?;
    let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
    w.write_record(EVAL_HEADER)?;
    let mut text = String::new();
    for rep in reports {
        let mut seeds_seen = Vec::new();
        for row in &rep.rows {
            let r = &row.record;
            w.write_record([
                row.tag.to_string(),
                row.policy.as_str().to_string(),
                row.seed.to_string(),
                r.outcome.as_str().to_string(),
                r.steps.to_string(),
                r.reward.to_string(),
                r.force_sum.to_string(),
                r.moment_sum.to_string(),
                (r.force_sum + r.moment_sum).to_string(),
            ])?;
            if !seeds_seen.contains(&row.seed) {
                seeds_seen.push(row.seed);
            }
            if seeds_seen.len() <= max_traj {
                let path =
                    out.join("trajectories")
                        .join(format!("{}_{}_seed{}.csv", row.tag, row.policy.as_str(), row.seed));
                write_trajectory(&row.trajectory, &path)?;
            }
        }
        text.push_str(&rep.to_text());
        text.push('\n');
    }
    w.flush().map_err(|e| Error::io(out.join("eval.csv"), e))?;
    let path = out.join("eval_summary.txt");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn write_trajectory(rows: &[TrajectoryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRAJECTORY_HEADER)?;
    for r in rows {
        w.write_record(r.fields())?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
