//! Learning agents and the per-episode interaction loop.

pub mod checkpoint;
pub mod ddpg;
pub mod memory;
pub mod noise;
pub mod ppo;

use serde::{Deserialize, Serialize};

use crate::assembly_env::{modulate_gains, AssemblyEnv, Outcome, TrajectoryRow};
use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;
use crate::timing::CpuStopwatch;
pub use ddpg::{DdpgAgent, DdpgConfig};
pub use memory::{ReplayBuffer, RolloutStep, RolloutStore, Transition};
pub use noise::NoiseProcess;
pub use ppo::{PpoAgent, PpoConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Ddpg,
    Ppo,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Ddpg => "ddpg",
            Algorithm::Ppo => "ppo",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(Algorithm::Ddpg),
            "ppo" => Ok(Algorithm::Ppo),
            _ => Err(Error::Config(format!("unknown algorithm '{s}'"))),
        }
    }
}

/// Which action space an agent trains in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    /// Reduced space throughout.
    Dim3,
    /// Full space throughout.
    Dim6,
    /// Reduced space, extended to the full space during training.
    Pead,
}

impl ActionMode {
    pub const ALL: [ActionMode; 3] = [ActionMode::Dim3, ActionMode::Dim6, ActionMode::Pead];

    pub fn as_str(self) -> &'static str {
        match self {
            ActionMode::Dim3 => "dim3",
            ActionMode::Dim6 => "dim6",
            ActionMode::Pead => "pead",
        }
    }

    pub fn initial_dim(self, map: &MappingMatrix) -> usize {
        match self {
            ActionMode::Dim6 => map.full_dim(),
            ActionMode::Dim3 | ActionMode::Pead => map.reduced_dim(),
        }
    }
}

impl std::str::FromStr for ActionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dim3" => Ok(ActionMode::Dim3),
            "dim6" => Ok(ActionMode::Dim6),
            "pead" => Ok(ActionMode::Pead),
            _ => Err(Error::Config(format!("unknown action mode '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub ddpg: DdpgConfig,
    pub ppo: PpoConfig,
}

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Learner {
    Ddpg(DdpgAgent),
    Ppo(PpoAgent),
}

/// A learner together with its action mode and extension bookkeeping.
#[derive(Debug, Clone)]
pub struct Agent {
    pub(crate) learner: Learner,
    pub(crate) mode: ActionMode,
    pub(crate) map: MappingMatrix,
    pub(crate) pending_extension: bool,
}

impl Agent {
    pub fn new(algo: Algorithm, mode: ActionMode, obs_dim: usize, cfg: &AgentConfig, seed: u64) -> Result<Self> {
        Self::with_mapping(algo, mode, obs_dim, cfg, MappingMatrix::canonical(), seed)
    }

    pub fn with_mapping(
        algo: Algorithm,
        mode: ActionMode,
        obs_dim: usize,
        cfg: &AgentConfig,
        map: MappingMatrix,
        seed: u64,
    ) -> Result<Self> {
        let dim = mode.initial_dim(&map);
        let learner = match algo {
            Algorithm::Ddpg => Learner::Ddpg(DdpgAgent::new(obs_dim, dim, cfg.ddpg.clone(), seed)?),
            Algorithm::Ppo => Learner::Ppo(PpoAgent::new(obs_dim, dim, cfg.ppo.clone(), seed)?),
        };
        Ok(Agent {
            learner,
            mode,
            map,
            pending_extension: false,
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        match self.learner {
            Learner::Ddpg(_) => Algorithm::Ddpg,
            Learner::Ppo(_) => Algorithm::Ppo,
        }
    }

    pub fn mode(&self) -> ActionMode {
        self.mode
    }

    pub fn mapping(&self) -> &MappingMatrix {
        &self.map
    }

    pub fn learner(&self) -> &Learner {
        &self.learner
    }

    pub fn learner_mut(&mut self) -> &mut Learner {
        &mut self.learner
    }

    pub fn action_dim(&self) -> usize {
        match &self.learner {
            Learner::Ddpg(a) => a.action_dim(),
            Learner::Ppo(a) => a.action_dim(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match &self.learner {
            Learner::Ddpg(a) => a.obs_dim(),
            Learner::Ppo(a) => a.obs_dim(),
        }
    }

    pub fn is_extended(&self) -> bool {
        self.mode == ActionMode::Pead && self.action_dim() == self.map.full_dim()
    }

    pub fn extension_pending(&self) -> bool {
        self.pending_extension
    }

    /// Asks for the action space to be widened. DDPG agents extend at
    /// once; PPO agents extend at once if their rollout store is empty and
    /// otherwise right after the next old-actor sync. Returns whether the
    /// extension happened now.
    pub fn request_extension(&mut self) -> Result<bool> {
        if self.mode != ActionMode::Pead {
            return Err(Error::Agent(format!(
                "extension requested in {} mode",
                self.mode.as_str()
            )));
        }
        if self.is_extended() || self.pending_extension {
            return Err(Error::Agent(
                "agent is already extended or has an extension pending".into(),
            ));
        }
        match &mut self.learner {
            Learner::Ddpg(a) => a.extend(&self.map).map(|_| true),
            Learner::Ppo(a) if a.store().is_empty() => a.extend(&self.map).map(|_| true),
            Learner::Ppo(_) => {
                self.pending_extension = true;
                Ok(false)
            }
        }
    }

    /// Widens a reduced-space vector for the controller.
    fn to_controller(&self, v: &[f64]) -> Result<[f64; 6]> {
        let full = if v.len() == self.map.full_dim() {
            v.to_vec()
        } else {
            self.map.lift(v)?
        };
        full.try_into()
            .map_err(|f: Vec<f64>| Error::shape("controller action", 6, f.len()))
    }

    /// Deterministic controller action for `state` (no exploration).
    pub fn greedy_action(&self, state: &[f64]) -> Result<[f64; 6]> {
        let a = match &self.learner {
            Learner::Ddpg(a) => ddpg::clip(&a.policy_raw(state)?, a.config().action_bound),
            Learner::Ppo(a) => a.act_greedy(state)?,
        };
        self.to_controller(&a)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeOptions {
    pub seed: u64,
    pub episode: usize,
    /// Explore, store experience and update; otherwise act greedily and
    /// leave the agent untouched.
    pub train: bool,
    /// Request the action-space extension before the first step.
    pub extend: bool,
    pub record_trajectory: bool,
}

impl EpisodeOptions {
    pub fn training(seed: u64, episode: usize) -> Self {
        EpisodeOptions {
            seed,
            episode,
            train: true,
            extend: false,
            record_trajectory: false,
        }
    }

    pub fn evaluation(seed: u64) -> Self {
        EpisodeOptions {
            seed,
            episode: 0,
            train: false,
            extend: false,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub seed: u64,
    pub episode: usize,
    pub reward: f64,
    pub steps: usize,
    pub outcome: Outcome,
    /// CPU time spent in updates and extension, ms.
    pub opt_ms: f64,
    /// The action space was widened during this episode.
    pub extended: bool,
    /// Action dimension at the end of the episode.
    pub action_dim: usize,
    /// Sum over steps of `‖f‖`, N.
    pub force_sum: f64,
    /// Sum over steps of `‖m‖`, N·mm.
    pub moment_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub record: EpisodeRecord,
    /// Initial state plus one row per step, if requested.
    pub trajectory: Vec<TrajectoryRow>,
}

/// Runs `env` (already reset) to termination under `agent`.
pub fn run_episode(agent: &mut Agent, env: &mut AssemblyEnv, opts: EpisodeOptions) -> Result<EpisodeResult> {
    let mut clock = CpuStopwatch::default();
    let mut extended = false;
    if opts.extend {
        extended = clock.time(|| agent.request_extension())?;
    }
    let baseline = env.config().baseline_gains;
    let clamp = env.config().modulation_clamp;
    let mut trajectory = Vec::new();
    if opts.record_trajectory {
        let s = env.state();
        trajectory.push(TrajectoryRow {
            step: 0,
            pose: s.pose,
            wrench: s.wrench,
            reward: 0.0,
        });
    }
    let mut total = 0.0;
    let mut force_sum = 0.0;
    let mut moment_sum = 0.0;

    while !env.state().done.is_terminal() {
        let state = env.state().observation.clone();
        let (action, noise, taken) = if !opts.train {
            (agent.greedy_action(&state)?, [0.0; 6], None)
        } else {
            match &mut agent.learner {
                Learner::Ddpg(a) => {
                    let (act, n) = a.act(&state, true)?;
                    let stored = act.iter().zip(&n).map(|(x, y)| (x + y).clamp(-clamp, clamp)).collect();
                    let (act, n) = (agent.to_controller(&act)?, agent.to_controller(&n)?);
                    (act, n, Some(Taken::Ddpg(stored)))
                }
                Learner::Ppo(a) => {
                    let sample = a.act(&state)?;
                    (agent.to_controller(&sample.action)?, [0.0; 6], Some(Taken::Ppo(sample)))
                }
            }
        };
        let gains = modulate_gains(&action, &noise, &baseline, clamp);
        let reward = env.step(&gains)?;
        let next = env.state();
        total += reward;
        force_sum += next.wrench.force_norm();
        moment_sum += next.wrench.moment_norm();
        if opts.record_trajectory {
            trajectory.push(TrajectoryRow {
                step: next.step_index,
                pose: next.pose,
                wrench: next.wrench,
                reward,
            });
        }
        if !opts.train {
            continue;
        }
        let done = matches!(next.done, Outcome::Success | Outcome::Jammed);
        let truncated = next.done == Outcome::Timeout;
        let next_state = next.observation.clone();
        match (&mut agent.learner, taken) {
            (Learner::Ddpg(a), Some(Taken::Ddpg(stored))) => {
                a.remember(Transition {
                    state,
                    action: stored,
                    reward,
                    next_state,
                    done,
                })?;
                if opts.episode >= a.config().warmup_episodes && a.buffer().len() >= a.config().batch_size {
                    for _ in 0..a.config().updates_per_step {
                        clock.time(|| a.update())?;
                    }
                }
            }
            (Learner::Ppo(a), Some(Taken::Ppo(sample))) => {
                a.remember(RolloutStep {
                    state,
                    raw_action: sample.raw_action,
                    log_prob: sample.log_prob,
                    reward,
                    next_state,
                    done,
                    truncated,
                })?;
                if a.store_is_full() {
                    clock.time(|| a.update())?;
                    if agent.pending_extension {
                        clock.time(|| a.extend(&agent.map))?;
                        agent.pending_extension = false;
                        extended = true;
                    }
                }
            }
            _ => unreachable!("training step without a matching action record"),
        }
    }
    if opts.train {
        if let Learner::Ddpg(a) = &mut agent.learner {
            a.end_episode();
        }
    }
    let s = env.state();
    Ok(EpisodeResult {
        record: EpisodeRecord {
            seed: opts.seed,
            episode: opts.episode,
            reward: total,
            steps: s.step_index,
            outcome: s.done,
            opt_ms: clock.total().as_secs_f64() * 1e3,
            extended,
            action_dim: agent.action_dim(),
            force_sum,
            moment_sum,
        },
        trajectory,
    })
}

/// What a training step has to store besides the observed transition.
enum Taken {
    /// `clamp(a + a_n)` in the agent's own dimension.
    Ddpg(Vec<f64>),
    Ppo(ppo::PpoSample),
}
