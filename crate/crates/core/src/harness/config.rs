//! Experiment configuration (TOML).
//!
//! ```toml
//! [harness]
//! algorithm = "ddpg"
//! action_mode = "pead"
//! extension_scale = 150
//! episodes = 300
//! seeds = [0, 1, 2, 3, 4]
//! output_dir = "runs/ddpg-pead"
//!
//! [assembly_env]
//! jam_force = 50.0
//!
//! [agents.ddpg]
//! lr_actor = 1e-3
//! ```
//!
//! Every section and key is optional; unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agents::{ActionMode, AgentConfig, Algorithm};
use crate::assembly_env::{EnvConfig, PoseRange};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub algorithm: Algorithm,
    pub action_mode: ActionMode,
    /// Episode index at which a `pead` run widens its action space.
    /// Defaults to half the default horizon of the algorithm.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub extension_scale: Option<usize>,
    /// Defaults to 300 (DDPG) or 1200 (PPO).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub episodes: Option<usize>,
    pub seeds: Vec<u64>,
    /// Half-widths of the initial translational error, mm.
    pub pose_range_mm: [f64; 3],
    /// Half-widths of the initial rotational error, degrees.
    pub pose_range_deg: [f64; 3],
    pub output_dir: PathBuf,
    /// Seeds run concurrently on this many threads.
    pub workers: usize,
    pub save_checkpoints: bool,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            algorithm: Algorithm::Ddpg,
            action_mode: ActionMode::Pead,
            extension_scale: None,
            episodes: None,
            seeds: vec![0, 1, 2, 3, 4],
            pose_range_mm: [0.2; 3],
            pose_range_deg: [0.5; 3],
            output_dir: PathBuf::from("runs"),
            workers: 1,
            save_checkpoints: true,
        }
    }
}

pub fn default_episodes(algo: Algorithm) -> usize {
    match algo {
        Algorithm::Ddpg => 300,
        Algorithm::Ppo => 1200,
    }
}

pub fn default_extension_scale(algo: Algorithm) -> usize {
    match algo {
        Algorithm::Ddpg => 150,
        Algorithm::Ppo => 800,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub harness: HarnessConfig,
    pub assembly_env: EnvConfig,
    pub agents: AgentConfig,
}

impl ExperimentConfig {
    pub fn new(algorithm: Algorithm, action_mode: ActionMode) -> Self {
        let mut cfg = ExperimentConfig::default();
        cfg.harness.algorithm = algorithm;
        cfg.harness.action_mode = action_mode;
        cfg
    }

    pub fn episodes(&self) -> usize {
        self.harness
            .episodes
            .unwrap_or_else(|| default_episodes(self.harness.algorithm))
    }

    /// Extension episode of a `pead` run; `None` for the other modes.
    pub fn extension_scale(&self) -> Option<usize> {
        (self.harness.action_mode == ActionMode::Pead).then(|| {
            self.harness
                .extension_scale
                .unwrap_or_else(|| default_extension_scale(self.harness.algorithm))
        })
    }

    pub fn pose_range(&self) -> PoseRange {
        let h = &self.harness;
        PoseRange([
            h.pose_range_mm[0],
            h.pose_range_mm[1],
            h.pose_range_mm[2],
            h.pose_range_deg[0].to_radians(),
            h.pose_range_deg[1].to_radians(),
            h.pose_range_deg[2].to_radians(),
        ])
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.harness;
        if h.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        let mut sorted = h.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != h.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        let episodes = self.episodes();
        if episodes == 0 {
            return Err(Error::Config("episodes must be positive".into()));
        }
        if let Some(scale) = self.extension_scale() {
            if scale >= episodes {
                return Err(Error::Config(format!(
                    "extension_scale ({scale}) must be smaller than episodes ({episodes})"
                )));
            }
        } else if h.extension_scale.is_some() {
            return Err(Error::Config(format!(
                "extension_scale only applies to the pead mode, not {}",
                h.action_mode.as_str()
            )));
        }
        if h.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if h.pose_range_mm
            .iter()
            .chain(&h.pose_range_deg)
            .any(|v| v.is_nan() || *v < 0.0)
        {
            return Err(Error::Config("pose ranges must be nonnegative".into()));
        }
        self.assembly_env.validate()?;
        let a = &self.agents;
        if a.ddpg.batch_size == 0 || a.ddpg.buffer_capacity < a.ddpg.batch_size {
            return Err(Error::Config(
                "ddpg buffer_capacity must be at least batch_size > 0".into(),
            ));
        }
        if a.ppo.rollout_len == 0 || a.ppo.minibatch == 0 || a.ppo.epochs == 0 {
            return Err(Error::Config(
                "ppo rollout_len, minibatch and epochs must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("experiment config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }
}
