//! DDPG with target networks, Gaussian action noise and experience replay.
//!
//! Actor: `state → hidden (relu) → action (linear)`, clipped downstream.
//! Critic: `[state, action] → hidden (relu) → hidden (relu) → 1`; the
//! action rows of the first weight matrix form the block that is widened
//! on extension.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::memory::{ReplayBuffer, Transition};
use super::noise::NoiseProcess;
use crate::dense_net::{apply_gradients, soft_update, Activation, DenseLayer, GradientSet, Mlp, Optimizer, Trace};
use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub tau: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Episodes collected before the first update.
    pub warmup_episodes: usize,
    pub updates_per_step: usize,
    pub hidden: usize,
    pub action_bound: f64,
    /// Quadratic penalty on actor outputs beyond `action_bound`.
    pub bound_penalty: f64,
    pub noise_sigma0: f64,
    pub noise_decay: f64,
    pub noise_sigma_min: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        DdpgConfig {
            lr_actor: 1e-3,
            lr_critic: 1e-2,
            tau: 1e-3,
            gamma: 0.99,
            batch_size: 64,
            buffer_capacity: 20_000,
            warmup_episodes: 30,
            updates_per_step: 1,
            hidden: 32,
            action_bound: 0.8,
            bound_penalty: 1.0,
            noise_sigma0: 0.3,
            noise_decay: 0.995,
            noise_sigma_min: 0.05,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdpgLosses {
    pub critic: f64,
    /// Mean `Q(s, π(s))` over the batch before the actor step.
    pub actor_q: f64,
}

#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub(crate) cfg: DdpgConfig,
    pub(crate) obs_dim: usize,
    pub(crate) action_dim: usize,
    pub(crate) actor: Mlp,
    pub(crate) critic: Mlp,
    pub(crate) target_actor: Mlp,
    pub(crate) target_critic: Mlp,
    pub(crate) actor_opt: Optimizer,
    pub(crate) critic_opt: Optimizer,
    pub(crate) buffer: ReplayBuffer,
    pub(crate) noise: NoiseProcess,
    pub(crate) rng: ChaCha8Rng,
}

pub(crate) fn clip(v: &[f64], bound: f64) -> Vec<f64> {
    v.iter().map(|x| x.clamp(-bound, bound)).collect()
}

impl DdpgAgent {
    pub fn new(obs_dim: usize, action_dim: usize, cfg: DdpgConfig, seed: u64) -> Result<Self> {
        if cfg.batch_size == 0 || cfg.hidden == 0 || !(0.0..=1.0).contains(&cfg.tau) {
            return Err(Error::Config(
                "ddpg: batch_size, hidden > 0 and tau in [0, 1] required".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = cfg.hidden;
        let actor = Mlp::random(
            &[obs_dim, h, action_dim],
            Activation::Relu,
            Activation::Linear,
            &mut rng,
        );
        let critic = Mlp::random(
            &[obs_dim + action_dim, h, h, 1],
            Activation::Relu,
            Activation::Linear,
            &mut rng,
        );
        let noise = NoiseProcess::new(action_dim, cfg.noise_sigma0, cfg.noise_decay, cfg.noise_sigma_min)?;
        Ok(DdpgAgent {
            actor_opt: Optimizer::adam(&actor),
            critic_opt: Optimizer::adam(&critic),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            noise,
            rng,
            obs_dim,
            action_dim,
            cfg,
        })
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.cfg
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn buffer_mut(&mut self) -> &mut ReplayBuffer {
        &mut self.buffer
    }

    pub fn noise(&self) -> &NoiseProcess {
        &self.noise
    }

    pub fn noise_mut(&mut self) -> &mut NoiseProcess {
        &mut self.noise
    }

    /// Unclipped actor output.
    pub fn policy_raw(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.actor.forward(state)
    }

    /// `Q(s, a)` of the online critic.
    pub fn q_value(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        if action.len() != self.action_dim {
            return Err(Error::shape("DdpgAgent::q_value", self.action_dim, action.len()));
        }
        let mut input = state.to_vec();
        input.extend_from_slice(action);
        Ok(self.critic.forward(&input)?[0])
    }

    /// Deterministic action clipped to the action bound, and (when
    /// exploring) a separate Gaussian noise sample.
    pub fn act(&mut self, state: &[f64], explore: bool) -> Result<(Vec<f64>, Vec<f64>)> {
        if state.len() != self.obs_dim {
            return Err(Error::shape("DdpgAgent::act", self.obs_dim, state.len()));
        }
        let action = clip(&self.actor.forward(state)?, self.cfg.action_bound);
        let noise = if explore {
            self.noise.sample(&mut self.rng)
        } else {
            vec![0.0; self.action_dim]
        };
        Ok((action, noise))
    }

    pub fn remember(&mut self, t: Transition) -> Result<()> {
        if t.action.len() != self.action_dim {
            return Err(Error::shape("DdpgAgent::remember", self.action_dim, t.action.len()));
        }
        self.buffer.push(t);
        Ok(())
    }

    pub fn end_episode(&mut self) {
        self.noise.end_episode();
    }

    /// One critic step toward the TD target, one actor step along
    /// `∇_a Q`, then soft target updates.
    pub fn update(&mut self) -> Result<DdpgLosses> {
        let idx = self.buffer.sample_indices(self.cfg.batch_size, &mut self.rng)?;
        let buffer = std::mem::replace(&mut self.buffer, ReplayBuffer::new(1));
        let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i)).collect();
        let out = self.update_on(&batch);
        self.buffer = buffer;
        out
    }

    pub fn update_on(&mut self, batch: &[&Transition]) -> Result<DdpgLosses> {
        if batch.is_empty() {
            return Err(Error::Agent("ddpg update needs a non-empty batch".into()));
        }
        let n = batch.len() as f64;
        let bound = self.cfg.action_bound;
        let mut trace = Trace::default();
        let mut input = Vec::with_capacity(self.obs_dim + self.action_dim);

        // Critic.
        let mut critic_grads = GradientSet::zeros_like(&self.critic);
        let mut critic_loss = 0.0;
        for t in batch {
            let target = if t.done {
                t.reward
            } else {
                let next_action = clip(&self.target_actor.forward(&t.next_state)?, bound);
                input.clear();
                input.extend_from_slice(&t.next_state);
                input.extend_from_slice(&next_action);
                t.reward + self.cfg.gamma * self.target_critic.forward(&input)?[0]
            };
            input.clear();
            input.extend_from_slice(&t.state);
            input.extend_from_slice(&t.action);
            self.critic.forward_trace(&input, &mut trace)?;
            let err = trace.output()[0] - target;
            critic_loss += 0.5 * err * err / n;
            self.critic.backward_trace(&trace, &[err / n], &mut critic_grads)?;
        }
        apply_gradients(
            &mut self.critic,
            &critic_grads,
            &mut self.critic_opt,
            self.cfg.lr_critic,
        )?;

        // Actor: straight-through gradient of -Q at the clipped action.
        let mut actor_grads = GradientSet::zeros_like(&self.actor);
        let mut scratch = GradientSet::zeros_like(&self.critic);
        let mut actor_trace = Trace::default();
        let mut mean_q = 0.0;
        for t in batch {
            self.actor.forward_trace(&t.state, &mut actor_trace)?;
            let raw = actor_trace.output().to_vec();
            input.clear();
            input.extend_from_slice(&t.state);
            input.extend(raw.iter().map(|a| a.clamp(-bound, bound)));
            self.critic.forward_trace(&input, &mut trace)?;
            mean_q += trace.output()[0] / n;
            let d_input = self.critic.backward_trace(&trace, &[-1.0 / n], &mut scratch)?;
            let upstream: Vec<f64> = d_input[self.obs_dim..]
                .iter()
                .zip(&raw)
                .map(|(g, &a)| {
                    let excess = a.abs() - bound;
                    let pen = if excess > 0.0 {
                        2.0 * self.cfg.bound_penalty * excess * a.signum() / n
                    } else {
                        0.0
                    };
                    g + pen
                })
                .collect();
            self.actor.backward_trace(&actor_trace, &upstream, &mut actor_grads)?;
        }
        apply_gradients(&mut self.actor, &actor_grads, &mut self.actor_opt, self.cfg.lr_actor)?;

        soft_update(&mut self.target_critic, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.target_actor, &self.actor, self.cfg.tau)?;
        Ok(DdpgLosses {
            critic: critic_loss,
            actor_q: mean_q,
        })
    }

    pub fn is_extended_by(&self, map: &MappingMatrix) -> bool {
        self.action_dim == map.full_dim()
    }

    /// Widens the action interface from `map.reduced_dim()` to
    /// `map.full_dim()` on online and target networks, the replay buffer
    /// and the noise process, preserving the policy and values.
    pub fn extend(&mut self, map: &MappingMatrix) -> Result<()> {
        if self.action_dim != map.reduced_dim() {
            return Err(Error::Agent(format!(
                "ddpg agent has action dimension {}, mapping expects {} (already extended?)",
                self.action_dim,
                map.reduced_dim()
            )));
        }
        for net in [&mut self.actor, &mut self.target_actor] {
            extend_actor(net, map)?;
        }
        for net in [&mut self.critic, &mut self.target_critic] {
            extend_critic(net, self.obs_dim, map)?;
        }
        let last = self.actor.layers().len() - 1;
        self.actor_opt.reset_layer(&self.actor, last);
        self.critic_opt.reset_layer(&self.critic, 0);
        self.buffer.remap_actions(map)?;
        self.noise.extend(map)?;
        self.action_dim = map.full_dim();
        Ok(())
    }
}

/// Applies the output-layer surgery to the last layer of `net`.
pub(crate) fn extend_actor(net: &mut Mlp, map: &MappingMatrix) -> Result<()> {
    let last = net.layers().len() - 1;
    let layer = &net.layers()[last];
    if layer.activation != Activation::Linear {
        return Err(Error::Agent("actor output layer must be linear to be extended".into()));
    }
    let (w, b) = map.extend_actor_output_layer(&layer.w, &layer.b)?;
    net.replace_layer(last, DenseLayer::new(w, b, Activation::Linear)?)
}

/// Applies the input-layer surgery to the action rows (`obs_dim..`) of the
/// first layer of `net`.
pub(crate) fn extend_critic(net: &mut Mlp, obs_dim: usize, map: &MappingMatrix) -> Result<()> {
    let first = &net.layers()[0];
    let (rows, hidden) = first.w.shape();
    if rows != obs_dim + map.reduced_dim() {
        return Err(Error::shape("extend_critic", obs_dim + map.reduced_dim(), rows));
    }
    let mut action_block = Matrix::zeros(map.reduced_dim(), hidden);
    for i in 0..map.reduced_dim() {
        action_block.row_mut(i).copy_from_slice(first.w.row(obs_dim + i));
    }
    let widened = map.extend_critic_action_input_layer(&action_block)?;
    let mut w = Matrix::zeros(obs_dim + map.full_dim(), hidden);
    for i in 0..obs_dim {
        w.row_mut(i).copy_from_slice(first.w.row(i));
    }
    for i in 0..map.full_dim() {
        w.row_mut(obs_dim + i).copy_from_slice(widened.row(i));
    }
    let layer = DenseLayer::new(w, first.b.clone(), first.activation)?;
    net.replace_layer(0, layer)
}
