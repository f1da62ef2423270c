//! PPO with a clipped surrogate objective and a diagonal Gaussian policy.
//!
//! The actor is a shared relu trunk with two linear heads, one for the
//! mean and one for the log standard deviation. Actions are sampled from
//! the *old* actor, which is refreshed from the online actor after every
//! update, at which point the rollout store is cleared.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::ddpg::clip;
use super::memory::{RolloutStep, RolloutStore};
use crate::dense_net::{apply_gradients, Activation, DenseLayer, GradientSet, Mlp, Optimizer, Trace};
use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;
use crate::matrix::Matrix;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PpoConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub gamma: f64,
    pub clip_epsilon: f64,
    pub rollout_len: usize,
    pub epochs: usize,
    pub minibatch: usize,
    pub hidden: usize,
    pub action_bound: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    /// Initial bias of the log-std head.
    pub init_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        PpoConfig {
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            gamma: 0.99,
            clip_epsilon: 0.2,
            rollout_len: 512,
            epochs: 10,
            minibatch: 64,
            hidden: 64,
            action_bound: 0.8,
            log_std_min: -5.0,
            log_std_max: 1.0,
            init_log_std: 0.3_f64.ln(),
        }
    }
}

/// Trunk plus mean and log-std heads.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianActor {
    pub trunk: Mlp,
    pub mean: Mlp,
    pub log_std: Mlp,
}

/// Forward-pass cache of a [`GaussianActor`].
#[derive(Debug, Clone, Default)]
pub struct ActorTrace {
    trunk: Trace,
    mean: Trace,
    log_std: Trace,
}

/// Parameter gradients of a [`GaussianActor`].
#[derive(Debug, Clone, PartialEq)]
pub struct ActorGradients {
    pub trunk: GradientSet,
    pub mean: GradientSet,
    pub log_std: GradientSet,
}

impl ActorGradients {
    pub fn zeros_like(actor: &GaussianActor) -> Self {
        ActorGradients {
            trunk: GradientSet::zeros_like(&actor.trunk),
            mean: GradientSet::zeros_like(&actor.mean),
            log_std: GradientSet::zeros_like(&actor.log_std),
        }
    }
}

impl GaussianActor {
    fn random(obs_dim: usize, action_dim: usize, cfg: &PpoConfig, rng: &mut ChaCha8Rng) -> Self {
        let trunk = Mlp::random(&[obs_dim, cfg.hidden], Activation::Relu, Activation::Relu, rng);
        let mean = Mlp::random(&[cfg.hidden, action_dim], Activation::Linear, Activation::Linear, rng);
        let mut log_std = Mlp::random(&[cfg.hidden, action_dim], Activation::Linear, Activation::Linear, rng);
        log_std.layers_mut()[0].b.iter_mut().for_each(|b| *b = cfg.init_log_std);
        GaussianActor { trunk, mean, log_std }
    }

    pub fn action_dim(&self) -> usize {
        self.mean.output_dim()
    }

    /// Mean and unclamped log-std for `state`.
    pub fn distribution(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let h = self.trunk.forward(state)?;
        Ok((self.mean.forward(&h)?, self.log_std.forward(&h)?))
    }

    fn forward_trace(&self, state: &[f64], t: &mut ActorTrace) -> Result<()> {
        self.trunk.forward_trace(state, &mut t.trunk)?;
        let h = t.trunk.output().to_vec();
        self.mean.forward_trace(&h, &mut t.mean)?;
        self.log_std.forward_trace(&h, &mut t.log_std)
    }

    /// `log π(raw_action | state)` with the log-std clamped to `bounds`;
    /// fills `trace` for [`GaussianActor::log_prob_backward`].
    pub fn log_prob_forward(
        &self,
        state: &[f64],
        raw_action: &[f64],
        bounds: (f64, f64),
        trace: &mut ActorTrace,
    ) -> Result<f64> {
        self.forward_trace(state, trace)?;
        let ls: Vec<f64> = trace
            .log_std
            .output()
            .iter()
            .map(|v| v.clamp(bounds.0, bounds.1))
            .collect();
        Ok(gaussian_log_prob(raw_action, trace.mean.output(), &ls))
    }

    /// Adds `scale · ∇ log π` for the pass cached in `trace` to `grads`.
    /// A log-std output held by the clamp gets no gradient.
    pub fn log_prob_backward(
        &self,
        trace: &ActorTrace,
        raw_action: &[f64],
        bounds: (f64, f64),
        scale: f64,
        grads: &mut ActorGradients,
    ) -> Result<()> {
        let mean = trace.mean.output();
        let ls_raw = trace.log_std.output();
        let mut d_mean = Vec::with_capacity(mean.len());
        let mut d_ls = Vec::with_capacity(mean.len());
        for j in 0..mean.len() {
            let ls = ls_raw[j].clamp(bounds.0, bounds.1);
            let var = (2.0 * ls).exp();
            let diff = raw_action[j] - mean[j];
            d_mean.push(scale * diff / var);
            let inside = ls_raw[j] > bounds.0 && ls_raw[j] < bounds.1;
            d_ls.push(if inside { scale * (diff * diff / var - 1.0) } else { 0.0 });
        }
        let dh_mean = self.mean.backward_trace(&trace.mean, &d_mean, &mut grads.mean)?;
        let dh_ls = self.log_std.backward_trace(&trace.log_std, &d_ls, &mut grads.log_std)?;
        let dh: Vec<f64> = dh_mean.iter().zip(&dh_ls).map(|(a, b)| a + b).collect();
        self.trunk.backward_trace(&trace.trunk, &dh, &mut grads.trunk)?;
        Ok(())
    }
}

/// Diagonal-Gaussian log density.
pub fn gaussian_log_prob(x: &[f64], mean: &[f64], log_std: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(log_std)
        .map(|((&x, &m), &ls)| {
            let z = (x - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

/// PPO's clipped surrogate for one sample, `min(r·A, clip(r, 1±ε)·A)`,
/// and whether the unclipped branch is the active one.
pub fn clipped_surrogate(ratio: f64, advantage: f64, epsilon: f64) -> (f64, bool) {
    let unclipped = ratio * advantage;
    let clipped = ratio.clamp(1.0 - epsilon, 1.0 + epsilon) * advantage;
    if unclipped <= clipped {
        (unclipped, true)
    } else {
        (clipped, false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoLosses {
    /// Mean negative clipped surrogate over the last epoch.
    pub actor: f64,
    pub critic: f64,
}

#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub(crate) cfg: PpoConfig,
    pub(crate) obs_dim: usize,
    pub(crate) action_dim: usize,
    pub(crate) actor: GaussianActor,
    pub(crate) old_actor: GaussianActor,
    pub(crate) critic: Mlp,
    pub(crate) trunk_opt: Optimizer,
    pub(crate) mean_opt: Optimizer,
    pub(crate) log_std_opt: Optimizer,
    pub(crate) critic_opt: Optimizer,
    pub(crate) store: RolloutStore,
    pub(crate) rng: ChaCha8Rng,
}

/// Output of [`PpoAgent::act`].
#[derive(Debug, Clone, PartialEq)]
pub struct PpoSample {
    /// Clipped action sent to the controller.
    pub action: Vec<f64>,
    pub raw_action: Vec<f64>,
    /// Log density of `raw_action` under the old actor.
    pub log_prob: f64,
}

impl PpoAgent {
    pub fn new(obs_dim: usize, action_dim: usize, cfg: PpoConfig, seed: u64) -> Result<Self> {
        if cfg.rollout_len == 0 || cfg.epochs == 0 || cfg.minibatch == 0 || cfg.hidden == 0 {
            return Err(Error::Config(
                "ppo: rollout_len, epochs, minibatch, hidden must be > 0".into(),
            ));
        }
        if cfg.log_std_min >= cfg.log_std_max {
            return Err(Error::Config("ppo: log_std_min must be below log_std_max".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let actor = GaussianActor::random(obs_dim, action_dim, &cfg, &mut rng);
        let critic = Mlp::random(
            &[obs_dim, cfg.hidden, 1],
            Activation::Relu,
            Activation::Linear,
            &mut rng,
        );
        Ok(PpoAgent {
            trunk_opt: Optimizer::adam(&actor.trunk),
            mean_opt: Optimizer::adam(&actor.mean),
            log_std_opt: Optimizer::adam(&actor.log_std),
            critic_opt: Optimizer::adam(&critic),
            old_actor: actor.clone(),
            actor,
            critic,
            store: RolloutStore::new(cfg.rollout_len),
            rng,
            obs_dim,
            action_dim,
            cfg,
        })
    }

    pub fn config(&self) -> &PpoConfig {
        &self.cfg
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn actor(&self) -> &GaussianActor {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut GaussianActor {
        &mut self.actor
    }

    pub fn old_actor(&self) -> &GaussianActor {
        &self.old_actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn store(&self) -> &RolloutStore {
        &self.store
    }

    fn clamp_log_std(&self, ls: f64) -> f64 {
        ls.clamp(self.cfg.log_std_min, self.cfg.log_std_max)
    }

    /// Samples from the old actor's Gaussian; returns the clipped action,
    /// the raw sample and its log density.
    pub fn act(&mut self, state: &[f64]) -> Result<PpoSample> {
        if state.len() != self.obs_dim {
            return Err(Error::shape("PpoAgent::act", self.obs_dim, state.len()));
        }
        let (mean, ls) = self.old_actor.distribution(state)?;
        let ls: Vec<f64> = ls.iter().map(|&v| self.clamp_log_std(v)).collect();
        if mean.iter().chain(&ls).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy distribution"));
        }
        let raw: Vec<f64> = mean
            .iter()
            .zip(&ls)
            .map(|(&m, &l)| {
                let z: f64 = StandardNormal.sample(&mut self.rng);
                m + l.exp() * z
            })
            .collect();
        let log_prob = gaussian_log_prob(&raw, &mean, &ls);
        Ok(PpoSample {
            action: clip(&raw, self.cfg.action_bound),
            raw_action: raw,
            log_prob,
        })
    }

    /// Deterministic action (the clipped mean of the online actor).
    pub fn act_greedy(&self, state: &[f64]) -> Result<Vec<f64>> {
        let (mean, _) = self.actor.distribution(state)?;
        Ok(clip(&mean, self.cfg.action_bound))
    }

    pub fn value(&self, state: &[f64]) -> Result<f64> {
        Ok(self.critic.forward(state)?[0])
    }

    pub fn remember(&mut self, step: RolloutStep) -> Result<()> {
        if step.raw_action.len() != self.action_dim {
            return Err(Error::shape(
                "PpoAgent::remember",
                self.action_dim,
                step.raw_action.len(),
            ));
        }
        self.store.push(step);
        Ok(())
    }

    pub fn store_is_full(&self) -> bool {
        self.store.is_full()
    }

    /// Discounted returns, bootstrapping from the critic wherever the
    /// stored trajectory is cut without termination.
    fn returns(&self) -> Result<Vec<f64>> {
        let steps = self.store.steps();
        let mut out = vec![0.0; steps.len()];
        let mut running = 0.0;
        for i in (0..steps.len()).rev() {
            let s = &steps[i];
            let cut = s.truncated || i + 1 == steps.len();
            if s.done {
                running = 0.0;
            } else if cut {
                running = self.value(&s.next_state)?;
            }
            running = s.reward + self.cfg.gamma * running;
            out[i] = running;
        }
        Ok(out)
    }

    /// Runs the configured epochs over the rollout store, then refreshes
    /// the old actor and clears the store.
    pub fn update(&mut self) -> Result<PpoLosses> {
        if self.store.is_empty() {
            return Err(Error::Agent("ppo update needs a non-empty rollout store".into()));
        }
        let returns = self.returns()?;
        let steps = self.store.steps().to_vec();
        let mut advantages: Vec<f64> = steps
            .iter()
            .zip(&returns)
            .map(|(s, &g)| Ok(g - self.value(&s.state)?))
            .collect::<Result<_>>()?;
        let n = advantages.len() as f64;
        let mean = advantages.iter().sum::<f64>() / n;
        let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        for a in &mut advantages {
            *a = (*a - mean) / (std + 1e-8);
        }

        let mut order: Vec<usize> = (0..steps.len()).collect();
        let mut losses = PpoLosses {
            actor: 0.0,
            critic: 0.0,
        };
        for _ in 0..self.cfg.epochs {
            order.shuffle(&mut self.rng);
            losses = PpoLosses {
                actor: 0.0,
                critic: 0.0,
            };
            for chunk in order.chunks(self.cfg.minibatch) {
                let batch: Vec<(&RolloutStep, f64, f64)> =
                    chunk.iter().map(|&i| (&steps[i], advantages[i], returns[i])).collect();
                let l = self.step_minibatch(&batch)?;
                losses.actor += l.actor * chunk.len() as f64 / n;
                losses.critic += l.critic * chunk.len() as f64 / n;
            }
        }
        self.sync_old_actor();
        Ok(losses)
    }

    /// One gradient step on a minibatch of `(step, advantage, return)`.
    pub(crate) fn step_minibatch(&mut self, batch: &[(&RolloutStep, f64, f64)]) -> Result<PpoLosses> {
        let n = batch.len() as f64;
        let eps = self.cfg.clip_epsilon;
        let bounds = (self.cfg.log_std_min, self.cfg.log_std_max);
        let mut g_actor = ActorGradients::zeros_like(&self.actor);
        let mut g_critic = GradientSet::zeros_like(&self.critic);
        let mut at = ActorTrace::default();
        let mut ct = Trace::default();
        let mut actor_loss = 0.0;
        let mut critic_loss = 0.0;

        for &(step, adv, ret) in batch {
            let logp = self
                .actor
                .log_prob_forward(&step.state, &step.raw_action, bounds, &mut at)?;
            let ratio = (logp - step.log_prob).exp();
            let (surrogate, active) = clipped_surrogate(ratio, adv, eps);
            actor_loss -= surrogate / n;
            if active && adv != 0.0 {
                // d(-ratio·A)/d logp = -ratio·A
                let dlogp = -ratio * adv / n;
                self.actor
                    .log_prob_backward(&at, &step.raw_action, bounds, dlogp, &mut g_actor)?;
            }

            self.critic.forward_trace(&step.state, &mut ct)?;
            let err = ct.output()[0] - ret;
            critic_loss += 0.5 * err * err / n;
            self.critic.backward_trace(&ct, &[err / n], &mut g_critic)?;
        }

        let lr = self.cfg.lr_actor;
        apply_gradients(&mut self.actor.trunk, &g_actor.trunk, &mut self.trunk_opt, lr)?;
        apply_gradients(&mut self.actor.mean, &g_actor.mean, &mut self.mean_opt, lr)?;
        apply_gradients(&mut self.actor.log_std, &g_actor.log_std, &mut self.log_std_opt, lr)?;
        apply_gradients(&mut self.critic, &g_critic, &mut self.critic_opt, self.cfg.lr_critic)?;
        Ok(PpoLosses {
            actor: actor_loss,
            critic: critic_loss,
        })
    }

    /// Copies the online actor into the old actor and clears the store.
    pub fn sync_old_actor(&mut self) {
        self.old_actor = self.actor.clone();
        self.store.clear();
    }

    pub fn is_extended_by(&self, map: &MappingMatrix) -> bool {
        self.action_dim == map.full_dim()
    }

    /// Widens both actors' heads. Only legal at the sync boundary, i.e.
    /// with an empty rollout store; the critic is not touched.
    pub fn extend(&mut self, map: &MappingMatrix) -> Result<()> {
        if !self.store.is_empty() {
            return Err(Error::Agent(format!(
                "ppo extension must happen right after the old-actor sync; rollout store holds {} steps",
                self.store.len()
            )));
        }
        if self.action_dim != map.reduced_dim() {
            return Err(Error::Agent(format!(
                "ppo agent has action dimension {}, mapping expects {} (already extended?)",
                self.action_dim,
                map.reduced_dim()
            )));
        }
        let dup = duplication_matrix(map)?;
        for actor in [&mut self.actor, &mut self.old_actor] {
            let head = &actor.mean.layers()[0];
            let (w, b) = map.extend_actor_output_layer(&head.w, &head.b)?;
            actor
                .mean
                .replace_layer(0, DenseLayer::new(w, b, Activation::Linear)?)?;

            let head = &actor.log_std.layers()[0];
            let w = head.w.matmul(&dup)?;
            let b = dup.vecmul(&head.b)?;
            actor
                .log_std
                .replace_layer(0, DenseLayer::new(w, b, Activation::Linear)?)?;
        }
        self.mean_opt.reset_layer(&self.actor.mean, 0);
        self.log_std_opt.reset_layer(&self.actor.log_std, 0);
        self.action_dim = map.full_dim();
        Ok(())
    }
}

/// 0/1 matrix (`l×m`) copying, for every full dimension, the reduced
/// dimension that dominates its column of `pinv(F)`.
pub fn duplication_matrix(map: &MappingMatrix) -> Result<Matrix> {
    let pinv = map.f_pinv();
    let (l, m) = pinv.shape();
    let mut dup = Matrix::zeros(l, m);
    for j in 0..m {
        let (best, mag) = (0..l)
            .map(|i| (i, pinv[(i, j)].abs()))
            .fold((0, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if mag == 0.0 {
            return Err(Error::Agent(format!(
                "full action dimension {j} is not reachable from the reduced space"
            )));
        }
        dup[(best, j)] = 1.0;
    }
    Ok(dup)
}
