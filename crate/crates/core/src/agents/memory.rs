use rand::Rng;

use crate::error::{Error, Result};
use crate::mapping::MappingMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    /// True termination (success or jam). Timeouts are not terminal.
    pub done: bool,
}

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            items: Vec::with_capacity(capacity.min(4096)),
            capacity,
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> &Transition {
        &self.items[i]
    }

    /// Indices of a uniformly drawn batch, without replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.items.is_empty() {
            return Err(Error::Agent("cannot sample from an empty replay buffer".into()));
        }
        let n = batch.min(self.items.len());
        Ok(rand::seq::index::sample(rng, self.items.len(), n).into_vec())
    }

    /// Lifts every stored action through `map`. Rewards and states are untouched.
    pub fn remap_actions(&mut self, map: &MappingMatrix) -> Result<()> {
        for t in &mut self.items {
            t.action = map.remap_action_record(&t.action)?;
        }
        Ok(())
    }
}

/// One on-policy sample as stored by PPO.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutStep {
    pub state: Vec<f64>,
    /// Unclipped sample drawn from the Gaussian policy.
    pub raw_action: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
    /// Episode ended without termination (timeout); the return bootstraps.
    pub truncated: bool,
}

/// Clearable on-policy store.
#[derive(Debug, Clone, Default)]
pub struct RolloutStore {
    steps: Vec<RolloutStep>,
    capacity: usize,
}

impl RolloutStore {
    pub fn new(capacity: usize) -> Self {
        RolloutStore {
            steps: Vec::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, step: RolloutStep) {
        self.steps.push(step);
    }

    pub fn is_full(&self) -> bool {
        self.steps.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn steps(&self) -> &[RolloutStep] {
        &self.steps
    }

    pub fn clear(&mut self) {
        self.steps.clear();
    }
}
