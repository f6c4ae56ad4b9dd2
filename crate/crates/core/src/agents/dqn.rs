use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{add_into, argmax, clip_grad_norm, load_checkpoint, pack, unpack, ReplayBuffer, UpdateOutcome};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network, NetworkBuilder};

/// Linear decay from `start` to `end` over the leading `decay_fraction` of episodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_fraction: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.05,
            decay_fraction: 0.5,
        }
    }
}

impl EpsilonSchedule {
    pub fn at(&self, episode: usize, total_episodes: usize) -> f64 {
        let span = self.decay_fraction * total_episodes as f64;
        if span <= 0.0 {
            return self.end;
        }
        let frac = episode as f64 / span;
        if frac >= 1.0 {
            return self.end;
        }
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DqnConfig {
    pub hidden: usize,
    pub n_actions: usize,
    pub lr: f64,
    pub gamma: f64,
    pub target_sync_episodes: usize,
    pub buffer_capacity: usize,
    pub min_replay: usize,
    pub batch_size: usize,
    pub epsilon: EpsilonSchedule,
    /// Gradient-norm clip; zero disables it.
    pub grad_clip: f64,
    /// Force a uniform first action of each training episode.
    pub random_first_action_train: bool,
    /// Same for evaluation episodes.
    pub random_first_action_eval: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for DqnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            n_actions: 5,
            lr: 1e-2,
            gamma: 0.98,
            target_sync_episodes: 10,
            buffer_capacity: 2_000,
            min_replay: 500,
            batch_size: 64,
            epsilon: EpsilonSchedule::default(),
            grad_clip: 10.0,
            random_first_action_train: true,
            random_first_action_eval: false,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl DqnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.n_actions == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("dqn sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.gamma) || self.lr < 0.0 {
            return Err(Error::Config("gamma in [0, 1] and lr ≥ 0 required".into()));
        }
        Ok(())
    }
}

/// Q-network: two dense layers, ReLU, residual add of the first layer's output,
/// layer norm, two more ReLU dense layers and a linear head with one output per action.
#[derive(Debug, Clone)]
pub struct DqnAgent {
    pub config: DqnConfig,
    q: Network,
    target: Network,
    opt: AdamState,
}

impl DqnAgent {
    pub const KIND: &'static str = "dqn";

    pub fn new<R: Rng + ?Sized>(state_dim: usize, config: DqnConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let h = config.hidden;
        let q = NetworkBuilder::new(state_dim)
            .dense(h)
            .dense(h)
            .relu()
            .skip_add(0)
            .layer_norm()
            .dense(h)
            .relu()
            .dense(h)
            .relu()
            .dense(config.n_actions)
            .build(rng)?;
        Ok(Self::assemble(config, q.clone(), q))
    }

    fn assemble(config: DqnConfig, q: Network, target: Network) -> Self {
        let opt = AdamState::new(
            q.param_count(),
            AdamConfig {
                learning_rate: config.lr,
                beta1: config.beta1,
                beta2: config.beta2,
                epsilon: config.adam_epsilon,
            },
        );
        Self { config, q, target, opt }
    }

    pub fn q_net(&self) -> &Network {
        &self.q
    }

    pub fn q_net_mut(&mut self) -> &mut Network {
        &mut self.q
    }

    pub fn target_net(&self) -> &Network {
        &self.target
    }

    pub fn state_dim(&self) -> usize {
        self.q.input_dim()
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.q.forward(state)
    }

    pub fn greedy(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.q_values(state)?))
    }

    /// ε-greedy: uniform with probability `epsilon`, else the lowest-index argmax.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], epsilon: f64, rng: &mut R) -> Result<usize> {
        if epsilon > 0.0 && rng.random_bool(epsilon.clamp(0.0, 1.0)) {
            return Ok(rng.random_range(0..self.config.n_actions));
        }
        self.greedy(state)
    }

    pub fn sync_target(&mut self) -> Result<()> {
        self.target.copy_from(&self.q)
    }

    pub fn update<R: Rng + ?Sized>(&mut self, buffer: &ReplayBuffer<usize>, rng: &mut R) -> Result<UpdateOutcome<f64>> {
        let needed = self.config.min_replay.max(1);
        if buffer.len() < needed {
            return Ok(UpdateOutcome::Skipped {
                size: buffer.len(),
                needed,
            });
        }
        let batch = buffer.sample(self.config.batch_size, rng);
        let n = batch.len() as f64;
        let mut grad = vec![0.0; self.q.param_count()];
        let mut loss = 0.0;
        for t in &batch {
            if t.action >= self.config.n_actions {
                return Err(Error::Usage(format!("stored action {} out of range", t.action)));
            }
            let y = if t.done {
                t.reward
            } else {
                let next = self.target.forward(&t.next_state)?;
                t.reward + self.config.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let q = self.q.forward_train(&t.state)?;
            let err = q[t.action] - y;
            loss += err * err / n;
            let mut g = vec![0.0; q.len()];
            g[t.action] = 2.0 * err / n;
            add_into(&mut grad, &self.q.backward(&g)?.params);
        }
        if self.config.grad_clip > 0.0 {
            clip_grad_norm(&mut grad, self.config.grad_clip);
        }
        self.opt.step_network(&mut self.q, &grad)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("dqn loss {loss}")));
        }
        Ok(UpdateOutcome::Trained(loss))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        pack(Self::KIND, &self.config, &[("q", &self.q), ("target", &self.target)])?.save(path)
    }

    /// Loads a policy and checks its state size and action count.
    pub fn load(path: impl AsRef<Path>, state_dim: usize, n_actions: usize) -> Result<Self> {
        let (config, nets): (DqnConfig, _) = unpack(&load_checkpoint(path.as_ref())?, Self::KIND)?;
        let [q, target]: [Network; 2] = nets
            .try_into()
            .map_err(|_| Error::Checkpoint("dqn checkpoint needs two networks".into()))?;
        if q.output_dim() != n_actions || config.n_actions != n_actions {
            return Err(Error::Checkpoint(format!(
                "policy has {} actions, caller expects {n_actions}",
                q.output_dim()
            )));
        }
        if q.input_dim() != state_dim {
            return Err(Error::Checkpoint(format!(
                "policy expects state size {}, caller uses {state_dim}",
                q.input_dim()
            )));
        }
        if q.descriptor() != target.descriptor() {
            return Err(Error::Checkpoint("target and online architectures differ".into()));
        }
        Ok(Self::assemble(config, q, target))
    }
}
