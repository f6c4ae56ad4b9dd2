use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{add_into, clip_grad_norm, load_checkpoint, pack, unpack, ReplayBuffer, Transition, UpdateOutcome};
use crate::error::{Error, Result};
use crate::nn::{AdamConfig, AdamState, Network, NetworkBuilder};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DdpgConfig {
    pub hidden: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub gamma: f64,
    pub tau: f64,
    pub noise_std: f64,
    pub buffer_capacity: usize,
    pub min_replay: usize,
    pub batch_size: usize,
    pub action_bound: f64,
    /// Gradient-norm clip; zero disables it.
    pub grad_clip: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            actor_lr: 3e-3,
            critic_lr: 3e-2,
            gamma: 0.98,
            tau: 0.005,
            noise_std: 0.01,
            buffer_capacity: 30_000,
            min_replay: 3_000,
            batch_size: 64,
            action_bound: 12.0,
            grad_clip: 10.0,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
        }
    }
}

impl DdpgConfig {
    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            learning_rate: lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.adam_epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.buffer_capacity == 0 {
            return Err(Error::Config("hidden, batch and buffer sizes must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("tau and gamma must lie in [0, 1]".into()));
        }
        if !(self.action_bound > 0.0 && self.noise_std >= 0.0 && self.actor_lr >= 0.0 && self.critic_lr >= 0.0) {
            return Err(Error::Config("bound > 0, noise and learning rates ≥ 0 required".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DdpgLosses {
    pub critic: f64,
    /// Mean of −Q(s, μ(s)) over the batch.
    pub actor: f64,
}

/// Deterministic actor-critic. The actor ends in tanh and its output `u ∈ [−1, 1]`
/// is scaled by the action bound; the critic sees `state ⊕ u`.
#[derive(Debug, Clone)]
pub struct DdpgAgent {
    pub config: DdpgConfig,
    state_dim: usize,
    actor: Network,
    critic: Network,
    target_actor: Network,
    target_critic: Network,
    actor_opt: AdamState,
    critic_opt: AdamState,
}

impl DdpgAgent {
    pub const KIND: &'static str = "ddpg";

    pub fn new<R: Rng + ?Sized>(state_dim: usize, config: DdpgConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let actor = NetworkBuilder::new(state_dim)
            .dense(config.hidden)
            .relu()
            .dense(1)
            .tanh()
            .build(rng)?;
        let critic = NetworkBuilder::new(state_dim + 1)
            .dense(config.hidden)
            .relu()
            .dense(1)
            .build(rng)?;
        Self::assemble(state_dim, config, actor.clone(), critic.clone(), actor, critic)
    }

    fn assemble(
        state_dim: usize,
        config: DdpgConfig,
        actor: Network,
        critic: Network,
        target_actor: Network,
        target_critic: Network,
    ) -> Result<Self> {
        let actor_opt = AdamState::new(actor.param_count(), config.adam(config.actor_lr));
        let critic_opt = AdamState::new(critic.param_count(), config.adam(config.critic_lr));
        Ok(Self {
            config,
            state_dim,
            actor,
            critic,
            target_actor,
            target_critic,
            actor_opt,
            critic_opt,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Network {
        &mut self.actor
    }

    pub fn critic(&self) -> &Network {
        &self.critic
    }

    pub fn target_actor(&self) -> &Network {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Network {
        &self.target_critic
    }

    /// `bound · tanh(actor(state))`, plus Gaussian noise when exploring, clipped to the bound.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], explore: bool, rng: &mut R) -> Result<f64> {
        let bound = self.config.action_bound;
        let mut a = self.actor.forward(state)?[0] * bound;
        if explore && self.config.noise_std > 0.0 {
            a += Normal::new(0.0, self.config.noise_std)
                .map_err(|e| Error::Config(e.to_string()))?
                .sample(rng);
        }
        Ok(a.clamp(-bound, bound))
    }

    pub fn q_value(&self, state: &[f64], action: f64) -> Result<f64> {
        Ok(self
            .critic
            .forward(&critic_input(state, action / self.config.action_bound))?[0])
    }

    /// Bootstrapped critic targets `r + γ(1 − done)·Q'(s', μ'(s'))`.
    pub fn targets(&self, batch: &[&Transition<f64>]) -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|t| {
                if t.done {
                    return Ok(t.reward);
                }
                let u = self.target_actor.forward(&t.next_state)?[0];
                let q = self.target_critic.forward(&critic_input(&t.next_state, u))?[0];
                Ok(t.reward + self.config.gamma * q)
            })
            .collect()
    }

    pub fn update<R: Rng + ?Sized>(
        &mut self,
        buffer: &ReplayBuffer<f64>,
        rng: &mut R,
    ) -> Result<UpdateOutcome<DdpgLosses>> {
        if buffer.len() < self.config.min_replay.max(1) {
            return Ok(UpdateOutcome::Skipped {
                size: buffer.len(),
                needed: self.config.min_replay.max(1),
            });
        }
        let batch = buffer.sample(self.config.batch_size, rng);
        let n = batch.len() as f64;
        let bound = self.config.action_bound;
        let ys = self.targets(&batch)?;

        let mut critic_grad = vec![0.0; self.critic.param_count()];
        let mut critic_loss = 0.0;
        for (t, y) in batch.iter().zip(&ys) {
            let q = self.critic.forward_train(&critic_input(&t.state, t.action / bound))?[0];
            let err = q - y;
            critic_loss += err * err / n;
            add_into(&mut critic_grad, &self.critic.backward(&[2.0 * err / n])?.params);
        }
        if self.config.grad_clip > 0.0 {
            clip_grad_norm(&mut critic_grad, self.config.grad_clip);
        }
        self.critic_opt.step_network(&mut self.critic, &critic_grad)?;

        let mut actor_grad = vec![0.0; self.actor.param_count()];
        let mut actor_loss = 0.0;
        for t in &batch {
            let u = self.actor.forward_train(&t.state)?[0];
            let q = self.critic.forward_train(&critic_input(&t.state, u))?[0];
            actor_loss -= q / n;
            let dq_du = *self
                .critic
                .backward(&[1.0])?
                .input
                .last()
                .expect("critic input includes the action");
            add_into(&mut actor_grad, &self.actor.backward(&[-dq_du / n])?.params);
        }
        if self.config.grad_clip > 0.0 {
            clip_grad_norm(&mut actor_grad, self.config.grad_clip);
        }
        self.actor_opt.step_network(&mut self.actor, &actor_grad)?;

        self.target_critic.soft_update_from(&self.critic, self.config.tau)?;
        self.target_actor.soft_update_from(&self.actor, self.config.tau)?;
        if !(critic_loss.is_finite() && actor_loss.is_finite()) {
            return Err(Error::Diverged(format!("ddpg losses {critic_loss}, {actor_loss}")));
        }
        Ok(UpdateOutcome::Trained(DdpgLosses {
            critic: critic_loss,
            actor: actor_loss,
        }))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        pack(
            Self::KIND,
            &self.config,
            &[
                ("actor", &self.actor),
                ("critic", &self.critic),
                ("target_actor", &self.target_actor),
                ("target_critic", &self.target_critic),
            ],
        )?
        .save(path)
    }

    /// Loads a policy, rejecting one built for a different state size.
    pub fn load(path: impl AsRef<Path>, state_dim: usize) -> Result<Self> {
        let (config, nets): (DdpgConfig, _) = unpack(&load_checkpoint(path.as_ref())?, Self::KIND)?;
        let [actor, critic, target_actor, target_critic]: [Network; 4] = nets
            .try_into()
            .map_err(|_| Error::Checkpoint("ddpg checkpoint needs four networks".into()))?;
        if actor.input_dim() != state_dim || critic.input_dim() != state_dim + 1 || actor.output_dim() != 1 {
            return Err(Error::Checkpoint(format!(
                "policy expects state size {}, caller uses {state_dim}",
                actor.input_dim()
            )));
        }
        if target_actor.descriptor() != actor.descriptor() || target_critic.descriptor() != critic.descriptor() {
            return Err(Error::Checkpoint("target and online architectures differ".into()));
        }
        Self::assemble(state_dim, config, actor, critic, target_actor, target_critic)
    }
}

fn critic_input(state: &[f64], u: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(state.len() + 1);
    v.extend_from_slice(state);
    v.push(u);
    v
}
