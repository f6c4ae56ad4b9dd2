//! Learning agents for both environments, their replay storage and the baselines.

mod ddpg;
mod dqn;

use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dialogue::PromptStrategy;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Network};

pub use ddpg::{DdpgAgent, DdpgConfig, DdpgLosses};
pub use dqn::{DqnAgent, DqnConfig, EpsilonSchedule};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition<A> {
    pub state: Vec<f64>,
    pub action: A,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl<A> Transition<A> {
    pub fn new(state: Vec<f64>, action: A, reward: f64, next_state: Vec<f64>, done: bool) -> Result<Self> {
        if state.len() != next_state.len() {
            return Err(Error::Config(format!(
                "state has size {}, next state {}",
                state.len(),
                next_state.len()
            )));
        }
        if !reward.is_finite() {
            return Err(Error::Diverged(format!("non-finite reward {reward}")));
        }
        Ok(Self {
            state,
            action,
            reward,
            next_state,
            done,
        })
    }
}

/// Fixed-capacity FIFO ring of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<A> {
    capacity: usize,
    items: Vec<Transition<A>>,
    next: usize,
}

impl<A> ReplayBuffer<A> {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be ≥ 1".into()));
        }
        Ok(Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, t: Transition<A>) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// Stored transitions from oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition<A>> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(self.items[..split].iter())
    }

    /// Uniform sample of distinct transitions; the whole buffer when it is smaller.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Vec<&Transition<A>> {
        let n = batch.min(self.items.len());
        index::sample(rng, self.items.len(), n)
            .into_iter()
            .map(|i| &self.items[i])
            .collect()
    }
}

/// What an update call did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UpdateOutcome<L> {
    Skipped { size: usize, needed: usize },
    Trained(L),
}

impl<L> UpdateOutcome<L> {
    pub fn trained(&self) -> Option<&L> {
        match self {
            UpdateOutcome::Trained(l) => Some(l),
            UpdateOutcome::Skipped { .. } => None,
        }
    }
}

/// Scales `grads` so their Euclidean norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| *g *= s);
    }
    norm
}

pub(crate) fn add_into(acc: &mut [f64], g: &[f64]) {
    acc.iter_mut().zip(g).for_each(|(a, b)| *a += b);
}

/// Lowest index among the maxima.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Uniform queries over `[−bound, bound]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomContinuous {
    pub bound: f64,
}

impl RandomContinuous {
    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        rng.random_range(-self.bound..=self.bound)
    }
}

/// Uniform choice among `n` discrete actions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomDiscrete {
    pub n: usize,
}

impl RandomDiscrete {
    pub fn act<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.random_range(0..self.n)
    }
}

/// The same strategy every round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedStrategy(pub PromptStrategy);

impl FixedStrategy {
    pub fn act(&self) -> usize {
        self.0.index()
    }
}

#[derive(Serialize, Deserialize)]
struct AgentHeader<C> {
    kind: String,
    config: C,
    networks: Vec<(String, String, usize)>,
}

/// Packs named networks and a config into one checkpoint.
pub(crate) fn pack<C: Serialize>(kind: &str, config: &C, nets: &[(&str, &Network)]) -> Result<Checkpoint> {
    let header = AgentHeader {
        kind: kind.to_string(),
        config,
        networks: nets
            .iter()
            .map(|(n, net)| (n.to_string(), net.descriptor(), net.param_count()))
            .collect(),
    };
    let header = serde_json::to_string(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let params = nets.iter().flat_map(|(_, n)| n.params()).collect();
    Ok(Checkpoint { header, params })
}

/// Inverse of [`pack`]: returns the config and the networks in header order.
pub(crate) fn unpack<C: for<'de> Deserialize<'de>>(ck: &Checkpoint, kind: &str) -> Result<(C, Vec<Network>)> {
    let header: AgentHeader<C> =
        serde_json::from_str(&ck.header).map_err(|e| Error::Checkpoint(format!("unreadable agent header: {e}")))?;
    if header.kind != kind {
        return Err(Error::Checkpoint(format!(
            "expected a {kind} checkpoint, found {}",
            header.kind
        )));
    }
    let total: usize = header.networks.iter().map(|n| n.2).sum();
    if total != ck.params.len() {
        return Err(Error::Checkpoint(format!(
            "header declares {total} parameters, file holds {}",
            ck.params.len()
        )));
    }
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    let mut offset = 0;
    let mut nets = Vec::new();
    for (name, desc, count) in &header.networks {
        let mut net = Network::from_descriptor(desc, &mut rng)
            .map_err(|e| Error::Checkpoint(format!("network `{name}`: {e}")))?;
        if net.param_count() != *count {
            return Err(Error::Checkpoint(format!("network `{name}` parameter count mismatch")));
        }
        net.set_params(&ck.params[offset..offset + count])?;
        offset += count;
        nets.push(net);
    }
    Ok((header.config, nets))
}

pub(crate) fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Checkpoint::load(path)
}
