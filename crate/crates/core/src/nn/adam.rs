use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// Per-parameter Adam moments with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(param_count: usize, config: AdamConfig) -> Self {
        Self {
            config,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    fn check(&self, params: usize, grads: &[f64]) -> Result<()> {
        if params != self.first_moment.len() || grads.len() != params {
            return Err(Error::Config(format!(
                "adam state for {} parameters given {params} parameters and {} gradients",
                self.first_moment.len(),
                grads.len()
            )));
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!("non-finite gradient at index {i}")));
        }
        Ok(())
    }

    /// Advances the moments and returns the per-parameter displacement to subtract.
    fn advance(&mut self, grads: &[f64]) -> Vec<f64> {
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        self.first_moment
            .iter_mut()
            .zip(self.second_moment.iter_mut())
            .zip(grads)
            .map(|((m, v), g)| {
                *m = beta1 * *m + (1.0 - beta1) * g;
                *v = beta2 * *v + (1.0 - beta2) * g * g;
                learning_rate * (*m / c1) / ((*v / c2).sqrt() + epsilon)
            })
            .collect()
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        self.check(params.len(), grads)?;
        let delta = self.advance(grads);
        params.iter_mut().zip(delta).for_each(|(p, d)| *p -= d);
        Ok(())
    }

    /// Gradient-descent step applied directly to a network's parameters.
    pub fn step_network(&mut self, net: &mut Network, grads: &[f64]) -> Result<()> {
        self.check(net.param_count(), grads)?;
        let delta = self.advance(grads);
        net.zip_params_mut(&delta, |p, d| *p -= d);
        Ok(())
    }
}
