use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Gaussian1D, Mixture, VARIANCE_FLOOR};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmOptions {
    pub max_iterations: usize,
    /// Stop once the relative log-likelihood change drops below this.
    pub tolerance: f64,
    pub variance_floor: f64,
}

impl Default for EmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            tolerance: 1e-6,
            variance_floor: VARIANCE_FLOOR,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub mixture: Mixture,
    /// Log-likelihood of the initial parameters followed by one entry per M-step.
    pub log_likelihoods: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmFit {
    pub fn final_log_likelihood(&self) -> f64 {
        *self
            .log_likelihoods
            .last()
            .expect("at least the initial log-likelihood")
    }
}

/// Deterministic seeding: means at sample quantiles `(2c − 1)/2k` (listed in
/// descending order), variance = sample variance, uniform weights.
pub(crate) fn quantile_init(samples: &[f64], k: usize, floor: f64) -> Mixture {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = (sorted.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).max(floor);
    let comps = (1..=k)
        .rev()
        .map(|c| {
            let q = (2 * c - 1) as f64 / (2 * k) as f64;
            let idx = ((q * n).floor() as usize).min(sorted.len() - 1);
            Gaussian1D {
                mean: sorted[idx],
                variance: var,
            }
        })
        .collect();
    Mixture::uniform(comps).expect("uniform weights are valid")
}

/// Maximum-likelihood fit of a `k`-component mixture by expectation-maximization.
///
/// `init` warm-starts the iteration when it has `k` components; otherwise the
/// quantile seeding is used. Each M-step cannot decrease the log-likelihood: the
/// variance clamp is the constrained maximizer because the per-component
/// likelihood is unimodal in the variance.
pub fn fit_em(samples: &[f64], k: usize, init: Option<&Mixture>, opts: &EmOptions) -> Result<EmFit> {
    if k == 0 {
        return Err(Error::Config("EM needs k ≥ 1".into()));
    }
    if samples.len() < k {
        return Err(Error::InsufficientData {
            needed: k,
            got: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::Config("EM samples must be finite".into()));
    }
    let mut current = match init {
        Some(m) if m.k() == k => m.clone(),
        _ => quantile_init(samples, k, opts.variance_floor),
    };

    let n = samples.len();
    let mut resp = vec![0.0; n * k];
    let mut lls = Vec::new();
    let mut iterations = 0;
    let mut converged = false;

    loop {
        // E-step at the current parameters; its normalizer is the log-likelihood.
        let log_w: Vec<f64> = current.weights.iter().map(|w| w.ln()).collect();
        let mut ll = 0.0;
        let mut row = vec![0.0; k];
        for (i, x) in samples.iter().enumerate() {
            for (j, c) in current.components.iter().enumerate() {
                row[j] = log_w[j] + c.ln_pdf(*x);
            }
            let norm = log_sum_exp(&row);
            ll += norm;
            for j in 0..k {
                resp[i * k + j] = (row[j] - norm).exp();
            }
        }
        if let Some(prev) = lls.last().copied() {
            let change: f64 = (ll - prev) / f64::abs(prev).max(f64::MIN_POSITIVE);
            if change.abs() < opts.tolerance {
                converged = true;
            }
        }
        lls.push(ll);
        if converged || iterations >= opts.max_iterations {
            break;
        }

        // M-step.
        let mut comps = Vec::with_capacity(k);
        let mut weights = Vec::with_capacity(k);
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if nk < 1e-10 {
                comps.push(current.components[j]);
                weights.push(0.0);
                continue;
            }
            let mean = (0..n).map(|i| resp[i * k + j] * samples[i]).sum::<f64>() / nk;
            let var = (0..n)
                .map(|i| resp[i * k + j] * (samples[i] - mean).powi(2))
                .sum::<f64>()
                / nk;
            comps.push(Gaussian1D {
                mean,
                variance: var.max(opts.variance_floor),
            });
            weights.push(nk / n as f64);
        }
        let total: f64 = weights.iter().sum();
        weights.iter_mut().for_each(|w| *w /= total);
        current = Mixture {
            components: comps,
            weights,
        };
        iterations += 1;
    }

    Ok(EmFit {
        mixture: current,
        log_likelihoods: lls,
        iterations,
        converged,
    })
}
