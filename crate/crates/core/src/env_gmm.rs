//! Continuous elicitation environment over a three-component Gaussian mixture.
//!
//! Each episode samples a truth mixture (uniform weights) and a user mixture with
//! the same components (Dirichlet weights when biased). A step takes a scalar
//! query, perturbs it into the user's interpretation, lets the user pick the most
//! probable category there, samples a response from that category, refits the
//! estimate by EM and rewards the normalized reduction in matched-component KL.

use std::io::Write;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::{
    fit_em, mixture_distance, sample_dirichlet, sample_response, select_category, Category, DirichletParams, EmOptions,
    Gaussian1D, Mixture,
};
use crate::reward;

const GEOMETRY_ATTEMPTS: usize = 100;
/// Cap applied to the distance before it is exposed in the observation.
pub const OBSERVED_DISTANCE_CAP: f64 = 10.0;
/// Default variance floor of the estimate refits: half the smallest variance a
/// truth component can have.
pub const ESTIMATE_VARIANCE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ObservationMode {
    /// `[last response, round / horizon, min(d, 10) / 10]`.
    #[default]
    Full,
    /// `[last response]` only.
    Scalar,
}

impl ObservationMode {
    pub fn dim(self) -> usize {
        match self {
            ObservationMode::Full => 3,
            ObservationMode::Scalar => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmEpisodeConfig {
    pub mean_range: [f64; 2],
    pub pairwise_distance_range: [f64; 2],
    pub variance_range: [f64; 2],
    pub dirichlet: Vec<f64>,
    pub biased: bool,
    pub horizon: usize,
    pub interpretation_noise_std: f64,
    pub warmup_samples: usize,
    pub action_bound: f64,
    pub observation: ObservationMode,
    /// Every this many rounds the warm-started fit competes with a cold restart.
    pub cold_restart_every: usize,
    pub em: EmOptions,
}

impl Default for GmmEpisodeConfig {
    fn default() -> Self {
        Self {
            mean_range: [-10.0, 10.0],
            pairwise_distance_range: [4.0, 5.0],
            variance_range: [1.0, 8.0],
            dirichlet: vec![3.0, 2.0, 1.0],
            biased: false,
            horizon: 500,
            interpretation_noise_std: 0.5,
            warmup_samples: 10,
            action_bound: 12.0,
            observation: ObservationMode::Full,
            cold_restart_every: 100,
            em: EmOptions {
                variance_floor: ESTIMATE_VARIANCE_FLOOR,
                ..EmOptions::default()
            },
        }
    }
}

impl GmmEpisodeConfig {
    pub const COMPONENTS: usize = 3;

    pub fn validate(&self) -> Result<()> {
        let range = |name: &str, r: [f64; 2]| {
            if !(r[0].is_finite() && r[1].is_finite() && r[0] < r[1]) {
                return Err(Error::Config(format!("{name} [{}, {}] is degenerate", r[0], r[1])));
            }
            Ok(())
        };
        range("mean-range", self.mean_range)?;
        range("pairwise-distance-range", self.pairwise_distance_range)?;
        range("variance-range", self.variance_range)?;
        if self.pairwise_distance_range[0] < 0.0 || self.variance_range[0] <= 0.0 {
            return Err(Error::Config("distances must be ≥ 0 and variances > 0".into()));
        }
        if self.dirichlet.len() != Self::COMPONENTS {
            return Err(Error::Config(format!("dirichlet needs {} alphas", Self::COMPONENTS)));
        }
        DirichletParams::new(self.dirichlet.clone())?;
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be ≥ 1".into()));
        }
        if self.warmup_samples < Self::COMPONENTS {
            return Err(Error::Config(format!(
                "warm-up needs at least {} samples",
                Self::COMPONENTS
            )));
        }
        if !(self.interpretation_noise_std >= 0.0 && self.action_bound > 0.0) {
            return Err(Error::Config("noise std must be ≥ 0 and action bound > 0".into()));
        }
        Ok(())
    }

    pub fn observation_dim(&self) -> usize {
        self.observation.dim()
    }
}

/// Everything the environment tracks within one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmEnvState {
    pub truth: Mixture,
    pub user: Mixture,
    pub responses: Vec<f64>,
    pub estimate: Option<Mixture>,
    pub prev_distance: Option<f64>,
    pub round: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub query: f64,
    pub interpretation: f64,
    pub selected_category: Category,
    pub response: f64,
    pub distance: Option<f64>,
    /// Unclipped normalized gain when it is defined.
    pub raw_gain: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub diagnostics: StepDiagnostics,
}

/// Samples a fresh episode: truth and user mixtures plus an empty response log.
pub fn reset<R: Rng + ?Sized>(config: &GmmEpisodeConfig, rng: &mut R) -> Result<GmmEnvState> {
    config.validate()?;
    let [lo, hi] = config.mean_range;
    let [gap_lo, gap_hi] = config.pairwise_distance_range;
    let mut means = None;
    for _ in 0..GEOMETRY_ATTEMPTS {
        let g1 = rng.random_range(gap_lo..=gap_hi);
        let g2 = rng.random_range(gap_lo..=gap_hi);
        let span = g1 + g2;
        if span > hi - lo {
            continue;
        }
        let low = rng.random_range(lo..=hi - span);
        means = Some([low + span, low + g1, low]);
        break;
    }
    let means = means.ok_or_else(|| {
        Error::Config(format!(
            "cannot place three means with gaps in [{gap_lo}, {gap_hi}] inside [{lo}, {hi}]"
        ))
    })?;
    let [v_lo, v_hi] = config.variance_range;
    let mut vars: Vec<f64> = (0..3).map(|_| rng.random_range(v_lo..=v_hi)).collect();
    vars.sort_by(|a, b| b.total_cmp(a));

    let comps = means
        .iter()
        .zip(&vars)
        .map(|(m, v)| Gaussian1D::new(*m, *v))
        .collect::<Result<Vec<_>>>()?;
    let truth = Mixture::uniform(comps)?;
    // Drawn even when unbiased.
    let biased_weights = sample_dirichlet(&DirichletParams::new(config.dirichlet.clone())?, rng);
    let user = if config.biased {
        truth.with_weights(biased_weights)?
    } else {
        truth.clone()
    };
    Ok(GmmEnvState {
        truth,
        user,
        responses: Vec::new(),
        estimate: None,
        prev_distance: None,
        round: 0,
    })
}

/// Distance of the current estimate to the truth.
pub fn current_distance(state: &GmmEnvState, config: &GmmEpisodeConfig) -> Result<f64> {
    match &state.estimate {
        Some(est) => mixture_distance(est, &state.truth),
        None => Err(Error::NotYetEstimable {
            responses: state.responses.len(),
            warmup: config.warmup_samples,
        }),
    }
}

/// Gym-style wrapper holding the configuration and the live episode state.
#[derive(Debug, Clone)]
pub struct GmmEnv {
    config: GmmEpisodeConfig,
    state: Option<GmmEnvState>,
}

impl GmmEnv {
    pub fn new(config: GmmEpisodeConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config, state: None })
    }

    pub fn config(&self) -> &GmmEpisodeConfig {
        &self.config
    }

    pub fn state(&self) -> Option<&GmmEnvState> {
        self.state.as_ref()
    }

    pub fn state_mut(&mut self) -> Option<&mut GmmEnvState> {
        self.state.as_mut()
    }

    /// Starts a new episode and returns the initial observation.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<Vec<f64>> {
        self.state = Some(reset(&self.config, rng)?);
        Ok(self.observe(0.0, None, 0))
    }

    fn observe(&self, response: f64, distance: Option<f64>, round: usize) -> Vec<f64> {
        match self.config.observation {
            ObservationMode::Scalar => vec![response],
            ObservationMode::Full => vec![
                response,
                round as f64 / self.config.horizon as f64,
                distance.map_or(1.0, |d| d.min(OBSERVED_DISTANCE_CAP) / OBSERVED_DISTANCE_CAP),
            ],
        }
    }

    pub fn current_distance(&self) -> Result<f64> {
        let state = self
            .state
            .as_ref()
            .ok_or_else(|| Error::Usage("environment not reset".into()))?;
        current_distance(state, &self.config)
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: f64, rng: &mut R) -> Result<StepOutcome> {
        let config = &self.config;
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        if state.round >= config.horizon {
            return Err(Error::Usage(format!(
                "episode finished after {} rounds",
                config.horizon
            )));
        }
        if action.is_nan() {
            return Err(Error::Usage("query is NaN".into()));
        }
        let query = action.clamp(-config.action_bound, config.action_bound);
        let noise = Normal::new(0.0, config.interpretation_noise_std)
            .map_err(|e| Error::Config(e.to_string()))?
            .sample(rng);
        let interpretation = query + noise;
        let c = select_category(interpretation, &state.user);
        let response = sample_response(c, &state.user, rng)?;
        state.responses.push(response);
        state.round += 1;

        let mut reward = 0.0;
        let mut distance = None;
        let mut raw_gain = None;
        if state.responses.len() >= config.warmup_samples {
            let k = GmmEpisodeConfig::COMPONENTS;
            let warm = fit_em(&state.responses, k, state.estimate.as_ref(), &config.em)?;
            let fit = if state.estimate.is_some()
                && config.cold_restart_every > 0
                && state.round % config.cold_restart_every == 0
            {
                let cold = fit_em(&state.responses, k, None, &config.em)?;
                if cold.final_log_likelihood() > warm.final_log_likelihood() {
                    cold
                } else {
                    warm
                }
            } else {
                warm
            };
            let d = mixture_distance(&fit.mixture, &state.truth)?;
            if let Some(prev) = state.prev_distance {
                raw_gain = reward::raw_gain(prev, d);
                reward = reward::normalized_gain(prev, d);
            }
            state.estimate = Some(fit.mixture);
            state.prev_distance = Some(d);
            distance = Some(d);
        }
        let round = state.round;
        let done = round == config.horizon;
        Ok(StepOutcome {
            observation: self.observe(response, distance, round),
            reward,
            done,
            diagnostics: StepDiagnostics {
                query,
                interpretation,
                selected_category: Category::from_index(c).expect("three categories"),
                response,
                distance,
                raw_gain,
            },
        })
    }
}

/// Optional per-step CSV log: `run,episode,step,action,category,response,distance,reward`.
pub struct TrajectoryLog<W: Write> {
    writer: W,
}

impl<W: Write> TrajectoryLog<W> {
    pub fn new(mut writer: W) -> std::io::Result<Self> {
        writeln!(writer, "run,episode,step,action,category,response,distance,reward")?;
        Ok(Self { writer })
    }

    pub fn record(&mut self, run: u64, episode: usize, step: usize, out: &StepOutcome) -> std::io::Result<()> {
        let d = &out.diagnostics;
        writeln!(
            self.writer,
            "{run},{episode},{step},{},{},{},{},{}",
            d.query,
            d.selected_category,
            d.response,
            d.distance.map(|v| v.to_string()).unwrap_or_default(),
            out.reward
        )
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}
