//! One-dimensional Gaussian mixtures: densities, Dirichlet weights, posterior
//! category selection, response sampling, EM fitting and KL-based mixture distance.

mod assignment;
mod em;

pub use assignment::{hungarian, match_components, mixture_distance, AssignmentResult};
pub use em::{fit_em, EmFit, EmOptions};

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest variance any component may take.
pub const VARIANCE_FLOOR: f64 = 1e-4;

/// Disclosure categories in index order `+, 0, −`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Positive,
    Neutral,
    Negative,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Positive, Category::Neutral, Category::Negative];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Positive => "positive",
            Category::Neutral => "neutral",
            Category::Negative => "negative",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "positive" => Ok(Category::Positive),
            "neutral" => Ok(Category::Neutral),
            "negative" => Ok(Category::Negative),
            other => Err(format!("unknown category `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gaussian1D {
    pub mean: f64,
    pub variance: f64,
}

impl Gaussian1D {
    /// Builds a component, raising the variance to [`VARIANCE_FLOOR`] if needed.
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance < 0.0 {
            return Err(Error::Config(format!("invalid gaussian N({mean}, {variance})")));
        }
        Ok(Self {
            mean,
            variance: variance.max(VARIANCE_FLOOR),
        })
    }

    pub fn std_dev(&self) -> f64 {
        self.variance.sqrt()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        -0.5 * ((2.0 * PI * self.variance).ln() + (x - self.mean).powi(2) / self.variance)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = StandardNormal.sample(rng);
        self.mean + self.std_dev() * z
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mixture {
    components: Vec<Gaussian1D>,
    weights: Vec<f64>,
}

impl Mixture {
    pub fn new(components: Vec<Gaussian1D>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() || components.len() != weights.len() {
            return Err(Error::Config(format!(
                "mixture needs matching non-empty components ({}) and weights ({})",
                components.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config("mixture weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components, weights })
    }

    /// Mixture with equal weights over `components`.
    pub fn uniform(components: Vec<Gaussian1D>) -> Result<Self> {
        let k = components.len();
        Self::new(components, vec![1.0 / k as f64; k])
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Gaussian1D] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Same components with a different weight vector.
    pub fn with_weights(&self, weights: Vec<f64>) -> Result<Self> {
        Self::new(self.components.clone(), weights)
    }

    fn log_joint(&self, x: f64) -> Vec<f64> {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w.ln() + c.ln_pdf(x))
            .collect()
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        log_sum_exp(&self.log_joint(x))
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        samples.iter().map(|x| self.ln_pdf(*x)).sum()
    }
}

/// Plain-text form: `k=3 weights=a,b,c means=a,b,c variances=a,b,c`.
impl fmt::Display for Mixture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<f64>| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        write!(
            f,
            "k={} weights={} means={} variances={}",
            self.k(),
            join(self.weights.clone()),
            join(self.components.iter().map(|c| c.mean).collect()),
            join(self.components.iter().map(|c| c.variance).collect()),
        )
    }
}

impl FromStr for Mixture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut k = None;
        let (mut weights, mut means, mut vars) = (None, None, None);
        for field in s.split_whitespace() {
            let (key, value) = field
                .split_once('=')
                .ok_or_else(|| Error::Schema(format!("mixture field `{field}` lacks `=`")))?;
            let list = || -> Result<Vec<f64>> {
                value
                    .split(',')
                    .map(|v| v.parse::<f64>().map_err(|e| Error::Schema(format!("{key}: {e}"))))
                    .collect()
            };
            match key {
                "k" => k = Some(value.parse::<usize>().map_err(|e| Error::Schema(format!("k: {e}")))?),
                "weights" => weights = Some(list()?),
                "means" => means = Some(list()?),
                "variances" => vars = Some(list()?),
                other => return Err(Error::Schema(format!("unknown mixture field `{other}`"))),
            }
        }
        let missing = |n: &str| Error::Schema(format!("mixture record missing `{n}`"));
        let k = k.ok_or_else(|| missing("k"))?;
        let weights = weights.ok_or_else(|| missing("weights"))?;
        let means = means.ok_or_else(|| missing("means"))?;
        let vars = vars.ok_or_else(|| missing("variances"))?;
        if means.len() != k || vars.len() != k || weights.len() != k {
            return Err(Error::Schema(format!(
                "mixture record lists do not all have length {k}"
            )));
        }
        let comps = means
            .into_iter()
            .zip(vars)
            .map(|(m, v)| Gaussian1D::new(m, v))
            .collect::<Result<Vec<_>>>()?;
        Mixture::new(comps, weights)
    }
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletParams {
    pub alphas: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.iter().any(|a| !(a.is_finite() && *a > 0.0)) {
            return Err(Error::Config(format!(
                "dirichlet alphas must be positive, got {alphas:?}"
            )));
        }
        Ok(Self { alphas })
    }
}

/// Draws simplex weights by normalizing independent `Gamma(α_i, 1)` variates.
pub fn sample_dirichlet<R: Rng + ?Sized>(params: &DirichletParams, rng: &mut R) -> Vec<f64> {
    let draws: Vec<f64> = params
        .alphas
        .iter()
        .map(|a| Gamma::new(*a, 1.0).expect("alphas validated positive").sample(rng))
        .collect();
    let total: f64 = draws.iter().sum();
    draws.iter().map(|d| d / total).collect()
}

/// Posterior probability of each component given `x`, computed in log space.
pub fn posterior_category(x: f64, m: &Mixture) -> Vec<f64> {
    let lj = m.log_joint(x);
    let norm = log_sum_exp(&lj);
    lj.iter().map(|l| (l - norm).exp()).collect()
}

/// Index of the most probable component at `x`; ties go to the lowest index.
pub fn select_category(x: f64, m: &Mixture) -> usize {
    argmax(&posterior_category(x, m))
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in xs.iter().enumerate().skip(1) {
        if *v > xs[best] {
            best = i;
        }
    }
    best
}

/// Draws a response from component `c` of `m`.
pub fn sample_response<R: Rng + ?Sized>(c: usize, m: &Mixture, rng: &mut R) -> Result<f64> {
    let comp = m
        .components
        .get(c)
        .ok_or_else(|| Error::Config(format!("category {c} out of range for k={}", m.k())))?;
    Ok(comp.sample(rng))
}

/// Closed-form `KL(p ‖ q)` for univariate Gaussians.
pub fn kl_gaussian(p: &Gaussian1D, q: &Gaussian1D) -> f64 {
    let kl = 0.5 * (q.variance / p.variance).ln() + (p.variance + (p.mean - q.mean).powi(2)) / (2.0 * q.variance) - 0.5;
    kl.max(0.0)
}
