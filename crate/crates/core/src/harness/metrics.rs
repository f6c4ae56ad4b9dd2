use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 5] = ["seed", "episode", "round", "metric", "value"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    KlDivergence,
    SimilarityScore,
    Reward,
    Epsilon,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::KlDivergence => "kl_divergence",
            Metric::SimilarityScore => "similarity_score",
            Metric::Reward => "reward",
            Metric::Epsilon => "epsilon",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kl_divergence" => Ok(Metric::KlDivergence),
            "similarity_score" => Ok(Metric::SimilarityScore),
            "reward" => Ok(Metric::Reward),
            "epsilon" => Ok(Metric::Epsilon),
            other => Err(Error::Schema(format!("unknown metric `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub seed: u64,
    pub episode: usize,
    pub round: usize,
    pub metric: Metric,
    pub value: f64,
}

pub fn write_metrics<W: Write>(rows: &[MetricRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Schema(format!("csv write: {e}"));
    out.write_record(CSV_HEADER).map_err(err)?;
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite {} at seed {} episode {}",
                r.metric, r.seed, r.episode
            )));
        }
        out.write_record([
            r.seed.to_string(),
            r.episode.to_string(),
            r.round.to_string(),
            r.metric.to_string(),
            r.value.to_string(),
        ])
        .map_err(err)?;
    }
    out.flush().map_err(|e| Error::io("metrics", e))
}

pub fn write_metrics_file(rows: &[MetricRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_metrics(rows, std::io::BufWriter::new(f))
}

pub fn read_metrics<R: Read>(r: R) -> Result<Vec<MetricRow>> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("csv header: {e}")))?
        .clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing column `{name}`")))
    };
    let idx = [
        col("seed")?,
        col("episode")?,
        col("round")?,
        col("metric")?,
        col("value")?,
    ];
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Schema(format!("csv record {}: {e}", line + 2)))?;
        let field = |i: usize| rec.get(idx[i]).unwrap_or("");
        let bad = |what: &str| Error::Schema(format!("row {}: bad {what}", line + 2));
        rows.push(MetricRow {
            seed: field(0).parse().map_err(|_| bad("seed"))?,
            episode: field(1).parse().map_err(|_| bad("episode"))?,
            round: field(2).parse().map_err(|_| bad("round"))?,
            metric: field(3).parse()?,
            value: field(4).parse().map_err(|_| bad("value"))?,
        });
    }
    Ok(rows)
}

pub fn read_metrics_file(path: impl AsRef<Path>) -> Result<Vec<MetricRow>> {
    let path = path.as_ref();
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_metrics(f)
}

/// Mean and 95% Student-t half-width over independent samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    pub n: usize,
}

impl Interval {
    pub fn lower(&self) -> f64 {
        self.mean - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.half_width
    }
}

pub fn t_interval(values: &[f64]) -> Interval {
    let n = values.len();
    if n == 0 {
        return Interval {
            mean: f64::NAN,
            half_width: 0.0,
            n,
        };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return Interval {
            mean,
            half_width: 0.0,
            n,
        };
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("degrees of freedom ≥ 1")
        .inverse_cdf(0.975);
    Interval {
        mean,
        half_width: t * (var / n as f64).sqrt(),
        n,
    }
}

/// Which episodes of each seed feed a per-round curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Episodes {
    /// The highest episode index present for the seed.
    Last,
    Only(usize),
    All,
}

/// Per-round curve for one metric: each seed's rows are averaged over the selected
/// episodes, then seeds are pooled into a t-interval.
pub fn round_curve(rows: &[MetricRow], metric: Metric, episodes: Episodes) -> Vec<(usize, Interval)> {
    let mut per_seed: BTreeMap<u64, BTreeMap<usize, (f64, usize)>> = BTreeMap::new();
    let last_episode: BTreeMap<u64, usize> =
        rows.iter()
            .filter(|r| r.metric == metric)
            .fold(BTreeMap::new(), |mut m, r| {
                let e = m.entry(r.seed).or_insert(r.episode);
                *e = (*e).max(r.episode);
                m
            });
    for r in rows.iter().filter(|r| r.metric == metric) {
        let keep = match episodes {
            Episodes::Last => r.episode == last_episode[&r.seed],
            Episodes::Only(e) => r.episode == e,
            Episodes::All => true,
        };
        if !keep {
            continue;
        }
        let slot = per_seed.entry(r.seed).or_default().entry(r.round).or_insert((0.0, 0));
        slot.0 += r.value;
        slot.1 += 1;
    }
    let mut by_round: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for rounds in per_seed.values() {
        for (round, (sum, n)) in rounds {
            by_round.entry(*round).or_default().push(sum / *n as f64);
        }
    }
    by_round.into_iter().map(|(r, v)| (r, t_interval(&v))).collect()
}
