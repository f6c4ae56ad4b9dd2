//! Experiment orchestration: run configuration, per-seed training and evaluation,
//! metric CSVs, confidence intervals, SVG curves and mock corpora.

mod config;
mod metrics;
mod plot;
mod run;

pub use config::{AgentKind, DialogueSettings, Profile, RunConfig, Track};
pub use metrics::{
    read_metrics, read_metrics_file, round_curve, t_interval, write_metrics, write_metrics_file, Episodes, Interval,
    Metric, MetricRow, CSV_HEADER,
};
pub use plot::{emit_plots, load_series, render_svg, Series};
pub use run::{
    dialogue_split, embedder_for, evaluate_checkpoints, evaluate_experiment, method_dir, parallel_seeds,
    run_dialogue_seed, run_experiment, run_gmm_seed, run_in_memory, seed_rng, write_outputs, ExperimentResult,
    ExperimentSummary, Policy, SeedOutput, Stream,
};

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dialogue::{generate_cases, save_corpus, CaseFile};
use crate::error::Result;

/// Writes `n` generated cases to `path`; the same seed gives the same bytes.
pub fn generate_mock_corpus(n: usize, seed: u64, path: impl AsRef<Path>) -> Result<Vec<CaseFile>> {
    let cases = generate_cases(n, &mut ChaCha8Rng::seed_from_u64(seed));
    save_corpus(&cases, path)?;
    Ok(cases)
}
