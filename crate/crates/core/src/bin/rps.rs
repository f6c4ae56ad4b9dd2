use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rps_core::harness::{
    emit_plots, evaluate_experiment, generate_mock_corpus, method_dir, run_experiment, AgentKind, Episodes,
    ExperimentSummary, Metric, Profile, RunConfig, Track,
};
use rps_core::{Error, Result};

#[derive(Parser)]
#[command(name = "rps", version, about = "Reinforcement prompt selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train DDPG (or run the random baseline) on the GMM track.
    GmmTrain(RunArgs),
    /// Evaluate saved GMM checkpoints.
    GmmEval(RunArgs),
    /// Train DQN (or run a baseline) on the dialogue track.
    DialogueTrain(RunArgs),
    /// Evaluate saved dialogue checkpoints.
    DialogueEval(RunArgs),
    /// Write a generated mock corpus.
    GenCorpus {
        #[arg(long, default_value_t = 60)]
        cases: usize,
        #[arg(long, default_value_t = 2024)]
        seed: u64,
        #[arg(long, default_value = "corpus.json")]
        out: PathBuf,
    },
    /// Plot metric CSVs as mean ± 95% CI curves.
    Plot {
        /// `label=path` pairs, one per method.
        #[arg(long = "input", required = true)]
        inputs: Vec<String>,
        #[arg(long, default_value = "kl_divergence")]
        metric: Metric,
        /// Plot only this episode index instead of averaging all episodes.
        #[arg(long)]
        episode: Option<usize>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML file whose keys mirror the run configuration fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated seed list.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long, default_value = "desk")]
    profile: Profile,
    #[arg(long)]
    out: Option<PathBuf>,
    /// ddpg, dqn, random or fixed:<strategy>.
    #[arg(long)]
    agent: Option<AgentKind>,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    /// GMM track: user with Dirichlet-weighted disclosure.
    #[arg(long)]
    biased: bool,
}

impl RunArgs {
    fn resolve(&self, track: Track) -> Result<RunConfig> {
        let base = RunConfig::profile(track, self.profile);
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_toml_file(path, &base)?,
            None => base,
        };
        if cfg.track != track {
            return Err(Error::Config(format!("config file is for the {:?} track", cfg.track)));
        }
        if !self.seed.is_empty() {
            cfg.seeds = self.seed.clone();
        }
        if let Some(out) = &self.out {
            cfg.out_dir = out.clone();
        }
        if let Some(agent) = self.agent {
            cfg.agent = agent;
        }
        if let Some(e) = self.episodes {
            cfg.episodes = e;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if self.biased {
            cfg.gmm.biased = true;
        }
        Ok(cfg)
    }
}

fn report(cfg: &RunConfig, s: &ExperimentSummary) {
    println!(
        "{} {}: final {} = {:.4} (95% CI {:.4} .. {:.4}) over {} seeds",
        method_dir(cfg).display(),
        s.agent,
        s.metric,
        s.mean,
        s.ci_low,
        s.ci_high,
        s.seeds.len()
    );
}

/// `label=path`, or a bare path labeled by its file stem.
fn parse_input(s: &str) -> (String, PathBuf) {
    match s.split_once('=') {
        Some((label, path)) if !label.is_empty() && !path.is_empty() => (label.to_string(), path.into()),
        _ => {
            let path = PathBuf::from(s);
            let label = path
                .file_stem()
                .map_or_else(|| s.to_string(), |x| x.to_string_lossy().into_owned());
            (label, path)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GmmTrain(a) => {
            let cfg = a.resolve(Track::Gmm)?;
            report(&cfg, &run_experiment(&cfg)?);
        }
        Command::DialogueTrain(a) => {
            let cfg = a.resolve(Track::Dialogue)?;
            report(&cfg, &run_experiment(&cfg)?);
        }
        Command::GmmEval(a) => {
            let cfg = a.resolve(Track::Gmm)?;
            report(&cfg, &evaluate_experiment(&cfg)?);
        }
        Command::DialogueEval(a) => {
            let cfg = a.resolve(Track::Dialogue)?;
            report(&cfg, &evaluate_experiment(&cfg)?);
        }
        Command::GenCorpus { cases, seed, out } => {
            generate_mock_corpus(cases, seed, &out)?;
            println!("wrote {cases} cases to {}", out.display());
        }
        Command::Plot {
            inputs,
            metric,
            episode,
            out,
        } => {
            let inputs: Vec<_> = inputs.iter().map(|s| parse_input(s)).collect();
            emit_plots(&inputs, metric, episode.map(Episodes::Only), &out)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
