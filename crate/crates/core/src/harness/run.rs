use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{AgentKind, RunConfig, Track};
use super::metrics::{t_interval, write_metrics_file, Metric, MetricRow};
use crate::agents::{DdpgAgent, DqnAgent, RandomContinuous, ReplayBuffer, Transition};
use crate::dialogue::{self, CaseFile, DialogueEnv, PromptStrategy, STATE_DIM};
use crate::env_gmm::GmmEnv;
use crate::error::{Error, Result};
use crate::textsim::Embedder;
use std::sync::Arc;

/// Independent random streams of one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Init = 0,
    Env = 1,
    Agent = 2,
    Eval = 3,
    Final = 4,
}

pub fn seed_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

/// A trained policy of either track.
#[derive(Debug, Clone)]
pub enum Policy {
    Ddpg(DdpgAgent),
    Dqn(DqnAgent),
}

impl Policy {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        match self {
            Policy::Ddpg(a) => a.save(path),
            Policy::Dqn(a) => a.save(path),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutput {
    pub seed: u64,
    pub train: Vec<MetricRow>,
    pub eval: Vec<MetricRow>,
    pub final_eval: Vec<MetricRow>,
    /// Summary metric of the final evaluation.
    pub final_metric: f64,
    pub policy: Option<Policy>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentSummary {
    pub track: Track,
    pub agent: String,
    pub metric: Metric,
    pub seeds: Vec<u64>,
    pub per_seed: Vec<f64>,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub outputs: Vec<SeedOutput>,
    pub summary: ExperimentSummary,
}

fn row(seed: u64, episode: usize, round: usize, metric: Metric, value: f64) -> MetricRow {
    MetricRow {
        seed,
        episode,
        round,
        metric,
        value,
    }
}

enum GmmActor<'a> {
    Ddpg(&'a DdpgAgent),
    Random(RandomContinuous),
}

/// One greedy GMM episode; returns per-round distances (NaN during warm-up) and rewards.
fn gmm_episode<R: Rng + ?Sized>(env: &mut GmmEnv, actor: &GmmActor, rng: &mut R) -> Result<Vec<(Option<f64>, f64)>> {
    let mut obs = env.reset(rng)?;
    let mut out = Vec::with_capacity(env.config().horizon);
    loop {
        let a = match actor {
            GmmActor::Ddpg(agent) => agent.act(&obs, false, rng)?,
            GmmActor::Random(r) => r.act(rng),
        };
        let step = env.step(a, rng)?;
        out.push((step.diagnostics.distance, step.reward));
        obs = step.observation;
        if step.done {
            return Ok(out);
        }
    }
}

fn push_episode(rows: &mut Vec<MetricRow>, seed: u64, episode: usize, data: &[(Option<f64>, f64)]) {
    for (round, (d, r)) in data.iter().enumerate() {
        if let Some(d) = d {
            rows.push(row(seed, episode, round, Metric::KlDivergence, *d));
        }
        rows.push(row(seed, episode, round, Metric::Reward, *r));
    }
}

/// Mean of the distance over the trailing `window` rounds of each episode.
fn trailing_mean(episodes: &[Vec<(Option<f64>, f64)>], window: usize) -> f64 {
    let mut total = 0.0;
    let mut n = 0usize;
    for ep in episodes {
        let start = ep.len().saturating_sub(window);
        for (d, _) in &ep[start..] {
            if let Some(d) = d {
                total += d;
                n += 1;
            }
        }
    }
    if n == 0 {
        f64::NAN
    } else {
        total / n as f64
    }
}

pub fn run_gmm_seed(cfg: &RunConfig, seed: u64, pretrained: Option<DdpgAgent>) -> Result<SeedOutput> {
    let env_cfg = cfg.gmm_env_config();
    let mut env = GmmEnv::new(env_cfg.clone())?;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut eval_rng = seed_rng(seed, Stream::Eval);
    let agent = match (cfg.agent, pretrained) {
        (AgentKind::Ddpg, Some(agent)) => Some(agent),
        (AgentKind::Ddpg, None) => {
            let mut init = seed_rng(seed, Stream::Init);
            let mut agent = DdpgAgent::new(env_cfg.observation_dim(), cfg.ddpg_config(), &mut init)?;
            let mut env_rng = seed_rng(seed, Stream::Env);
            let mut agent_rng = seed_rng(seed, Stream::Agent);
            let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity)?;
            for episode in 0..cfg.episodes {
                let mut obs = env.reset(&mut env_rng)?;
                let mut data = Vec::with_capacity(env_cfg.horizon);
                loop {
                    let a = agent.act(&obs, true, &mut agent_rng)?;
                    let step = env.step(a, &mut env_rng)?;
                    buffer.push(Transition::new(
                        obs,
                        a,
                        step.reward,
                        step.observation.clone(),
                        step.done,
                    )?);
                    agent.update(&buffer, &mut agent_rng)?;
                    data.push((step.diagnostics.distance, step.reward));
                    obs = step.observation;
                    if step.done {
                        break;
                    }
                }
                push_episode(&mut train, seed, episode, &data);
                if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
                    let data = gmm_episode(&mut env, &GmmActor::Ddpg(&agent), &mut eval_rng)?;
                    push_episode(&mut eval, seed, episode, &data);
                }
            }
            Some(agent)
        }
        (AgentKind::Random, _) => None,
        (other, _) => return Err(Error::Config(format!("agent {other} cannot run the gmm track"))),
    };
    let actor = match &agent {
        Some(a) => GmmActor::Ddpg(a),
        None => GmmActor::Random(RandomContinuous {
            bound: env_cfg.action_bound,
        }),
    };
    let mut final_rng = seed_rng(seed, Stream::Final);
    let mut final_eval = Vec::new();
    let mut episodes = Vec::new();
    for i in 0..cfg.final_eval_episodes.max(1) {
        let data = gmm_episode(&mut env, &actor, &mut final_rng)?;
        push_episode(&mut final_eval, seed, i, &data);
        episodes.push(data);
    }
    Ok(SeedOutput {
        seed,
        train,
        eval,
        final_eval,
        final_metric: trailing_mean(&episodes, cfg.summary_window),
        policy: agent.map(Policy::Ddpg),
    })
}

/// Training and held-out cases of the configured corpus.
pub fn dialogue_split(cfg: &RunConfig) -> Result<(Vec<CaseFile>, Vec<CaseFile>)> {
    let cases = match &cfg.dialogue.corpus {
        Some(path) => dialogue::load_corpus(path)?.cases,
        None => dialogue::generate_cases(
            cfg.dialogue.mock_cases,
            &mut ChaCha8Rng::seed_from_u64(cfg.dialogue.corpus_seed),
        ),
    };
    let held = cfg.dialogue.held_out;
    if cases.len() <= held {
        return Err(Error::Config(format!(
            "corpus has {} cases, {} are held out and none remain for training",
            cases.len(),
            held
        )));
    }
    let train = cases[..cases.len() - held].to_vec();
    let test = cases[cases.len() - held..].to_vec();
    Ok((train, test))
}

enum DialogueActor<'a> {
    Dqn(&'a DqnAgent, bool),
    Random,
    Fixed(PromptStrategy),
}

impl DialogueActor<'_> {
    fn act<R: Rng + ?Sized>(&self, obs: &[f64], round: usize, rng: &mut R) -> Result<PromptStrategy> {
        let i = match self {
            DialogueActor::Dqn(agent, random_first) => {
                if round == 0 && *random_first {
                    rng.random_range(0..PromptStrategy::COUNT)
                } else {
                    agent.greedy(obs)?
                }
            }
            DialogueActor::Random => rng.random_range(0..PromptStrategy::COUNT),
            DialogueActor::Fixed(s) => s.index(),
        };
        PromptStrategy::from_index(i)
    }
}

/// Per-round (score, reward) of one evaluation dialogue.
fn dialogue_episode<R: Rng + ?Sized>(
    env: &mut DialogueEnv,
    case: &CaseFile,
    actor: &DialogueActor,
    rng: &mut R,
) -> Result<Vec<(f64, f64)>> {
    let mut obs = env.reset(case.clone())?;
    let mut out = Vec::with_capacity(env.horizon);
    for round in 0.. {
        let a = actor.act(&obs, round, rng)?;
        let step = env.step(a, rng)?;
        out.push((step.score, step.reward));
        obs = step.observation;
        if step.done {
            break;
        }
    }
    Ok(out)
}

fn push_dialogue(rows: &mut Vec<MetricRow>, seed: u64, episode: usize, data: &[(f64, f64)]) {
    for (round, (s, r)) in data.iter().enumerate() {
        rows.push(row(seed, episode, round, Metric::SimilarityScore, *s));
        rows.push(row(seed, episode, round, Metric::Reward, *r));
    }
}

/// Mean per-round score and reward over the held-out cases.
fn held_out_mean<R: Rng + ?Sized>(
    env: &mut DialogueEnv,
    cases: &[CaseFile],
    actor: &DialogueActor,
    rng: &mut R,
) -> Result<Vec<Vec<(f64, f64)>>> {
    cases.iter().map(|c| dialogue_episode(env, c, actor, rng)).collect()
}

fn average_rounds(runs: &[Vec<(f64, f64)>]) -> Vec<(f64, f64)> {
    let len = runs.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|r| {
            let vals: Vec<&(f64, f64)> = runs.iter().filter_map(|e| e.get(r)).collect();
            let n = vals.len() as f64;
            (
                vals.iter().map(|v| v.0).sum::<f64>() / n,
                vals.iter().map(|v| v.1).sum::<f64>() / n,
            )
        })
        .collect()
}

pub fn run_dialogue_seed(
    cfg: &RunConfig,
    seed: u64,
    embed: Arc<Embedder>,
    pretrained: Option<DqnAgent>,
) -> Result<SeedOutput> {
    let (train_cases, test_cases) = dialogue_split(cfg)?;
    let mut env = DialogueEnv::new(cfg.dialogue.table.clone(), cfg.steps_per_episode, embed)?;
    let mut train = Vec::new();
    let mut eval = Vec::new();
    let mut eval_rng = seed_rng(seed, Stream::Eval);
    let agent = match (cfg.agent, pretrained) {
        (AgentKind::Dqn, Some(a)) => Some(a),
        (AgentKind::Dqn, None) => {
            let mut init = seed_rng(seed, Stream::Init);
            let mut agent = DqnAgent::new(STATE_DIM, cfg.dqn.clone(), &mut init)?;
            let mut env_rng = seed_rng(seed, Stream::Env);
            let mut agent_rng = seed_rng(seed, Stream::Agent);
            let mut buffer = ReplayBuffer::new(agent.config.buffer_capacity)?;
            for episode in 0..cfg.episodes {
                let eps = agent.config.epsilon.at(episode, cfg.episodes);
                train.push(row(seed, episode, 0, Metric::Epsilon, eps));
                let case = &train_cases[env_rng.random_range(0..train_cases.len())];
                let mut obs = env.reset(case.clone())?;
                let mut data = Vec::with_capacity(cfg.steps_per_episode);
                for round in 0.. {
                    let a = if round == 0 && agent.config.random_first_action_train {
                        agent_rng.random_range(0..PromptStrategy::COUNT)
                    } else {
                        agent.act(&obs, eps, &mut agent_rng)?
                    };
                    let step = env.step(PromptStrategy::from_index(a)?, &mut env_rng)?;
                    buffer.push(Transition::new(
                        obs,
                        a,
                        step.reward,
                        step.observation.clone(),
                        step.done,
                    )?);
                    agent.update(&buffer, &mut agent_rng)?;
                    data.push((step.score, step.reward));
                    obs = step.observation;
                    if step.done {
                        break;
                    }
                }
                push_dialogue(&mut train, seed, episode, &data);
                if agent.config.target_sync_episodes > 0 && (episode + 1) % agent.config.target_sync_episodes == 0 {
                    agent.sync_target()?;
                }
                if cfg.eval_every > 0 && (episode + 1) % cfg.eval_every == 0 {
                    let actor = DialogueActor::Dqn(&agent, agent.config.random_first_action_eval);
                    let runs = held_out_mean(&mut env, &test_cases, &actor, &mut eval_rng)?;
                    push_dialogue(&mut eval, seed, episode, &average_rounds(&runs));
                }
            }
            Some(agent)
        }
        (AgentKind::Random | AgentKind::Fixed(_), _) => None,
        (other, _) => return Err(Error::Config(format!("agent {other} cannot run the dialogue track"))),
    };
    let actor = match (&agent, cfg.agent) {
        (Some(a), _) => DialogueActor::Dqn(a, a.config.random_first_action_eval),
        (None, AgentKind::Fixed(s)) => DialogueActor::Fixed(s),
        (None, _) => DialogueActor::Random,
    };
    let mut final_rng = seed_rng(seed, Stream::Final);
    let mut final_eval = Vec::new();
    let mut finals = Vec::new();
    for rep in 0..cfg.final_eval_episodes.max(1) {
        for (i, case) in test_cases.iter().enumerate() {
            let data = dialogue_episode(&mut env, case, &actor, &mut final_rng)?;
            finals.push(data.last().map_or(0.0, |d| d.0));
            push_dialogue(&mut final_eval, seed, rep * test_cases.len() + i, &data);
        }
    }
    Ok(SeedOutput {
        seed,
        train,
        eval,
        final_eval,
        final_metric: finals.iter().sum::<f64>() / finals.len() as f64,
        policy: agent.map(Policy::Dqn),
    })
}

/// Runs `job` for every seed on up to `threads` workers; output order follows `seeds`.
pub fn parallel_seeds<T: Send>(seeds: &[u64], threads: usize, job: impl Fn(u64) -> Result<T> + Sync) -> Result<Vec<T>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<T>>>> = Mutex::new((0..seeds.len()).map(|_| None).collect());
    let workers = threads.clamp(1, seeds.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= seeds.len() {
                    break;
                }
                let r = job(seeds[i]);
                slots.lock().expect("result lock poisoned")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result lock poisoned")
        .into_iter()
        .map(|r| r.expect("every seed ran"))
        .collect()
}

fn summarize(cfg: &RunConfig, outputs: &[SeedOutput]) -> ExperimentSummary {
    let per_seed: Vec<f64> = outputs.iter().map(|o| o.final_metric).collect();
    let ci = t_interval(&per_seed);
    ExperimentSummary {
        track: cfg.track,
        agent: cfg.agent.label(),
        metric: match cfg.track {
            Track::Gmm => Metric::KlDivergence,
            Track::Dialogue => Metric::SimilarityScore,
        },
        seeds: cfg.seeds.clone(),
        per_seed,
        mean: ci.mean,
        ci_low: ci.lower(),
        ci_high: ci.upper(),
    }
}

pub fn embedder_for(cfg: &RunConfig) -> Result<Arc<Embedder>> {
    Ok(Arc::new(Embedder::new(cfg.embedding.clone().with_env_override())?))
}

/// Trains (or evaluates baselines) for every seed without touching the disk.
pub fn run_in_memory(cfg: &RunConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let outputs = match cfg.track {
        Track::Gmm => parallel_seeds(&cfg.seeds, cfg.threads, |s| run_gmm_seed(cfg, s, None))?,
        Track::Dialogue => {
            let embed = embedder_for(cfg)?;
            parallel_seeds(&cfg.seeds, cfg.threads, |s| {
                run_dialogue_seed(cfg, s, embed.clone(), None)
            })?
        }
    };
    let summary = summarize(cfg, &outputs);
    Ok(ExperimentResult { outputs, summary })
}

/// Evaluates saved policies (`seed-<n>.ckpt` under `checkpoints`) for every seed.
pub fn evaluate_checkpoints(cfg: &RunConfig, checkpoints: &Path) -> Result<ExperimentResult> {
    cfg.validate()?;
    let path = |s: u64| checkpoints.join(format!("seed-{s}.ckpt"));
    let outputs = match cfg.track {
        Track::Gmm => parallel_seeds(&cfg.seeds, cfg.threads, |s| {
            let agent = match cfg.agent {
                AgentKind::Ddpg => Some(DdpgAgent::load(path(s), cfg.gmm_env_config().observation_dim())?),
                _ => None,
            };
            run_gmm_seed(cfg, s, agent)
        })?,
        Track::Dialogue => {
            let embed = embedder_for(cfg)?;
            parallel_seeds(&cfg.seeds, cfg.threads, |s| {
                let agent = match cfg.agent {
                    AgentKind::Dqn => Some(DqnAgent::load(path(s), STATE_DIM, PromptStrategy::COUNT)?),
                    _ => None,
                };
                run_dialogue_seed(cfg, s, embed.clone(), agent)
            })?
        }
    };
    let summary = summarize(cfg, &outputs);
    Ok(ExperimentResult { outputs, summary })
}

/// Directory for one method's artifacts: `<out>/<track>-<agent>`.
pub fn method_dir(cfg: &RunConfig) -> PathBuf {
    let track = match cfg.track {
        Track::Gmm => "gmm",
        Track::Dialogue => "dialogue",
    };
    cfg.out_dir
        .join(format!("{track}-{}", cfg.agent.label().replace(':', "-")))
}

fn prepare_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let probe = dir.join(".write-test");
    std::fs::write(&probe, b"").map_err(|e| Error::io(&probe, e))?;
    std::fs::remove_file(&probe).map_err(|e| Error::io(&probe, e))
}

/// Writes metrics CSVs, the summary, the resolved config, checkpoints and a curve plot.
pub fn write_outputs(cfg: &RunConfig, result: &ExperimentResult, dir: &Path) -> Result<()> {
    let collect = |f: fn(&SeedOutput) -> &Vec<MetricRow>| -> Vec<MetricRow> {
        result.outputs.iter().flat_map(|o| f(o).iter().copied()).collect()
    };
    let train = collect(|o| &o.train);
    if !train.is_empty() {
        write_metrics_file(&train, dir.join("train_metrics.csv"))?;
    }
    let eval = collect(|o| &o.eval);
    if !eval.is_empty() {
        write_metrics_file(&eval, dir.join("eval_metrics.csv"))?;
    }
    write_metrics_file(&collect(|o| &o.final_eval), dir.join("final_metrics.csv"))?;
    let summary = serde_json::to_string_pretty(&result.summary).map_err(|e| Error::Schema(e.to_string()))?;
    let summary_path = dir.join("summary.json");
    std::fs::write(&summary_path, summary + "\n").map_err(|e| Error::io(&summary_path, e))?;
    let cfg_path = dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()?).map_err(|e| Error::io(&cfg_path, e))?;
    if cfg.save_checkpoints {
        let ck = dir.join("checkpoints");
        for o in &result.outputs {
            if let Some(p) = &o.policy {
                std::fs::create_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
                p.save(ck.join(format!("seed-{}.ckpt", o.seed)))?;
            }
        }
    }
    let metric = result.summary.metric;
    super::plot::emit_plots(
        &[(result.summary.agent.clone(), dir.join("final_metrics.csv"))],
        metric,
        None,
        dir.join("final_curve.svg"),
    )
}

/// Validates, prepares the output directory, runs every seed and writes all artifacts.
pub fn run_experiment(cfg: &RunConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let dir = method_dir(cfg);
    prepare_dir(&dir)?;
    let result = run_in_memory(cfg)?;
    write_outputs(cfg, &result, &dir)?;
    Ok(result.summary)
}

/// Re-evaluates checkpoints saved by [`run_experiment`] and writes the evaluation artifacts under `<method>/reeval`.
pub fn evaluate_experiment(cfg: &RunConfig) -> Result<ExperimentSummary> {
    cfg.validate()?;
    let dir = method_dir(cfg);
    let out = dir.join("reeval");
    prepare_dir(&out)?;
    let result = evaluate_checkpoints(cfg, &dir.join("checkpoints"))?;
    let mut no_ckpt = cfg.clone();
    no_ckpt.save_checkpoints = false;
    write_outputs(&no_ckpt, &result, &out)?;
    Ok(result.summary)
}
