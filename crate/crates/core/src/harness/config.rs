use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::agents::{DdpgConfig, DqnConfig};
use crate::dialogue::{DisclosureTable, PromptStrategy, DEFAULT_HORIZON};
use crate::env_gmm::GmmEpisodeConfig;
use crate::error::{Error, Result};
use crate::textsim::EmbeddingProviderConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Track {
    Gmm,
    Dialogue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgentKind {
    Ddpg,
    Dqn,
    Random,
    Fixed(PromptStrategy),
}

impl AgentKind {
    pub fn label(&self) -> String {
        self.to_string()
    }

    pub fn is_learning(&self) -> bool {
        matches!(self, AgentKind::Ddpg | AgentKind::Dqn)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentKind::Ddpg => f.write_str("ddpg"),
            AgentKind::Dqn => f.write_str("dqn"),
            AgentKind::Random => f.write_str("random"),
            AgentKind::Fixed(s) => write!(f, "fixed:{s}"),
        }
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ddpg" => Ok(AgentKind::Ddpg),
            "dqn" => Ok(AgentKind::Dqn),
            "random" => Ok(AgentKind::Random),
            other => match other.strip_prefix("fixed:") {
                Some(strategy) => Ok(AgentKind::Fixed(strategy.parse()?)),
                None => Err(Error::Config(format!("unknown agent `{other}`"))),
            },
        }
    }
}

impl Serialize for AgentKind {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for AgentKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    #[serde(alias = "paper")]
    Full,
    Desk,
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" | "paper" => Ok(Profile::Full),
            "desk" => Ok(Profile::Desk),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DialogueSettings {
    pub table: DisclosureTable,
    /// Corpus file; a mock corpus is generated from `corpus_seed` when absent.
    pub corpus: Option<PathBuf>,
    pub mock_cases: usize,
    pub corpus_seed: u64,
    /// The trailing cases of the corpus are held out for evaluation.
    pub held_out: usize,
}

impl Default for DialogueSettings {
    fn default() -> Self {
        Self {
            table: DisclosureTable::default(),
            corpus: None,
            mock_cases: 60,
            corpus_seed: 2024,
            held_out: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub track: Track,
    pub agent: AgentKind,
    pub episodes: usize,
    /// Rounds per episode; overrides the environment horizon.
    pub steps_per_episode: usize,
    pub seeds: Vec<u64>,
    /// Greedy evaluation episode after every this many training episodes; 0 disables.
    pub eval_every: usize,
    /// Greedy episodes per seed after training (per held-out case on the dialogue track).
    pub final_eval_episodes: usize,
    /// Trailing rounds averaged into the final summary metric.
    pub summary_window: usize,
    pub threads: usize,
    pub gmm: GmmEpisodeConfig,
    pub ddpg: DdpgConfig,
    pub dqn: DqnConfig,
    pub dialogue: DialogueSettings,
    pub embedding: EmbeddingProviderConfig,
    pub out_dir: PathBuf,
    pub save_checkpoints: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::profile(Track::Gmm, Profile::Desk)
    }
}

impl RunConfig {
    pub fn profile(track: Track, profile: Profile) -> Self {
        let (episodes, steps) = match (track, profile) {
            (Track::Gmm, Profile::Full) => (1_000, 500),
            (Track::Gmm, Profile::Desk) => (200, 200),
            (Track::Dialogue, Profile::Full) => (500, DEFAULT_HORIZON),
            (Track::Dialogue, Profile::Desk) => (200, DEFAULT_HORIZON),
        };
        let mut gmm = GmmEpisodeConfig::default();
        gmm.horizon = steps;
        Self {
            track,
            agent: match track {
                Track::Gmm => AgentKind::Ddpg,
                Track::Dialogue => AgentKind::Dqn,
            },
            episodes,
            steps_per_episode: steps,
            seeds: (0..10).collect(),
            eval_every: 10,
            final_eval_episodes: match track {
                Track::Gmm => 3,
                Track::Dialogue => 1,
            },
            summary_window: match track {
                Track::Gmm => 100,
                Track::Dialogue => 1,
            },
            threads: std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
            gmm,
            ddpg: DdpgConfig::default(),
            dqn: DqnConfig::default(),
            dialogue: DialogueSettings::default(),
            embedding: EmbeddingProviderConfig::default(),
            out_dir: PathBuf::from("runs"),
            save_checkpoints: true,
        }
    }

    /// Reads a TOML file whose keys mirror the field names; missing keys keep
    /// the defaults of `base`.
    pub fn from_toml_str(text: &str, base: &RunConfig) -> Result<Self> {
        let overlay: toml::Table = text.parse().map_err(|e| Error::Config(format!("config: {e}")))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, overlay);
        merged.try_into().map_err(|e| Error::Config(format!("config: {e}")))
    }

    pub fn from_toml_file(path: impl AsRef<Path>, base: &RunConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.episodes == 0 && self.agent.is_learning() {
            return Err(Error::Config("episodes must be ≥ 1".into()));
        }
        if self.steps_per_episode == 0 {
            return Err(Error::Config("steps-per-episode must be ≥ 1".into()));
        }
        match (self.track, self.agent) {
            (Track::Gmm, AgentKind::Ddpg | AgentKind::Random) => {
                self.gmm_env_config().validate()?;
                self.ddpg_config().validate()?;
            }
            (Track::Dialogue, AgentKind::Dqn | AgentKind::Random | AgentKind::Fixed(_)) => {
                self.dialogue.table.validate()?;
                self.dqn.validate()?;
                self.embedding.validate()?;
                if self.dqn.n_actions != PromptStrategy::COUNT {
                    return Err(Error::Config(format!(
                        "dialogue track has {} actions",
                        PromptStrategy::COUNT
                    )));
                }
            }
            (track, agent) => {
                return Err(Error::Config(format!(
                    "agent {agent} does not apply to the {track:?} track"
                )));
            }
        }
        Ok(())
    }

    pub fn gmm_env_config(&self) -> GmmEpisodeConfig {
        GmmEpisodeConfig {
            horizon: self.steps_per_episode,
            ..self.gmm.clone()
        }
    }

    /// DDPG settings with the action bound taken from the environment.
    pub fn ddpg_config(&self) -> DdpgConfig {
        DdpgConfig {
            action_bound: self.gmm.action_bound,
            ..self.ddpg.clone()
        }
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
