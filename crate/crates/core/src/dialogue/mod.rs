//! Discrete elicitation environment: a scripted user with disclosure bias
//! answering one of five questioning strategies per round.
//!
//! The user reveals at most one new fact per round. Normal and Exploratory only
//! reach positive and neutral facts, Precise hits one random undisclosed fact,
//! Confrontational goes after undisclosed negative facts, and Corroborative
//! deepens what has already been said. A revealed snippet is the fact's leading
//! tokens up to its disclosure fraction, with non-keyword tokens dropped at the
//! paraphrase rate.

pub mod corpus;

use std::collections::HashSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::Category;
use crate::reward;
use crate::textsim::{cosine, Embedder};

pub use corpus::{generate_cases, load_corpus, parse_corpus, save_corpus, tokens, CaseFile, FactRecord, LoadedCorpus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptStrategy {
    Normal,
    Exploratory,
    Precise,
    Corroborative,
    Confrontational,
}

impl PromptStrategy {
    pub const ALL: [PromptStrategy; 5] = [
        PromptStrategy::Normal,
        PromptStrategy::Exploratory,
        PromptStrategy::Precise,
        PromptStrategy::Corroborative,
        PromptStrategy::Confrontational,
    ];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::Usage(format!("action index {i} outside [0, 4]")))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PromptStrategy::Normal => "normal",
            PromptStrategy::Exploratory => "exploratory",
            PromptStrategy::Precise => "precise",
            PromptStrategy::Corroborative => "corroborative",
            PromptStrategy::Confrontational => "confrontational",
        }
    }
}

impl fmt::Display for PromptStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PromptStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .iter()
            .find(|p| p.as_str() == s.to_ascii_lowercase())
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

/// Reveal probabilities per (strategy, category) in (positive, neutral, negative) order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisclosureTable {
    pub normal: [f64; 3],
    pub exploratory: [f64; 3],
    pub precise: [f64; 3],
    pub corroborative: [f64; 3],
    pub confrontational: [f64; 3],
    /// Disclosure fraction a fact starts at when a strategy first reveals it.
    pub initial_fraction: [f64; 5],
    pub paraphrase_drop_prob: f64,
    pub detail_gain: f64,
}

impl Default for DisclosureTable {
    fn default() -> Self {
        Self {
            normal: [0.5, 0.3, 0.0],
            exploratory: [0.9, 0.7, 0.0],
            precise: [0.6, 0.6, 0.6],
            corroborative: [0.0, 0.0, 0.0],
            confrontational: [0.1, 0.1, 0.85],
            initial_fraction: [0.6, 0.5, 0.7, 0.0, 0.6],
            paraphrase_drop_prob: 0.2,
            detail_gain: 0.15,
        }
    }
}

impl DisclosureTable {
    pub fn reveal_probability(&self, s: PromptStrategy, c: Category) -> f64 {
        let row = match s {
            PromptStrategy::Normal => &self.normal,
            PromptStrategy::Exploratory => &self.exploratory,
            PromptStrategy::Precise => &self.precise,
            PromptStrategy::Corroborative => &self.corroborative,
            PromptStrategy::Confrontational => &self.confrontational,
        };
        row[c.index()]
    }

    pub fn validate(&self) -> Result<()> {
        let probs = [
            &self.normal[..],
            &self.exploratory[..],
            &self.precise[..],
            &self.corroborative[..],
            &self.confrontational[..],
            &self.initial_fraction[..],
            &[self.paraphrase_drop_prob, self.detail_gain][..],
        ];
        if probs.iter().flat_map(|r| r.iter()).all(|p| (0.0..=1.0).contains(p)) {
            Ok(())
        } else {
            Err(Error::Config("disclosure probabilities must lie in [0, 1]".into()))
        }
    }
}

/// One revealed snippet and the fact it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseItem {
    pub fact_id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueState {
    pub case: CaseFile,
    /// Disclosure fraction per fact, indexed like `case.facts`.
    pub disclosed: Vec<f64>,
    pub extracted: Vec<String>,
    /// Best key similarity of each extracted item, aligned with `extracted`.
    pub item_scores: Vec<f64>,
    pub transcript: Vec<(PromptStrategy, Vec<ResponseItem>)>,
    pub round: usize,
    pub horizon: usize,
    pub prev_distance: f64,
}

impl DialogueState {
    pub fn disclosure(&self, fact_id: &str) -> Option<f64> {
        self.case
            .facts
            .iter()
            .position(|f| f.id == fact_id)
            .map(|i| self.disclosed[i])
    }

    pub fn score(&self) -> f64 {
        if self.item_scores.is_empty() {
            0.0
        } else {
            self.item_scores.iter().sum::<f64>() / self.item_scores.len() as f64
        }
    }

    pub fn distance(&self) -> f64 {
        1.0 - self.score()
    }

    pub fn is_done(&self) -> bool {
        self.round >= self.horizon
    }
}

pub const DEFAULT_HORIZON: usize = 10;
pub const STATE_DIM: usize = 10;

pub fn reset(case: CaseFile, horizon: usize) -> DialogueState {
    let n = case.facts.len();
    DialogueState {
        case,
        disclosed: vec![0.0; n],
        extracted: Vec::new(),
        item_scores: Vec::new(),
        transcript: Vec::new(),
        round: 0,
        horizon,
        prev_distance: 1.0,
    }
}

fn snippet<R: Rng + ?Sized>(fact: &FactRecord, fraction: f64, drop_prob: f64, rng: &mut R) -> String {
    let words: Vec<&str> = fact.text.split_whitespace().collect();
    let keep = ((fraction * words.len() as f64).ceil() as usize).min(words.len());
    let keywords: HashSet<&str> = fact.keywords.iter().map(String::as_str).collect();
    words[..keep]
        .iter()
        .filter(|w| {
            let tok = tokens(w);
            let is_key = tok.iter().any(|t| keywords.contains(t.as_str()));
            is_key || !rng.random_bool(drop_prob)
        })
        .copied()
        .collect::<Vec<_>>()
        .join(" ")
}

/// The scripted user's answer to one strategy. Mutates disclosure fractions.
pub fn user_respond<R: Rng + ?Sized>(
    state: &mut DialogueState,
    strategy: PromptStrategy,
    table: &DisclosureTable,
    rng: &mut R,
) -> Vec<ResponseItem> {
    let facts = &state.case.facts;
    let undisclosed = |pred: &dyn Fn(Category) -> bool| -> Vec<usize> {
        (0..facts.len())
            .filter(|&i| state.disclosed[i] == 0.0 && pred(facts[i].category))
            .collect()
    };
    let mut revealed = Vec::new();
    match strategy {
        PromptStrategy::Corroborative => {
            for i in 0..facts.len() {
                let f = state.disclosed[i];
                if f > 0.0 && f < 1.0 {
                    state.disclosed[i] = (f + table.detail_gain).min(1.0);
                    if state.disclosed[i] > f {
                        revealed.push(i);
                    }
                }
            }
        }
        _ => {
            let candidates = match strategy {
                PromptStrategy::Normal | PromptStrategy::Exploratory => undisclosed(&|c| c != Category::Negative),
                PromptStrategy::Precise => undisclosed(&|_| true),
                _ => {
                    let neg = undisclosed(&|c| c == Category::Negative);
                    if neg.is_empty() {
                        undisclosed(&|_| true)
                    } else {
                        neg
                    }
                }
            };
            if let Some(&i) = candidates.choose(rng) {
                if rng.random_bool(table.reveal_probability(strategy, facts[i].category)) {
                    state.disclosed[i] = table.initial_fraction[strategy.index()].max(f64::MIN_POSITIVE);
                    revealed.push(i);
                }
            }
        }
    }
    revealed
        .into_iter()
        .map(|i| ResponseItem {
            fact_id: facts[i].id.clone(),
            text: snippet(&facts[i], state.disclosed[i], table.paraphrase_drop_prob, rng),
        })
        .filter(|r| !r.text.is_empty())
        .collect()
}

/// Whitespace-normalizes the response and drops items already extracted or repeated.
pub fn extract(response: &[String], already: &[String]) -> Vec<String> {
    let mut seen: HashSet<String> = already.iter().cloned().collect();
    response
        .iter()
        .map(|r| r.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|r| !r.is_empty() && seen.insert(r.clone()))
        .collect()
}

/// Best cosine between `item` and any key.
pub fn item_score(item: &str, keys: &[String], embed: &Embedder) -> Result<f64> {
    let v = embed.embed(item)?;
    let mut best = f64::NEG_INFINITY;
    for k in embed.embed_all(keys)? {
        best = best.max(cosine(&v, &k)?);
    }
    Ok(best)
}

/// Mean over extracted items of the best key similarity; zero when nothing is extracted.
pub fn score(extracted: &[String], keys: &[String], embed: &Embedder) -> Result<f64> {
    if keys.is_empty() {
        return Err(Error::Config("score needs at least one reference key".into()));
    }
    if extracted.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for item in extracted {
        total += item_score(item, keys, embed)?;
    }
    Ok(total / extracted.len() as f64)
}

/// `[round/horizon, score, mean disclosure per category (3), one-hot last action (5)]`.
pub fn encode_state(state: &DialogueState) -> Vec<f64> {
    let mut v = vec![0.0; STATE_DIM];
    v[0] = state.round as f64 / state.horizon as f64;
    v[1] = state.score();
    let mut sums = [0.0; 3];
    let mut counts = [0usize; 3];
    for (f, d) in state.case.facts.iter().zip(&state.disclosed) {
        sums[f.category.index()] += d;
        counts[f.category.index()] += 1;
    }
    for c in 0..3 {
        if counts[c] > 0 {
            v[2 + c] = sums[c] / counts[c] as f64;
        }
    }
    if let Some((last, _)) = state.transcript.last() {
        v[5 + last.index()] = 1.0;
    }
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct DialogueStep {
    pub observation: Vec<f64>,
    pub reward: f64,
    pub done: bool,
    pub response: Vec<ResponseItem>,
    pub score: f64,
    pub raw_gain: Option<f64>,
}

/// One round: ask, extract, rescore and reward the relative drop in `1 − score`.
pub fn step<R: Rng + ?Sized>(
    state: &mut DialogueState,
    action: PromptStrategy,
    table: &DisclosureTable,
    embed: &Embedder,
    rng: &mut R,
) -> Result<DialogueStep> {
    if state.is_done() {
        return Err(Error::Usage(format!(
            "dialogue finished after {} rounds",
            state.horizon
        )));
    }
    let response = user_respond(state, action, table, rng);
    let texts: Vec<String> = response.iter().map(|r| r.text.clone()).collect();
    let fresh = extract(&texts, &state.extracted);
    for item in fresh {
        state
            .item_scores
            .push(item_score(&item, &state.case.reference_keys, embed)?);
        state.extracted.push(item);
    }
    state.transcript.push((action, response.clone()));
    state.round += 1;
    let d = state.distance().clamp(0.0, 1.0);
    let prev = state.prev_distance;
    state.prev_distance = d;
    Ok(DialogueStep {
        observation: encode_state(state),
        reward: reward::normalized_gain(prev, d),
        done: state.is_done(),
        response,
        score: state.score(),
        raw_gain: reward::raw_gain(prev, d),
    })
}

/// Environment wrapper owning the table, the embedder and the live state.
#[derive(Clone)]
pub struct DialogueEnv {
    pub table: DisclosureTable,
    pub horizon: usize,
    embed: Arc<Embedder>,
    state: Option<DialogueState>,
}

impl DialogueEnv {
    pub fn new(table: DisclosureTable, horizon: usize, embed: Arc<Embedder>) -> Result<Self> {
        table.validate()?;
        if horizon == 0 {
            return Err(Error::Config("horizon must be ≥ 1".into()));
        }
        Ok(Self {
            table,
            horizon,
            embed,
            state: None,
        })
    }

    pub fn reset(&mut self, case: CaseFile) -> Result<Vec<f64>> {
        if case.reference_keys.is_empty() {
            return Err(Error::Config(format!("case `{}` has no reference keys", case.case_id)));
        }
        let st = reset(case, self.horizon);
        let obs = encode_state(&st);
        self.state = Some(st);
        Ok(obs)
    }

    pub fn state(&self) -> Option<&DialogueState> {
        self.state.as_ref()
    }

    pub fn embedder(&self) -> &Arc<Embedder> {
        &self.embed
    }

    pub fn step<R: Rng + ?Sized>(&mut self, action: PromptStrategy, rng: &mut R) -> Result<DialogueStep> {
        let state = self
            .state
            .as_mut()
            .ok_or_else(|| Error::Usage("step called before reset".into()))?;
        step(state, action, &self.table, &self.embed, rng)
    }
}

#[derive(Serialize)]
struct TranscriptRecord<'a> {
    round: usize,
    strategy: PromptStrategy,
    response: &'a [ResponseItem],
}

/// Writes the transcript as JSON lines, one record per round.
pub fn write_transcript<W: Write>(state: &DialogueState, mut w: W) -> Result<()> {
    for (round, (strategy, response)) in state.transcript.iter().enumerate() {
        let line = serde_json::to_string(&TranscriptRecord {
            round,
            strategy: *strategy,
            response,
        })
        .map_err(|e| Error::Schema(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io("transcript", e))?;
    }
    Ok(())
}
