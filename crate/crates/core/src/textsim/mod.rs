//! Text embeddings and cosine similarity for the dialogue score.
//!
//! The built-in embedder hashes character n-grams into a fixed number of
//! buckets with FNV-1a (64-bit, standard offset basis and prime). The bucket is
//! the hash modulo the dimension and the sign comes from the top hash bit.

mod remote;

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use remote::RemoteClient;

/// Environment variable that overrides the configured endpoint URL.
pub const ENDPOINT_ENV: &str = "RPS_EMBEDDING_ENDPOINT";

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingSource {
    #[default]
    Builtin,
    Remote,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source: EmbeddingSource,
}

impl EmbeddingVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingProviderConfig {
    pub mode: EmbeddingSource,
    pub dimension: usize,
    pub ngram_range: [usize; 2],
    pub endpoint_url: Option<String>,
    pub timeout_ms: u64,
    pub max_batch: usize,
    /// Use the built-in embedder when the remote service is unavailable.
    pub fallback_to_builtin: bool,
}

impl Default for EmbeddingProviderConfig {
    fn default() -> Self {
        Self {
            mode: EmbeddingSource::Builtin,
            dimension: 256,
            ngram_range: [3, 5],
            endpoint_url: None,
            timeout_ms: 5_000,
            max_batch: 128,
            fallback_to_builtin: false,
        }
    }
}

impl EmbeddingProviderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dimension < 16 {
            return Err(Error::Config(format!("embedding dimension {} < 16", self.dimension)));
        }
        let [lo, hi] = self.ngram_range;
        if lo == 0 || lo > hi {
            return Err(Error::Config(format!("bad n-gram range [{lo}, {hi}]")));
        }
        if self.timeout_ms == 0 || self.max_batch == 0 {
            return Err(Error::Config("timeout and max-batch must be positive".into()));
        }
        if self.mode == EmbeddingSource::Remote && self.endpoint_url.is_none() {
            return Err(Error::Config("remote mode needs an endpoint url".into()));
        }
        Ok(())
    }

    /// Applies the endpoint override from the environment, switching to remote mode.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(ENDPOINT_ENV) {
            if !url.trim().is_empty() {
                self.endpoint_url = Some(url.trim().to_string());
                self.mode = EmbeddingSource::Remote;
            }
        }
        self
    }
}

/// Lowercases and collapses runs of whitespace into single spaces.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Character n-grams of the normalized text. Text shorter than the smallest size
/// contributes itself as a single gram.
pub fn char_ngrams(text: &str, range: [usize; 2]) -> Vec<String> {
    let chars: Vec<char> = normalize_text(text).chars().collect();
    if chars.is_empty() {
        return Vec::new();
    }
    if chars.len() < range[0] {
        return vec![chars.iter().collect()];
    }
    let mut grams = Vec::new();
    for n in range[0]..=range[1] {
        if n > chars.len() {
            break;
        }
        grams.extend(chars.windows(n).map(|w| w.iter().collect::<String>()));
    }
    grams
}

pub fn embed_builtin(text: &str, cfg: &EmbeddingProviderConfig) -> EmbeddingVector {
    let mut values = vec![0.0; cfg.dimension];
    for gram in char_ngrams(text, cfg.ngram_range) {
        let h = fnv1a64(gram.as_bytes());
        let sign = if h >> 63 == 1 { -1.0 } else { 1.0 };
        values[(h % cfg.dimension as u64) as usize] += sign;
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector {
        values,
        source: EmbeddingSource::Builtin,
    }
}

pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "cosine of dimensions {} and {}",
            a.len(),
            b.len()
        )));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    cosine_slices(&a.values, &b.values)
}

/// Something that turns a batch of texts into vectors, preserving order.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>>;
}

#[derive(Debug, Clone)]
pub struct BuiltinEmbedder {
    cfg: EmbeddingProviderConfig,
}

impl BuiltinEmbedder {
    pub fn new(cfg: EmbeddingProviderConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg })
    }
}

impl Default for BuiltinEmbedder {
    fn default() -> Self {
        Self {
            cfg: EmbeddingProviderConfig::default(),
        }
    }
}

impl EmbeddingProvider for BuiltinEmbedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(texts.iter().map(|t| embed_builtin(t, &self.cfg)).collect())
    }
}

type CacheKey = (String, EmbeddingSource);

/// Provider front end with a shared cache keyed by (text, mode) and optional
/// fallback from the remote service to the built-in embedder.
pub struct Embedder {
    cfg: EmbeddingProviderConfig,
    remote: Option<RemoteClient>,
    custom: Option<Box<dyn EmbeddingProvider>>,
    cache: RwLock<HashMap<CacheKey, Arc<EmbeddingVector>>>,
}

impl Embedder {
    pub fn new(cfg: EmbeddingProviderConfig) -> Result<Self> {
        cfg.validate()?;
        let remote = match cfg.mode {
            EmbeddingSource::Remote => Some(RemoteClient::new(&cfg)?),
            EmbeddingSource::Builtin => None,
        };
        Ok(Self {
            cfg,
            remote,
            custom: None,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Wraps an arbitrary provider with the same caching front end.
    pub fn with_provider(provider: Box<dyn EmbeddingProvider>) -> Self {
        Self {
            cfg: EmbeddingProviderConfig::default(),
            remote: None,
            custom: Some(provider),
            cache: RwLock::new(HashMap::new()),
        }
    }

    pub fn builtin() -> Self {
        Self::new(EmbeddingProviderConfig::default()).expect("default config is valid")
    }

    pub fn config(&self) -> &EmbeddingProviderConfig {
        &self.cfg
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().map(|c| c.len()).unwrap_or(0)
    }

    /// Embeds texts, consulting the cache first.
    pub fn embed_all(&self, texts: &[String]) -> Result<Vec<Arc<EmbeddingVector>>> {
        let mode = if self.custom.is_some() {
            EmbeddingSource::Builtin
        } else {
            self.cfg.mode
        };
        let mut out: Vec<Option<Arc<EmbeddingVector>>> = {
            let cache = self.cache.read().expect("cache lock poisoned");
            texts.iter().map(|t| cache.get(&(t.clone(), mode)).cloned()).collect()
        };
        let missing: Vec<String> = texts
            .iter()
            .zip(&out)
            .filter(|(_, v)| v.is_none())
            .map(|(t, _)| t.clone())
            .collect();
        if !missing.is_empty() {
            let fresh = self.embed_uncached(&missing)?;
            let mut cache = self.cache.write().expect("cache lock poisoned");
            let mut fresh_iter = fresh.into_iter();
            for slot in out.iter_mut().filter(|s| s.is_none()) {
                *slot = fresh_iter.next().map(Arc::new);
            }
            for (slot, text) in out.iter().zip(texts) {
                let v = slot.as_ref().expect("filled above");
                cache.entry((text.clone(), v.source)).or_insert_with(|| v.clone());
            }
        }
        Ok(out.into_iter().map(|v| v.expect("filled above")).collect())
    }

    pub fn embed(&self, text: &str) -> Result<Arc<EmbeddingVector>> {
        Ok(self.embed_all(&[text.to_string()])?.remove(0))
    }

    fn embed_uncached(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if let Some(p) = &self.custom {
            let out = p.embed_batch(texts)?;
            if out.len() != texts.len() {
                return Err(Error::ProviderContract(format!(
                    "{} texts, {} vectors",
                    texts.len(),
                    out.len()
                )));
            }
            return Ok(out);
        }
        match &self.remote {
            None => Ok(texts.iter().map(|t| embed_builtin(t, &self.cfg)).collect()),
            Some(client) => match client.embed_batch(texts) {
                Err(Error::ProviderUnavailable(_)) if self.cfg.fallback_to_builtin => {
                    Ok(texts.iter().map(|t| embed_builtin(t, &self.cfg)).collect())
                }
                other => other,
            },
        }
    }
}

impl EmbeddingProvider for Embedder {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        Ok(self.embed_all(texts)?.into_iter().map(|v| (*v).clone()).collect())
    }
}
