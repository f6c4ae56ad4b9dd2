use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EmbeddingProvider, EmbeddingProviderConfig, EmbeddingSource, EmbeddingVector};
use crate::error::{Error, Result};

const RETRIES: u32 = 2;

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    embeddings: Vec<Vec<f64>>,
}

/// Blocking client for the JSON embedding service.
#[derive(Debug, Clone)]
pub struct RemoteClient {
    agent: ureq::Agent,
    url: String,
    dimension: usize,
    max_batch: usize,
    backoff: Duration,
}

impl RemoteClient {
    pub fn new(cfg: &EmbeddingProviderConfig) -> Result<Self> {
        let url = cfg
            .endpoint_url
            .clone()
            .ok_or_else(|| Error::Config("remote embedding needs an endpoint url".into()))?;
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_millis(cfg.timeout_ms)))
            .build()
            .into();
        Ok(Self {
            agent,
            url,
            dimension: cfg.dimension,
            max_batch: cfg.max_batch,
            backoff: Duration::from_millis(50),
        })
    }

    /// Sets the delay before the first retry; later retries double it.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post_once(&self, texts: &[String]) -> std::result::Result<Response, ureq::Error> {
        self.agent
            .post(&self.url)
            .send_json(Request { texts })?
            .body_mut()
            .read_json::<Response>()
    }

    fn post(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        let mut delay = self.backoff;
        let mut attempt = 0;
        loop {
            match self.post_once(texts) {
                Ok(r) => return Ok(r.embeddings),
                Err(ureq::Error::Json(e)) => {
                    return Err(Error::ProviderContract(format!("malformed response body: {e}")))
                }
                Err(e) if attempt >= RETRIES => {
                    return Err(Error::ProviderUnavailable(format!(
                        "{} after {} attempts: {e}",
                        self.url,
                        attempt + 1
                    )))
                }
                Err(_) => {
                    thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
            }
        }
    }
}

impl EmbeddingProvider for RemoteClient {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            let rows = self.post(chunk)?;
            if rows.len() != chunk.len() {
                return Err(Error::ProviderContract(format!(
                    "asked for {} embeddings, got {}",
                    chunk.len(),
                    rows.len()
                )));
            }
            for values in rows {
                if values.len() != self.dimension {
                    return Err(Error::ProviderContract(format!(
                        "expected dimension {}, got {}",
                        self.dimension,
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::ProviderContract("non-finite embedding entry".into()));
                }
                out.push(EmbeddingVector {
                    values,
                    source: EmbeddingSource::Remote,
                });
            }
        }
        Ok(out)
    }
}
