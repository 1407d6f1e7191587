//! Blocking HTTP clients for an externally served pCTR model and embedding
//! model, enforcing the same output contracts as the in-process providers.
//!
//! Wire formats:
//!
//! - pCTR: `POST {"text": str, "publisher": str}` returns `{"pctr": float}`
//! - embeddings: `POST {"texts": [str]}` returns `{"vectors": [[float]]}`

use std::io::ErrorKind;
use std::time::Duration;

use adstrength_core::ctrmodel::{check_pctr, PctrProvider};
use adstrength_core::embed::{EmbedderSpec, Embedding, EmbeddingProvider};
use adstrength_core::textproc::AdText;
use adstrength_core::ProviderError;
use serde::{Deserialize, Serialize};
use ureq::Agent;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_millis(200);
pub const DEFAULT_MAX_BATCH: usize = 64;

fn agent(timeout: Duration) -> Agent {
    Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(true)
        .build()
        .into()
}

fn map_err(e: ureq::Error, budget: Duration) -> ProviderError {
    match e {
        ureq::Error::Timeout(_) => ProviderError::Timeout(budget),
        ureq::Error::Io(io) if matches!(io.kind(), ErrorKind::TimedOut | ErrorKind::WouldBlock) => {
            ProviderError::Timeout(budget)
        }
        ureq::Error::Json(j) => ProviderError::Malformed(j.to_string()),
        ureq::Error::StatusCode(code) => ProviderError::Network(format!("HTTP status {code}")),
        other => ProviderError::Network(other.to_string()),
    }
}

fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &Agent,
    endpoint: &str,
    body: &Req,
    budget: Duration,
) -> Result<Resp, ProviderError> {
    let mut resp = agent.post(endpoint).send_json(body).map_err(|e| map_err(e, budget))?;
    resp.body_mut().read_json::<Resp>().map_err(|e| map_err(e, budget))
}

#[derive(Serialize)]
struct PctrRequest<'a> {
    text: &'a str,
    publisher: &'a str,
}

#[derive(Deserialize)]
struct PctrResponse {
    pctr: f64,
}

/// pCTR provider backed by an HTTP service.
#[derive(Debug, Clone)]
pub struct RemotePctr {
    agent: Agent,
    endpoint: String,
    timeout: Duration,
}

impl RemotePctr {
    pub fn new(endpoint: impl Into<String>, timeout: Duration) -> Self {
        RemotePctr {
            agent: agent(timeout),
            endpoint: endpoint.into(),
            timeout,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

impl PctrProvider for RemotePctr {
    fn predict(&self, text: &AdText, publisher: &str) -> Result<f64, ProviderError> {
        let req = PctrRequest {
            text: text.as_str(),
            publisher,
        };
        let resp: PctrResponse = post(&self.agent, &self.endpoint, &req, self.timeout)?;
        check_pctr(resp.pctr)
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f32>>,
}

/// Embedding provider backed by an HTTP service. Batches are split into
/// requests of at most `max_batch` texts; returned vectors are
/// L2-normalized.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    agent: Agent,
    endpoint: String,
    dim: usize,
    timeout: Duration,
    max_batch: usize,
}

impl RemoteEmbedder {
    pub fn new(endpoint: impl Into<String>, dim: usize, timeout: Duration) -> Self {
        RemoteEmbedder {
            agent: agent(timeout),
            endpoint: endpoint.into(),
            dim,
            timeout,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    /// Client for an external embedder spec; native specs yield `None`.
    pub fn from_spec(spec: &EmbedderSpec, timeout: Duration) -> Option<Self> {
        match spec {
            EmbedderSpec::External { endpoint, dim } => Some(RemoteEmbedder::new(endpoint.clone(), *dim, timeout)),
            _ => None,
        }
    }

    fn request(&self, texts: &[AdText]) -> Result<Vec<Embedding>, ProviderError> {
        let req = EmbedRequest {
            texts: texts.iter().map(AdText::as_str).collect(),
        };
        let resp: EmbedResponse = post(&self.agent, &self.endpoint, &req, self.timeout)?;
        if resp.vectors.len() != texts.len() {
            return Err(ProviderError::Malformed(format!(
                "sent {} texts, received {} vectors",
                texts.len(),
                resp.vectors.len()
            )));
        }
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(ProviderError::Dimension {
                        expected: self.dim,
                        got: v.len(),
                    });
                }
                Embedding::from_raw(v)
            })
            .collect()
    }
}

impl EmbeddingProvider for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &AdText) -> Result<Embedding, ProviderError> {
        let mut out = self.request(std::slice::from_ref(text))?;
        Ok(out.remove(0))
    }

    fn embed_batch(&self, texts: &[AdText]) -> Result<Vec<Embedding>, ProviderError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            out.extend(self.request(chunk)?);
        }
        Ok(out)
    }

    fn spec(&self) -> EmbedderSpec {
        EmbedderSpec::External {
            endpoint: self.endpoint.clone(),
            dim: self.dim,
        }
    }
}
