//! Minimal completion/embedding clients.
//!
//! Generation: `POST {endpoint}` with `{"prompt", "max_tokens", "temperature": 0}`,
//! response `{"text"}`. Embedding: `POST {endpoint}` with `{"text"}`, response
//! `{"embedding": [..]}`. The bearer token, if any, is read from the
//! environment variable named in [`HttpConfig::auth_env`].

use std::sync::OnceLock;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{
    BackendError, BackendFingerprint, Embedder, EmbeddingRequest, GenerationRequest, Generator,
};

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub endpoint: String,
    pub name: String,
    pub timeout: Duration,
    pub auth_env: Option<String>,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            name: "http".into(),
            timeout: Duration::from_secs(60),
            auth_env: None,
        }
    }
}

#[derive(Serialize)]
struct CompletionBody<'a> {
    prompt: &'a str,
    max_tokens: usize,
    temperature: f64,
}

#[derive(Deserialize)]
struct CompletionReply {
    text: String,
}

#[derive(Serialize)]
struct EmbeddingBody<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingReply {
    embedding: Vec<f64>,
}

struct Transport {
    client: Client,
    cfg: HttpConfig,
    token: Option<String>,
}

impl Transport {
    fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        let client = Client::builder()
            .timeout(cfg.timeout)
            .build()
            .map_err(|e| BackendError::invalid(&cfg.endpoint, e.to_string()))?;
        let token = cfg
            .auth_env
            .as_deref()
            .and_then(|var| std::env::var(var).ok());
        Ok(Self { client, cfg, token })
    }

    fn post<B: Serialize, R: for<'de> Deserialize<'de>>(
        &self,
        body: &B,
    ) -> Result<R, BackendError> {
        let endpoint = &self.cfg.endpoint;
        let mut req = self.client.post(endpoint).json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::transient(endpoint, e.to_string()))?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(BackendError::transient(endpoint, format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::invalid(endpoint, format!("HTTP {status}")));
        }
        resp.json::<R>()
            .map_err(|e| BackendError::invalid(endpoint, format!("malformed response: {e}")))
    }
}

pub struct HttpGenerator {
    transport: Transport,
}

impl HttpGenerator {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        Ok(Self {
            transport: Transport::new(cfg)?,
        })
    }
}

impl Generator for HttpGenerator {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        req.check(&self.transport.cfg.endpoint)?;
        let body = CompletionBody {
            prompt: &req.prompt,
            max_tokens: req.max_new_tokens,
            temperature: 0.0,
        };
        let reply: CompletionReply = self.transport.post(&body)?;
        // the service truncates in model tokens; this is only a safety bound
        let cap = 4 * req.max_new_tokens;
        Ok(reply.text.chars().take(cap).collect())
    }

    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint {
            name: self.transport.cfg.name.clone(),
            dim: 0,
            endpoint: self.transport.cfg.endpoint.clone(),
        }
    }
}

pub struct HttpEmbedder {
    transport: Transport,
    dim: OnceLock<usize>,
}

impl HttpEmbedder {
    pub fn new(cfg: HttpConfig) -> Result<Self, BackendError> {
        Ok(Self {
            transport: Transport::new(cfg)?,
            dim: OnceLock::new(),
        })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f64>, BackendError> {
        let endpoint = &self.transport.cfg.endpoint;
        if req.text.is_empty() {
            return Err(BackendError::invalid(endpoint, "empty text"));
        }
        let reply: EmbeddingReply = self.transport.post(&EmbeddingBody { text: &req.text })?;
        let dim = *self.dim.get_or_init(|| reply.embedding.len());
        if reply.embedding.len() != dim {
            return Err(BackendError::invalid(
                endpoint,
                format!(
                    "embedding dimension changed from {dim} to {}",
                    reply.embedding.len()
                ),
            ));
        }
        Ok(reply.embedding)
    }

    /// `dim` is 0 until the first successful call.
    fn fingerprint(&self) -> BackendFingerprint {
        BackendFingerprint {
            name: self.transport.cfg.name.clone(),
            dim: self.dim.get().copied().unwrap_or(0),
            endpoint: self.transport.cfg.endpoint.clone(),
        }
    }
}
