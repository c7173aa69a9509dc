//! Generation and embedding contracts.
//!
//! Everything the pipeline needs from a language model or an encoder goes
//! through [`Generator`] and [`Embedder`]. Live HTTP clients and
//! deterministic mocks implement the same traits; [`Retrying`] adds the
//! retry/backoff policy on top of either.

mod http;
mod mock;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{HttpConfig, HttpEmbedder, HttpGenerator};
pub use mock::{HashEmbedder, ScriptedGenerator};

/// Answer budget, matching the relaxed exact-match window.
pub const ANSWER_MAX_NEW_TOKENS: usize = 30;
/// Confirmation budget; fact statements can run past 30 tokens.
pub const CONFIRM_MAX_NEW_TOKENS: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt: String,
    pub max_new_tokens: usize,
    pub greedy: bool,
}

impl GenerationRequest {
    pub fn greedy(prompt: impl Into<String>, max_new_tokens: usize) -> Self {
        Self {
            prompt: prompt.into(),
            max_new_tokens,
            greedy: true,
        }
    }

    fn check(&self, endpoint: &str) -> Result<(), BackendError> {
        if self.prompt.is_empty() {
            return Err(BackendError::invalid(endpoint, "empty prompt"));
        }
        if self.max_new_tokens < 1 {
            return Err(BackendError::invalid(
                endpoint,
                "max_new_tokens must be >= 1",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingRequest {
    pub text: String,
}

impl EmbeddingRequest {
    pub fn new(text: impl Into<String>) -> Self {
        Self { text: text.into() }
    }
}

/// Identifies a backend instance in stores and reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendFingerprint {
    pub name: String,
    pub dim: usize,
    pub endpoint: String,
}

impl fmt::Display for BackendFingerprint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:dim={}@{}", self.name, self.dim, self.endpoint)
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{endpoint}: {message}")]
pub struct BackendError {
    pub endpoint: String,
    pub message: String,
    /// Transport failures and server errors are worth retrying; malformed
    /// requests and client errors are not.
    pub transient: bool,
}

impl BackendError {
    pub fn transient(endpoint: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            message: message.into(),
            transient: true,
        }
    }

    pub fn invalid(endpoint: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            message: message.into(),
            transient: false,
        }
    }
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError>;
    fn fingerprint(&self) -> BackendFingerprint;
}

pub trait Embedder: Send + Sync {
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f64>, BackendError>;
    fn fingerprint(&self) -> BackendFingerprint;
}

macro_rules! forward_impls {
    ($($ptr:ty),*) => {$(
        impl<T: Generator + ?Sized> Generator for $ptr {
            fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
                (**self).generate(req)
            }
            fn fingerprint(&self) -> BackendFingerprint {
                (**self).fingerprint()
            }
        }
        impl<T: Embedder + ?Sized> Embedder for $ptr {
            fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f64>, BackendError> {
                (**self).embed(req)
            }
            fn fingerprint(&self) -> BackendFingerprint {
                (**self).fingerprint()
            }
        }
    )*};
}

forward_impls!(&T, Box<T>, Arc<T>);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    /// Delay before the first retry; doubles on each subsequent one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        Self {
            max_retries,
            base_delay: Duration::ZERO,
        }
    }

    pub fn delay_for(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }

    fn run<T>(
        &self,
        mut attempt: impl FnMut() -> Result<T, BackendError>,
    ) -> Result<T, BackendError> {
        let mut retry = 0;
        loop {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) if e.transient && retry < self.max_retries => {
                    let delay = self.delay_for(retry);
                    tracing::debug!(endpoint = %e.endpoint, retry, ?delay, "retrying: {}", e.message);
                    if !delay.is_zero() {
                        std::thread::sleep(delay);
                    }
                    retry += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Wraps a backend with retries and exponential backoff.
#[derive(Debug, Clone)]
pub struct Retrying<B> {
    inner: B,
    policy: RetryPolicy,
}

impl<B> Retrying<B> {
    pub fn new(inner: B, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: Generator> Generator for Retrying<B> {
    fn generate(&self, req: &GenerationRequest) -> Result<String, BackendError> {
        self.policy.run(|| self.inner.generate(req))
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}

impl<B: Embedder> Embedder for Retrying<B> {
    fn embed(&self, req: &EmbeddingRequest) -> Result<Vec<f64>, BackendError> {
        self.policy.run(|| self.inner.embed(req))
    }

    fn fingerprint(&self) -> BackendFingerprint {
        self.inner.fingerprint()
    }
}
