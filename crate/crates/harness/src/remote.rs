//! HTTP client for a remote victim embedder.
//!
//! Wire protocol: `POST {base_url}/embed` with `{"texts": [...]}`, answered by
//! `{"embeddings": [[...], ...], "dim": N}`. `GET {base_url}/health` returns
//! `{"status": "ok", "dim": N}`. A bearer token is sent when `EMBINV_API_KEY`
//! is set.

use std::time::Duration;

use embinv_core::embed::EmbedderPort;
use embinv_core::{Embedding, Error, Result};
use serde::{Deserialize, Serialize};

pub const API_KEY_ENV: &str = "EMBINV_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteConfig {
    pub url: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    /// Output dimension; asked from `/health` when absent.
    #[serde(default)]
    pub dim: Option<usize>,
}

fn default_timeout() -> f64 {
    30.0
}

fn default_retries() -> u32 {
    2
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub embeddings: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub dim: usize,
}

pub struct RemoteEmbedder {
    client: reqwest::blocking::Client,
    base: String,
    retries: u32,
    api_key: Option<String>,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn connect(cfg: &RemoteConfig) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs_f64(cfg.timeout_secs))
            .build()
            .map_err(|e| Error::Remote { attempts: 0, message: e.to_string() })?;
        let mut this = Self {
            client,
            base: cfg.url.trim_end_matches('/').to_string(),
            retries: cfg.retries,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            dim: cfg.dim.unwrap_or(0),
        };
        if cfg.dim.is_none() {
            this.dim = this.health()?.dim;
        }
        if this.dim == 0 {
            return Err(Error::Remote { attempts: 1, message: "remote reported dimension 0".into() });
        }
        Ok(this)
    }

    pub fn health(&self) -> Result<HealthResponse> {
        self.with_retries(|| {
            let resp = self.authorize(self.client.get(format!("{}/health", self.base))).send()?;
            Self::decode(resp)
        })
    }

    fn authorize(&self, req: reqwest::blocking::RequestBuilder) -> reqwest::blocking::RequestBuilder {
        match &self.api_key {
            Some(key) => req.bearer_auth(key),
            None => req,
        }
    }

    fn decode<T: serde::de::DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, Attempt> {
        let status = resp.status();
        let body = resp.text().map_err(Attempt::from)?;
        if !status.is_success() {
            let err = format!("HTTP {status}: {body}");
            return Err(if status.is_server_error() { Attempt::Retry(err) } else { Attempt::Fatal(err) });
        }
        serde_json::from_str(&body).map_err(|e| Attempt::Fatal(format!("bad response body: {e}")))
    }

    fn with_retries<T>(&self, mut call: impl FnMut() -> Result<T, Attempt>) -> Result<T> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match call() {
                Ok(v) => return Ok(v),
                Err(Attempt::Retry(message)) if attempts <= self.retries => {
                    tracing::warn!(attempts, %message, "remote embedder call failed, retrying");
                    std::thread::sleep(Duration::from_millis(50 * u64::from(attempts)));
                }
                Err(Attempt::Retry(message) | Attempt::Fatal(message)) => {
                    return Err(Error::Remote { attempts, message })
                }
            }
        }
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl From<reqwest::Error> for Attempt {
    fn from(e: reqwest::Error) -> Self {
        Attempt::Retry(e.to_string())
    }
}

impl EmbedderPort for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let body = EmbedRequest { texts: texts.to_vec() };
        let resp: EmbedResponse = self.with_retries(|| {
            let resp = self
                .authorize(self.client.post(format!("{}/embed", self.base)))
                .json(&body)
                .send()?;
            Self::decode(resp)
        })?;
        let malformed = |message: String| Error::Remote { attempts: 1, message };
        if resp.embeddings.len() != texts.len() {
            return Err(malformed(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                resp.embeddings.len()
            )));
        }
        resp.embeddings
            .into_iter()
            .map(|v| {
                if v.len() != self.dim {
                    return Err(malformed(format!("expected dimension {}, got {}", self.dim, v.len())));
                }
                Embedding::new(v)
            })
            .collect()
    }
}
