//! HTTP client for a remote model server.

use std::time::Duration;

use elect_core::denoiser::{Capabilities, Concurrency, Denoiser, DenoiserRequest, PredictionMode};
use elect_core::{Error, Result, Tensor};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::wire::{EncodeRequest, HealthResponse, PredictRequest, PredictResponse, WireTensor};

pub const TIMEOUT_ENV: &str = "ELECT_REMOTE_TIMEOUT_MS";
pub const DEFAULT_TIMEOUT_MS: u64 = 30_000;

/// Largest response body read from the server.
const MAX_BODY_BYTES: u64 = 256 << 20;

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub timeout: Duration,
    /// Attempts per request for retryable failures.
    pub attempts: u32,
    pub retry_backoff: Duration,
    pub null_image_branch: bool,
    pub pool_size: usize,
}

impl RemoteConfig {
    /// Defaults, with the timeout taken from `ELECT_REMOTE_TIMEOUT_MS`.
    pub fn new(base_url: impl Into<String>) -> Result<Self> {
        let timeout_ms = match std::env::var(TIMEOUT_ENV) {
            Ok(v) => v.trim().parse::<u64>().map_err(|_| {
                Error::InvalidArgument(format!("{TIMEOUT_ENV}={v:?} is not a whole number of milliseconds"))
            })?,
            Err(_) => DEFAULT_TIMEOUT_MS,
        };
        Ok(Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            timeout: Duration::from_millis(timeout_ms),
            attempts: 3,
            retry_backoff: Duration::from_millis(100),
            null_image_branch: true,
            pool_size: 16,
        })
    }
}

/// Denoiser served over HTTP, one prediction per request.
#[derive(Debug)]
pub struct RemoteDenoiser {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    mode: PredictionMode,
    model_id: String,
}

enum Failure {
    Retryable(String),
    Fatal(Error),
}

impl RemoteDenoiser {
    /// Connects and checks `/v1/health`.
    pub fn connect(cfg: RemoteConfig, mode: PredictionMode) -> Result<Self> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(cfg.timeout))
            .http_status_as_error(false)
            .max_idle_connections_per_host(cfg.pool_size)
            .build()
            .into();
        let mut client = Self {
            cfg,
            agent,
            mode,
            model_id: String::new(),
        };
        let health = client.health()?;
        if health.status != "ok" {
            return Err(Error::Transport {
                message: format!("server at {} reports status {:?}", client.cfg.base_url, health.status),
                attempts: 1,
                retryable: false,
            });
        }
        client.model_id = health.model_id;
        Ok(client)
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.cfg
    }

    pub fn health(&self) -> Result<HealthResponse> {
        self.with_retry("/v1/health", || self.agent.get(self.url("/v1/health")).call())
    }

    /// Encodes an image into a latent via `/v1/encode`.
    pub fn encode(&self, req: &EncodeRequest) -> Result<Tensor> {
        let w: WireTensor = self.post("/v1/encode", req)?;
        w.decode()
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.cfg.base_url, path)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        let payload =
            serde_json::to_vec(body).map_err(|e| Error::Protocol(format!("cannot serialize request: {e}")))?;
        self.with_retry(path, || {
            self.agent
                .post(self.url(path))
                .header("content-type", "application/json")
                .send(&payload[..])
        })
    }

    fn with_retry<T: DeserializeOwned>(
        &self,
        path: &str,
        send: impl Fn() -> std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> Result<T> {
        let attempts = self.cfg.attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.once(send()) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(msg)) => {
                    log::warn!("{path} attempt {attempt}/{attempts} failed: {msg}");
                    last = msg;
                    if attempt < attempts {
                        std::thread::sleep(self.cfg.retry_backoff * attempt);
                    }
                }
            }
        }
        Err(Error::Transport {
            message: format!("{}{path}: {last}", self.cfg.base_url),
            attempts,
            retryable: true,
        })
    }

    fn once<T: DeserializeOwned>(
        &self,
        sent: std::result::Result<ureq::http::Response<ureq::Body>, ureq::Error>,
    ) -> std::result::Result<T, Failure> {
        let mut resp = sent.map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_BODY_BYTES)
            .read_to_string()
            .map_err(|e| Failure::Retryable(format!("reading response body: {e}")))?;
        match status {
            200..=299 => serde_json::from_str(&body).map_err(|e| {
                Failure::Fatal(Error::Protocol(format!(
                    "unexpected response body ({e}): {}",
                    snippet(&body)
                )))
            }),
            429 | 500..=599 => Err(Failure::Retryable(format!("HTTP {status}: {}", snippet(&body)))),
            _ => Err(Failure::Fatal(Error::Transport {
                message: format!("HTTP {status}: {}", snippet(&body)),
                attempts: 1,
                retryable: false,
            })),
        }
    }
}

fn snippet(body: &str) -> String {
    let mut s: String = body.chars().take(200).collect();
    if s.len() < body.len() {
        s.push_str("...");
    }
    s
}

impl Denoiser for RemoteDenoiser {
    fn capabilities(&self) -> Capabilities {
        Capabilities {
            mode: self.mode,
            null_image_branch: self.cfg.null_image_branch,
            concurrency: Concurrency::Concurrent,
        }
    }

    fn predict(&self, req: &DenoiserRequest<'_>) -> Result<Tensor> {
        req.validate()?;
        let body = PredictRequest::from_request(req);
        let resp: PredictResponse = self.post("/v1/predict", &body)?;
        let out = resp.output.decode()?;
        if out.shape() != req.latent.shape() {
            return Err(Error::Protocol(format!(
                "server returned shape {:?} for a latent of shape {:?}",
                out.shape(),
                req.latent.shape()
            )));
        }
        Ok(out)
    }
}
