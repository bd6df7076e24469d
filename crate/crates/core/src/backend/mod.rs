//! Dispatch of (image, prompt) requests to vision-chat endpoints.
//!
//! An [`Endpoint`] pairs a [`BackendConfig`] with a [`VisionBackend`]
//! transport. [`Endpoint::classify_image`] adds caching and retries on top of
//! the transport; [`run_campaign`] fans a manifest out over a bounded pool of
//! workers.

mod cache;
mod campaign;
mod http;
mod mock;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Manifest;
use crate::schema::Category;

pub use cache::{CacheEntry, CacheKey, ResponseCache};
pub use campaign::{
    bench_latency, run_campaign, run_jobs, CampaignError, CampaignOptions, Job, LatencyStats,
    BENCH_MAX_OUTPUT_TOKENS, BENCH_PROMPT,
};
pub use http::{chat_request_body, HttpBackend};
pub use mock::{MockBackend, MockBehavior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryConfig {
    pub max_attempts: u32,
    /// Seconds before the first retry; doubles on every further attempt.
    pub base_delay: f64,
    pub jitter_fraction: f64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: 1.0, jitter_fraction: 0.2 }
    }
}

impl RetryConfig {
    /// Delay before retrying after failed attempt number `attempt` (1-based),
    /// without jitter.
    pub fn nominal_delay(&self, attempt: u32) -> f64 {
        self.base_delay * 2f64.powi(attempt.saturating_sub(1) as i32)
    }

    fn delay<R: Rng>(&self, attempt: u32, rng: &mut R) -> Duration {
        let nominal = self.nominal_delay(attempt);
        let j = self.jitter_fraction;
        let factor = if j > 0.0 { rng.gen_range(1.0 - j..=1.0 + j) } else { 1.0 };
        Duration::from_secs_f64((nominal * factor).max(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub name: String,
    /// Endpoint root, or a `mock:` spec for the built-in test backends.
    pub base_url: String,
    pub model_id: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_max_output_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub retry: RetryConfig,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: f64,
    /// Optional cap on request starts per minute across all workers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub requests_per_minute: Option<f64>,
}

fn default_api_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}
fn default_max_output_tokens() -> u32 {
    64
}
fn default_max_in_flight() -> usize {
    4
}
fn default_timeout() -> f64 {
    120.0
}

impl BackendConfig {
    /// Config for a built-in mock backend, e.g. `mock:oracle`.
    pub fn mock(spec: &str) -> Self {
        Self {
            name: spec.to_string(),
            base_url: spec.to_string(),
            model_id: spec.to_string(),
            api_key_env: default_api_key_env(),
            max_output_tokens: default_max_output_tokens(),
            temperature: 0.0,
            max_in_flight: default_max_in_flight(),
            retry: RetryConfig::default(),
            timeout: default_timeout(),
            requests_per_minute: None,
        }
    }

    pub fn is_mock(&self) -> bool {
        self.base_url.starts_with("mock:")
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: &str| Err(BackendError::InvalidConfig(format!("{}: {m}", self.name)));
        if self.max_output_tokens < 1 {
            return bad("max_output_tokens must be at least 1");
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be a non-negative number");
        }
        if self.max_in_flight < 1 {
            return bad("max_in_flight must be at least 1");
        }
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be at least 1");
        }
        if !(self.retry.base_delay >= 0.0 && self.retry.base_delay.is_finite()) {
            return bad("retry.base_delay must be a non-negative number");
        }
        if !(0.0..=1.0).contains(&self.retry.jitter_fraction) {
            return bad("retry.jitter_fraction must lie in [0, 1]");
        }
        if !(self.timeout > 0.0 && self.timeout.is_finite()) {
            return bad("timeout must be positive");
        }
        if let Some(rpm) = self.requests_per_minute {
            if !(rpm > 0.0 && rpm.is_finite()) {
                return bad("requests_per_minute must be positive");
            }
        }
        if url::Url::parse(&self.base_url).is_err() {
            return bad("base_url is not a valid URL");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoding {
    pub max_output_tokens: u32,
    pub temperature: f64,
}

#[derive(Debug, Clone)]
pub struct InferenceRequest {
    pub prompt_text: String,
    pub image_bytes: Arc<Vec<u8>>,
    pub image_mime: &'static str,
    pub decoding: Decoding,
}

impl InferenceRequest {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.image_bytes.is_empty() {
            return Err(BackendError::InvalidRequest("image is empty".into()));
        }
        if !matches!(self.image_mime, "image/jpeg" | "image/png") {
            return Err(BackendError::InvalidRequest(format!("unsupported mime {}", self.image_mime)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceResponse {
    pub text: String,
    /// Wall-clock seconds of the successful exchange; zero for cache hits.
    pub latency: f64,
    /// Zero for cache hits.
    pub attempts: u32,
    pub from_cache: bool,
}

/// What the request is about. Remote transports ignore it; mock backends
/// use it to script their answers.
#[derive(Debug, Clone, Copy, Default)]
pub struct RequestContext<'a> {
    pub sample_id: Option<&'a str>,
    pub category: Option<&'a Category>,
    pub tag_order: &'a [String],
}

/// Failure of a single exchange with an endpoint.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum CallError {
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    Malformed(String),
}

impl CallError {
    fn is_transient(&self) -> bool {
        match self {
            CallError::Status { status, .. } => *status == 429 || *status >= 500,
            CallError::Timeout | CallError::Transport(_) => true,
            CallError::Malformed(_) => false,
        }
    }
}

/// A transport able to answer one vision-chat request. Implementations must
/// be safe to call from several threads at once.
pub trait VisionBackend: Send + Sync {
    fn complete(&self, request: &InferenceRequest, ctx: &RequestContext<'_>) -> Result<String, CallError>;
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("giving up after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: CallError },
    #[error("endpoint rejected credentials (HTTP {status})")]
    Auth { status: u16 },
    #[error("endpoint rejected request (HTTP {status}): {body}")]
    BadRequest { status: u16, body: String },
    #[error("unusable response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("invalid backend config: {0}")]
    InvalidConfig(String),
    #[error("cache failure: {0}")]
    Cache(#[from] std::io::Error),
}

/// Spaces out request starts to honor `requests_per_minute`.
struct Pacer {
    interval: Duration,
    next: Mutex<Instant>,
}

impl Pacer {
    fn wait(&self) {
        let slot = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            std::thread::sleep(slot - now);
        }
    }
}

pub struct Endpoint {
    pub config: BackendConfig,
    backend: Arc<dyn VisionBackend>,
    pacer: Option<Pacer>,
}

impl std::fmt::Debug for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Endpoint").field("config", &self.config).finish_non_exhaustive()
    }
}

impl Endpoint {
    pub fn new(config: BackendConfig, backend: Arc<dyn VisionBackend>) -> Result<Self, BackendError> {
        config.validate()?;
        let pacer = config.requests_per_minute.map(|rpm| Pacer {
            interval: Duration::from_secs_f64(60.0 / rpm),
            next: Mutex::new(Instant::now()),
        });
        Ok(Self { config, backend, pacer })
    }

    /// Builds the transport named by `config.base_url`. Mock oracles read
    /// their answers from `manifest`.
    pub fn from_config(config: BackendConfig, manifest: Option<&Manifest>) -> Result<Self, BackendError> {
        config.validate()?;
        let backend: Arc<dyn VisionBackend> = if config.is_mock() {
            Arc::new(MockBackend::from_spec(&config.base_url, manifest)?)
        } else {
            Arc::new(HttpBackend::new(&config)?)
        };
        Self::new(config, backend)
    }

    pub fn decoding(&self) -> Decoding {
        Decoding {
            max_output_tokens: self.config.max_output_tokens,
            temperature: self.config.temperature,
        }
    }

    /// Answers from the cache when possible, otherwise calls the transport,
    /// retrying transient failures with exponential backoff.
    pub fn classify_image(
        &self,
        request: &InferenceRequest,
        ctx: &RequestContext<'_>,
        cache: &ResponseCache,
    ) -> Result<InferenceResponse, BackendError> {
        request.validate()?;
        let key = CacheKey::new(
            &self.config.model_id,
            &request.prompt_text,
            &request.image_bytes,
            request.decoding.max_output_tokens,
            request.decoding.temperature,
        );
        if let Some(entry) = cache.get(&key)? {
            return Ok(InferenceResponse { text: entry.text, latency: 0.0, attempts: 0, from_cache: true });
        }

        let retry = &self.config.retry;
        let mut rng = rand::thread_rng();
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(p) = &self.pacer {
                p.wait();
            }
            let started = Instant::now();
            let result = self.backend.complete(request, ctx);
            let latency = started.elapsed().as_secs_f64();
            let err = match result {
                Ok(text) => {
                    cache.put(&key, &text)?;
                    return Ok(InferenceResponse { text, latency, attempts: attempt, from_cache: false });
                }
                Err(e) => e,
            };
            match err {
                CallError::Status { status: status @ (401 | 403), .. } => {
                    return Err(BackendError::Auth { status })
                }
                CallError::Malformed(m) => return Err(BackendError::Protocol(m)),
                ref e if !e.is_transient() => {
                    let CallError::Status { status, body } = err else { unreachable!() };
                    return Err(BackendError::BadRequest { status, body });
                }
                _ if attempt >= retry.max_attempts => {
                    return Err(BackendError::Transport { attempts: attempt, last: err })
                }
                _ => {
                    log::debug!("{}: attempt {attempt} failed ({err}), retrying", self.config.name);
                    std::thread::sleep(retry.delay(attempt, &mut rng));
                }
            }
        }
    }
}
