//! Generation backends.
//!
//! A [`Backend`] turns one [`GenerationRequest`] into `n_samples` texts. [`Client`] wraps a
//! backend with request validation, retries, an in-flight bound and a request-rate limit, and
//! exposes [`Client::generate`] and the positional [`Client::generate_batch`].

mod clock;
mod mock;
mod params;
mod remote;

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, OnceLock};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clock::{Clock, FakeClock, RateLimiter, SystemClock};
pub use mock::{MockBackend, MockConfig, MockFallback, MockRule};
pub use params::{DecodingMode, DecodingParams};
pub use remote::RemoteBackend;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP status {status}: {body}")]
    Http { status: u16, body: String },
    #[error("backend {0:?} does not support insertion requests")]
    InsertionUnsupported(String),
    #[error("environment variable {0} with the bearer token is not set")]
    AuthMissing(String),
    #[error("invalid decoding parameters: {0}")]
    InvalidParams(String),
    #[error("backend returned {got} texts, expected {expected}")]
    WrongSampleCount { expected: usize, got: usize },
    #[error("invalid backend spec: {0}")]
    InvalidSpec(String),
    #[error("gave up after {attempts} attempts: {last}")]
    Exhausted {
        attempts: u32,
        last: Box<BackendError>,
    },
}

impl BackendError {
    /// Whether another attempt might succeed.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) => true,
            BackendError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationRequest {
    pub prompt: String,
    /// Right context for fill-in-the-middle requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub insertion_suffix: Option<String>,
    pub params: DecodingParams,
    #[serde(default)]
    pub tag: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub texts: Vec<String>,
    pub backend_id: String,
    pub latency: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Remote,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capabilities {
    #[serde(default)]
    pub insertion: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles per further attempt.
    pub backoff_base_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            backoff_base_ms: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateLimits {
    pub max_in_flight: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_requests_per_second: Option<f64>,
}

impl Default for RateLimits {
    fn default() -> Self {
        Self {
            max_in_flight: 8,
            max_requests_per_second: None,
        }
    }
}

/// Backend description, read from a TOML (or `.json`) spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendSpec {
    pub id: String,
    pub kind: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_url: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_env_var: Option<String>,
    #[serde(default)]
    pub capabilities: Capabilities,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate: RateLimits,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_timeout_secs: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<MockConfig>,
}

impl BackendSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        let bad = |m: String| Err(BackendError::InvalidSpec(m));
        if self.id.trim().is_empty() {
            return bad("empty id".into());
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1".into());
        }
        if self.rate.max_in_flight == 0 {
            return bad("rate.max_in_flight must be at least 1".into());
        }
        match self.kind {
            BackendKind::Remote if self.base_url.is_none() => {
                bad(format!("remote backend {:?} needs base_url", self.id))
            }
            BackendKind::Mock if self.mock.is_none() => {
                bad(format!("mock backend {:?} needs a [mock] table", self.id))
            }
            BackendKind::Mock => self.mock.as_ref().expect("checked").validate(),
            BackendKind::Remote => Ok(()),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BackendError::InvalidSpec(format!("{}: {e}", path.display())))?;
        let spec: BackendSpec = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)
                .map_err(|e| BackendError::InvalidSpec(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text)
                .map_err(|e| BackendError::InvalidSpec(format!("{}: {e}", path.display())))?
        };
        spec.validate()?;
        Ok(spec)
    }

    /// A mock spec with default limits.
    pub fn mock(id: impl Into<String>, config: MockConfig) -> Self {
        Self {
            id: id.into(),
            kind: BackendKind::Mock,
            base_url: None,
            auth_env_var: None,
            capabilities: Capabilities { insertion: true },
            retry: RetryPolicy {
                max_attempts: 2,
                backoff_base_ms: 0,
            },
            rate: RateLimits::default(),
            request_timeout_secs: None,
            mock: Some(config),
        }
    }
}

/// One generation endpoint.
pub trait Backend: Send + Sync {
    fn spec(&self) -> &BackendSpec;

    /// A single attempt; returns one text per requested sample.
    fn complete(&self, request: &GenerationRequest) -> Result<Vec<String>, BackendError>;
}

/// Builds the backend described by `spec`.
pub fn open_backend(spec: BackendSpec) -> Result<Arc<dyn Backend>, BackendError> {
    spec.validate()?;
    Ok(match spec.kind {
        BackendKind::Mock => Arc::new(MockBackend::new(spec)?),
        BackendKind::Remote => Arc::new(RemoteBackend::new(spec)?),
    })
}

/// Loads a mock spec file.
pub fn mock_backend(spec_file: &Path) -> Result<MockBackend, BackendError> {
    let spec = BackendSpec::from_file(spec_file)?;
    if spec.kind != BackendKind::Mock {
        return Err(BackendError::InvalidSpec(format!(
            "{} is not a mock backend spec",
            spec_file.display()
        )));
    }
    MockBackend::new(spec)
}

pub fn open_backend_file(path: &Path) -> Result<Arc<dyn Backend>, BackendError> {
    open_backend(BackendSpec::from_file(path)?)
}

/// A backend plus the submission policy from its spec.
pub struct Client {
    backend: Arc<dyn Backend>,
    limiter: RateLimiter,
    clock: Arc<dyn Clock>,
}

impl Client {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self::with_clock(backend, Arc::new(SystemClock::default()))
    }

    pub fn with_clock(backend: Arc<dyn Backend>, clock: Arc<dyn Clock>) -> Self {
        let limiter = RateLimiter::new(backend.spec().rate.max_requests_per_second);
        Self {
            backend,
            limiter,
            clock,
        }
    }

    pub fn spec(&self) -> &BackendSpec {
        self.backend.spec()
    }

    pub fn clock(&self) -> &dyn Clock {
        self.clock.as_ref()
    }

    fn check(&self, request: &GenerationRequest) -> Result<(), BackendError> {
        request.params.validate()?;
        let spec = self.backend.spec();
        if request.insertion_suffix.is_some() && !spec.capabilities.insertion {
            return Err(BackendError::InsertionUnsupported(spec.id.clone()));
        }
        Ok(())
    }

    /// Validates, then attempts the request until success, a non-retryable error, or the
    /// retry budget runs out.
    pub fn generate(&self, request: &GenerationRequest) -> Result<Completion, BackendError> {
        self.check(request)?;
        let spec = self.backend.spec();
        let expected = request.params.n_samples as usize;
        let started = self.clock.now();
        let mut attempt = 0;
        loop {
            attempt += 1;
            self.limiter.acquire(self.clock.as_ref());
            let outcome = self.backend.complete(request).and_then(|texts| {
                if texts.len() == expected {
                    Ok(texts)
                } else {
                    Err(BackendError::WrongSampleCount {
                        expected,
                        got: texts.len(),
                    })
                }
            });
            match outcome {
                Ok(texts) => {
                    return Ok(Completion {
                        texts,
                        backend_id: spec.id.clone(),
                        latency: self.clock.now().saturating_sub(started),
                    })
                }
                Err(e) if e.is_retryable() && attempt < spec.retry.max_attempts => {
                    let backoff = spec
                        .retry
                        .backoff_base_ms
                        .saturating_mul(1 << (attempt - 1).min(16));
                    log::debug!("{}: attempt {attempt} failed ({e}); retrying", spec.id);
                    self.clock.sleep(Duration::from_millis(backoff));
                }
                Err(e) if e.is_retryable() && attempt > 1 => {
                    return Err(BackendError::Exhausted {
                        attempts: attempt,
                        last: Box::new(e),
                    })
                }
                Err(e) => return Err(e),
            }
        }
    }

    /// Runs every request; result `i` belongs to request `i`. Failures stay in their slot.
    pub fn generate_batch(
        &self,
        requests: &[GenerationRequest],
    ) -> Vec<Result<Completion, BackendError>> {
        if requests.is_empty() {
            return Vec::new();
        }
        let slots: Vec<OnceLock<Result<Completion, BackendError>>> =
            (0..requests.len()).map(|_| OnceLock::new()).collect();
        let next = AtomicUsize::new(0);
        let workers = self.backend.spec().rate.max_in_flight.min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    if i >= requests.len() {
                        break;
                    }
                    let result = self.generate(&requests[i]);
                    if slots[i].set(result).is_err() {
                        panic!("slot {i} delivered twice");
                    }
                });
            }
        });
        slots
            .into_iter()
            .map(|s| s.into_inner().expect("every slot filled"))
            .collect()
    }
}

/// Resolves a spec path relative to a config file's directory.
pub fn resolve_spec_path(base: Option<&Path>, path: &Path) -> PathBuf {
    match base {
        Some(b) if path.is_relative() => b.join(path),
        _ => path.to_path_buf(),
    }
}
