//! Uniform access to text-generation backends with record/replay.
//!
//! Every request is addressed by a content hash of `(model_id, prompt,
//! temperature)`. With replay enabled the fixture store is consulted before
//! any backend call; with record enabled live responses are persisted.

#[cfg(feature = "http")]
pub mod http;
pub mod store;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use store::{FixtureStore, IndexEntry, StoreError};

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One model participating in a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Short key identifying the method (`a`, `b`, ...).
    pub method_key: String,
    pub model_id: String,
    /// Base URL for HTTP backends, or a tag such as `synthetic` / `fixture`.
    pub endpoint: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output: u32,
    /// Name of the environment variable holding the bearer token.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
}

fn default_max_output() -> u32 {
    8192
}

#[derive(Debug, thiserror::Error)]
pub enum ModelConfigError {
    #[error("cannot read model config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model config does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("model config lists no models")]
    Empty,
    #[error("duplicate method key {0:?}")]
    DuplicateKey(String),
    #[error("method key {0:?} must be non-empty ASCII alphanumeric")]
    BadKey(String),
    #[error("temperature differs across models ({0} vs {1}); a run uses one fixed temperature")]
    MixedTemperature(f64, f64),
}

/// Model config file: a shared temperature plus the list of models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsConfig {
    #[serde(default)]
    pub temperature: Option<f64>,
    pub models: Vec<ModelSpec>,
}

impl ModelsConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Vec<ModelSpec>, ModelConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ModelConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Vec<ModelSpec>, ModelConfigError> {
        let mut cfg: ModelsConfig = serde_json::from_str(text)?;
        if let Some(t) = cfg.temperature {
            for m in &mut cfg.models {
                m.temperature = t;
            }
        }
        validate_models(&cfg.models)?;
        Ok(cfg.models)
    }
}

pub fn validate_models(models: &[ModelSpec]) -> Result<(), ModelConfigError> {
    let first = models.first().ok_or(ModelConfigError::Empty)?;
    let mut keys = std::collections::BTreeSet::new();
    for m in models {
        if m.method_key.is_empty() || !m.method_key.chars().all(|c| c.is_ascii_alphanumeric()) {
            return Err(ModelConfigError::BadKey(m.method_key.clone()));
        }
        if !keys.insert(m.method_key.as_str()) {
            return Err(ModelConfigError::DuplicateKey(m.method_key.clone()));
        }
        if m.temperature.to_bits() != first.temperature.to_bits() {
            return Err(ModelConfigError::MixedTemperature(first.temperature, m.temperature));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RequestKey(String);

impl RequestKey {
    pub fn compute(model_id: &str, prompt: &str, temperature: f64) -> Self {
        let mut h = Sha256::new();
        // length-prefix the id so (id, prompt) boundaries cannot alias
        h.update((model_id.len() as u64).to_le_bytes());
        h.update(model_id.as_bytes());
        h.update(temperature.to_bits().to_le_bytes());
        h.update(prompt.as_bytes());
        Self(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for RequestKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone)]
pub struct CompletionRequest {
    pub model: Arc<ModelSpec>,
    pub prompt: String,
    pub key: RequestKey,
}

impl CompletionRequest {
    pub fn new(model: Arc<ModelSpec>, prompt: impl Into<String>) -> Self {
        let prompt = prompt.into();
        let key = RequestKey::compute(&model.model_id, &prompt, model.temperature);
        Self { model, prompt, key }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseSource {
    Live,
    /// Found in the store, recorded earlier in this session.
    Cache,
    /// Found in the store, recorded by an earlier session.
    Fixture,
}

#[derive(Debug, Clone)]
pub struct CompletionResult {
    pub text: String,
    pub latency: Duration,
    pub source: ResponseSource,
    pub attempt_count: u32,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum BackendError {
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
}

pub trait Backend: Send + Sync {
    fn generate(&self, model: &ModelSpec, prompt: &str) -> Result<String, BackendError>;
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("no recorded response for request key {0} (replay-only mode)")]
    FixtureMiss(RequestKey),
    #[error("no backend configured for model {0:?}")]
    NoBackend(String),
    #[error("model {model:?} failed after {attempts} attempt(s): {source}")]
    Transport {
        model: String,
        attempts: u32,
        #[source]
        source: BackendError,
    },
    #[error("model {0:?} returned an empty response")]
    EmptyResponse(String),
    #[error(transparent)]
    Store(#[from] StoreError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (0-based): base, 2·base, 4·base, ...
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CacheMode {
    pub replay: bool,
    pub record: bool,
    pub replay_only: bool,
}

impl Default for CacheMode {
    fn default() -> Self {
        Self {
            replay: true,
            record: false,
            replay_only: false,
        }
    }
}

impl CacheMode {
    pub fn replay_only() -> Self {
        Self {
            replay: true,
            record: false,
            replay_only: true,
        }
    }

    pub fn record() -> Self {
        Self {
            replay: true,
            record: true,
            replay_only: false,
        }
    }
}

pub struct Gateway {
    backend: Option<Arc<dyn Backend>>,
    store: Option<FixtureStore>,
    mode: CacheMode,
    retry: RetryPolicy,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("has_backend", &self.backend.is_some())
            .field("store", &self.store.as_ref().map(|s| s.dir().to_path_buf()))
            .field("mode", &self.mode)
            .field("retry", &self.retry)
            .finish()
    }
}

impl Gateway {
    pub fn new(mode: CacheMode) -> Self {
        Self {
            backend: None,
            store: None,
            mode,
            retry: RetryPolicy::default(),
        }
    }

    pub fn with_backend(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn with_store(mut self, store: FixtureStore) -> Self {
        self.store = Some(store);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn store(&self) -> Option<&FixtureStore> {
        self.store.as_ref()
    }

    pub fn mode(&self) -> CacheMode {
        self.mode
    }

    pub fn request(&self, model: &Arc<ModelSpec>, prompt: impl Into<String>) -> CompletionRequest {
        CompletionRequest::new(Arc::clone(model), prompt)
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if request.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        let started = Instant::now();
        let key = request.key.as_str();

        if self.mode.replay || self.mode.replay_only {
            if let Some(store) = &self.store {
                if let Some(text) = store.get(key)? {
                    let source = if store.written_this_session(key) {
                        ResponseSource::Cache
                    } else {
                        ResponseSource::Fixture
                    };
                    return Ok(CompletionResult {
                        text,
                        latency: started.elapsed(),
                        source,
                        attempt_count: 1,
                    });
                }
            }
        }
        if self.mode.replay_only {
            return Err(GatewayError::FixtureMiss(request.key.clone()));
        }
        self.call_live(request, started)
    }

    /// Like [`Gateway::complete`] but skips the cache lookup, so a retry after
    /// a bad response reaches the backend. In replay-only mode this is the
    /// same as `complete`.
    pub fn complete_fresh(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        if self.mode.replay_only {
            return self.complete(request);
        }
        if request.prompt.is_empty() {
            return Err(GatewayError::EmptyPrompt);
        }
        self.call_live(request, Instant::now())
    }

    fn call_live(
        &self,
        request: &CompletionRequest,
        started: Instant,
    ) -> Result<CompletionResult, GatewayError> {
        let key = request.key.as_str();
        let backend = self
            .backend
            .as_ref()
            .ok_or_else(|| GatewayError::NoBackend(request.model.model_id.clone()))?;
        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempt = 0;
        let text = loop {
            attempt += 1;
            match backend.generate(&request.model, &request.prompt) {
                Ok(text) => break text,
                Err(BackendError::Transient(msg)) if attempt < max_attempts => {
                    log_retry(&request.model.model_id, attempt, &msg);
                    std::thread::sleep(self.retry.delay(attempt - 1));
                }
                Err(source) => {
                    return Err(GatewayError::Transport {
                        model: request.model.model_id.clone(),
                        attempts: attempt,
                        source,
                    })
                }
            }
        };
        if text.trim().is_empty() {
            return Err(GatewayError::EmptyResponse(request.model.model_id.clone()));
        }
        if self.mode.record {
            if let Some(store) = &self.store {
                store.put(key, &request.model.model_id, &request.prompt, &text)?;
            }
        }
        Ok(CompletionResult {
            text,
            latency: started.elapsed(),
            source: ResponseSource::Live,
            attempt_count: attempt,
        })
    }

    /// Runs requests with at most `parallelism` in flight. Results keep the
    /// input order; one failure does not stop the others.
    pub fn run_batch(&self, requests: &[CompletionRequest], parallelism: usize) -> BatchReport {
        let parallelism = parallelism.max(1);
        let slots: Vec<Mutex<Option<Result<CompletionResult, GatewayError>>>> =
            requests.iter().map(|_| Mutex::new(None)).collect();
        let next = AtomicUsize::new(0);
        let workers = parallelism.min(requests.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some(req) = requests.get(i) else { break };
                    let outcome = self.complete(req);
                    *slots[i].lock().expect("slot lock") = Some(outcome);
                });
            }
        });
        BatchReport {
            results: slots
                .into_iter()
                .map(|s| s.into_inner().expect("slot lock").expect("every slot filled"))
                .collect(),
        }
    }
}

fn log_retry(model: &str, attempt: u32, msg: &str) {
    if std::env::var_os("CROSSWALK_QUIET").is_none() {
        eprintln!("retrying {model} after attempt {attempt}: {msg}");
    }
}

#[derive(Debug)]
pub struct BatchReport {
    pub results: Vec<Result<CompletionResult, GatewayError>>,
}

impl BatchReport {
    /// Indices (0-based) and errors of failed requests.
    pub fn failures(&self) -> Vec<(usize, &GatewayError)> {
        self.results
            .iter()
            .enumerate()
            .filter_map(|(i, r)| r.as_ref().err().map(|e| (i, e)))
            .collect()
    }

    pub fn is_complete(&self) -> bool {
        self.results.iter().all(Result::is_ok)
    }
}
