//! Polar-question scoring: the model behind a profiling prompt.
//!
//! A backend reports the logprob gap `logprob(yes) - logprob(no)` for a
//! prompt. The sign of the gap is the extracted answer. Backends are wrapped
//! in a [`Scorer`] which adds the content-addressed response cache and
//! replay-only operation.

mod cache;
mod http;
mod synthetic;
mod template;

use std::fmt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::Direction;
use crate::prompt::ChatPrompt;

pub use cache::{cache_key, CacheEntry, ResponseCache, CACHE_SCHEMA_VERSION};
pub use http::{HttpChatBackend, LogprobMode};
pub use synthetic::{
    synthetic_answer, ResponseCurve, SyntheticBackend, SyntheticDimension, SyntheticModelSpec, SYNTHETIC_GAP_CLAMP,
};
pub use template::ChatTemplate;

/// Candidate answer classes, in the order they enter the cache key.
pub const CANDIDATES: [&str; 2] = ["yes", "no"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

impl Answer {
    /// `yes` iff the gap is non-negative.
    pub fn from_gap(logprob_gap: f64) -> Self {
        if logprob_gap >= 0.0 {
            Answer::Yes
        } else {
            Answer::No
        }
    }
}

/// Steering context a prompt was scored under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Context {
    Baseline,
    Steered(Direction),
}

impl Context {
    pub fn as_str(self) -> &'static str {
        match self {
            Context::Baseline => "baseline",
            Context::Steered(d) => d.as_str(),
        }
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl From<Context> for String {
    fn from(c: Context) -> Self {
        c.as_str().to_owned()
    }
}

impl TryFrom<String> for Context {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        if s == "baseline" {
            Ok(Context::Baseline)
        } else {
            s.parse().map(Context::Steered)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrialIds {
    pub experiment: usize,
    pub steering: usize,
}

/// Where a scoring request sits in the experiment grid.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Coordinates {
    pub dimension: String,
    pub context: Context,
    pub budget_k: usize,
    pub trial_ids: TrialIds,
}

impl Coordinates {
    /// Canonical text form used when a draw (not just the prompt) must be
    /// identified, e.g. for stochastic backends.
    pub fn tag(&self, statement: &str) -> String {
        format!(
            "{}|{}|k={}|te={}|ts={}|{}",
            self.dimension, self.context, self.budget_k, self.trial_ids.experiment, self.trial_ids.steering, statement
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRequest {
    pub prompt: ChatPrompt,
    pub coords: Coordinates,
}

/// One extracted answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerRecord {
    pub answer: Answer,
    pub logprob_gap: f64,
    pub valence: Direction,
    pub confidence: f64,
    pub dimension: String,
    pub context: Context,
    pub budget_k: usize,
    pub trial_ids: TrialIds,
    pub statement: String,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint lacks required capability: {0}")]
    Capability(String),
    #[error("replay cache miss for key {key}")]
    CacheMiss { key: String },
    #[error("unknown dimension {0:?} for synthetic model")]
    UnknownDimension(String),
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("unexpected endpoint response: {0}")]
    Protocol(String),
    #[error("cache io error: {0}")]
    Io(#[from] std::io::Error),
}

impl BackendError {
    /// Fatal errors abort the sweep for the model; others only fail a cell.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            BackendError::Capability(_) | BackendError::CacheMiss { .. } | BackendError::Config(_)
        )
    }
}

pub trait ScoringBackend: Send + Sync {
    fn model_name(&self) -> &str;

    /// `logprob(yes | prompt) - logprob(no | prompt)`.
    fn logprob_gap(&self, request: &ScoreRequest) -> Result<f64, BackendError>;

    /// Stochastic backends answer the same prompt differently per draw, so
    /// their cached answers are keyed on the request coordinates as well.
    fn is_stochastic(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    HttpChat,
    Synthetic,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint_url: Option<String>,
    pub model_name: String,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: f64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub logprob_mode: LogprobMode,
    #[serde(default)]
    pub template: ChatTemplate,
    /// Set to false for models without a system role; the system text is
    /// then prepended to the user text.
    #[serde(default = "default_true")]
    pub system_role: bool,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub synthetic: Option<SyntheticModelSpec>,
    /// Replay only: the cache was written by a stochastic backend.
    #[serde(default)]
    pub coordinate_keyed: bool,
}

fn default_timeout_secs() -> f64 {
    60.0
}
fn default_in_flight() -> usize {
    4
}
fn default_true() -> bool {
    true
}
fn default_top_k() -> usize {
    20
}

impl BackendConfig {
    pub fn synthetic(model_name: impl Into<String>, spec: SyntheticModelSpec) -> Self {
        Self {
            kind: BackendKind::Synthetic,
            endpoint_url: None,
            model_name: model_name.into(),
            request_timeout_secs: default_timeout_secs(),
            max_in_flight: 1,
            cache_dir: None,
            api_key_env: None,
            logprob_mode: LogprobMode::default(),
            template: ChatTemplate::default(),
            system_role: true,
            top_k: default_top_k(),
            synthetic: Some(spec),
            coordinate_keyed: false,
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs_f64(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_in_flight == 0 {
            return Err(BackendError::Config("max_in_flight must be >= 1".into()));
        }
        if self.model_name.trim().is_empty() {
            return Err(BackendError::Config("model_name is empty".into()));
        }
        match self.kind {
            BackendKind::HttpChat if self.endpoint_url.is_none() => Err(BackendError::Config(format!(
                "{}: http_chat backend requires endpoint_url",
                self.model_name
            ))),
            BackendKind::Synthetic if self.synthetic.is_none() => Err(BackendError::Config(format!(
                "{}: synthetic backend requires a synthetic model spec",
                self.model_name
            ))),
            _ => Ok(()),
        }
    }
}

/// A backend plus optional response cache.
pub struct Scorer {
    backend: Option<Box<dyn ScoringBackend>>,
    model_name: String,
    cache: Option<ResponseCache>,
    coordinate_keyed: bool,
    max_in_flight: usize,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl fmt::Debug for Scorer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Scorer")
            .field("model_name", &self.model_name)
            .field("replay", &self.backend.is_none())
            .field("cache", &self.cache)
            .finish()
    }
}

impl Scorer {
    pub fn new(backend: Box<dyn ScoringBackend>, cache: Option<ResponseCache>) -> Self {
        Self {
            model_name: backend.model_name().to_owned(),
            coordinate_keyed: backend.is_stochastic(),
            backend: Some(backend),
            cache,
            max_in_flight: 1,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    /// Serves answers from the cache only; a miss is fatal.
    pub fn replay(model_name: impl Into<String>, cache: ResponseCache, coordinate_keyed: bool) -> Self {
        Self {
            backend: None,
            model_name: model_name.into(),
            cache: Some(cache),
            coordinate_keyed,
            max_in_flight: 1,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.max_in_flight = n.max(1);
        self
    }

    /// Builds the scorer a config describes. `default_cache_dir` is used
    /// when the backend config does not name its own.
    pub fn from_config(config: &BackendConfig, default_cache_dir: Option<PathBuf>) -> Result<Self, BackendError> {
        config.validate()?;
        let cache_dir = config.cache_dir.clone().or(default_cache_dir);
        let cache = cache_dir.map(ResponseCache::open).transpose()?;
        let scorer = match config.kind {
            BackendKind::HttpChat => Scorer::new(Box::new(HttpChatBackend::from_config(config)?), cache),
            BackendKind::Synthetic => {
                let spec = config.synthetic.clone().expect("validated");
                Scorer::new(Box::new(SyntheticBackend::new(&config.model_name, spec)), cache)
            }
            BackendKind::Replay => {
                let cache = cache.ok_or_else(|| {
                    BackendError::Config(format!("{}: replay backend requires cache_dir", config.model_name))
                })?;
                Scorer::replay(&config.model_name, cache, config.coordinate_keyed)
            }
        };
        Ok(scorer.with_max_in_flight(config.max_in_flight))
    }

    pub fn model_name(&self) -> &str {
        &self.model_name
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    pub fn is_replay(&self) -> bool {
        self.backend.is_none()
    }

    pub fn backend_calls(&self) -> u64 {
        self.backend_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn key_for(&self, request: &ScoreRequest) -> String {
        let tag = self
            .coordinate_keyed
            .then(|| request.coords.tag(request.prompt.profiling_statement.text()));
        cache_key(
            &self.model_name,
            &request.prompt.system_text,
            &request.prompt.user_text,
            &CANDIDATES,
            tag.as_deref(),
        )
    }

    /// Returns true when the request's answer is already cached.
    pub fn is_cached(&self, request: &ScoreRequest) -> bool {
        self.cache.as_ref().is_some_and(|c| c.contains(&self.key_for(request)))
    }

    /// Scores one profiling prompt.
    pub fn score_polar_question(&self, request: &ScoreRequest) -> Result<AnswerRecord, BackendError> {
        let key = self.key_for(request);
        let gap = match self.cache.as_ref().and_then(|c| c.get(&key)) {
            Some(entry) => {
                self.cache_hits.fetch_add(1, Ordering::Relaxed);
                entry.logprob_gap
            }
            None => {
                let backend = self
                    .backend
                    .as_ref()
                    .ok_or_else(|| BackendError::CacheMiss { key: key.clone() })?;
                self.backend_calls.fetch_add(1, Ordering::Relaxed);
                let gap = backend.logprob_gap(request)?;
                if let Some(cache) = &self.cache {
                    cache.put(&CacheEntry::new(key, &self.model_name, request, gap))?;
                }
                gap
            }
        };
        Ok(record_for(request, gap))
    }

    /// Scores a batch with at most `max_in_flight` requests outstanding.
    /// Results are returned in request order regardless of completion order.
    pub fn score_batch(&self, requests: &[ScoreRequest]) -> Vec<Result<AnswerRecord, BackendError>> {
        let workers = self.max_in_flight.min(requests.len());
        if workers <= 1 {
            return requests.iter().map(|r| self.score_polar_question(r)).collect();
        }
        let next = AtomicUsize::new(0);
        let mut slots: Vec<Option<Result<AnswerRecord, BackendError>>> = (0..requests.len()).map(|_| None).collect();
        let done = std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers)
                .map(|_| {
                    scope.spawn(|| {
                        let mut local = Vec::new();
                        loop {
                            let i = next.fetch_add(1, Ordering::Relaxed);
                            if i >= requests.len() {
                                break;
                            }
                            local.push((i, self.score_polar_question(&requests[i])));
                        }
                        local
                    })
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("scoring worker panicked"))
                .collect::<Vec<_>>()
        });
        for (i, result) in done {
            slots[i] = Some(result);
        }
        slots.into_iter().map(|s| s.expect("every slot scored")).collect()
    }
}

fn record_for(request: &ScoreRequest, logprob_gap: f64) -> AnswerRecord {
    let statement = &request.prompt.profiling_statement;
    AnswerRecord {
        answer: Answer::from_gap(logprob_gap),
        logprob_gap,
        valence: statement.direction(),
        confidence: statement.label_confidence(),
        dimension: request.coords.dimension.clone(),
        context: request.coords.context,
        budget_k: request.coords.budget_k,
        trial_ids: request.coords.trial_ids,
        statement: statement.text().to_owned(),
    }
}
