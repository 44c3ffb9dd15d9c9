//! OpenAI-compatible HTTP scoring.
//!
//! Two acquisition protocols are supported:
//!
//! * `echo` — one `/completions` request per candidate surface form, with
//!   the candidate appended to the rendered prompt and `echo` enabled; the
//!   logprobs of the appended tokens are summed.
//! * `top_k` — a single `/chat/completions` request for one token with
//!   `top_logprobs`; both candidate classes are read from the top-K list.
//!
//! In both cases candidate forms are compared case-insensitively and the
//! maximum logprob per class is used.

use std::time::Duration;

use rand::Rng;
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::template::prepend_system;
use super::{BackendConfig, BackendError, ChatTemplate, ScoreRequest, ScoringBackend};

const MAX_ATTEMPTS: u32 = 3;
const YES_FORMS: [&str; 2] = ["Yes", "yes"];
const NO_FORMS: [&str; 2] = ["No", "no"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogprobMode {
    #[default]
    Echo,
    TopK,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Class {
    Yes,
    No,
}

fn classify(token: &str) -> Option<Class> {
    match token.trim().to_ascii_lowercase().as_str() {
        "yes" => Some(Class::Yes),
        "no" => Some(Class::No),
        _ => None,
    }
}

enum Failure {
    Retryable(String),
    Fatal(BackendError),
}

#[derive(Debug, Clone)]
pub struct HttpChatBackend {
    client: Client,
    base_url: String,
    model_name: String,
    api_key: Option<String>,
    mode: LogprobMode,
    template: ChatTemplate,
    system_role: bool,
    top_k: usize,
    backoff: Duration,
}

impl HttpChatBackend {
    pub fn from_config(config: &BackendConfig) -> Result<Self, BackendError> {
        let base_url = config
            .endpoint_url
            .clone()
            .ok_or_else(|| BackendError::Config("http_chat backend requires endpoint_url".into()))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = Client::builder()
            .timeout(config.request_timeout())
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self {
            client,
            base_url: base_url.trim_end_matches('/').to_owned(),
            model_name: config.model_name.clone(),
            api_key,
            mode: config.logprob_mode,
            template: config.template,
            system_role: config.system_role,
            top_k: config.top_k.max(1),
            backoff: Duration::from_millis(500),
        })
    }

    /// Base delay of the exponential backoff between attempts.
    pub fn with_backoff(mut self, backoff: Duration) -> Self {
        self.backoff = backoff;
        self
    }

    fn post(&self, path: &str, body: &Value) -> Result<Value, BackendError> {
        let url = format!("{}/{path}", self.base_url);
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.post_once(&url, body) {
                Ok(v) => return Ok(v),
                Err(Failure::Fatal(e)) => return Err(e),
                Err(Failure::Retryable(message)) if attempt >= MAX_ATTEMPTS => {
                    return Err(BackendError::Transport {
                        attempts: attempt,
                        message,
                    })
                }
                Err(Failure::Retryable(message)) => {
                    let jitter = rand::thread_rng().gen_range(0.5..1.5);
                    let delay = self.backoff.mul_f64(2f64.powi(attempt as i32 - 1) * jitter);
                    log::warn!(
                        "{}: attempt {attempt} failed ({message}), retrying in {delay:?}",
                        self.model_name
                    );
                    std::thread::sleep(delay);
                }
            }
        }
    }

    fn post_once(&self, url: &str, body: &Value) -> Result<Value, Failure> {
        let mut req = self.client.post(url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| Failure::Retryable(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| Failure::Retryable(e.to_string()))?;
        if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() {
            return Err(Failure::Retryable(format!("HTTP {status}: {text}")));
        }
        if !status.is_success() {
            if text.to_ascii_lowercase().contains("logprob") || text.contains("echo") {
                return Err(Failure::Fatal(BackendError::Capability(format!(
                    "logprobs rejected by endpoint (HTTP {status}): {text}"
                ))));
            }
            return Err(Failure::Fatal(BackendError::Protocol(format!("HTTP {status}: {text}"))));
        }
        serde_json::from_str(&text).map_err(|e| Failure::Fatal(BackendError::Protocol(format!("invalid JSON: {e}"))))
    }

    fn echo_logprob(&self, prompt: &str, form: &str) -> Result<f64, BackendError> {
        let body = json!({
            "model": self.model_name,
            "prompt": format!("{prompt}{form}"),
            "max_tokens": 1,
            "temperature": 0.0,
            "echo": true,
            "logprobs": 1,
        });
        let resp = self.post("completions", &body)?;
        parse_echo_logprob(&resp, prompt.len())
    }

    fn gap_echo(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        let prompt = match (self.template, self.system_role) {
            (ChatTemplate::Llama3, true) => self.template.render(&request.prompt),
            _ => prepend_system(&request.prompt),
        };
        let best = |forms: &[&str]| -> Result<f64, BackendError> {
            forms
                .iter()
                .map(|f| self.echo_logprob(&prompt, f))
                .try_fold(f64::NEG_INFINITY, |acc, lp| lp.map(|lp| acc.max(lp)))
        };
        Ok(best(&YES_FORMS)? - best(&NO_FORMS)?)
    }

    fn gap_top_k(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        let messages = if self.system_role && !request.prompt.system_text.is_empty() {
            json!([
                {"role": "system", "content": request.prompt.system_text},
                {"role": "user", "content": request.prompt.user_text},
            ])
        } else {
            json!([{"role": "user", "content": prepend_system(&request.prompt)}])
        };
        let body = json!({
            "model": self.model_name,
            "messages": messages,
            "max_tokens": 1,
            "temperature": 0.0,
            "logprobs": true,
            "top_logprobs": self.top_k,
        });
        let resp = self.post("chat/completions", &body)?;
        parse_top_k_gap(&resp)
    }
}

impl ScoringBackend for HttpChatBackend {
    fn model_name(&self) -> &str {
        &self.model_name
    }

    fn logprob_gap(&self, request: &ScoreRequest) -> Result<f64, BackendError> {
        match self.mode {
            LogprobMode::Echo => self.gap_echo(request),
            LogprobMode::TopK => self.gap_top_k(request),
        }
    }
}

fn missing_logprobs(what: &str) -> BackendError {
    BackendError::Capability(format!("response has no {what}"))
}

/// Sums the logprobs of echoed tokens starting at or after `prompt_len`.
pub(crate) fn parse_echo_logprob(resp: &Value, prompt_len: usize) -> Result<f64, BackendError> {
    let logprobs = resp
        .pointer("/choices/0/logprobs")
        .filter(|v| !v.is_null())
        .ok_or_else(|| missing_logprobs("choices[0].logprobs (echo scoring)"))?;
    let lps = logprobs
        .get("token_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| missing_logprobs("token_logprobs"))?;
    let offsets = logprobs
        .get("text_offset")
        .and_then(Value::as_array)
        .ok_or_else(|| missing_logprobs("text_offset"))?;
    let generated = resp
        .pointer("/usage/completion_tokens")
        .and_then(Value::as_u64)
        .unwrap_or(1) as usize;
    let echoed = lps.len().saturating_sub(generated);
    let mut total = 0.0;
    let mut found = false;
    for (lp, off) in lps.iter().zip(offsets).take(echoed) {
        let off = off.as_u64().unwrap_or(0) as usize;
        if off >= prompt_len {
            total += lp
                .as_f64()
                .ok_or_else(|| BackendError::Protocol("null logprob for candidate token".into()))?;
            found = true;
        }
    }
    if !found {
        return Err(BackendError::Protocol("candidate tokens not found in echo".into()));
    }
    Ok(total)
}

/// Reads both answer classes from the top-K list of the first generated
/// token. A class missing from the list is bounded above by the smallest
/// listed logprob, which fixes the sign of the gap.
pub(crate) fn parse_top_k_gap(resp: &Value) -> Result<f64, BackendError> {
    let first = resp
        .pointer("/choices/0/logprobs/content/0")
        .filter(|v| !v.is_null())
        .ok_or_else(|| missing_logprobs("choices[0].logprobs.content"))?;
    let top = first
        .get("top_logprobs")
        .and_then(Value::as_array)
        .ok_or_else(|| missing_logprobs("top_logprobs"))?;
    let mut yes = f64::NEG_INFINITY;
    let mut no = f64::NEG_INFINITY;
    let mut floor = f64::INFINITY;
    let entries = top.iter().chain(std::iter::once(first));
    for entry in entries {
        let (Some(token), Some(lp)) = (
            entry.get("token").and_then(Value::as_str),
            entry.get("logprob").and_then(Value::as_f64),
        ) else {
            continue;
        };
        floor = floor.min(lp);
        match classify(token) {
            Some(Class::Yes) => yes = yes.max(lp),
            Some(Class::No) => no = no.max(lp),
            None => {}
        }
    }
    match (yes.is_finite(), no.is_finite()) {
        (true, true) => Ok(yes - no),
        (true, false) => Ok(yes - floor),
        (false, true) => Ok((floor - no).min(-f64::MIN_POSITIVE)),
        (false, false) => Err(BackendError::Protocol(
            "neither yes nor no among the top logprobs".into(),
        )),
    }
}
