//! OpenAI-compatible chat completion client.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use reqwest::StatusCode;
use serde_json::{json, Value};

use super::backend::{word_count, BackendError, Completion, LlmBackend};
use super::{GenerationParams, TokenUsage};

pub const API_KEY_ENV: &str = "API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Clone)]
pub struct RemoteConfig {
    pub base_url: String,
    pub api_key: String,
    /// Budget for prompt plus completion tokens per minute; `None` disables
    /// throttling.
    pub tokens_per_minute: Option<u64>,
}

impl std::fmt::Debug for RemoteConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &"<redacted>")
            .field("tokens_per_minute", &self.tokens_per_minute)
            .finish()
    }
}

impl RemoteConfig {
    /// Reads the key from `API_KEY`.
    pub fn from_env(base_url: Option<&str>) -> Result<Self, BackendError> {
        let api_key = std::env::var(API_KEY_ENV)
            .ok()
            .filter(|k| !k.trim().is_empty())
            .ok_or_else(|| BackendError::MissingCredential(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self {
            base_url: base_url.unwrap_or(DEFAULT_BASE_URL).trim_end_matches('/').to_string(),
            api_key,
            tokens_per_minute: None,
        })
    }
}

struct TokenBucket {
    capacity: f64,
    available: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(per_minute: u64) -> Self {
        Self {
            capacity: per_minute as f64,
            available: per_minute as f64,
            last: Instant::now(),
        }
    }

    /// Time to wait before `need` tokens are available; zero means they were
    /// taken.
    fn try_take(&mut self, need: f64) -> Duration {
        let now = Instant::now();
        let rate = self.capacity / 60.0;
        self.available = (self.available + rate * now.duration_since(self.last).as_secs_f64()).min(self.capacity);
        self.last = now;
        let need = need.min(self.capacity);
        if self.available >= need {
            self.available -= need;
            Duration::ZERO
        } else {
            Duration::from_secs_f64((need - self.available) / rate)
        }
    }
}

pub struct RemoteBackend {
    config: RemoteConfig,
    client: reqwest::blocking::Client,
    bucket: Option<Mutex<TokenBucket>>,
}

impl RemoteBackend {
    pub fn new(config: RemoteConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Fatal(format!("http client: {e}")))?;
        let bucket = config.tokens_per_minute.map(|n| Mutex::new(TokenBucket::new(n.max(1))));
        Ok(Self { config, client, bucket })
    }

    fn throttle(&self, estimate: u64) {
        let Some(bucket) = &self.bucket else { return };
        loop {
            let wait = bucket.lock().expect("rate limiter lock").try_take(estimate as f64);
            if wait.is_zero() {
                return;
            }
            std::thread::sleep(wait);
        }
    }
}

/// Masks the API key and any bearer token before text reaches the log.
pub fn redact(text: &str, api_key: &str) -> String {
    static BEARER: std::sync::OnceLock<regex::Regex> = std::sync::OnceLock::new();
    let re = BEARER.get_or_init(|| regex::Regex::new(r"(?i)(bearer\s+)[A-Za-z0-9._~+/=-]+").expect("valid regex"));
    let masked = if api_key.trim().is_empty() {
        text.to_string()
    } else {
        text.replace(api_key, "<redacted>")
    };
    re.replace_all(&masked, "${1}<redacted>").into_owned()
}

fn classify(status: StatusCode, body: &str) -> BackendError {
    let snippet: String = body.chars().take(200).collect();
    if status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error() || status == StatusCode::REQUEST_TIMEOUT {
        BackendError::Transient(format!("HTTP {status}: {snippet}"))
    } else if status == StatusCode::UNAUTHORIZED || status == StatusCode::FORBIDDEN {
        BackendError::MissingCredential(format!("HTTP {status}"))
    } else {
        BackendError::Fatal(format!("HTTP {status}: {snippet}"))
    }
}

impl LlmBackend for RemoteBackend {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        // a rough token estimate is enough for pacing
        self.throttle(word_count(prompt) * 2 + 64);
        let url = format!("{}/chat/completions", self.config.base_url);
        let body = json!({
            "model": params.model,
            "temperature": params.temperature,
            "messages": [{"role": "user", "content": prompt}],
        });
        log::debug!("POST {url} model={} prompt_chars={}", params.model, prompt.len());
        if log::log_enabled!(log::Level::Trace) {
            log::trace!("request body: {}", redact(&body.to_string(), &self.config.api_key));
        }
        let response = self
            .client
            .post(&url)
            .bearer_auth(&self.config.api_key)
            .timeout(params.timeout)
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() || e.is_connect() {
                    BackendError::Transient(format!("request failed: {}", e.without_url()))
                } else {
                    BackendError::Fatal(format!("request failed: {}", e.without_url()))
                }
            })?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| BackendError::Transient(format!("reading body: {}", e.without_url())))?;
        log::debug!("HTTP {status}, {} bytes", text.len());
        log::trace!("response body: {}", redact(&text, &self.config.api_key));
        if !status.is_success() {
            return Err(classify(status, &redact(&text, &self.config.api_key)));
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("malformed response: {e}")))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| BackendError::Fatal("response has no choices[0].message.content".into()))?
            .to_string();
        let usage = TokenUsage {
            input_tokens: value
                .pointer("/usage/prompt_tokens")
                .and_then(Value::as_u64)
                .unwrap_or_else(|| word_count(prompt)),
            output_tokens: value
                .pointer("/usage/completion_tokens")
                .and_then(Value::as_u64)
                .unwrap_or_else(|| word_count(&content)),
        };
        Ok(Completion { text: content, usage })
    }

    fn describe(&self) -> String {
        format!("remote:{}", self.config.base_url)
    }
}
