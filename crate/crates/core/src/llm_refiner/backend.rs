//! Completion backends: an offline mock, fixture replay and fixture recording.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use regex::Regex;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{GenerationParams, TokenUsage};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    /// Rate limits, timeouts, 5xx. Worth retrying.
    #[error("transient backend failure: {0}")]
    Transient(String),
    #[error("backend failure: {0}")]
    Fatal(String),
    #[error("no fixture for prompt {0}")]
    MissingFixture(String),
    #[error("missing credential: {0}")]
    MissingCredential(String),
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::Transient(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub usage: TokenUsage,
}

pub trait LlmBackend: Send + Sync {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError>;

    fn describe(&self) -> String;
}

impl<B: LlmBackend + ?Sized> LlmBackend for &B {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

impl<B: LlmBackend + ?Sized> LlmBackend for Box<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        (**self).complete(prompt, params)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

pub fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Echoes the quoted template or utterance back inside the expected
/// envelope. Deterministic and offline.
pub struct MockBackend {
    pattern: Regex,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self {
            pattern: Regex::new(r"(?m)^'(system|user)_(?:template|utterance)': '(.*)'$").expect("valid regex"),
        }
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }
}

impl LlmBackend for MockBackend {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<Completion, BackendError> {
        let mut object = serde_json::Map::new();
        for caps in self.pattern.captures_iter(prompt) {
            object.insert(format!("{}_paraphrased", &caps[1]), caps[2].into());
        }
        if object.is_empty() {
            return Err(BackendError::Fatal("mock backend found nothing to paraphrase".into()));
        }
        let text = serde_json::Value::Object(object).to_string();
        Ok(Completion {
            usage: TokenUsage {
                input_tokens: word_count(prompt),
                output_tokens: word_count(&text),
            },
            text,
        })
    }

    fn describe(&self) -> String {
        "mock".into()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct FixtureEntry {
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_tokens: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_tokens: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct Fixture {
    pub entries: Vec<FixtureEntry>,
}

impl Fixture {
    pub fn load(path: &Path) -> Result<Fixture, BackendError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| BackendError::Fatal(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| BackendError::Fatal(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("fixture serializes");
        std::fs::write(path, text + "\n")
    }
}

/// Replays responses keyed by the SHA-256 of the prompt.
pub struct ScriptedBackend {
    responses: HashMap<String, FixtureEntry>,
    name: String,
}

impl ScriptedBackend {
    pub fn new(fixture: Fixture) -> Self {
        Self::named(fixture, "scripted")
    }

    pub fn named(fixture: Fixture, name: impl Into<String>) -> Self {
        let responses = fixture
            .entries
            .into_iter()
            .map(|e| (e.prompt_sha256.clone(), e))
            .collect();
        Self {
            responses,
            name: name.into(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Ok(Self::named(
            Fixture::load(path)?,
            format!("scripted:{}", path.display()),
        ))
    }
}

impl LlmBackend for ScriptedBackend {
    fn complete(&self, prompt: &str, _params: &GenerationParams) -> Result<Completion, BackendError> {
        let digest = prompt_digest(prompt);
        let entry = self
            .responses
            .get(&digest)
            .ok_or(BackendError::MissingFixture(digest))?;
        Ok(Completion {
            text: entry.response.clone(),
            usage: TokenUsage {
                input_tokens: entry.input_tokens.unwrap_or_else(|| word_count(prompt)),
                output_tokens: entry.output_tokens.unwrap_or_else(|| word_count(&entry.response)),
            },
        })
    }

    fn describe(&self) -> String {
        self.name.clone()
    }
}

/// Forwards to an inner backend and keeps every exchange as a fixture entry.
pub struct RecordingBackend<B> {
    inner: B,
    log: Mutex<Vec<FixtureEntry>>,
}

impl<B: LlmBackend> RecordingBackend<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    /// Entries sorted by digest so the output does not depend on call order.
    pub fn fixture(&self) -> Fixture {
        let mut entries = self.log.lock().expect("recording lock").clone();
        entries.sort_by(|a, b| a.prompt_sha256.cmp(&b.prompt_sha256));
        entries.dedup_by(|a, b| a.prompt_sha256 == b.prompt_sha256);
        Fixture { entries }
    }
}

impl<B: LlmBackend> LlmBackend for RecordingBackend<B> {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<Completion, BackendError> {
        let completion = self.inner.complete(prompt, params)?;
        self.log.lock().expect("recording lock").push(FixtureEntry {
            prompt_sha256: prompt_digest(prompt),
            prompt: Some(prompt.to_string()),
            response: completion.text.clone(),
            input_tokens: Some(completion.usage.input_tokens),
            output_tokens: Some(completion.usage.output_tokens),
        });
        Ok(completion)
    }

    fn describe(&self) -> String {
        format!("recording({})", self.inner.describe())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dialogue_model::Side;
    use crate::llm_refiner::prompts::{build_modification_prompt, parse_refinement_response};

    #[test]
    fn mock_echoes_template() {
        let prompt = build_modification_prompt(Side::System, "hotel", "I would suggest the hotel with area north");
        let c = MockBackend::new()
            .complete(&prompt, &GenerationParams::default())
            .unwrap();
        assert_eq!(
            parse_refinement_response(&c.text, Side::System).unwrap(),
            "I would suggest the hotel with area north"
        );
        assert_eq!(c.usage.input_tokens, word_count(&prompt));
        assert!(MockBackend::new()
            .complete("hello", &GenerationParams::default())
            .is_err());
    }

    #[test]
    fn record_then_replay() {
        let recorder = RecordingBackend::new(MockBackend::new());
        let prompt = build_modification_prompt(Side::User, "taxi", "I want to leave at 10:15");
        let live = recorder.complete(&prompt, &GenerationParams::default()).unwrap();
        let replay = ScriptedBackend::new(recorder.fixture());
        assert_eq!(replay.complete(&prompt, &GenerationParams::default()).unwrap(), live);
        assert!(matches!(
            replay.complete("other", &GenerationParams::default()),
            Err(BackendError::MissingFixture(_))
        ));
    }
}
