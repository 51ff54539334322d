//! Exemplar pools and similarity-based retrieval.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus_composer::Corpus;
use crate::state::DialogueState;

use super::episodes::Episode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub domain: String,
    pub representation: String,
    pub context: DialogueState,
    pub system_utterance: String,
    pub user_utterance: String,
    /// Gold state change in answer syntax.
    pub answer: String,
}

/// Text compared against pool entries: running state plus both turns.
pub fn representation(state: &DialogueState, system: &str, user: &str) -> String {
    format!("{} [system] {system} [user] {user}", state.render())
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePool {
    pub exemplars: Vec<Exemplar>,
}

impl ExamplePool {
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let exemplars = corpus
            .samples
            .iter()
            .map(|s| Exemplar {
                domain: s.domain.clone(),
                representation: representation(&s.history, &s.system_utterance, &s.user_utterance),
                context: s.history.clone(),
                system_utterance: s.system_utterance.clone(),
                user_utterance: s.user_utterance.clone(),
                answer: s.turn_state.render_answer(),
            })
            .collect();
        Self { exemplars }
    }

    /// Every turn of annotated episodes, context being the previous gold
    /// state. Turns tagged with several domains are attributed to the first.
    pub fn from_episodes(episodes: &[Episode]) -> Self {
        let mut exemplars = Vec::new();
        for ep in episodes {
            let mut context = DialogueState::new();
            for t in &ep.turns {
                exemplars.push(Exemplar {
                    domain: t.domains.first().cloned().unwrap_or_default(),
                    representation: representation(&context, &t.system_utterance, &t.user_utterance),
                    context: context.clone(),
                    system_utterance: t.system_utterance.clone(),
                    user_utterance: t.user_utterance.clone(),
                    answer: t.gold_turn_state.render_answer(),
                });
                context = t.gold_full_state.clone();
            }
        }
        Self { exemplars }
    }

    pub fn merge(mut self, other: ExamplePool) -> Self {
        self.exemplars.extend(other.exemplars);
        self
    }

    pub fn len(&self) -> usize {
        self.exemplars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exemplars.is_empty()
    }
}

/// Similarity in `[0, 1]`; symmetric.
pub trait Scorer: Send + Sync {
    fn score(&self, a: &str, b: &str) -> f64;
}

fn term_counts(text: &str) -> BTreeMap<String, u64> {
    let mut counts = BTreeMap::new();
    for token in text
        .split(|c: char| !c.is_alphanumeric() && c != ':')
        .filter(|t| !t.is_empty())
    {
        *counts.entry(token.to_lowercase()).or_default() += 1;
    }
    counts
}

/// Cosine over term-frequency vectors. Integer arithmetic up to the final
/// division keeps the score exactly symmetric.
#[derive(Debug, Clone, Copy, Default)]
pub struct TfCosine;

impl Scorer for TfCosine {
    fn score(&self, a: &str, b: &str) -> f64 {
        let (ta, tb) = (term_counts(a), term_counts(b));
        if ta.is_empty() || tb.is_empty() {
            return 0.0;
        }
        let dot: u64 = ta.iter().filter_map(|(k, x)| tb.get(k).map(|y| x * y)).sum();
        let na: u64 = ta.values().map(|x| x * x).sum();
        let nb: u64 = tb.values().map(|x| x * x).sum();
        if ta == tb {
            return 1.0;
        }
        (dot as f64 / ((na as f64) * (nb as f64)).sqrt()).clamp(0.0, 1.0)
    }
}

pub fn similarity(a: &str, b: &str) -> f64 {
    TfCosine.score(a, b)
}

/// Indices of the `k` best pool entries by non-increasing score; ties keep
/// pool order.
pub fn retrieve_examples(pool: &ExamplePool, query: &str, k: usize, scorer: &dyn Scorer) -> Vec<usize> {
    let mut scored: Vec<(usize, f64)> = pool
        .exemplars
        .iter()
        .enumerate()
        .map(|(i, e)| (i, scorer.score(query, &e.representation)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.into_iter().take(k).map(|(i, _)| i).collect()
}

/// Cosine over vectors from an OpenAI-style `/embeddings` endpoint,
/// clamped to `[0, 1]`. Vectors are cached per text; a failed request
/// scores 0.
pub struct EmbeddingScorer {
    base_url: String,
    model: String,
    api_key: String,
    client: reqwest::blocking::Client,
    cache: Mutex<HashMap<String, Vec<f64>>>,
}

impl EmbeddingScorer {
    pub fn new(base_url: &str, model: &str, api_key: &str) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(30))
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key: api_key.to_string(),
            client,
            cache: Mutex::new(HashMap::new()),
        })
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, String> {
        if let Some(v) = self.cache.lock().expect("cache lock").get(text) {
            return Ok(v.clone());
        }
        let response = self
            .client
            .post(format!("{}/embeddings", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&json!({"model": self.model, "input": text}))
            .send()
            .map_err(|e| e.without_url().to_string())?;
        if !response.status().is_success() {
            return Err(format!("HTTP {}", response.status()));
        }
        let body: Value = response.json().map_err(|e| e.without_url().to_string())?;
        let vector: Vec<f64> = body
            .pointer("/data/0/embedding")
            .and_then(Value::as_array)
            .ok_or("response has no data[0].embedding")?
            .iter()
            .filter_map(Value::as_f64)
            .collect();
        self.cache
            .lock()
            .expect("cache lock")
            .insert(text.to_string(), vector.clone());
        Ok(vector)
    }
}

impl Scorer for EmbeddingScorer {
    fn score(&self, a: &str, b: &str) -> f64 {
        if a.trim().is_empty() || b.trim().is_empty() {
            return 0.0;
        }
        if a == b {
            return 1.0;
        }
        match (self.embed(a), self.embed(b)) {
            (Ok(x), Ok(y)) if x.len() == y.len() => {
                let dot: f64 = x.iter().zip(&y).map(|(p, q)| p * q).sum();
                let nx: f64 = x.iter().map(|p| p * p).sum::<f64>().sqrt();
                let ny: f64 = y.iter().map(|q| q * q).sum::<f64>().sqrt();
                if nx == 0.0 || ny == 0.0 {
                    0.0
                } else {
                    (dot / (nx * ny)).clamp(0.0, 1.0)
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                log::warn!("embedding request failed: {e}");
                0.0
            }
            _ => 0.0,
        }
    }
}
