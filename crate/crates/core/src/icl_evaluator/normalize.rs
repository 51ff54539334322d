//! Slot value normalization used before exact-match scoring.

use std::collections::BTreeMap;
use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::state::DialogueState;

const BUILTIN: &str = include_str!("../../resources/normalization.json");

#[derive(Debug, Error)]
pub enum NormalizationError {
    #[error("{path}: {message}")]
    Load { path: String, message: String },
    #[error("synonym target `{0}` is itself rewritten; chains are not allowed")]
    Chained(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizationConfig {
    #[serde(default)]
    pub strip_articles: Vec<String>,
    /// Whole-value rewrites.
    #[serde(default)]
    pub synonyms: BTreeMap<String, String>,
    #[serde(default)]
    pub twelve_hour_times: bool,
}

/// A compiled [`NormalizationConfig`].
#[derive(Debug, Clone)]
pub struct Normalizer {
    articles: Vec<String>,
    synonyms: BTreeMap<String, String>,
    twelve_hour: Option<Regex>,
    clock: Regex,
}

/// Lowercases, trims and collapses internal whitespace.
pub fn collapse(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

impl NormalizationConfig {
    pub fn builtin() -> Self {
        serde_json::from_str(BUILTIN).expect("bundled normalization table parses")
    }

    /// No rewriting beyond case and whitespace.
    pub fn minimal() -> Self {
        Self {
            strip_articles: Vec::new(),
            synonyms: BTreeMap::new(),
            twelve_hour_times: false,
        }
    }

    pub fn load(path: &Path) -> Result<Self, NormalizationError> {
        let err = |message: String| NormalizationError::Load {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| err(e.to_string()))
    }

    pub fn compile(&self) -> Result<Normalizer, NormalizationError> {
        let mut n = Normalizer {
            articles: self.strip_articles.iter().map(|a| collapse(a)).collect(),
            synonyms: BTreeMap::new(),
            twelve_hour: self
                .twelve_hour_times
                .then(|| Regex::new(r"^(\d{1,2})(?:[:.](\d{2}))? ?([ap])\.? ?m\.?$").expect("valid regex")),
            clock: Regex::new(r"^(\d{1,2}):(\d{2})$").expect("valid regex"),
        };
        let mut synonyms = BTreeMap::new();
        for (from, to) in &self.synonyms {
            synonyms.insert(n.base(from), n.base(to));
        }
        for to in synonyms.values() {
            if synonyms.contains_key(to) {
                return Err(NormalizationError::Chained(to.clone()));
            }
        }
        n.synonyms = synonyms;
        Ok(n)
    }
}

impl Normalizer {
    fn base(&self, value: &str) -> String {
        let mut v = collapse(value);
        while let Some((head, rest)) = v.split_once(' ') {
            if !self.articles.iter().any(|a| a == head) {
                break;
            }
            v = rest.to_string();
        }
        if let Some(re) = &self.twelve_hour {
            if let Some(c) = re.captures(&v) {
                let hour: u32 = c[1].parse().unwrap_or(99);
                let minute: u32 = c.get(2).map_or(0, |m| m.as_str().parse().unwrap_or(99));
                if (1..=12).contains(&hour) && minute < 60 {
                    let h24 = match (&c[3], hour) {
                        ("a", 12) => 0,
                        ("a", h) => h,
                        ("p", 12) => 12,
                        (_, h) => h + 12,
                    };
                    v = format!("{h24:02}:{minute:02}");
                }
            }
        }
        if let Some(c) = self.clock.captures(&v) {
            let hour: u32 = c[1].parse().unwrap_or(99);
            if hour < 24 && c[1].len() == 1 {
                v = format!("{hour:02}:{}", &c[2]);
            }
        }
        v
    }

    /// Idempotent: `normalize(normalize(v)) == normalize(v)`.
    pub fn normalize(&self, value: &str) -> String {
        let v = self.base(value);
        match self.synonyms.get(&v) {
            Some(to) => to.clone(),
            None => v,
        }
    }

    pub fn normalize_state(&self, state: &DialogueState) -> DialogueState {
        state.map_values(|v| self.normalize(v))
    }
}

impl Default for Normalizer {
    fn default() -> Self {
        NormalizationConfig::builtin()
            .compile()
            .expect("bundled table compiles")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_rules() {
        let n = Normalizer::default();
        assert_eq!(n.normalize("  The   Cambridge Belfry "), "cambridge belfry");
        assert_eq!(n.normalize("city center"), "centre");
        assert_eq!(n.normalize("Center"), "centre");
        assert_eq!(n.normalize("guest house"), "guesthouse");
        assert_eq!(n.normalize("7:45 pm"), "19:45");
        assert_eq!(n.normalize("12 am"), "00:00");
        assert_eq!(n.normalize("9:05"), "09:05");
        assert_eq!(n.normalize("the"), "the");
        assert_eq!(n.normalize("don't care"), "dontcare");
    }

    #[test]
    fn idempotent_on_samples() {
        let n = Normalizer::default();
        for v in [
            "a a b",
            "The center",
            "11.30am",
            "the guest house",
            "13:00",
            "x  y",
            "an",
        ] {
            let once = n.normalize(v);
            assert_eq!(n.normalize(&once), once, "{v}");
        }
    }

    #[test]
    fn chains_rejected() {
        let mut cfg = NormalizationConfig::minimal();
        cfg.synonyms.insert("a".into(), "b".into());
        cfg.synonyms.insert("b".into(), "c".into());
        assert!(matches!(cfg.compile(), Err(NormalizationError::Chained(_))));
    }
}
