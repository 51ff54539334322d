use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::llm_refiner::TokenUsage;

use super::{Corpus, Counts};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub counts: Counts,
    pub grounded: u64,
    pub grounding_rate: f64,
    pub mean_system_words: f64,
    pub mean_user_words: f64,
    /// Keyed `system_intent -> user_intent`.
    pub intent_pairs: BTreeMap<String, u64>,
    pub refined: u64,
    pub backend_calls: u64,
    pub token_usage: TokenUsage,
    pub failures: u64,
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let samples = &corpus.samples;
    let mut st = CorpusStats {
        counts: Counts::tally(samples),
        failures: corpus.manifest.failures,
        ..CorpusStats::default()
    };
    let (mut sys_words, mut user_words) = (0u64, 0u64);
    for s in samples {
        if s.is_grounded() {
            st.grounded += 1;
        }
        sys_words += s.system_utterance.split_whitespace().count() as u64;
        user_words += s.user_utterance.split_whitespace().count() as u64;
        let key = format!("{} -> {}", s.provenance.system_intent, s.provenance.user_intent);
        *st.intent_pairs.entry(key).or_default() += 1;
        if let Some(r) = &s.provenance.refinement {
            st.refined += 1;
            st.backend_calls += r.calls.len() as u64;
            st.token_usage += r.usage();
        }
    }
    if !samples.is_empty() {
        let n = samples.len() as f64;
        st.grounding_rate = st.grounded as f64 / n;
        st.mean_system_words = sys_words as f64 / n;
        st.mean_user_words = user_words as f64 / n;
    }
    st
}

impl CorpusStats {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let c = &self.counts;
        let categories: Vec<&String> = c.per_category.keys().collect();
        let _ = writeln!(out, "samples: {}", c.total);
        let _ = write!(out, "{:<12}", "domain");
        for cat in &categories {
            let _ = write!(out, " {:>16}", cat);
        }
        let _ = writeln!(out, " {:>8}", "total");
        for (domain, total) in &c.per_domain {
            let _ = write!(out, "{domain:<12}");
            for cat in &categories {
                let n = c
                    .per_domain_category
                    .get(domain)
                    .and_then(|m| m.get(*cat))
                    .copied()
                    .unwrap_or(0);
                let _ = write!(out, " {n:>16}");
            }
            let _ = writeln!(out, " {total:>8}");
        }
        let _ = writeln!(
            out,
            "grounding rate: {:.4} ({}/{})",
            self.grounding_rate, self.grounded, c.total
        );
        let _ = writeln!(
            out,
            "mean words: system {:.2}, user {:.2}",
            self.mean_system_words, self.mean_user_words
        );
        let _ = writeln!(
            out,
            "refined: {}, backend calls: {}, tokens in/out: {}/{}, failures: {}",
            self.refined,
            self.backend_calls,
            self.token_usage.input_tokens,
            self.token_usage.output_tokens,
            self.failures
        );
        let _ = writeln!(out, "intent pairs:");
        for (pair, n) in &self.intent_pairs {
            let _ = writeln!(out, "  {pair:<34} {n}");
        }
        out
    }
}
