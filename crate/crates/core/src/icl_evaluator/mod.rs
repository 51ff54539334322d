//! In-context-learning DST harness: tabular ontology prompts, exemplar
//! retrieval, answer parsing and joint goal accuracy.

mod episodes;
mod normalize;
mod ontology;
mod prompt;
mod retrieval;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use episodes::{
    episode_from_states, import_multiwoz, parse_episodes, read_episodes, write_episodes, Episode, EpisodeError,
    EpisodeTurn,
};
pub use normalize::{collapse, NormalizationConfig, NormalizationError, Normalizer};
pub use ontology::{build_ontology_description, DEFAULT_VALUE_SAMPLE};
pub use prompt::{build_prompt, parse_state_change, ModeMismatch, ParsedChange};
pub use retrieval::{
    representation, retrieve_examples, similarity, EmbeddingScorer, ExamplePool, Exemplar, Scorer, TfCosine,
};

use crate::llm_refiner::{prompt_digest, BackendError, GenerationParams, LlmBackend, RetryPolicy};
use crate::schema::Schema;
use crate::seed::{rng_from, stage};
use crate::state::{DialogueState, TurnDelta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ZeroShot,
    /// One static exemplar set drawn per domain.
    FewShotRandom,
    /// Top-k exemplars per query turn.
    FewShotRetrieval,
}

impl EvalMode {
    pub fn name(self) -> &'static str {
        match self {
            EvalMode::ZeroShot => "zero_shot",
            EvalMode::FewShotRandom => "few_shot_random",
            EvalMode::FewShotRetrieval => "few_shot_retrieval",
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace('-', "_");
        [EvalMode::ZeroShot, EvalMode::FewShotRandom, EvalMode::FewShotRetrieval]
            .into_iter()
            .find(|m| m.name() == norm)
            .ok_or_else(|| format!("unknown evaluation mode `{s}`"))
    }
}

pub struct EvalConfig {
    pub mode: EvalMode,
    /// Exemplars per query in retrieval mode.
    pub k: usize,
    /// Exemplars per domain in random mode.
    pub per_domain: usize,
    pub seed: u64,
    pub ontology_values: usize,
    pub normalizer: Normalizer,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            mode: EvalMode::FewShotRetrieval,
            k: 10,
            per_domain: 2,
            seed: 0,
            ontology_values: DEFAULT_VALUE_SAMPLE,
            normalizer: Normalizer::default(),
            params: GenerationParams {
                temperature: 0.0,
                ..GenerationParams::default()
            },
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no episodes to evaluate")]
    NoEpisodes,
    #[error("{0} needs a non-empty exemplar pool")]
    EmptyPool(EvalMode),
    #[error(transparent)]
    Mode(#[from] ModeMismatch),
    #[error("backend unusable: {0}")]
    Backend(BackendError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnRecord {
    pub episode_id: String,
    pub turn_index: u32,
    pub domains: Vec<String>,
    pub prompt_sha256: String,
    pub exemplars: Vec<usize>,
    pub completion: Option<String>,
    pub predicted_delta: TurnDelta,
    /// Running prediction after this turn, before normalization.
    pub predicted_state: DialogueState,
    pub gold_state: DialogueState,
    pub parse_failed: bool,
    pub backend_failed: bool,
    pub correct: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DomainScore {
    pub turns: u64,
    pub correct: u64,
    pub jga: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JgaReport {
    pub mode: EvalMode,
    pub turns: u64,
    pub correct: u64,
    pub jga_all: f64,
    pub jga_per_domain: BTreeMap<String, DomainScore>,
    /// Unweighted mean of the per-domain scores.
    pub jga_domain_mean: f64,
    pub parse_failures: u64,
    pub backend_failures: u64,
    pub transcript: Vec<TurnRecord>,
}

impl JgaReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "mode: {}\nturns: {}\nJGA (all domains): {:.4}\n",
            self.mode, self.turns, self.jga_all
        );
        for (d, s) in &self.jga_per_domain {
            out.push_str(&format!("JGA {d}: {:.4} ({}/{})\n", s.jga, s.correct, s.turns));
        }
        out.push_str(&format!(
            "JGA (domain mean): {:.4}\nparse failures: {}\nbackend failures: {}\n",
            self.jga_domain_mean, self.parse_failures, self.backend_failures
        ));
        out
    }
}

fn fraction(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// `per_domain` exemplars for every domain of the pool, grouped by domain.
pub fn random_exemplars(pool: &ExamplePool, per_domain: usize, seed: u64) -> Vec<usize> {
    let mut by_domain: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in pool.exemplars.iter().enumerate() {
        by_domain.entry(e.domain.as_str()).or_default().push(i);
    }
    let mut rng = rng_from(seed, &[stage::FEW_SHOT]);
    let mut chosen = Vec::new();
    for indices in by_domain.values() {
        let n = per_domain.min(indices.len());
        let mut picked: Vec<usize> = sample(&mut rng, indices.len(), n)
            .into_iter()
            .map(|j| indices[j])
            .collect();
        picked.sort_unstable();
        chosen.extend(picked);
    }
    chosen
}

/// Re-scores a transcript: a turn is correct iff the normalized running
/// prediction equals the normalized gold state and the backend answered.
pub fn score_transcript(transcript: &[TurnRecord], normalizer: &Normalizer) -> (u64, BTreeMap<String, DomainScore>) {
    let mut correct = 0;
    let mut per_domain: BTreeMap<String, DomainScore> = BTreeMap::new();
    for t in transcript {
        let pred = normalizer.normalize_state(&t.predicted_state);
        let gold = normalizer.normalize_state(&t.gold_state);
        if !t.backend_failed && pred == gold {
            correct += 1;
        }
        for d in &t.domains {
            let entry = per_domain.entry(d.clone()).or_default();
            entry.turns += 1;
            if !t.backend_failed && pred.restricted_to(d) == gold.restricted_to(d) {
                entry.correct += 1;
            }
        }
    }
    for s in per_domain.values_mut() {
        s.jga = fraction(s.correct, s.turns);
    }
    (correct, per_domain)
}

struct Harness<'a> {
    ontology: String,
    pool: &'a ExamplePool,
    static_exemplars: Vec<usize>,
    backend: &'a dyn LlmBackend,
    scorer: &'a dyn Scorer,
    config: &'a EvalConfig,
}

impl Harness<'_> {
    fn complete(&self, prompt: &str) -> Result<Option<String>, EvalError> {
        let max = self.config.retry.max_attempts.max(1);
        for attempt in 1..=max {
            match self.backend.complete(prompt, &self.config.params) {
                Ok(c) => return Ok(Some(c.text)),
                Err(BackendError::MissingCredential(m)) => {
                    return Err(EvalError::Backend(BackendError::MissingCredential(m)))
                }
                Err(e) if e.is_transient() && attempt < max => {
                    log::debug!("attempt {attempt}/{max}: {e}");
                    std::thread::sleep(self.config.retry.backoff(attempt));
                }
                Err(e) => {
                    log::warn!("backend failed: {e}");
                    return Ok(None);
                }
            }
        }
        Ok(None)
    }

    fn run_episode(&self, episode: &Episode) -> Result<Vec<TurnRecord>, EvalError> {
        let mut running = DialogueState::new();
        let mut records = Vec::with_capacity(episode.turns.len());
        for turn in &episode.turns {
            let exemplars = match self.config.mode {
                EvalMode::ZeroShot => Vec::new(),
                EvalMode::FewShotRandom => self.static_exemplars.clone(),
                EvalMode::FewShotRetrieval => {
                    let query = representation(&running, &turn.system_utterance, &turn.user_utterance);
                    retrieve_examples(self.pool, &query, self.config.k, self.scorer)
                }
            };
            let refs: Vec<&Exemplar> = exemplars.iter().map(|&i| &self.pool.exemplars[i]).collect();
            let prompt = build_prompt(
                &self.ontology,
                &refs,
                &running,
                &turn.system_utterance,
                &turn.user_utterance,
                self.config.mode,
            )?;
            let completion = self.complete(&prompt)?;
            let parsed = match &completion {
                Some(text) => parse_state_change(text),
                None => ParsedChange::default(),
            };
            running = parsed.delta.apply(&running);
            let backend_failed = completion.is_none();
            let correct = !backend_failed
                && self.config.normalizer.normalize_state(&running)
                    == self.config.normalizer.normalize_state(&turn.gold_full_state);
            records.push(TurnRecord {
                episode_id: episode.id.clone(),
                turn_index: turn.turn_index,
                domains: turn.domains.clone(),
                prompt_sha256: prompt_digest(&prompt),
                exemplars,
                completion,
                predicted_delta: parsed.delta,
                predicted_state: running.clone(),
                gold_state: turn.gold_full_state.clone(),
                parse_failed: parsed.failed,
                backend_failed,
                correct,
            });
        }
        Ok(records)
    }
}

/// Runs every episode turn by turn, accumulating predicted state changes,
/// and scores joint goal accuracy overall and per tagged domain.
pub fn evaluate(
    episodes: &[Episode],
    pool: &ExamplePool,
    backend: &dyn LlmBackend,
    schema: &Schema,
    scorer: &dyn Scorer,
    config: &EvalConfig,
) -> Result<JgaReport, EvalError> {
    if episodes.is_empty() {
        return Err(EvalError::NoEpisodes);
    }
    if config.mode != EvalMode::ZeroShot && pool.is_empty() {
        return Err(EvalError::EmptyPool(config.mode));
    }
    let harness = Harness {
        ontology: build_ontology_description(schema, config.ontology_values),
        pool,
        static_exemplars: match config.mode {
            EvalMode::FewShotRandom => random_exemplars(pool, config.per_domain, config.seed),
            _ => Vec::new(),
        },
        backend,
        scorer,
        config,
    };
    let threads = rayon::ThreadPoolBuilder::new()
        .num_threads(config.max_in_flight.max(1))
        .build()
        .map_err(|e| EvalError::Pool(e.to_string()))?;
    let per_episode: Vec<Result<Vec<TurnRecord>, EvalError>> =
        threads.install(|| episodes.par_iter().map(|e| harness.run_episode(e)).collect());
    let mut transcript = Vec::new();
    for r in per_episode {
        transcript.extend(r?);
    }
    let (correct, jga_per_domain) = score_transcript(&transcript, &config.normalizer);
    let turns = transcript.len() as u64;
    let jga_domain_mean = if jga_per_domain.is_empty() {
        0.0
    } else {
        jga_per_domain.values().map(|s| s.jga).sum::<f64>() / jga_per_domain.len() as f64
    };
    Ok(JgaReport {
        mode: config.mode,
        turns,
        correct,
        jga_all: fraction(correct, turns),
        jga_domain_mean,
        parse_failures: transcript.iter().filter(|t| t.parse_failed).count() as u64,
        backend_failures: transcript.iter().filter(|t| t.backend_failed).count() as u64,
        jga_per_domain,
        transcript,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_refiner::{Completion, TokenUsage};
    use crate::state::SlotKey;
    use std::collections::HashMap;

    /// Answers by looking up the user utterance on the prompt's last `Q:` line.
    struct ByUtterance(HashMap<String, String>);

    impl LlmBackend for ByUtterance {
        fn complete(&self, prompt: &str, _: &GenerationParams) -> Result<Completion, BackendError> {
            let user = prompt
                .lines()
                .rev()
                .find_map(|l| l.strip_prefix("Q: [user] "))
                .unwrap_or_default();
            match self.0.get(user) {
                Some(text) => Ok(Completion {
                    text: text.clone(),
                    usage: TokenUsage::default(),
                }),
                None => Err(BackendError::Fatal("unknown turn".into())),
            }
        }

        fn describe(&self) -> String {
            "by-utterance".into()
        }
    }

    fn episode() -> Episode {
        let key = |s: &str| s.parse::<SlotKey>().unwrap();
        let mut s1 = DialogueState::new();
        s1.insert(key("hotel-area"), "north");
        let mut s2 = s1.clone();
        s2.insert(key("hotel-stars"), "4");
        episode_from_states(
            "e",
            vec!["hotel".into()],
            vec![
                (String::new(), "north please".into(), s1),
                ("ok".into(), "four stars".into(), s2),
            ],
        )
    }

    fn config(mode: EvalMode) -> EvalConfig {
        EvalConfig {
            mode,
            retry: RetryPolicy::immediate(2),
            ..EvalConfig::default()
        }
    }

    #[test]
    fn perfect_and_imperfect() {
        let mut answers = HashMap::new();
        answers.insert("north please".to_string(), "hotel-area = North".to_string());
        answers.insert("four stars".to_string(), "A: hotel-stars = 4".to_string());
        let backend = ByUtterance(answers.clone());
        let schema = Schema::builtin();
        let ep = [episode()];
        let pool = ExamplePool::from_episodes(&ep);
        let r = evaluate(
            &ep,
            &pool,
            &backend,
            &schema,
            &TfCosine,
            &config(EvalMode::FewShotRetrieval),
        )
        .unwrap();
        assert_eq!(r.jga_all, 1.0);
        assert_eq!(r.jga_per_domain["hotel"].jga, 1.0);

        answers.insert("four stars".to_string(), "hmm".to_string());
        let r = evaluate(
            &ep,
            &pool,
            &ByUtterance(answers),
            &schema,
            &TfCosine,
            &config(EvalMode::ZeroShot),
        )
        .unwrap();
        assert_eq!(r.jga_all, 0.5);
        assert_eq!(r.parse_failures, 1);
    }

    #[test]
    fn failures_and_preconditions() {
        let schema = Schema::builtin();
        let ep = [episode()];
        let backend = ByUtterance(HashMap::new());
        let r = evaluate(
            &ep,
            &ExamplePool::default(),
            &backend,
            &schema,
            &TfCosine,
            &config(EvalMode::ZeroShot),
        )
        .unwrap();
        assert_eq!(r.backend_failures, 2);
        assert_eq!(r.jga_all, 0.0);
        assert!(matches!(
            evaluate(
                &[],
                &ExamplePool::default(),
                &backend,
                &schema,
                &TfCosine,
                &config(EvalMode::ZeroShot)
            ),
            Err(EvalError::NoEpisodes)
        ));
        assert!(matches!(
            evaluate(
                &ep,
                &ExamplePool::default(),
                &backend,
                &schema,
                &TfCosine,
                &config(EvalMode::FewShotRandom)
            ),
            Err(EvalError::EmptyPool(_))
        ));
    }

    #[test]
    fn random_mode_takes_per_domain_examples() {
        let mut exemplars = Vec::new();
        for d in ["attraction", "hotel", "restaurant", "taxi", "train"] {
            for i in 0..6 {
                exemplars.push(Exemplar {
                    domain: d.into(),
                    representation: format!("{d} {i}"),
                    context: DialogueState::new(),
                    system_utterance: String::new(),
                    user_utterance: format!("{d} {i}"),
                    answer: "none".into(),
                });
            }
        }
        let pool = ExamplePool { exemplars };
        let chosen = random_exemplars(&pool, 2, 7);
        assert_eq!(chosen.len(), 10);
        assert_eq!(chosen, random_exemplars(&pool, 2, 7));
    }
}
