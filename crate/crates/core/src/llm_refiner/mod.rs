//! Turns template utterances into fluent ones with a language model: a
//! modification pass followed by a paraphrase pass.

mod backend;
mod prompts;
pub mod remote;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    prompt_digest, word_count, BackendError, Completion, Fixture, FixtureEntry, LlmBackend, MockBackend,
    RecordingBackend, ScriptedBackend,
};
pub use prompts::{
    build_contextual_user_prompt, build_dialogue_prompt, build_modification_prompt, build_paraphrase_prompt, envelope,
    extract_object, paraphrase_prompts, parse_field, parse_refinement_response, select_paraphrase_prompt,
    ResponseError,
};
pub use remote::{redact, RemoteBackend, RemoteConfig, API_KEY_ENV};

use crate::dialogue_model::Side;

pub type Role = Side;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementStrategy {
    /// Each side modified on its own.
    #[default]
    UtteranceLevel,
    /// The user side sees the modified system response.
    MultiStep,
    /// Both sides in one request.
    DialogueLevel,
}

impl RefinementStrategy {
    pub const ALL: [RefinementStrategy; 3] = [Self::UtteranceLevel, Self::MultiStep, Self::DialogueLevel];

    pub fn name(self) -> &'static str {
        match self {
            Self::UtteranceLevel => "utterance_level",
            Self::MultiStep => "multi_step",
            Self::DialogueLevel => "dialogue_level",
        }
    }

    /// Backend calls needed for one sample when nothing is retried.
    pub fn calls_per_sample(self) -> usize {
        match self {
            Self::DialogueLevel => 3,
            _ => 4,
        }
    }
}

impl fmt::Display for RefinementStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for RefinementStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|v| v.name() == norm)
            .ok_or_else(|| format!("unknown refinement strategy `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f32,
    pub timeout: Duration,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            model: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: Self) {
        self.input_tokens += rhs.input_tokens;
        self.output_tokens += rhs.output_tokens;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_backoff: Duration::from_secs(1),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_backoff: Duration::ZERO,
        }
    }

    /// Delay after the `attempt`-th failure (1-based): doubles each time.
    pub fn backoff(&self, attempt: u32) -> Duration {
        self.base_backoff * 2u32.saturating_pow(attempt.saturating_sub(1).min(16))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallKind {
    ModifySystem,
    ModifyUser,
    ModifyDialogue,
    ParaphraseSystem,
    ParaphraseUser,
}

impl CallKind {
    pub fn name(self) -> &'static str {
        match self {
            CallKind::ModifySystem => "modify_system",
            CallKind::ModifyUser => "modify_user",
            CallKind::ModifyDialogue => "modify_dialogue",
            CallKind::ParaphraseSystem => "paraphrase_system",
            CallKind::ParaphraseUser => "paraphrase_user",
        }
    }
}

impl fmt::Display for CallKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub kind: CallKind,
    pub attempts: u32,
    pub usage: TokenUsage,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RefineError {
    #[error("{kind}: gave up after {attempts} attempts: {last}")]
    Exhausted {
        kind: CallKind,
        attempts: u32,
        last: String,
    },
    #[error("{kind}: {source}")]
    Backend {
        kind: CallKind,
        #[source]
        source: BackendError,
    },
}

impl RefineError {
    pub fn backend_error(&self) -> Option<&BackendError> {
        match self {
            RefineError::Backend { source, .. } => Some(source),
            RefineError::Exhausted { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RefinementRecord {
    pub role: Role,
    pub template_text: String,
    pub modified_text: String,
    pub paraphrased_text: String,
    pub paraphrase_prompt_index: usize,
    pub usage: TokenUsage,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRefinement {
    pub strategy: RefinementStrategy,
    pub system: RefinementRecord,
    pub user: RefinementRecord,
    pub calls: Vec<CallRecord>,
}

impl SampleRefinement {
    pub fn usage(&self) -> TokenUsage {
        let mut total = TokenUsage::default();
        for c in &self.calls {
            total += c.usage;
        }
        total
    }
}

pub struct RefineInput<'a> {
    pub domain: &'a str,
    pub system_template: &'a str,
    pub user_template: &'a str,
}

struct Caller<'a> {
    backend: &'a dyn LlmBackend,
    params: &'a GenerationParams,
    policy: &'a RetryPolicy,
    calls: Vec<CallRecord>,
}

impl Caller<'_> {
    fn call<T>(
        &mut self,
        kind: CallKind,
        prompt: &str,
        parse: impl Fn(&str) -> Result<T, ResponseError>,
    ) -> Result<(T, TokenUsage, u32), RefineError> {
        let mut usage = TokenUsage::default();
        let mut last = String::new();
        let max = self.policy.max_attempts.max(1);
        for attempt in 1..=max {
            match self.backend.complete(prompt, self.params) {
                Ok(completion) => {
                    usage += completion.usage;
                    match parse(&completion.text) {
                        Ok(value) => {
                            self.calls.push(CallRecord {
                                kind,
                                attempts: attempt,
                                usage,
                            });
                            return Ok((value, usage, attempt));
                        }
                        Err(e) => last = e.to_string(),
                    }
                }
                Err(e) if e.is_transient() => last = e.to_string(),
                Err(source) => return Err(RefineError::Backend { kind, source }),
            }
            log::debug!("{kind} attempt {attempt}/{max} failed: {last}");
            if attempt < max {
                std::thread::sleep(self.policy.backoff(attempt));
            }
        }
        Err(RefineError::Exhausted {
            kind,
            attempts: max,
            last,
        })
    }
}

/// Refines one sample's system and user templates.
pub fn refine_sample<R: Rng + ?Sized>(
    input: &RefineInput<'_>,
    strategy: RefinementStrategy,
    backend: &dyn LlmBackend,
    params: &GenerationParams,
    policy: &RetryPolicy,
    rng: &mut R,
) -> Result<SampleRefinement, RefineError> {
    let (sys_index, _) = select_paraphrase_prompt(rng);
    let (user_index, _) = select_paraphrase_prompt(rng);
    let mut caller = Caller {
        backend,
        params,
        policy,
        calls: Vec::new(),
    };

    let (sys_modified, mut sys_usage, mut sys_attempts, user_modified, mut user_usage, mut user_attempts);
    match strategy {
        RefinementStrategy::UtteranceLevel | RefinementStrategy::MultiStep => {
            let prompt = build_modification_prompt(Side::System, input.domain, input.system_template);
            (sys_modified, sys_usage, sys_attempts) = caller.call(CallKind::ModifySystem, &prompt, |r| {
                parse_refinement_response(r, Side::System)
            })?;
            let prompt = if strategy == RefinementStrategy::MultiStep {
                build_contextual_user_prompt(input.domain, input.user_template, &sys_modified)
            } else {
                build_modification_prompt(Side::User, input.domain, input.user_template)
            };
            (user_modified, user_usage, user_attempts) = caller.call(CallKind::ModifyUser, &prompt, |r| {
                parse_refinement_response(r, Side::User)
            })?;
        }
        RefinementStrategy::DialogueLevel => {
            let prompt = build_dialogue_prompt(input.domain, input.system_template, input.user_template);
            let ((s, u), usage, attempts) = caller.call(CallKind::ModifyDialogue, &prompt, |r| {
                Ok((
                    parse_refinement_response(r, Side::System)?,
                    parse_refinement_response(r, Side::User)?,
                ))
            })?;
            sys_modified = s;
            user_modified = u;
            sys_usage = usage;
            sys_attempts = attempts;
            user_usage = TokenUsage::default();
            user_attempts = 0;
        }
    }

    let prompt = build_paraphrase_prompt(sys_index, Side::System, &sys_modified);
    let (sys_final, usage, attempts) = caller.call(CallKind::ParaphraseSystem, &prompt, |r| {
        parse_refinement_response(r, Side::System)
    })?;
    sys_usage += usage;
    sys_attempts += attempts;
    let prompt = build_paraphrase_prompt(user_index, Side::User, &user_modified);
    let (user_final, usage, attempts) = caller.call(CallKind::ParaphraseUser, &prompt, |r| {
        parse_refinement_response(r, Side::User)
    })?;
    user_usage += usage;
    user_attempts += attempts;

    Ok(SampleRefinement {
        strategy,
        system: RefinementRecord {
            role: Side::System,
            template_text: input.system_template.to_string(),
            modified_text: sys_modified,
            paraphrased_text: sys_final,
            paraphrase_prompt_index: sys_index,
            usage: sys_usage,
            attempts: sys_attempts,
        },
        user: RefinementRecord {
            role: Side::User,
            template_text: input.user_template.to_string(),
            modified_text: user_modified,
            paraphrased_text: user_final,
            paraphrase_prompt_index: user_index,
            usage: user_usage,
            attempts: user_attempts,
        },
        calls: caller.calls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn input() -> RefineInput<'static> {
        RefineInput {
            domain: "hotel",
            system_template: "I would suggest the hotel with area north",
            user_template: "The hotel stars should be 4",
        }
    }

    #[test]
    fn utterance_level_makes_four_calls() {
        let r = refine_sample(
            &input(),
            RefinementStrategy::UtteranceLevel,
            &MockBackend::new(),
            &GenerationParams::default(),
            &RetryPolicy::immediate(3),
            &mut rng_from(1, &[]),
        )
        .unwrap();
        assert_eq!(r.calls.len(), 4);
        assert_eq!(r.system.paraphrased_text, input().system_template);
        assert_eq!(r.user.modified_text, input().user_template);
        assert_eq!(r.system.attempts + r.user.attempts, 4);
    }

    #[test]
    fn other_strategies() {
        for (strategy, calls) in [
            (RefinementStrategy::MultiStep, 4),
            (RefinementStrategy::DialogueLevel, 3),
        ] {
            let r = refine_sample(
                &input(),
                strategy,
                &MockBackend::new(),
                &GenerationParams::default(),
                &RetryPolicy::immediate(3),
                &mut rng_from(2, &[]),
            )
            .unwrap();
            assert_eq!(r.calls.len(), calls, "{strategy}");
            assert_eq!(strategy.calls_per_sample(), calls);
            assert_eq!(r.user.paraphrased_text, input().user_template);
        }
    }

    struct Garbage(AtomicUsize);

    impl LlmBackend for Garbage {
        fn complete(&self, _: &str, _: &GenerationParams) -> Result<Completion, BackendError> {
            self.0.fetch_add(1, Ordering::SeqCst);
            Ok(Completion {
                text: "I am not JSON".into(),
                usage: TokenUsage::default(),
            })
        }

        fn describe(&self) -> String {
            "garbage".into()
        }
    }

    #[test]
    fn garbage_exhausts_retries() {
        let backend = Garbage(AtomicUsize::new(0));
        let err = refine_sample(
            &input(),
            RefinementStrategy::UtteranceLevel,
            &backend,
            &GenerationParams::default(),
            &RetryPolicy::immediate(3),
            &mut rng_from(3, &[]),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            RefineError::Exhausted {
                attempts: 3,
                kind: CallKind::ModifySystem,
                ..
            }
        ));
        assert_eq!(backend.0.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy::default();
        assert_eq!(p.backoff(1), Duration::from_secs(1));
        assert_eq!(p.backoff(3), Duration::from_secs(4));
        assert_eq!(
            "multi-step".parse::<RefinementStrategy>().unwrap(),
            RefinementStrategy::MultiStep
        );
    }
}
