//! Corpus assembly: percentage splits with a fixed flow-category mixture,
//! exhaustive unique-flow corpora, persistence and reporting.

mod apportion;
mod cost;
mod io;
mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use apportion::{category_counts, largest_remainder};
pub use cost::{estimate_cost, CallAverages, CostReport, NegativeInput, Prices, TokenAverages, DEFAULT_OVERHEAD};
pub use io::{read_corpus, read_corpus_str, write_corpus, write_corpus_string, CorpusIoError};
pub use stats::{corpus_stats, CorpusStats};

use crate::dialogue_model::{category_of, enumerate_pairs, FlowCategory, SystemIntent, UserIntent};
use crate::llm_refiner::{
    refine_sample, BackendError, GenerationParams, LlmBackend, RefineError, RefineInput, RefinementStrategy,
    RetryPolicy, SampleRefinement,
};
use crate::schema::{Schema, SchemaError};
use crate::seed::{derive_seed, stage, SampleSeed};
use crate::state::{DialogueState, TurnDelta};
use crate::structure_synth::{
    candidate_signatures, synthesize_flow, synthesize_structure_from, ActSignature, DialogueAct, DialogueStructure,
    StructureError, RESAMPLE_BUDGET,
};
use crate::template_engine::{realize_acts, verify_grounding_all, TemplateBank};
use crate::TOOL_VERSION;

/// Replacement structures drawn for a sample whose refinement fails.
pub const REPLACEMENT_ROUNDS: u32 = 4;

/// Resampling budget for fixed-flow synthesis in unique-flow corpora.
pub const FLOW_BUDGET: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub sample_index: u64,
    pub system_intent: SystemIntent,
    pub user_intent: UserIntent,
    pub signature: ActSignature,
    pub structure_attempt: u32,
    /// Replacement round that produced the sample; 0 unless an earlier
    /// structure failed refinement.
    #[serde(default)]
    pub round: u32,
    pub system_template_ids: Vec<String>,
    pub user_template_ids: Vec<String>,
    pub system_acts: Vec<DialogueAct>,
    pub user_acts: Vec<DialogueAct>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement: Option<SampleRefinement>,
}

/// One annotated exchange: history state, system turn, user turn and the
/// turn's state change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnSample {
    pub id: String,
    pub domain: String,
    pub flow_category: FlowCategory,
    pub history: DialogueState,
    pub system_template: String,
    pub user_template: String,
    pub system_utterance: String,
    pub user_utterance: String,
    pub turn_state: TurnDelta,
    pub full_state: DialogueState,
    pub provenance: Provenance,
}

impl TurnSample {
    pub fn is_grounded(&self) -> bool {
        verify_grounding_all(&self.provenance.system_acts, &self.system_utterance)
            && verify_grounding_all(&self.provenance.user_acts, &self.user_utterance)
    }

    pub fn flow(&self) -> FlowKey {
        FlowKey {
            domain: self.domain.clone(),
            system_intent: self.provenance.system_intent,
            user_intent: self.provenance.user_intent,
            signature: self.provenance.signature,
        }
    }
}

/// Identity of a unique dialogue flow.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub domain: String,
    pub system_intent: SystemIntent,
    pub user_intent: UserIntent,
    pub signature: ActSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefinementMode {
    /// Template utterances only.
    None,
    #[default]
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CompositionKind {
    /// Fixed per-domain totals.
    Percentage {
        name: String,
        targets: BTreeMap<String, u64>,
    },
    /// Every feasible flow, `copies` times.
    UniqueAll { copies: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompositionSpec {
    #[serde(flatten)]
    pub kind: CompositionKind,
    pub seed: u64,
    pub refinement: RefinementMode,
}

pub const BUILTIN_SPECS: [&str; 5] = ["mw-1pct", "mw-5pct", "mw-10pct", "unique-all", "unique-all-5x"];

fn split(name: &str, counts: [u64; 5]) -> CompositionKind {
    let domains = ["attraction", "hotel", "restaurant", "taxi", "train"];
    CompositionKind::Percentage {
        name: name.to_string(),
        targets: domains.iter().map(|d| d.to_string()).zip(counts).collect(),
    }
}

impl CompositionSpec {
    pub fn builtin(name: &str, seed: u64) -> Option<CompositionSpec> {
        let kind = match name {
            "mw-1pct" => split(name, [106, 111, 116, 105, 111]),
            "mw-5pct" => split(name, [547, 553, 553, 548, 547]),
            "mw-10pct" => split(name, [1093, 1112, 1109, 1086, 1095]),
            "unique-all" => CompositionKind::UniqueAll { copies: 1 },
            "unique-all-5x" => CompositionKind::UniqueAll { copies: 5 },
            _ => return None,
        };
        Some(CompositionSpec {
            kind,
            seed,
            refinement: RefinementMode::Full,
        })
    }

    pub fn percentage(name: &str, targets: BTreeMap<String, u64>, seed: u64) -> CompositionSpec {
        CompositionSpec {
            kind: CompositionKind::Percentage {
                name: name.to_string(),
                targets,
            },
            seed,
            refinement: RefinementMode::Full,
        }
    }

    pub fn unique_all(copies: u32, seed: u64) -> CompositionSpec {
        CompositionSpec {
            kind: CompositionKind::UniqueAll { copies },
            seed,
            refinement: RefinementMode::Full,
        }
    }

    pub fn with_refinement(mut self, refinement: RefinementMode) -> Self {
        self.refinement = refinement;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            CompositionKind::Percentage { name, .. } => name.clone(),
            CompositionKind::UniqueAll { copies } => format!("unique-all-{copies}x"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub total: u64,
    pub per_domain: BTreeMap<String, u64>,
    pub per_category: BTreeMap<String, u64>,
    pub per_domain_category: BTreeMap<String, BTreeMap<String, u64>>,
}

impl Counts {
    pub fn tally(samples: &[TurnSample]) -> Counts {
        let mut c = Counts::default();
        for s in samples {
            c.total += 1;
            *c.per_domain.entry(s.domain.clone()).or_default() += 1;
            *c.per_category.entry(s.flow_category.to_string()).or_default() += 1;
            *c.per_domain_category
                .entry(s.domain.clone())
                .or_default()
                .entry(s.flow_category.to_string())
                .or_default() += 1;
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub sample_index: u64,
    pub domain: String,
    pub flow_category: FlowCategory,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: CompositionSpec,
    pub tool_version: String,
    pub schema_version: String,
    pub schema_sha256: String,
    pub template_bank_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<RefinementStrategy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    pub counts: Counts,
    pub grounded: u64,
    pub grounding_rate: f64,
    pub failures: u64,
    #[serde(default)]
    pub failed_samples: Vec<SampleFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub manifest: Manifest,
    pub samples: Vec<TurnSample>,
}

impl Corpus {
    fn recount(&mut self) {
        self.manifest.counts = Counts::tally(&self.samples);
        self.manifest.grounded = self.samples.iter().filter(|s| s.is_grounded()).count() as u64;
        self.manifest.grounding_rate = rate(self.manifest.grounded, self.samples.len() as u64);
        self.manifest.failures = self.manifest.failed_samples.len() as u64;
    }
}

fn rate(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn sha256_hex(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// Backend and policy for the refinement stage.
pub struct RefinerConfig<'a> {
    pub backend: &'a dyn LlmBackend,
    pub strategy: RefinementStrategy,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    /// Upper bound on concurrently refined samples.
    pub max_in_flight: usize,
}

impl<'a> RefinerConfig<'a> {
    pub fn new(backend: &'a dyn LlmBackend) -> Self {
        Self {
            backend,
            strategy: RefinementStrategy::default(),
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
            max_in_flight: 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("spec targets unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("invalid composition spec: {0}")]
    InvalidSpec(String),
    #[error("refinement requested but no backend configured")]
    MissingRefiner,
    #[error("backend unusable: {0}")]
    Backend(BackendError),
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone)]
struct PlanItem {
    index: u64,
    domain: String,
    category: FlowCategory,
    flow: Option<((SystemIntent, UserIntent), ActSignature)>,
}

enum Outcome {
    Sample(Box<TurnSample>),
    Failed(SampleFailure),
}

fn realize(structure: DialogueStructure, bank: &TemplateBank, seed: SampleSeed, round: u32) -> TurnSample {
    let mut rng = seed.stage_rng(stage::TEMPLATE, round as u64);
    let (system_template, system_ids) = realize_acts(bank, &structure.system_acts, &mut rng);
    let (user_template, user_ids) = realize_acts(bank, &structure.user_acts, &mut rng);
    let signature = structure.signature();
    TurnSample {
        id: format!("{}-{:06}", structure.domain, seed.index),
        domain: structure.domain,
        flow_category: structure.flow_category,
        history: structure.history,
        system_utterance: system_template.clone(),
        user_utterance: user_template.clone(),
        system_template,
        user_template,
        turn_state: structure.turn_delta,
        full_state: structure.full_state,
        provenance: Provenance {
            seed: seed.master,
            sample_index: seed.index,
            system_intent: structure.system_intent,
            user_intent: structure.user_intent,
            signature,
            structure_attempt: structure.attempt,
            round,
            system_template_ids: system_ids,
            user_template_ids: user_ids,
            system_acts: structure.system_acts,
            user_acts: structure.user_acts,
            refinement: None,
        },
    }
}

/// Runs the refiner on a template-only sample in place.
pub fn refine_turn(sample: &mut TurnSample, refiner: &RefinerConfig<'_>) -> Result<(), RefineError> {
    let seed = SampleSeed::new(sample.provenance.seed, sample.provenance.sample_index);
    let mut rng = seed.stage_rng(stage::REFINE, sample.provenance.round as u64);
    let input = RefineInput {
        domain: &sample.domain,
        system_template: &sample.system_template,
        user_template: &sample.user_template,
    };
    let r = refine_sample(
        &input,
        refiner.strategy,
        refiner.backend,
        &refiner.params,
        &refiner.retry,
        &mut rng,
    )?;
    sample.system_utterance = r.system.paraphrased_text.clone();
    sample.user_utterance = r.user.paraphrased_text.clone();
    sample.provenance.refinement = Some(r);
    Ok(())
}

fn is_run_fatal(e: &RefineError) -> Option<BackendError> {
    match e.backend_error() {
        Some(b @ BackendError::MissingCredential(_)) => Some(b.clone()),
        _ => None,
    }
}

fn build_item(
    schema: &Schema,
    bank: &TemplateBank,
    master: u64,
    item: &PlanItem,
    refiner: Option<&RefinerConfig<'_>>,
) -> Result<Outcome, ComposeError> {
    let seed = SampleSeed::new(master, item.index);
    let fail = |reason: String| {
        Outcome::Failed(SampleFailure {
            sample_index: item.index,
            domain: item.domain.clone(),
            flow_category: item.category,
            reason,
        })
    };
    let rounds = if refiner.is_some() { REPLACEMENT_ROUNDS } else { 1 };
    let mut last = String::new();
    for round in 0..rounds {
        let structure = match item.flow {
            None => synthesize_structure_from(schema, item.category, &item.domain, seed, round * RESAMPLE_BUDGET),
            Some((pair, signature)) => {
                let flow_seed = if round == 0 {
                    seed
                } else {
                    SampleSeed::new(derive_seed(master, &[stage::STRUCTURE, round as u64]), item.index)
                };
                synthesize_flow(schema, &item.domain, pair, signature, flow_seed, FLOW_BUDGET)
            }
        };
        let structure = match structure {
            Ok(s) => s,
            Err(StructureError::Schema(e)) => return Err(e.into()),
            Err(e) => {
                last = e.to_string();
                continue;
            }
        };
        let mut sample = realize(structure, bank, seed, round);
        let Some(refiner) = refiner else {
            return Ok(Outcome::Sample(Box::new(sample)));
        };
        match refine_turn(&mut sample, refiner) {
            Ok(()) => return Ok(Outcome::Sample(Box::new(sample))),
            Err(e) => {
                if let Some(fatal) = is_run_fatal(&e) {
                    return Err(ComposeError::Backend(fatal));
                }
                log::warn!("sample {} round {round}: {e}", item.index);
                last = e.to_string();
            }
        }
    }
    Ok(fail(last))
}

fn run_plan(
    schema: &Schema,
    bank: &TemplateBank,
    spec: &CompositionSpec,
    plan: Vec<PlanItem>,
    refiner: Option<&RefinerConfig<'_>>,
) -> Result<Corpus, ComposeError> {
    let refiner = match (spec.refinement, refiner) {
        (RefinementMode::None, _) => None,
        (RefinementMode::Full, Some(r)) => Some(r),
        (RefinementMode::Full, None) => return Err(ComposeError::MissingRefiner),
    };
    let work = || -> Result<Vec<Outcome>, ComposeError> {
        plan.par_iter()
            .map(|item| build_item(schema, bank, spec.seed, item, refiner))
            .collect()
    };
    let outcomes = match refiner {
        Some(r) => rayon::ThreadPoolBuilder::new()
            .num_threads(r.max_in_flight.max(1))
            .build()
            .map_err(|e| ComposeError::Pool(e.to_string()))?
            .install(work)?,
        None => work()?,
    };
    let mut samples = Vec::with_capacity(outcomes.len());
    let mut failed_samples = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Sample(s) => samples.push(*s),
            Outcome::Failed(f) => failed_samples.push(f),
        }
    }
    let mut corpus = Corpus {
        manifest: Manifest {
            spec: spec.clone(),
            tool_version: TOOL_VERSION.to_string(),
            schema_version: schema.version.clone(),
            schema_sha256: sha256_hex(&schema.to_json()),
            template_bank_sha256: sha256_hex(&bank.to_json()),
            strategy: refiner.map(|r| r.strategy),
            backend: refiner.map(|r| r.backend.describe()),
            counts: Counts::default(),
            grounded: 0,
            grounding_rate: 0.0,
            failures: 0,
            failed_samples,
        },
        samples,
    };
    corpus.recount();
    log::info!(
        "composed {} samples ({} failed), grounding {:.4}",
        corpus.manifest.counts.total,
        corpus.manifest.failures,
        corpus.manifest.grounding_rate
    );
    Ok(corpus)
}

/// Dispatches on the spec kind.
pub fn compose(
    schema: &Schema,
    spec: &CompositionSpec,
    bank: &TemplateBank,
    refiner: Option<&RefinerConfig<'_>>,
) -> Result<Corpus, ComposeError> {
    match &spec.kind {
        CompositionKind::Percentage { .. } => compose_split(schema, spec, bank, refiner),
        CompositionKind::UniqueAll { .. } => compose_unique_all(schema, spec, bank, refiner),
    }
}

/// Builds a split with exact per-domain totals. Samples are ordered by
/// domain, then category.
pub fn compose_split(
    schema: &Schema,
    spec: &CompositionSpec,
    bank: &TemplateBank,
    refiner: Option<&RefinerConfig<'_>>,
) -> Result<Corpus, ComposeError> {
    let CompositionKind::Percentage { targets, .. } = &spec.kind else {
        return Err(ComposeError::InvalidSpec("expected a percentage spec".into()));
    };
    let mut plan = Vec::new();
    for (domain, &total) in targets {
        if schema.domain(domain).is_none() {
            return Err(ComposeError::UnknownDomain(domain.clone()));
        }
        for (category, count) in category_counts(total) {
            for _ in 0..count {
                plan.push(PlanItem {
                    index: plan.len() as u64,
                    domain: domain.clone(),
                    category,
                    flow: None,
                });
            }
        }
    }
    run_plan(schema, bank, spec, plan, refiner)
}

/// Every flow `(domain, system intent, user intent, act signature)` the
/// schema can realize, in domain, pair and signature order. Feasibility is
/// probed with a fixed stream so the set does not depend on the run seed.
pub fn enumerate_flows(schema: &Schema) -> Vec<FlowKey> {
    let mut flows = Vec::new();
    let mut probe = 0u64;
    for domain in schema.domain_names() {
        for (sys, user) in enumerate_pairs() {
            for signature in candidate_signatures(sys, user) {
                let seed = SampleSeed::new(stage::PROBE, probe);
                probe += 1;
                if synthesize_flow(schema, domain, (sys, user), signature, seed, FLOW_BUDGET).is_ok() {
                    flows.push(FlowKey {
                        domain: domain.to_string(),
                        system_intent: sys,
                        user_intent: user,
                        signature,
                    });
                }
            }
        }
    }
    flows
}

/// Emits `copies` samples of every feasible flow, copies adjacent.
pub fn compose_unique_all(
    schema: &Schema,
    spec: &CompositionSpec,
    bank: &TemplateBank,
    refiner: Option<&RefinerConfig<'_>>,
) -> Result<Corpus, ComposeError> {
    let CompositionKind::UniqueAll { copies } = spec.kind else {
        return Err(ComposeError::InvalidSpec("expected a unique_all spec".into()));
    };
    if copies == 0 {
        return Err(ComposeError::InvalidSpec("copies must be at least 1".into()));
    }
    let mut plan = Vec::new();
    for flow in enumerate_flows(schema) {
        for _ in 0..copies {
            plan.push(PlanItem {
                index: plan.len() as u64,
                domain: flow.domain.clone(),
                category: category_of(flow.system_intent, flow.user_intent),
                flow: Some(((flow.system_intent, flow.user_intent), flow.signature)),
            });
        }
    }
    run_plan(schema, bank, spec, plan, refiner)
}

/// Refines a template-only corpus. Samples whose refinement fails are
/// dropped and recorded as failures.
pub fn refine_corpus(corpus: &Corpus, refiner: &RefinerConfig<'_>) -> Result<Corpus, ComposeError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(refiner.max_in_flight.max(1))
        .build()
        .map_err(|e| ComposeError::Pool(e.to_string()))?;
    let outcomes: Vec<Result<Outcome, ComposeError>> = pool.install(|| {
        corpus
            .samples
            .par_iter()
            .map(|s| {
                let mut s = s.clone();
                s.system_utterance = s.system_template.clone();
                s.user_utterance = s.user_template.clone();
                match refine_turn(&mut s, refiner) {
                    Ok(()) => Ok(Outcome::Sample(Box::new(s))),
                    Err(e) => match is_run_fatal(&e) {
                        Some(fatal) => Err(ComposeError::Backend(fatal)),
                        None => Ok(Outcome::Failed(SampleFailure {
                            sample_index: s.provenance.sample_index,
                            domain: s.domain.clone(),
                            flow_category: s.flow_category,
                            reason: e.to_string(),
                        })),
                    },
                }
            })
            .collect()
    });
    let mut out = Corpus {
        manifest: corpus.manifest.clone(),
        samples: Vec::new(),
    };
    for o in outcomes {
        match o? {
            Outcome::Sample(s) => out.samples.push(*s),
            Outcome::Failed(f) => out.manifest.failed_samples.push(f),
        }
    }
    out.manifest.spec.refinement = RefinementMode::Full;
    out.manifest.strategy = Some(refiner.strategy);
    out.manifest.backend = Some(refiner.backend.describe());
    out.recount();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_refiner::MockBackend;

    fn small_spec(refinement: RefinementMode) -> CompositionSpec {
        let targets = [("hotel".to_string(), 20), ("taxi".to_string(), 7)]
            .into_iter()
            .collect();
        CompositionSpec::percentage("small", targets, 9).with_refinement(refinement)
    }

    #[test]
    fn split_counts_and_order() {
        let corpus = compose_split(
            &Schema::builtin(),
            &small_spec(RefinementMode::None),
            &TemplateBank::builtin(),
            None,
        )
        .unwrap();
        assert_eq!(corpus.samples.len(), 27);
        assert_eq!(corpus.manifest.counts.per_domain["hotel"], 20);
        let hotel = &corpus.manifest.counts.per_domain_category["hotel"];
        assert_eq!(hotel["new_slot_values"], 10);
        assert_eq!(hotel["no_new_state"], 3);
        assert_eq!(corpus.manifest.grounding_rate, 1.0);
        assert!(corpus.samples.windows(2).all(|w| w[0].domain <= w[1].domain));
        for s in &corpus.samples {
            assert_eq!(s.turn_state.apply(&s.history), s.full_state);
            assert_eq!(s.system_utterance, s.system_template);
        }
    }

    #[test]
    fn refined_with_mock_matches_refine_of_template_corpus() {
        let schema = Schema::builtin();
        let bank = TemplateBank::builtin();
        let mock = MockBackend::new();
        let mut cfg = RefinerConfig::new(&mock);
        cfg.retry = RetryPolicy::immediate(3);
        let full = compose_split(&schema, &small_spec(RefinementMode::Full), &bank, Some(&cfg)).unwrap();
        let plain = compose_split(&schema, &small_spec(RefinementMode::None), &bank, None).unwrap();
        let refined = refine_corpus(&plain, &cfg).unwrap();
        assert_eq!(refined.samples, full.samples);
        for s in &full.samples {
            assert_eq!(s.provenance.refinement.as_ref().unwrap().calls.len(), 4);
        }
    }

    #[test]
    fn full_refinement_needs_a_backend() {
        let err = compose_split(
            &Schema::builtin(),
            &small_spec(RefinementMode::Full),
            &TemplateBank::builtin(),
            None,
        );
        assert!(matches!(err, Err(ComposeError::MissingRefiner)));
    }

    #[test]
    fn empty_and_unknown_targets() {
        let spec = CompositionSpec::percentage("empty", BTreeMap::new(), 1).with_refinement(RefinementMode::None);
        let c = compose(&Schema::builtin(), &spec, &TemplateBank::builtin(), None).unwrap();
        assert!(c.samples.is_empty());
        assert_eq!(c.manifest.counts.total, 0);
        let targets = [("spa".to_string(), 3)].into_iter().collect();
        let spec = CompositionSpec::percentage("bad", targets, 1).with_refinement(RefinementMode::None);
        assert!(matches!(
            compose(&Schema::builtin(), &spec, &TemplateBank::builtin(), None),
            Err(ComposeError::UnknownDomain(_))
        ));
    }

    #[test]
    fn builtin_specs_resolve() {
        for name in BUILTIN_SPECS {
            assert!(CompositionSpec::builtin(name, 0).is_some(), "{name}");
        }
        let CompositionKind::Percentage { targets, .. } = CompositionSpec::builtin("mw-1pct", 0).unwrap().kind else {
            panic!()
        };
        assert_eq!(targets.values().sum::<u64>(), 549);
    }
}
