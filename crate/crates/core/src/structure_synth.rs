//! Raw dialogue structure synthesis: history state, system act, user act
//! and the resulting turn state.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue_model::{
    self, category_of, is_valid_transition, ActMode, FlowCategory, Intent, SystemIntent, UserIntent,
};
use crate::schema::{Schema, SchemaError, SlotRole, SlotSpec, SlotValue};
use crate::seed::SampleSeed;
use crate::state::{DialogueState, SlotKey, TurnDelta};

/// Resampling attempts per structure before giving up.
pub const RESAMPLE_BUDGET: u32 = 32;

const MAX_HISTORY: usize = 4;
const MAX_ACT_SLOTS: usize = 2;

#[derive(Debug, Error)]
pub enum StructureError {
    #[error(transparent)]
    Schema(#[from] SchemaError),
    #[error("({0}, {1}) is not a valid transition")]
    InvalidTransition(SystemIntent, UserIntent),
    #[error("cannot satisfy constraint: {0}")]
    Impossible(String),
    #[error("no valid {category} structure for domain `{domain}` after {attempts} attempts: {last}")]
    Exhausted {
        category: FlowCategory,
        domain: String,
        attempts: u32,
        last: String,
    },
}

fn impossible(msg: impl Into<String>) -> StructureError {
    StructureError::Impossible(msg.into())
}

/// One slot mentioned by an act; `value` is absent for slot-only acts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActSlot {
    pub slot: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAct {
    pub intent: Intent,
    pub domain: String,
    pub slots: Vec<ActSlot>,
}

impl DialogueAct {
    pub fn mode(&self) -> ActMode {
        self.intent.mode()
    }

    pub fn values(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().filter_map(|s| s.value.as_deref())
    }

    fn keyed(&self) -> impl Iterator<Item = (SlotKey, Option<&str>)> {
        self.slots
            .iter()
            .map(|s| (SlotKey::new(&self.domain, &s.slot), s.value.as_deref()))
    }
}

/// Number of slots carried by the system and user act.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActSignature {
    pub system_slots: usize,
    pub user_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueStructure {
    pub flow_category: FlowCategory,
    pub domain: String,
    pub system_intent: SystemIntent,
    pub user_intent: UserIntent,
    pub history: DialogueState,
    pub system_acts: Vec<DialogueAct>,
    pub user_acts: Vec<DialogueAct>,
    pub turn_delta: TurnDelta,
    pub full_state: DialogueState,
    /// Zero-based index of the attempt that succeeded.
    pub attempt: u32,
}

impl DialogueStructure {
    pub fn signature(&self) -> ActSignature {
        ActSignature {
            system_slots: self.system_acts.iter().map(|a| a.slots.len()).sum(),
            user_slots: self.user_acts.iter().map(|a| a.slots.len()).sum(),
        }
    }
}

fn informable<'a>(schema: &'a Schema, domain: &str) -> Result<Vec<&'a SlotSpec>, StructureError> {
    let spec = schema
        .domain(domain)
        .ok_or_else(|| SchemaError::UnknownDomain(domain.to_string()))?;
    Ok(spec.slots_with_role(SlotRole::Informable).collect())
}

fn booking_pool<'a>(schema: &'a Schema, domain: &str) -> Result<Vec<&'a SlotSpec>, StructureError> {
    let booking: Vec<_> = schema
        .domain(domain)
        .ok_or_else(|| SchemaError::UnknownDomain(domain.to_string()))?
        .booking_slots()
        .collect();
    if booking.is_empty() {
        informable(schema, domain)
    } else {
        Ok(booking)
    }
}

fn absent<'a>(pool: Vec<&'a SlotSpec>, history: &DialogueState, domain: &str) -> Vec<&'a SlotSpec> {
    pool.into_iter()
        .filter(|s| !history.contains(&SlotKey::new(domain, &s.name)))
        .collect()
}

fn present<'a>(pool: Vec<&'a SlotSpec>, history: &DialogueState, domain: &str) -> Vec<&'a SlotSpec> {
    pool.into_iter()
        .filter(|s| history.contains(&SlotKey::new(domain, &s.name)))
        .collect()
}

fn choose_count<R: Rng + ?Sized>(
    rng: &mut R,
    forced: Option<usize>,
    available: usize,
    what: &str,
) -> Result<usize, StructureError> {
    if available == 0 {
        return Err(impossible(format!("no eligible slots for {what}")));
    }
    match forced {
        Some(k) if k == 0 || k > available => Err(impossible(format!("{what} needs {k} slots, {available} eligible"))),
        Some(k) => Ok(k),
        None => Ok(rng.gen_range(1..=available.min(MAX_ACT_SLOTS))),
    }
}

/// Picks `k` candidates, keeping schema order.
fn pick<'a, R: Rng + ?Sized>(rng: &mut R, candidates: &[&'a SlotSpec], k: usize) -> Vec<&'a SlotSpec> {
    let mut idx = rand::seq::index::sample(rng, candidates.len(), k).into_vec();
    idx.sort_unstable();
    idx.into_iter().map(|i| candidates[i]).collect()
}

fn sampled_value<R: Rng + ?Sized>(rng: &mut R, slot: &SlotSpec) -> String {
    slot.values.choose(rng).expect("validated non-empty").clone()
}

fn history_or_sampled<R: Rng + ?Sized>(rng: &mut R, history: &DialogueState, domain: &str, slot: &SlotSpec) -> String {
    match history.get(&SlotKey::new(domain, &slot.name)) {
        Some(v) => v.to_string(),
        None => sampled_value(rng, slot),
    }
}

/// Builds the accumulated history state preceding the exchange.
pub fn synthesize_history<R: Rng + ?Sized>(
    schema: &Schema,
    sys: SystemIntent,
    category: FlowCategory,
    domain: &str,
    rng: &mut R,
) -> Result<DialogueState, StructureError> {
    let pool = informable(schema, domain)?;
    if category == FlowCategory::Starter || sys == SystemIntent::Start || pool.is_empty() {
        return Ok(DialogueState::new());
    }
    let n = rng.gen_range(1..=pool.len().min(MAX_HISTORY));
    Ok(schema
        .sample_slot_values(domain, n, SlotRole::Informable, rng)?
        .into_iter()
        .map(|sv| (SlotKey::new(sv.domain, sv.slot), sv.value))
        .collect())
}

pub fn sample_system_act<R: Rng + ?Sized>(
    schema: &Schema,
    history: &DialogueState,
    domain: &str,
    sys: SystemIntent,
    rng: &mut R,
) -> Result<Vec<DialogueAct>, StructureError> {
    system_act(schema, history, domain, sys, None, rng)
}

fn system_act<R: Rng + ?Sized>(
    schema: &Schema,
    history: &DialogueState,
    domain: &str,
    sys: SystemIntent,
    count: Option<usize>,
    rng: &mut R,
) -> Result<Vec<DialogueAct>, StructureError> {
    use SystemIntent as S;
    let intent = Intent::System(sys);
    let what = sys.name();
    let slots: Vec<ActSlot> = match sys {
        S::Start => {
            if count.unwrap_or(0) != 0 {
                return Err(impossible("start carries no slots"));
            }
            Vec::new()
        }
        S::Inform | S::Nooffer => {
            let pool = informable(schema, domain)?;
            let known = present(pool.clone(), history, domain);
            // nooffer restates the constraints that found nothing
            let pool = if sys == S::Nooffer && !known.is_empty() {
                known
            } else {
                pool
            };
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: Some(history_or_sampled(rng, history, domain, s)),
                })
                .collect()
        }
        S::Select | S::Recommend | S::Request | S::BookingRequest => {
            let pool = if sys == S::BookingRequest {
                booking_pool(schema, domain)?
            } else {
                informable(schema, domain)?
            };
            let pool = absent(pool, history, domain);
            let k = choose_count(rng, count, pool.len(), what)?;
            let with_value = intent.mode() == ActMode::Full;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: with_value.then(|| sampled_value(rng, s)),
                })
                .collect()
        }
        S::BookingInform | S::Offerbooked | S::BookingBook | S::BookingNobook => {
            let pool = booking_pool(schema, domain)?;
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: Some(history_or_sampled(rng, history, domain, s)),
                })
                .collect()
        }
    };
    Ok(vec![DialogueAct {
        intent,
        domain: domain.to_string(),
        slots,
    }])
}

pub fn sample_user_act<R: Rng + ?Sized>(
    schema: &Schema,
    history: &DialogueState,
    system_acts: &[DialogueAct],
    user: UserIntent,
    category: FlowCategory,
    rng: &mut R,
) -> Result<Vec<DialogueAct>, StructureError> {
    user_act(schema, history, system_acts, user, category, None, rng)
}

fn user_act<R: Rng + ?Sized>(
    schema: &Schema,
    history: &DialogueState,
    system_acts: &[DialogueAct],
    user: UserIntent,
    category: FlowCategory,
    count: Option<usize>,
    rng: &mut R,
) -> Result<Vec<DialogueAct>, StructureError> {
    use UserIntent as U;
    let sys_act = system_acts
        .first()
        .ok_or_else(|| impossible("user act without a system act"))?;
    let sys = match sys_act.intent {
        Intent::System(s) => s,
        Intent::User(_) => return Err(impossible("first system act has a user intent")),
    };
    if !is_valid_transition(sys, user) {
        return Err(StructureError::InvalidTransition(sys, user));
    }
    let domain = sys_act.domain.as_str();
    let what = user.name();
    let mut act_domain = domain.to_string();

    let echo = |k: usize| -> Result<Vec<ActSlot>, StructureError> {
        match count {
            Some(c) if c != k => Err(impossible(format!("{what} echoes {k} slots, not {c}"))),
            _ => Ok(sys_act.slots.clone()),
        }
    };

    let slots: Vec<ActSlot> = match user {
        U::Confirm | U::End => {
            if count.unwrap_or(0) != 0 {
                return Err(impossible(format!("{what} carries no slots")));
            }
            Vec::new()
        }
        U::Inform if matches!(sys, SystemIntent::Request | SystemIntent::BookingRequest) => {
            // answer exactly the requested slots
            if let Some(c) = count {
                if c != sys_act.slots.len() {
                    return Err(impossible("inform must answer every requested slot"));
                }
            }
            let spec = schema
                .domain(domain)
                .ok_or_else(|| SchemaError::UnknownDomain(domain.to_string()))?;
            sys_act
                .slots
                .iter()
                .map(|asked| {
                    let slot = spec
                        .slot(&asked.slot)
                        .ok_or_else(|| impossible(format!("requested slot `{}` unknown", asked.slot)))?;
                    Ok(ActSlot {
                        slot: slot.name.clone(),
                        value: Some(sampled_value(rng, slot)),
                    })
                })
                .collect::<Result<_, StructureError>>()?
        }
        U::Inform | U::Book => {
            let pool = if user == U::Book {
                booking_pool(schema, domain)?
            } else {
                informable(schema, domain)?
            };
            let pool = absent(pool, history, domain);
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: Some(sampled_value(rng, s)),
                })
                .collect()
        }
        U::Update => {
            let pool: Vec<_> = present(informable(schema, domain)?, history, domain)
                .into_iter()
                .filter(|s| s.values.len() >= 2)
                .collect();
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| {
                    let old = history.get(&SlotKey::new(domain, &s.name)).unwrap_or_default();
                    let others: Vec<&String> = s.values.iter().filter(|v| *v != old).collect();
                    ActSlot {
                        slot: s.name.clone(),
                        value: Some((*others.choose(rng).expect("two or more values")).clone()),
                    }
                })
                .collect()
        }
        U::Recheck => {
            let pool = present(informable(schema, domain)?, history, domain);
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: history.get(&SlotKey::new(domain, &s.name)).map(str::to_string),
                })
                .collect()
        }
        U::Reqmore => {
            let pool: Vec<_> = schema
                .domain(domain)
                .ok_or_else(|| SchemaError::UnknownDomain(domain.to_string()))?
                .slots_with_role(SlotRole::Requestable)
                .collect();
            let k = choose_count(rng, count, pool.len(), what)?;
            pick(rng, &pool, k)
                .into_iter()
                .map(|s| ActSlot {
                    slot: s.name.clone(),
                    value: None,
                })
                .collect()
        }
        U::Pick => {
            if count.is_some_and(|c| c != 1) {
                return Err(impossible("pick takes exactly one offered option"));
            }
            vec![sys_act
                .slots
                .choose(rng)
                .ok_or_else(|| impossible("nothing offered to pick"))?
                .clone()]
        }
        U::Select | U::Nobook => echo(sys_act.slots.len())?,
        U::NewDomain => {
            if count.is_some_and(|c| c != 1) {
                return Err(impossible("new_domain carries exactly one slot"));
            }
            let used = history.domains();
            let candidates: Vec<&str> = schema
                .domain_names()
                .filter(|d| *d != domain && !used.contains(d))
                .filter(|d| informable(schema, d).is_ok_and(|p| !p.is_empty()))
                .collect();
            let next = *candidates
                .choose(rng)
                .ok_or_else(|| impossible("no unused domain to switch to"))?;
            act_domain = next.to_string();
            let sv = schema.sample_slot_values(next, 1, SlotRole::Informable, rng)?.remove(0);
            vec![ActSlot {
                slot: sv.slot,
                value: Some(sv.value),
            }]
        }
    };

    let acts = vec![DialogueAct {
        intent: Intent::User(user),
        domain: act_domain,
        slots,
    }];
    let (delta, _) = derive_turn_state(history, &acts);
    check_category(category, history, &delta).map_err(StructureError::Impossible)?;
    Ok(acts)
}

/// Applies each user act's state effect to `history`.
pub fn derive_turn_state(history: &DialogueState, user_acts: &[DialogueAct]) -> (TurnDelta, DialogueState) {
    use UserIntent as U;
    let mut delta = TurnDelta::default();
    for act in user_acts {
        let Intent::User(intent) = act.intent else { continue };
        match intent {
            U::Inform | U::Book | U::NewDomain | U::Update | U::Pick | U::Select | U::Recheck => {
                for (key, value) in act.keyed() {
                    if let Some(v) = value {
                        delta.deletions.remove(&key);
                        delta.updates.insert(key, v);
                    }
                }
            }
            U::Nobook => {
                for (key, _) in act.keyed() {
                    delta.updates.remove(&key);
                    delta.deletions.insert(key);
                }
            }
            U::Confirm | U::Reqmore | U::End => {}
        }
    }
    let full = delta.apply(history);
    (delta, full)
}

/// Checks the state-level constraint a flow category places on a turn.
pub fn check_category(category: FlowCategory, history: &DialogueState, delta: &TurnDelta) -> Result<(), String> {
    let ok = match category {
        FlowCategory::NewSlotValues => delta.updates.keys().any(|k| !history.contains(k)),
        FlowCategory::NoNewState | FlowCategory::Terminator => delta.is_empty(),
        FlowCategory::Starter => history.is_empty(),
        FlowCategory::UpdateExisting => {
            !delta.updates.is_empty()
                && delta.deletions.is_empty()
                && delta
                    .updates
                    .iter()
                    .all(|(k, v)| history.get(k).is_some_and(|old| old != v))
        }
        FlowCategory::RepeatOrDelete => {
            !delta.deletions.is_empty() || delta.updates.iter().any(|(k, v)| history.get(k) == Some(v))
        }
    };
    if ok {
        Ok(())
    } else {
        Err(format!(
            "{category} constraint violated by delta `{}`",
            delta.render_answer()
        ))
    }
}

fn attempt<R: Rng + ?Sized>(
    schema: &Schema,
    category: FlowCategory,
    domain: &str,
    pair: Option<(SystemIntent, UserIntent)>,
    signature: Option<ActSignature>,
    rng: &mut R,
) -> Result<DialogueStructure, StructureError> {
    let (sys, user) = match pair {
        Some(p) => p,
        None => dialogue_model::sample_intent_pair(category, rng),
    };
    let history = synthesize_history(schema, sys, category, domain, rng)?;
    let system_acts = system_act(schema, &history, domain, sys, signature.map(|s| s.system_slots), rng)?;
    let user_acts = user_act(
        schema,
        &history,
        &system_acts,
        user,
        category,
        signature.map(|s| s.user_slots),
        rng,
    )?;
    let (turn_delta, full_state) = derive_turn_state(&history, &user_acts);
    Ok(DialogueStructure {
        flow_category: category,
        domain: domain.to_string(),
        system_intent: sys,
        user_intent: user,
        history,
        system_acts,
        user_acts,
        turn_delta,
        full_state,
        attempt: 0,
    })
}

fn with_budget(
    category: FlowCategory,
    domain: &str,
    seed: SampleSeed,
    first_attempt: u32,
    budget: u32,
    mut f: impl FnMut(&mut crate::seed::Rng) -> Result<DialogueStructure, StructureError>,
) -> Result<DialogueStructure, StructureError> {
    let mut last = String::new();
    for a in first_attempt..first_attempt + budget {
        match f(&mut seed.attempt_rng(a)) {
            Ok(mut s) => {
                s.attempt = a;
                return Ok(s);
            }
            Err(StructureError::Impossible(msg)) => last = msg,
            Err(e) => return Err(e),
        }
    }
    Err(StructureError::Exhausted {
        category,
        domain: domain.to_string(),
        attempts: budget,
        last,
    })
}

/// Synthesizes one structure for `category` in `domain`, resampling the
/// intent pair and content on unsatisfiable constraints.
pub fn synthesize_structure(
    schema: &Schema,
    category: FlowCategory,
    domain: &str,
    seed: SampleSeed,
) -> Result<DialogueStructure, StructureError> {
    synthesize_structure_from(schema, category, domain, seed, 0)
}

/// As [`synthesize_structure`], starting at attempt `first_attempt`; used to
/// draw replacement structures for the same sample.
pub fn synthesize_structure_from(
    schema: &Schema,
    category: FlowCategory,
    domain: &str,
    seed: SampleSeed,
    first_attempt: u32,
) -> Result<DialogueStructure, StructureError> {
    if schema.domain(domain).is_none() {
        return Err(SchemaError::UnknownDomain(domain.to_string()).into());
    }
    with_budget(category, domain, seed, first_attempt, RESAMPLE_BUDGET, |rng| {
        attempt(schema, category, domain, None, None, rng)
    })
}

/// Synthesizes a structure with a fixed intent pair and act signature.
pub fn synthesize_flow(
    schema: &Schema,
    domain: &str,
    pair: (SystemIntent, UserIntent),
    signature: ActSignature,
    seed: SampleSeed,
    budget: u32,
) -> Result<DialogueStructure, StructureError> {
    if !is_valid_transition(pair.0, pair.1) {
        return Err(StructureError::InvalidTransition(pair.0, pair.1));
    }
    if schema.domain(domain).is_none() {
        return Err(SchemaError::UnknownDomain(domain.to_string()).into());
    }
    let category = category_of(pair.0, pair.1);
    with_budget(category, domain, seed, 0, budget, |rng| {
        attempt(schema, category, domain, Some(pair), Some(signature), rng)
    })
}

/// Act signatures a pair can take before schema feasibility is considered.
pub fn candidate_signatures(sys: SystemIntent, user: UserIntent) -> Vec<ActSignature> {
    use UserIntent as U;
    let sys_counts: &[usize] = if sys == SystemIntent::Start { &[0] } else { &[1, 2] };
    let mut out = Vec::new();
    for &s in sys_counts {
        let user_counts: Vec<usize> = match user {
            U::Confirm | U::End => vec![0],
            U::Pick | U::NewDomain => vec![1],
            U::Select | U::Nobook => vec![s],
            U::Inform if matches!(sys, SystemIntent::Request | SystemIntent::BookingRequest) => vec![s],
            _ => vec![1, 2],
        };
        out.extend(user_counts.into_iter().map(|u| ActSignature {
            system_slots: s,
            user_slots: u,
        }));
    }
    out
}

/// Lists every violated structure invariant; empty when the structure is sound.
pub fn check_structure(schema: &Schema, s: &DialogueStructure) -> Vec<String> {
    let mut v = Vec::new();
    let (Some(sys_act), Some(user_act)) = (s.system_acts.first(), s.user_acts.first()) else {
        v.push("missing system or user act".into());
        return v;
    };
    if sys_act.intent != Intent::System(s.system_intent) || user_act.intent != Intent::User(s.user_intent) {
        v.push("act intents disagree with the structure's intent pair".into());
    }
    if !is_valid_transition(s.system_intent, s.user_intent) {
        v.push(format!("invalid transition ({}, {})", s.system_intent, s.user_intent));
    }
    if !s.flow_category.admits(s.system_intent, s.user_intent) {
        v.push(format!(
            "{} does not admit ({}, {})",
            s.flow_category, s.system_intent, s.user_intent
        ));
    }
    if s.turn_delta.apply(&s.history) != s.full_state {
        v.push("full_state != apply(history, turn_delta)".into());
    }
    if s.turn_delta.deletions.iter().any(|k| s.full_state.contains(k)) {
        v.push("deleted key survives in full_state".into());
    }
    if derive_turn_state(&s.history, &s.user_acts).0 != s.turn_delta {
        v.push("turn_delta disagrees with the user acts".into());
    }
    if let Err(e) = check_category(s.flow_category, &s.history, &s.turn_delta) {
        v.push(e);
    }
    for state in [&s.history, &s.full_state, &s.turn_delta.updates] {
        for sv in state.slot_values() {
            if !schema.validate_value(&sv) {
                v.push(format!("invalid state entry {}-{} = {}", sv.domain, sv.slot, sv.value));
            }
        }
    }
    for act in s.system_acts.iter().chain(&s.user_acts) {
        let mode_ok = match act.mode() {
            ActMode::Bare => act.slots.is_empty(),
            ActMode::SlotOnly => {
                (1..=MAX_ACT_SLOTS).contains(&act.slots.len()) && act.slots.iter().all(|x| x.value.is_none())
            }
            ActMode::Full => {
                (1..=MAX_ACT_SLOTS).contains(&act.slots.len()) && act.slots.iter().all(|x| x.value.is_some())
            }
        };
        if !mode_ok {
            v.push(format!(
                "{} act does not match its {:?} signature",
                act.intent,
                act.mode()
            ));
        }
        for slot in &act.slots {
            let known = match &slot.value {
                Some(value) => schema.validate_value(&SlotValue::new(&act.domain, &slot.slot, value)),
                None => schema.slot(&act.domain, &slot.slot).is_some(),
            };
            if !known {
                v.push(format!("{} mentions invalid {}-{}", act.intent, act.domain, slot.slot));
            }
        }
    }
    if s.user_intent == UserIntent::NewDomain
        && (user_act.domain == s.domain || s.history.domains().contains(user_act.domain.as_str()))
    {
        v.push("new_domain act reuses a history domain".into());
    }
    if s.flow_category != FlowCategory::Starter
        && s.system_intent != SystemIntent::Start
        && !(1..=MAX_HISTORY).contains(&s.history.len())
    {
        v.push(format!("history has {} entries", s.history.len()));
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn key(s: &str) -> SlotKey {
        s.parse().unwrap()
    }

    fn state(pairs: &[(&str, &str)]) -> DialogueState {
        pairs.iter().map(|(k, v)| (key(k), v.to_string())).collect()
    }

    fn user(intent: UserIntent, domain: &str, slots: &[(&str, &str)]) -> DialogueAct {
        DialogueAct {
            intent: Intent::User(intent),
            domain: domain.into(),
            slots: slots
                .iter()
                .map(|(s, v)| ActSlot {
                    slot: s.to_string(),
                    value: Some(v.to_string()),
                })
                .collect(),
        }
    }

    #[test]
    fn derive_turn_state_examples() {
        let (d, f) = derive_turn_state(
            &DialogueState::new(),
            &[user(UserIntent::Inform, "hotel", &[("area", "north")])],
        );
        assert_eq!(d.updates, state(&[("hotel-area", "north")]));
        assert_eq!(f, state(&[("hotel-area", "north")]));

        let h = state(&[("hotel-area", "north")]);
        let (_, f) = derive_turn_state(&h, &[user(UserIntent::Update, "hotel", &[("area", "south")])]);
        assert_eq!(f, state(&[("hotel-area", "south")]));

        let (d, f) = derive_turn_state(&h, &[user(UserIntent::Confirm, "hotel", &[])]);
        assert!(d.is_empty());
        assert_eq!(f, h);

        let (d, f) = derive_turn_state(&h, &[user(UserIntent::Recheck, "hotel", &[("area", "north")])]);
        assert_eq!(f, h);
        assert!(check_category(FlowCategory::RepeatOrDelete, &h, &d).is_ok());

        let (d, f) = derive_turn_state(&h, &[user(UserIntent::Nobook, "hotel", &[("area", "north")])]);
        assert!(d.deletions.contains(&key("hotel-area")));
        assert!(f.is_empty());
    }

    #[test]
    fn history_rules() {
        let s = Schema::builtin();
        let h = synthesize_history(
            &s,
            SystemIntent::Start,
            FlowCategory::Starter,
            "hotel",
            &mut rng_from(1, &[]),
        )
        .unwrap();
        assert!(h.is_empty());
        let a = synthesize_history(
            &s,
            SystemIntent::Inform,
            FlowCategory::NewSlotValues,
            "hotel",
            &mut rng_from(3, &[]),
        )
        .unwrap();
        let b = synthesize_history(
            &s,
            SystemIntent::Inform,
            FlowCategory::NewSlotValues,
            "hotel",
            &mut rng_from(3, &[]),
        )
        .unwrap();
        assert_eq!(a, b);
        for seed in 0..1000 {
            let h = synthesize_history(
                &s,
                SystemIntent::Nooffer,
                FlowCategory::UpdateExisting,
                "train",
                &mut rng_from(seed, &[]),
            )
            .unwrap();
            assert!((1..=4).contains(&h.len()));
            assert!(h.keys().all(|k| k.domain == "train"));
        }
        assert!(synthesize_history(
            &s,
            SystemIntent::Inform,
            FlowCategory::NewSlotValues,
            "zoo",
            &mut rng_from(0, &[])
        )
        .is_err());
    }

    #[test]
    fn system_act_signatures() {
        let s = Schema::builtin();
        let h = state(&[("hotel-area", "north")]);
        let acts = sample_system_act(
            &s,
            &DialogueState::new(),
            "hotel",
            SystemIntent::Start,
            &mut rng_from(0, &[]),
        )
        .unwrap();
        assert_eq!(acts.len(), 1);
        assert!(acts[0].slots.is_empty());

        let req = sample_system_act(&s, &h, "hotel", SystemIntent::Request, &mut rng_from(0, &[])).unwrap();
        assert_eq!(req[0].mode(), ActMode::SlotOnly);
        assert!(req[0].slots.iter().all(|x| x.value.is_none()));

        for seed in 0..100 {
            let ob = sample_system_act(&s, &h, "hotel", SystemIntent::Offerbooked, &mut rng_from(seed, &[])).unwrap();
            assert!(!ob[0].slots.is_empty());
            assert!(ob[0]
                .slots
                .iter()
                .all(|x| x.value.is_some() && x.slot.starts_with("book")));
        }
    }

    #[test]
    fn user_act_rules() {
        let s = Schema::builtin();
        let h = state(&[("hotel-stars", "4")]);
        let sys = sample_system_act(&s, &h, "hotel", SystemIntent::Inform, &mut rng_from(0, &[])).unwrap();
        let confirm = sample_user_act(
            &s,
            &h,
            &sys,
            UserIntent::Confirm,
            FlowCategory::NoNewState,
            &mut rng_from(0, &[]),
        )
        .unwrap();
        assert!(confirm[0].slots.is_empty());

        let request = vec![DialogueAct {
            intent: Intent::System(SystemIntent::Request),
            domain: "hotel".into(),
            slots: vec![ActSlot {
                slot: "area".into(),
                value: None,
            }],
        }];
        for seed in 0..1000 {
            let acts = sample_user_act(
                &s,
                &h,
                &request,
                UserIntent::Inform,
                FlowCategory::NewSlotValues,
                &mut rng_from(seed, &[]),
            )
            .unwrap();
            let slots: Vec<_> = acts[0].slots.iter().map(|x| x.slot.as_str()).collect();
            assert_eq!(slots, ["area"]);
        }

        let booked = sample_system_act(&s, &h, "hotel", SystemIntent::Offerbooked, &mut rng_from(2, &[])).unwrap();
        for seed in 0..100 {
            let acts = sample_user_act(
                &s,
                &h,
                &booked,
                UserIntent::NewDomain,
                FlowCategory::NewSlotValues,
                &mut rng_from(seed, &[]),
            )
            .unwrap();
            assert_eq!(acts[0].slots.len(), 1);
            assert_ne!(acts[0].domain, "hotel");
        }

        let err = sample_user_act(
            &s,
            &h,
            &sys,
            UserIntent::End,
            FlowCategory::Terminator,
            &mut rng_from(0, &[]),
        )
        .unwrap_err();
        assert!(matches!(err, StructureError::InvalidTransition(..)));

        let nooffer = sample_system_act(
            &s,
            &DialogueState::new(),
            "hotel",
            SystemIntent::Nooffer,
            &mut rng_from(0, &[]),
        )
        .unwrap();
        let err = sample_user_act(
            &s,
            &DialogueState::new(),
            &nooffer,
            UserIntent::Update,
            FlowCategory::UpdateExisting,
            &mut rng_from(0, &[]),
        )
        .unwrap_err();
        assert!(matches!(err, StructureError::Impossible(_)));
    }

    #[test]
    fn composite_examples() {
        let s = Schema::builtin();
        for seed in 0..50 {
            let st = synthesize_structure(&s, FlowCategory::Starter, "restaurant", SampleSeed::new(seed, 0)).unwrap();
            assert!(st.history.is_empty());
            assert_eq!(
                (st.system_intent, st.user_intent),
                (SystemIntent::Start, UserIntent::Inform)
            );
            let t = synthesize_structure(&s, FlowCategory::Terminator, "taxi", SampleSeed::new(seed, 1)).unwrap();
            assert_eq!(t.user_intent, UserIntent::End);
            assert!(t.turn_delta.is_empty());
            assert!(check_structure(&s, &st).is_empty());
            assert!(check_structure(&s, &t).is_empty());
        }
        let a = synthesize_structure(&s, FlowCategory::NewSlotValues, "hotel", SampleSeed::new(5, 9)).unwrap();
        let b = synthesize_structure(&s, FlowCategory::NewSlotValues, "hotel", SampleSeed::new(5, 9)).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn single_domain_schema_never_yields_new_domain() {
        let s = Schema::from_json(
            r#"{"version": "x", "domains": [{"name": "spa", "slots": [
                {"name": "area", "kind": "categorical", "values": ["n", "s"], "informable": true, "requestable": true},
                {"name": "bookday", "kind": "categorical", "values": ["mon", "tue"], "informable": true, "requestable": false},
                {"name": "phone", "kind": "open", "values": ["1"], "informable": false, "requestable": true}]}]}"#,
        )
        .unwrap();
        for i in 0..200 {
            let st = synthesize_structure(&s, FlowCategory::NewSlotValues, "spa", SampleSeed::new(1, i)).unwrap();
            assert_ne!(st.user_intent, UserIntent::NewDomain);
            assert!(check_structure(&s, &st).is_empty());
        }
    }

    #[test]
    fn exhaustion_is_reported() {
        // one single-valued slot: updates are never possible
        let s = Schema::from_json(
            r#"{"version": "x", "domains": [{"name": "spa", "slots": [
                {"name": "area", "kind": "categorical", "values": ["n"], "informable": true, "requestable": true}]}]}"#,
        )
        .unwrap();
        let err = synthesize_structure(&s, FlowCategory::UpdateExisting, "spa", SampleSeed::new(0, 0)).unwrap_err();
        assert!(matches!(
            err,
            StructureError::Exhausted {
                attempts: RESAMPLE_BUDGET,
                ..
            }
        ));
    }

    #[test]
    fn candidate_signatures_respect_modes() {
        for (s, u) in dialogue_model::enumerate_pairs() {
            let sigs = candidate_signatures(s, u);
            assert!(!sigs.is_empty());
            for sig in sigs {
                assert_eq!(sig.system_slots == 0, Intent::System(s).mode() == ActMode::Bare);
                assert_eq!(sig.user_slots == 0, Intent::User(u).mode() == ActMode::Bare);
            }
        }
    }
}
