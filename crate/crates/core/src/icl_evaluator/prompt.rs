//! Text-to-SQL style prompts and the answer grammar.

use std::fmt::Write as _;

use regex::Regex;
use std::sync::OnceLock;

use crate::schema::DELETE_SENTINEL;
use crate::state::{DialogueState, SlotKey, TurnDelta};

use super::normalize::collapse;
use super::retrieval::Exemplar;
use super::EvalMode;

const INSTRUCTION: &str = "-- Using valid SQLite, answer the following multi-turn conversational questions for the tables provided above.\n-- Answer with the slots changed by the user turn as comma-separated \"domain-slot = value\" pairs, \"domain-slot = [DELETE]\" for a removed slot, or \"none\".";

fn turn_block(out: &mut String, context: &DialogueState, system: &str, user: &str) {
    let _ = writeln!(out, "[context] {}", context.render());
    let _ = writeln!(out, "[system] {}", system.replace('\n', " "));
    let _ = writeln!(out, "Q: [user] {}", user.replace('\n', " "));
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{mode} prompt cannot take {count} exemplars")]
pub struct ModeMismatch {
    pub mode: EvalMode,
    pub count: usize,
}

/// Ontology, instruction, exemplars in the given order, then the query turn.
pub fn build_prompt(
    ontology: &str,
    exemplars: &[&Exemplar],
    context: &DialogueState,
    system: &str,
    user: &str,
    mode: EvalMode,
) -> Result<String, ModeMismatch> {
    let consistent = match mode {
        EvalMode::ZeroShot => exemplars.is_empty(),
        EvalMode::FewShotRandom | EvalMode::FewShotRetrieval => !exemplars.is_empty(),
    };
    if !consistent {
        return Err(ModeMismatch {
            mode,
            count: exemplars.len(),
        });
    }
    let mut out = String::new();
    out.push_str(ontology.trim_end());
    out.push_str("\n\n");
    out.push_str(INSTRUCTION);
    out.push_str("\n\n");
    for (i, e) in exemplars.iter().enumerate() {
        let _ = writeln!(out, "Example #{}", i + 1);
        turn_block(&mut out, &e.context, &e.system_utterance, &e.user_utterance);
        let _ = writeln!(out, "A: {}\n", e.answer);
    }
    turn_block(&mut out, context, system, user);
    out.push_str("A:");
    Ok(out)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedChange {
    pub delta: TurnDelta,
    pub failed: bool,
}

fn pair_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^([a-z0-9_]+)-([a-z0-9_]+) ?= ?(.+)$").expect("valid regex"))
}

fn label_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(?:a|sql|answer) ?: ?").expect("valid regex"))
}

fn parse_line(line: &str) -> Option<TurnDelta> {
    let line = collapse(line);
    let body = label_regex().replace(&line, "");
    let body = body.trim().trim_end_matches(['.', ';']).trim();
    if body == "none" {
        return Some(TurnDelta::default());
    }
    if body.is_empty() {
        return None;
    }
    let mut delta = TurnDelta::default();
    for part in body.split(',') {
        let caps = pair_regex().captures(part.trim())?;
        let key = SlotKey::new(&caps[1], &caps[2]);
        let value = caps[3].trim();
        if value.eq_ignore_ascii_case(DELETE_SENTINEL) {
            delta.updates.remove(&key);
            delta.deletions.insert(key);
        } else {
            delta.deletions.remove(&key);
            delta.updates.insert(key, value);
        }
    }
    Some(delta)
}

/// Reads the first line matching the answer grammar; anything else yields
/// an empty delta flagged as failed.
pub fn parse_state_change(completion: &str) -> ParsedChange {
    for line in completion.lines() {
        if let Some(delta) = parse_line(line) {
            return ParsedChange { delta, failed: false };
        }
    }
    ParsedChange {
        delta: TurnDelta::default(),
        failed: true,
    }
}
