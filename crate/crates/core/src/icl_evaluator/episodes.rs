//! Evaluation episodes: line-delimited turns grouped by episode id, and an
//! importer for MultiWOZ-style `data.json` dumps.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::schema::Schema;
use crate::state::{DialogueState, SlotKey, TurnDelta};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTurn {
    pub episode_id: String,
    pub turn_index: u32,
    pub domains: Vec<String>,
    pub system_utterance: String,
    pub user_utterance: String,
    pub gold_turn_state: TurnDelta,
    pub gold_full_state: DialogueState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub id: String,
    pub turns: Vec<EpisodeTurn>,
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("episode `{episode}`: {message}")]
    Inconsistent { episode: String, message: String },
    #[error("dialogue file: {0}")]
    Import(String),
}

impl Episode {
    /// Checks turn numbering and that every gold full state is the previous
    /// one with the turn's state change applied.
    pub fn validate(&self) -> Result<(), EpisodeError> {
        let bad = |message: String| EpisodeError::Inconsistent {
            episode: self.id.clone(),
            message,
        };
        let mut previous = DialogueState::new();
        for (i, t) in self.turns.iter().enumerate() {
            if t.turn_index as usize != i {
                return Err(bad(format!("expected turn {i}, found {}", t.turn_index)));
            }
            if t.gold_turn_state.apply(&previous) != t.gold_full_state {
                return Err(bad(format!("turn {i}: full state is not the accumulated turn states")));
            }
            previous = t.gold_full_state.clone();
        }
        Ok(())
    }
}

/// Groups turns by episode (first-appearance order), sorts each episode by
/// turn index and validates it.
pub fn parse_episodes(text: &str) -> Result<Vec<Episode>, EpisodeError> {
    let mut order: Vec<String> = Vec::new();
    let mut grouped: BTreeMap<String, Vec<EpisodeTurn>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let turn: EpisodeTurn = serde_json::from_str(line).map_err(|e| EpisodeError::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !grouped.contains_key(&turn.episode_id) {
            order.push(turn.episode_id.clone());
        }
        grouped.entry(turn.episode_id.clone()).or_default().push(turn);
    }
    let mut episodes = Vec::with_capacity(order.len());
    for id in order {
        let mut turns = grouped.remove(&id).unwrap_or_default();
        turns.sort_by_key(|t| t.turn_index);
        let ep = Episode { id, turns };
        ep.validate()?;
        episodes.push(ep);
    }
    Ok(episodes)
}

pub fn read_episodes(path: &Path) -> Result<Vec<Episode>, EpisodeError> {
    let text = std::fs::read_to_string(path).map_err(|source| EpisodeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_episodes(&text)
}

pub fn write_episodes(episodes: &[Episode]) -> String {
    let mut out = String::new();
    for t in episodes.iter().flat_map(|e| &e.turns) {
        out.push_str(&serde_json::to_string(t).expect("turn serializes"));
        out.push('\n');
    }
    out
}

/// Builds turns from successive gold full states; each turn's change is the
/// difference to the previous state.
pub fn episode_from_states(id: &str, domains: Vec<String>, turns: Vec<(String, String, DialogueState)>) -> Episode {
    let mut previous = DialogueState::new();
    let mut out = Vec::with_capacity(turns.len());
    for (i, (system, user, full)) in turns.into_iter().enumerate() {
        let mut delta = TurnDelta::default();
        for (k, v) in full.iter() {
            if previous.get(k) != Some(v) {
                delta.updates.insert(k.clone(), v);
            }
        }
        for k in previous.keys() {
            if !full.contains(k) {
                delta.deletions.insert(k.clone());
            }
        }
        out.push(EpisodeTurn {
            episode_id: id.to_string(),
            turn_index: i as u32,
            domains: domains.clone(),
            system_utterance: system,
            user_utterance: user,
            gold_turn_state: delta,
            gold_full_state: full.clone(),
        });
        previous = full;
    }
    Episode {
        id: id.to_string(),
        turns: out,
    }
}

fn multiwoz_slot(section: &str, name: &str) -> String {
    let name = name.to_lowercase().replace(' ', "");
    match (section, name.as_str()) {
        ("book", n) => format!("book{n}"),
        (_, "leaveat") => "leaveby".to_string(),
        (_, n) => n.to_string(),
    }
}

fn multiwoz_state(metadata: &Value, schema: &Schema) -> DialogueState {
    let mut state = DialogueState::new();
    let Some(domains) = metadata.as_object() else {
        return state;
    };
    for (domain, sections) in domains {
        if schema.domain(domain).is_none() {
            continue;
        }
        for section in ["semi", "book"] {
            let Some(slots) = sections.get(section).and_then(Value::as_object) else {
                continue;
            };
            for (slot, value) in slots {
                let Some(value) = value.as_str() else { continue };
                let value = value.trim();
                if value.is_empty() || value == "not mentioned" || value == "none" {
                    continue;
                }
                state.insert(SlotKey::new(domain, multiwoz_slot(section, slot)), value.to_lowercase());
            }
        }
    }
    state
}

/// Converts a MultiWOZ 2.x `data.json` document. Only domains present in
/// `schema` are kept; each episode is tagged with every domain its states
/// mention. Dialogues are ordered by id.
pub fn import_multiwoz(text: &str, schema: &Schema) -> Result<Vec<Episode>, EpisodeError> {
    let doc: BTreeMap<String, Value> = serde_json::from_str(text).map_err(|e| EpisodeError::Import(e.to_string()))?;
    let mut episodes = Vec::new();
    for (id, dialogue) in doc {
        let log = dialogue
            .get("log")
            .and_then(Value::as_array)
            .ok_or_else(|| EpisodeError::Import(format!("`{id}` has no log")))?;
        let text_of = |i: usize| {
            log.get(i)
                .and_then(|t| t.get("text"))
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string()
        };
        let mut turns = Vec::new();
        let mut domains = BTreeSet::new();
        for user_at in (0..log.len()).step_by(2) {
            let system = if user_at == 0 {
                String::new()
            } else {
                text_of(user_at - 1)
            };
            let state = log
                .get(user_at + 1)
                .and_then(|t| t.get("metadata"))
                .map(|m| multiwoz_state(m, schema))
                .unwrap_or_default();
            domains.extend(state.domains().into_iter().map(str::to_string));
            turns.push((system, text_of(user_at), state));
        }
        let id = id.trim_end_matches(".json").to_string();
        episodes.push(episode_from_states(&id, domains.into_iter().collect(), turns));
    }
    Ok(episodes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key(s: &str) -> SlotKey {
        s.parse().unwrap()
    }

    fn sample_episode() -> Episode {
        let mut s1 = DialogueState::new();
        s1.insert(key("hotel-area"), "north");
        let mut s2 = s1.clone();
        s2.insert(key("hotel-stars"), "4");
        s2.remove(&key("hotel-area"));
        episode_from_states(
            "e1",
            vec!["hotel".into()],
            vec![
                (String::new(), "a hotel in the north".into(), s1),
                ("ok".into(), "4 stars, any area".into(), s2),
            ],
        )
    }

    #[test]
    fn round_trip_and_validation() {
        let ep = sample_episode();
        assert!(ep.turns[1].gold_turn_state.deletions.contains(&key("hotel-area")));
        let text = write_episodes(std::slice::from_ref(&ep));
        assert_eq!(parse_episodes(&text).unwrap(), vec![ep.clone()]);

        let mut broken = ep;
        broken.turns[1].gold_full_state.insert(key("hotel-type"), "guesthouse");
        let text = write_episodes(&[broken]);
        assert!(matches!(parse_episodes(&text), Err(EpisodeError::Inconsistent { .. })));
        assert!(matches!(
            parse_episodes("{oops"),
            Err(EpisodeError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn multiwoz_import() {
        let doc = r#"{"SNG01.json": {"goal": {}, "log": [
            {"text": "I need a cheap hotel", "metadata": {}},
            {"text": "Which area?", "metadata": {"hotel": {"semi": {"pricerange": "cheap", "area": "not mentioned"}, "book": {"booked": [], "day": ""}},
                                               "police": {"semi": {}, "book": {}}}},
            {"text": "North, for 2 people", "metadata": {}},
            {"text": "Done", "metadata": {"hotel": {"semi": {"pricerange": "cheap", "area": "north"}, "book": {"booked": [], "people": "2"}}}}
        ]}}"#;
        let eps = import_multiwoz(doc, &Schema::builtin()).unwrap();
        assert_eq!(eps.len(), 1);
        let ep = &eps[0];
        assert_eq!(ep.id, "SNG01");
        assert_eq!(ep.turns.len(), 2);
        assert_eq!(ep.turns[1].system_utterance, "Which area?");
        assert_eq!(ep.turns[1].gold_full_state.get(&key("hotel-bookpeople")), Some("2"));
        assert_eq!(ep.turns[0].domains, vec!["hotel".to_string()]);
        ep.validate().unwrap();
    }
}
