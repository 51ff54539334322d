//! Belief states and per-turn state changes.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::schema::{SlotValue, DELETE_SENTINEL};

/// A `(domain, slot)` pair, ordered by its `domain-slot` rendering.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SlotKey {
    pub domain: String,
    pub slot: String,
}

impl SlotKey {
    pub fn new(domain: impl Into<String>, slot: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            slot: slot.into(),
        }
    }

    fn rendered(&self) -> impl Iterator<Item = u8> + '_ {
        self.domain
            .bytes()
            .chain(std::iter::once(b'-'))
            .chain(self.slot.bytes())
    }
}

impl Ord for SlotKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rendered().cmp(other.rendered())
    }
}

impl PartialOrd for SlotKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SlotKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.domain, self.slot)
    }
}

impl FromStr for SlotKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once('-') {
            Some((d, sl)) if !d.is_empty() && !sl.is_empty() => Ok(SlotKey::new(d, sl)),
            _ => Err(format!("`{s}` is not a domain-slot key")),
        }
    }
}

/// Accumulated `domain-slot -> value` map.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DialogueState {
    entries: BTreeMap<SlotKey, String>,
}

impl DialogueState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, key: &SlotKey) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &SlotKey) -> bool {
        self.entries.contains_key(key)
    }

    pub fn insert(&mut self, key: SlotKey, value: impl Into<String>) -> Option<String> {
        self.entries.insert(key, value.into())
    }

    pub fn remove(&mut self, key: &SlotKey) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&SlotKey, &str)> {
        self.entries.iter().map(|(k, v)| (k, v.as_str()))
    }

    pub fn keys(&self) -> impl Iterator<Item = &SlotKey> {
        self.entries.keys()
    }

    pub fn slot_values(&self) -> impl Iterator<Item = SlotValue> + '_ {
        self.entries.iter().map(|(k, v)| SlotValue::new(&k.domain, &k.slot, v))
    }

    pub fn domains(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|k| k.domain.as_str()).collect()
    }

    /// Entries of a single domain.
    pub fn restricted_to(&self, domain: &str) -> DialogueState {
        DialogueState {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| k.domain == domain)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn map_values(&self, mut f: impl FnMut(&str) -> String) -> DialogueState {
        DialogueState {
            entries: self.entries.iter().map(|(k, v)| (k.clone(), f(v))).collect(),
        }
    }

    /// `domain-slot: value` pairs joined by `, `, or `none`.
    pub fn render(&self) -> String {
        if self.is_empty() {
            return "none".to_string();
        }
        self.iter()
            .map(|(k, v)| format!("{k}: {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl FromIterator<(SlotKey, String)> for DialogueState {
    fn from_iter<I: IntoIterator<Item = (SlotKey, String)>>(iter: I) -> Self {
        DialogueState {
            entries: iter.into_iter().collect(),
        }
    }
}

impl Serialize for DialogueState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_map(self.entries.iter().map(|(k, v)| (k.to_string(), v)))
    }
}

impl<'de> Deserialize<'de> for DialogueState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
        let mut state = DialogueState::new();
        for (k, v) in raw {
            if v == DELETE_SENTINEL {
                return Err(D::Error::custom(format!("deletion sentinel in a full state at `{k}`")));
            }
            state.insert(k.parse().map_err(D::Error::custom)?, v);
        }
        Ok(state)
    }
}

/// Additions/overrides plus explicit deletions for one turn.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TurnDelta {
    pub updates: DialogueState,
    pub deletions: BTreeSet<SlotKey>,
}

impl TurnDelta {
    pub fn is_empty(&self) -> bool {
        self.updates.is_empty() && self.deletions.is_empty()
    }

    /// Overrides replace, deletions remove, additions insert.
    pub fn apply(&self, history: &DialogueState) -> DialogueState {
        let mut next = history.clone();
        for (k, v) in self.updates.iter() {
            next.insert(k.clone(), v);
        }
        for k in &self.deletions {
            next.remove(k);
        }
        next
    }

    /// `domain-slot = value` pairs joined by `, `, or `none`.
    pub fn render_answer(&self) -> String {
        let mut parts: BTreeMap<&SlotKey, &str> = self.updates.iter().collect();
        for k in &self.deletions {
            parts.insert(k, DELETE_SENTINEL);
        }
        if parts.is_empty() {
            return "none".to_string();
        }
        parts
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}"))
            .collect::<Vec<_>>()
            .join(", ")
    }
}

impl Serialize for TurnDelta {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut flat: BTreeMap<String, &str> = self.updates.iter().map(|(k, v)| (k.to_string(), v)).collect();
        for k in &self.deletions {
            flat.insert(k.to_string(), DELETE_SENTINEL);
        }
        flat.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for TurnDelta {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = BTreeMap::<String, String>::deserialize(deserializer)?;
        let mut delta = TurnDelta::default();
        for (k, v) in raw {
            let key: SlotKey = k.parse().map_err(D::Error::custom)?;
            if v == DELETE_SENTINEL {
                delta.deletions.insert(key);
            } else {
                delta.updates.insert(key, v);
            }
        }
        Ok(delta)
    }
}
