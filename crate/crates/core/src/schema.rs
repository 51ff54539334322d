//! Dialogue schema: domains, slots and their value inventories.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved value string marking a deleted slot in serialized states.
pub const DELETE_SENTINEL: &str = "[DELETE]";

const BUILTIN_SCHEMA: &str = include_str!("../resources/schema_multiwoz.json");

#[derive(Debug, Error)]
pub enum SchemaError {
    #[error("failed to read schema {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed schema document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid schema at {path}: {message}")]
    Validation { path: String, message: String },
    #[error("unknown domain `{0}`")]
    UnknownDomain(String),
    #[error("requested {requested} {role} slots from `{domain}` but only {available} are eligible")]
    TooManySlots {
        domain: String,
        role: SlotRole,
        requested: usize,
        available: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotKind {
    Categorical,
    Open,
    Boolean,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotRole {
    Informable,
    Requestable,
}

impl fmt::Display for SlotRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SlotRole::Informable => "informable",
            SlotRole::Requestable => "requestable",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotSpec {
    pub name: String,
    pub kind: SlotKind,
    pub values: Vec<String>,
    pub informable: bool,
    pub requestable: bool,
}

impl SlotSpec {
    pub fn has_role(&self, role: SlotRole) -> bool {
        match role {
            SlotRole::Informable => self.informable,
            SlotRole::Requestable => self.requestable,
        }
    }

    /// Booking slots follow the MultiWOZ naming convention (`bookday`,
    /// `bookpeople`, ...).
    pub fn is_booking(&self) -> bool {
        self.name.starts_with("book")
    }

    pub fn accepts(&self, value: &str) -> bool {
        self.values.iter().any(|v| v == value)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub name: String,
    pub slots: Vec<SlotSpec>,
}

impl DomainSpec {
    pub fn slot(&self, name: &str) -> Option<&SlotSpec> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn slots_with_role(&self, role: SlotRole) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(move |s| s.has_role(role))
    }

    pub fn booking_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.slots.iter().filter(|s| s.informable && s.is_booking())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub version: String,
    pub domains: Vec<DomainSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotValue {
    pub domain: String,
    pub slot: String,
    pub value: String,
}

impl SlotValue {
    pub fn new(domain: impl Into<String>, slot: impl Into<String>, value: impl Into<String>) -> Self {
        Self {
            domain: domain.into(),
            slot: slot.into(),
            value: value.into(),
        }
    }
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty()
        && s.bytes()
            .all(|b| b.is_ascii_lowercase() || b.is_ascii_digit() || b == b'_')
}

fn is_time(s: &str) -> bool {
    let b = s.as_bytes();
    b.len() == 5
        && b[2] == b':'
        && b[..2].iter().chain(&b[3..]).all(u8::is_ascii_digit)
        && s[..2].parse::<u8>().is_ok_and(|h| h < 24)
        && s[3..].parse::<u8>().is_ok_and(|m| m < 60)
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> SchemaError {
    SchemaError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

impl Schema {
    /// The bundled five-domain schema (attraction, hotel, restaurant, taxi,
    /// train).
    pub fn builtin() -> Schema {
        Schema::from_json(BUILTIN_SCHEMA).expect("bundled schema is valid")
    }

    pub fn builtin_document() -> &'static str {
        BUILTIN_SCHEMA
    }

    pub fn from_json(text: &str) -> Result<Schema, SchemaError> {
        let mut schema: Schema = serde_json::from_str(text).map_err(|e| SchemaError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        schema.normalize_names();
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Schema, SchemaError> {
        let text = std::fs::read_to_string(path).map_err(|source| SchemaError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Schema::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    fn normalize_names(&mut self) {
        for d in &mut self.domains {
            d.name = d.name.trim().to_lowercase();
            for s in &mut d.slots {
                s.name = s.name.trim().to_lowercase();
            }
        }
    }

    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.domains.is_empty() {
            return Err(invalid("domains", "schema defines no domains"));
        }
        let mut seen_domains = HashSet::new();
        for (di, d) in self.domains.iter().enumerate() {
            let dpath = format!("domains[{di}]");
            if !is_identifier(&d.name) {
                return Err(invalid(
                    format!("{dpath}.name"),
                    format!("`{}` is not a lowercase identifier", d.name),
                ));
            }
            if !seen_domains.insert(d.name.as_str()) {
                return Err(invalid(
                    format!("{dpath}.name"),
                    format!("duplicate domain `{}`", d.name),
                ));
            }
            if d.slots.is_empty() {
                return Err(invalid(
                    format!("{dpath}.slots"),
                    format!("domain `{}` has no slots", d.name),
                ));
            }
            let mut seen_slots = HashSet::new();
            for (si, s) in d.slots.iter().enumerate() {
                let spath = format!("{dpath}({}).slots[{si}]", d.name);
                if !is_identifier(&s.name) {
                    return Err(invalid(
                        format!("{spath}.name"),
                        format!("`{}` is not a lowercase identifier", s.name),
                    ));
                }
                if !seen_slots.insert(s.name.as_str()) {
                    return Err(invalid(format!("{spath}.name"), format!("duplicate slot `{}`", s.name)));
                }
                if !s.informable && !s.requestable {
                    return Err(invalid(spath, "slot is neither informable nor requestable"));
                }
                validate_values(s, &format!("{spath}({}).values", s.name))?;
            }
        }
        Ok(())
    }

    pub fn domain(&self, name: &str) -> Option<&DomainSpec> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn domain_names(&self) -> impl Iterator<Item = &str> {
        self.domains.iter().map(|d| d.name.as_str())
    }

    pub fn slot(&self, domain: &str, slot: &str) -> Option<&SlotSpec> {
        self.domain(domain).and_then(|d| d.slot(slot))
    }

    /// Draws `count` slot-values with distinct slots eligible for `role`.
    /// Output keeps the schema's slot order.
    pub fn sample_slot_values<R: Rng + ?Sized>(
        &self,
        domain: &str,
        count: usize,
        role: SlotRole,
        rng: &mut R,
    ) -> Result<Vec<SlotValue>, SchemaError> {
        let spec = self
            .domain(domain)
            .ok_or_else(|| SchemaError::UnknownDomain(domain.to_string()))?;
        let eligible: Vec<&SlotSpec> = spec.slots_with_role(role).collect();
        if count > eligible.len() {
            return Err(SchemaError::TooManySlots {
                domain: domain.to_string(),
                role,
                requested: count,
                available: eligible.len(),
            });
        }
        let mut picked: Vec<usize> = rand::seq::index::sample(rng, eligible.len(), count).into_vec();
        picked.sort_unstable();
        Ok(picked
            .into_iter()
            .map(|i| {
                let slot = eligible[i];
                let value = slot.values.choose(rng).expect("validated non-empty");
                SlotValue::new(domain, &slot.name, value)
            })
            .collect())
    }

    pub fn validate_value(&self, sv: &SlotValue) -> bool {
        match self.slot(&sv.domain, &sv.slot) {
            Some(spec) => spec.accepts(&sv.value) && (spec.kind != SlotKind::Time || is_time(&sv.value)),
            None => false,
        }
    }
}

fn validate_values(slot: &SlotSpec, path: &str) -> Result<(), SchemaError> {
    if slot.values.is_empty() {
        return Err(invalid(path, "value list is empty"));
    }
    let mut seen = HashSet::new();
    for v in &slot.values {
        if v.trim().is_empty() || v.trim() != v {
            return Err(invalid(path, format!("value `{v}` is empty or padded with whitespace")));
        }
        if v == DELETE_SENTINEL || v.contains([',', '\n']) {
            return Err(invalid(
                path,
                format!("value `{v}` uses a reserved character or string"),
            ));
        }
        if !seen.insert(v.as_str()) {
            return Err(invalid(path, format!("duplicate value `{v}`")));
        }
        match slot.kind {
            SlotKind::Boolean if !matches!(v.as_str(), "yes" | "no" | "free") => {
                return Err(invalid(
                    path,
                    format!("boolean slot value `{v}` not in {{yes, no, free}}"),
                ));
            }
            SlotKind::Time if !is_time(v) => {
                return Err(invalid(path, format!("time value `{v}` is not HH:MM")));
            }
            _ => {}
        }
    }
    Ok(())
}
