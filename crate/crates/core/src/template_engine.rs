//! Domain-agnostic response templates with `<d>`, `<s>` and `<v>`
//! placeholders.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dialogue_model::{ActMode, Intent, Side};
use crate::structure_synth::DialogueAct;

const BUILTIN_TEMPLATES: &str = include_str!("../resources/templates.json");

pub const MIN_TEMPLATES: usize = 2;
pub const MAX_TEMPLATES: usize = 4;

/// Joins the clauses of a multi-slot act.
pub const CLAUSE_JOINER: &str = ", and ";

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("failed to read template bank {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed template document at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("record {index} ({side}/{intent}): {message}")]
    Record {
        index: usize,
        side: String,
        intent: String,
        message: String,
    },
    #[error("no templates for {0}")]
    MissingCoverage(Intent),
    #[error("{intent} has {count} templates, expected {MIN_TEMPLATES}..={MAX_TEMPLATES}")]
    BadCount { intent: Intent, count: usize },
}

/// One record of the template-bank document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateRecord {
    pub side: String,
    pub intent: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplateBank {
    templates: BTreeMap<Intent, Vec<String>>,
}

/// Output of [`realize_act`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Realization {
    pub text: String,
    /// e.g. `system/recommend#0`
    pub template_id: String,
}

fn placeholders(text: &str) -> Result<Vec<&str>, String> {
    let mut found = Vec::new();
    let mut rest = text;
    while let Some(start) = rest.find('<') {
        let tail = &rest[start..];
        let end = tail
            .find('>')
            .ok_or_else(|| format!("unterminated placeholder in `{text}`"))?;
        let token = &tail[..=end];
        if !matches!(token, "<d>" | "<s>" | "<v>") {
            return Err(format!("unknown placeholder `{token}`"));
        }
        found.push(token);
        rest = &tail[end + 1..];
    }
    Ok(found)
}

fn check_placeholders(intent: Intent, text: &str) -> Result<(), String> {
    let found = placeholders(text)?;
    let has = |t: &str| found.contains(&t);
    match intent.mode() {
        ActMode::Bare if !found.is_empty() => Err("bare templates take no placeholders".into()),
        ActMode::SlotOnly if has("<v>") => Err("slot-only templates cannot use <v>".into()),
        ActMode::SlotOnly if !has("<s>") => Err("slot-only templates must use <s>".into()),
        ActMode::Full if !has("<v>") => Err("full templates must use <v>".into()),
        _ => Ok(()),
    }
}

impl TemplateBank {
    pub fn builtin() -> TemplateBank {
        TemplateBank::from_json(BUILTIN_TEMPLATES).expect("bundled template bank is valid")
    }

    pub fn from_json(text: &str) -> Result<TemplateBank, TemplateError> {
        let records: Vec<TemplateRecord> = serde_json::from_str(text).map_err(|e| TemplateError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        TemplateBank::from_records(&records)
    }

    pub fn load(path: &Path) -> Result<TemplateBank, TemplateError> {
        let text = std::fs::read_to_string(path).map_err(|source| TemplateError::Io {
            path: path.display().to_string(),
            source,
        })?;
        TemplateBank::from_json(&text)
    }

    pub fn from_records(records: &[TemplateRecord]) -> Result<TemplateBank, TemplateError> {
        let mut templates: BTreeMap<Intent, Vec<String>> = BTreeMap::new();
        for (index, r) in records.iter().enumerate() {
            let fail = |message: String| TemplateError::Record {
                index,
                side: r.side.clone(),
                intent: r.intent.clone(),
                message,
            };
            let side: Side = r
                .side
                .parse()
                .map_err(|e: crate::dialogue_model::UnknownName| fail(e.to_string()))?;
            let intent = Intent::parse(side, &r.intent).map_err(|e| fail(e.to_string()))?;
            check_placeholders(intent, &r.text).map_err(fail)?;
            templates.entry(intent).or_default().push(r.text.clone());
        }
        for intent in Intent::all() {
            let count = templates.get(&intent).map_or(0, Vec::len);
            if count == 0 {
                return Err(TemplateError::MissingCoverage(intent));
            }
            if !(MIN_TEMPLATES..=MAX_TEMPLATES).contains(&count) {
                return Err(TemplateError::BadCount { intent, count });
            }
        }
        Ok(TemplateBank { templates })
    }

    pub fn records(&self) -> Vec<TemplateRecord> {
        Intent::all()
            .flat_map(|intent| {
                self.templates[&intent].iter().map(move |text| TemplateRecord {
                    side: intent.side().name().to_string(),
                    intent: intent.name().to_string(),
                    text: text.clone(),
                })
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        let lines: Vec<String> = self
            .records()
            .iter()
            .map(|r| format!("  {}", serde_json::to_string(r).expect("record serializes")))
            .collect();
        format!("[\n{}\n]\n", lines.join(",\n"))
    }

    pub fn templates(&self, intent: Intent) -> &[String] {
        self.templates.get(&intent).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.templates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.templates.is_empty()
    }
}

fn fill(template: &str, domain: &str, slot: &str, value: &str) -> String {
    // single left-to-right pass so substituted text is never rescanned
    let mut out = String::with_capacity(template.len() + 32);
    let mut rest = template;
    while let Some(pos) = rest.find('<') {
        out.push_str(&rest[..pos]);
        let tail = &rest[pos..];
        let (rep, skip) = if tail.starts_with("<d>") {
            (domain, 3)
        } else if tail.starts_with("<s>") {
            (slot, 3)
        } else if tail.starts_with("<v>") {
            (value, 3)
        } else {
            ("<", 1)
        };
        out.push_str(rep);
        rest = &tail[skip..];
    }
    out.push_str(rest);
    out
}

/// Renders an act through one uniformly chosen template. Multi-slot acts
/// repeat the clause per slot-value, joined by [`CLAUSE_JOINER`].
pub fn realize_act<R: Rng + ?Sized>(bank: &TemplateBank, act: &DialogueAct, rng: &mut R) -> Realization {
    let choices = bank.templates(act.intent);
    assert!(!choices.is_empty(), "bank does not cover {}", act.intent);
    let index = rng.gen_range(0..choices.len());
    let template = &choices[index];
    let text = if act.slots.is_empty() {
        fill(template, &act.domain, "", "")
    } else {
        act.slots
            .iter()
            .map(|s| fill(template, &act.domain, &s.slot, s.value.as_deref().unwrap_or("")))
            .collect::<Vec<_>>()
            .join(CLAUSE_JOINER)
    };
    Realization {
        text,
        template_id: format!("{}/{}#{index}", act.intent.side(), act.intent.name()),
    }
}

/// Realizes a list of acts as one utterance.
pub fn realize_acts<R: Rng + ?Sized>(bank: &TemplateBank, acts: &[DialogueAct], rng: &mut R) -> (String, Vec<String>) {
    let parts: Vec<Realization> = acts.iter().map(|a| realize_act(bank, a, rng)).collect();
    let text = parts.iter().map(|r| r.text.as_str()).collect::<Vec<_>>().join(" ");
    (text, parts.into_iter().map(|r| r.template_id).collect())
}

/// True iff every value of the act occurs in `text`, ignoring case.
pub fn verify_grounding(act: &DialogueAct, text: &str) -> bool {
    let haystack = text.to_lowercase();
    act.values().all(|v| haystack.contains(&v.to_lowercase()))
}

pub fn verify_grounding_all(acts: &[DialogueAct], text: &str) -> bool {
    acts.iter().all(|a| verify_grounding(a, text))
}
