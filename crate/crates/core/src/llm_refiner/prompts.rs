//! Prompt construction and response parsing for template refinement.

use rand::Rng;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::dialogue_model::Side;

const MODIFICATION_PROMPT: &str = include_str!("../../resources/modification_prompt.txt");
const PARAPHRASE_PROMPTS: &str = include_str!("../../resources/paraphrase_prompts.txt");

const JSON_INSTRUCTION: &str = "Strictly generate the response in the form of a JSON object {KEYS} with correct formatting (including curly brackets). Do not return anything else apart from the JSON object.";

/// The four paraphrase instructions, in their canonical order.
pub fn paraphrase_prompts() -> Vec<&'static str> {
    PARAPHRASE_PROMPTS.lines().filter(|l| !l.trim().is_empty()).collect()
}

/// Replaces each pattern in one left-to-right pass.
fn substitute(text: &str, pairs: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(text.len() + 64);
    let mut rest = text;
    'scan: while !rest.is_empty() {
        for (pat, rep) in pairs {
            if let Some(tail) = rest.strip_prefix(pat) {
                out.push_str(rep);
                rest = tail;
                continue 'scan;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        out.push(ch);
        rest = &rest[ch.len_utf8()..];
    }
    out
}

fn one_line(text: &str) -> String {
    text.replace(['\n', '\r'], " ")
}

/// The utterance-level modification prompt for one side.
pub fn build_modification_prompt(role: Side, domain: &str, template: &str) -> String {
    let template = one_line(template);
    substitute(
        MODIFICATION_PROMPT.trim_end(),
        &[
            ("<user/system>", role.name()),
            ("<domain>", domain),
            ("<template>", &template),
        ],
    )
}

/// Multi-step variant: the user prompt also carries the already-modified
/// system response.
pub fn build_contextual_user_prompt(domain: &str, template: &str, modified_system: &str) -> String {
    let base = build_modification_prompt(Side::User, domain, template);
    let (head, last) = base.rsplit_once('\n').expect("prompt has several lines");
    format!("{head}\n'system_response': '{}'\n{last}", one_line(modified_system))
}

/// Dialogue-level variant: both turns in a single request.
pub fn build_dialogue_prompt(domain: &str, system_template: &str, user_template: &str) -> String {
    format!(
        "Following is a template dialogue between a user and a {domain} chatbot, consisting of one system response followed by one user response. Paraphrase both responses by making them more fluent, engaging, polite, and coherent. Also, correct grammatical mistakes. Reorder the sentences if necessary.\n{}\n'system_template': '{}'\n'user_template': '{}'",
        JSON_INSTRUCTION.replace("{KEYS}", "{'system_paraphrased': '', 'user_paraphrased': ''}"),
        one_line(system_template),
        one_line(user_template),
    )
}

pub fn build_paraphrase_prompt(index: usize, role: Side, text: &str) -> String {
    let instruction = paraphrase_prompts()[index];
    format!(
        "{instruction}\n{}\n'{role}_utterance': '{}'",
        JSON_INSTRUCTION.replace("{KEYS}", &format!("{{'{role}_paraphrased': ''}}")),
        one_line(text),
    )
}

/// Uniform choice among the paraphrase instructions.
pub fn select_paraphrase_prompt<R: Rng + ?Sized>(rng: &mut R) -> (usize, &'static str) {
    let prompts = paraphrase_prompts();
    let index = rng.gen_range(0..prompts.len());
    (index, prompts[index])
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ResponseError {
    #[error("no JSON object in response")]
    NoObject,
    #[error("response object lacks `{0}`")]
    MissingKey(String),
    #[error("`{0}` is empty")]
    EmptyValue(String),
}

/// Rewrites a Python-style dict literal with single-quoted strings as JSON.
fn single_quotes_to_json(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars().peekable();
    let mut in_single = false;
    let mut in_double = false;
    while let Some(c) = chars.next() {
        match c {
            '\\' => {
                let next = chars.next();
                match (in_single, next) {
                    (true, Some('\'')) => out.push('\''),
                    (_, Some(n)) => {
                        out.push('\\');
                        out.push(n);
                    }
                    (_, None) => out.push('\\'),
                }
            }
            '\'' if !in_double => {
                // an apostrophe inside a word is text, not a delimiter
                let closing_ok = matches!(chars.peek(), None | Some(':' | ',' | '}' | ' ' | '\n' | '\t' | ']'));
                if in_single && !closing_ok {
                    out.push('\'');
                } else {
                    in_single = !in_single;
                    out.push('"');
                }
            }
            '"' if in_single => out.push_str("\\\""),
            '"' => {
                in_double = !in_double;
                out.push('"');
            }
            _ => out.push(c),
        }
    }
    out
}

/// Finds the first parseable object literal in `raw`.
pub fn extract_object(raw: &str) -> Option<Map<String, Value>> {
    let opens: Vec<usize> = raw.match_indices('{').map(|(i, _)| i).collect();
    let closes: Vec<usize> = raw.match_indices('}').map(|(i, _)| i).collect();
    for &start in &opens {
        for &end in closes.iter().filter(|&&e| e > start) {
            let candidate = &raw[start..=end];
            if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(candidate) {
                return Some(map);
            }
            if candidate.contains('\'') {
                if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(&single_quotes_to_json(candidate)) {
                    return Some(map);
                }
            }
        }
    }
    None
}

pub fn parse_field(raw: &str, key: &str) -> Result<String, ResponseError> {
    let map = extract_object(raw).ok_or(ResponseError::NoObject)?;
    match map.get(key) {
        Some(Value::String(s)) if s.trim().is_empty() => Err(ResponseError::EmptyValue(key.to_string())),
        Some(Value::String(s)) => Ok(s.clone()),
        _ => Err(ResponseError::MissingKey(key.to_string())),
    }
}

/// Extracts `<role>_paraphrased` from a completion, tolerating surrounding
/// prose.
pub fn parse_refinement_response(raw: &str, role: Side) -> Result<String, ResponseError> {
    parse_field(raw, &format!("{role}_paraphrased"))
}

/// The response a well-behaved model returns for `text`.
pub fn envelope(role: Side, text: &str) -> String {
    let mut map = Map::new();
    map.insert(format!("{role}_paraphrased"), Value::String(text.to_string()));
    Value::Object(map).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    #[test]
    fn modification_prompt_text() {
        let p = build_modification_prompt(Side::User, "hotel", "The hotel area should be north");
        assert!(p.starts_with(
            "Following is a template user response for a conversation between a hotel chatbot and a user."
        ));
        assert!(p.contains("{'user_paraphrased': ''}"));
        assert!(p.contains("Strictly generate the response in the form of a JSON object"));
        assert!(p.ends_with("'user_template': 'The hotel area should be north'"));
        let s = build_modification_prompt(Side::System, "train", "Booked train for 2 bookpeople");
        assert!(s.contains("chatbot") && s.contains("a train chatbot"));
        assert!(s.contains("'system_paraphrased'"));
        assert_eq!(
            s,
            build_modification_prompt(Side::System, "train", "Booked train for 2 bookpeople")
        );
        assert!("bot".parse::<Side>().is_err());
    }

    #[test]
    fn template_text_is_not_rescanned() {
        let p = build_modification_prompt(Side::User, "hotel", "say <domain>");
        assert!(p.ends_with("'user_template': 'say <domain>'"));
    }

    #[test]
    fn contextual_prompt_inserts_system_line() {
        let p = build_contextual_user_prompt("hotel", "I want it", "Sure thing");
        let lines: Vec<&str> = p.lines().collect();
        assert_eq!(lines[lines.len() - 2], "'system_response': 'Sure thing'");
        assert_eq!(lines[lines.len() - 1], "'user_template': 'I want it'");
    }

    #[test]
    fn paraphrase_set() {
        let prompts = paraphrase_prompts();
        assert_eq!(prompts.len(), 4);
        assert_eq!(
            prompts[0],
            "Rephrase the sentences while retaining the original meaning."
        );
        assert!(prompts[3].starts_with("Generate a crisp and to the point single sentence"));
        for seed in 0..50 {
            let (i, text) = select_paraphrase_prompt(&mut rng_from(seed, &[]));
            assert!(i < 4);
            assert_eq!(text, prompts[i]);
            assert_eq!(select_paraphrase_prompt(&mut rng_from(seed, &[])).0, i);
        }
        let p = build_paraphrase_prompt(3, Side::System, "Booked it");
        assert!(p.starts_with(prompts[3]));
        assert!(p.ends_with("'system_utterance': 'Booked it'"));
    }

    #[test]
    fn parsing_responses() {
        assert_eq!(
            parse_refinement_response(r#"{"user_paraphrased": "hi there"}"#, Side::User).unwrap(),
            "hi there"
        );
        assert_eq!(
            parse_refinement_response(r#"Sure! {"system_paraphrased": "Booked it."}"#, Side::System).unwrap(),
            "Booked it."
        );
        assert_eq!(
            parse_refinement_response(r#"{"wrong_key": "x"}"#, Side::User),
            Err(ResponseError::MissingKey("user_paraphrased".into()))
        );
        assert_eq!(
            parse_refinement_response("no json here", Side::User),
            Err(ResponseError::NoObject)
        );
        assert_eq!(
            parse_refinement_response(r#"{"user_paraphrased": "  "}"#, Side::User),
            Err(ResponseError::EmptyValue("user_paraphrased".into()))
        );
        assert_eq!(
            parse_refinement_response("{'user_paraphrased': 'What's the hotel's phone?'}", Side::User).unwrap(),
            "What's the hotel's phone?"
        );
        assert_eq!(
            parse_refinement_response(r#"{"user_paraphrased": "a {b} c"} trailing }"#, Side::User).unwrap(),
            "a {b} c"
        );
    }
}
