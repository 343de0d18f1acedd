//! Versioned prompt templates and response parsers for semantic operators.
//!
//! Template `v1`:
//!
//! * filter: system line demanding a yes/no answer; user message with the
//!   record as `name: value` lines, then `PREDICATE: <text>`.
//! * map: record lines, `INSTRUCTION: <text>`, then `OUTPUT FIELDS:` with
//!   one `- name (type)` line per field.
//!
//! Retries append a stricter reminder to the user message.

use indexmap::IndexMap;

use crate::llm::ChatMessage;
use crate::model::{FieldValue, Record};
use crate::pipeline::{FieldType, OutputField};

pub const PROMPT_STRATEGY_V1: &str = "v1";

pub const DEFAULT_FIELD_CHAR_CAP: usize = 4000;

const FILTER_SYSTEM: &str = "You are a careful data analyst. You decide whether a record satisfies a \
predicate. Answer with a single word: yes or no.";

const MAP_SYSTEM: &str = "You are a careful data analyst. You extract structured values from a record. \
Answer with one `name: value` line per requested field and nothing else.";

const FILTER_RETRY: &str = "Your previous answer could not be parsed. Reply with exactly one word: yes or no.";

const MAP_RETRY: &str = "Your previous answer could not be parsed. Reply with exactly one `name: value` \
line for every output field listed above.";

pub fn filter_messages(record: &Record, predicate: &str, field_cap: usize, retry: bool) -> Vec<ChatMessage> {
    let mut user = format!(
        "Decide whether the record satisfies the predicate.\n\nRECORD:\n{}\nPREDICATE: {predicate}\n\nAnswer yes or no.",
        record.render(field_cap)
    );
    if retry {
        user.push_str("\n\n");
        user.push_str(FILTER_RETRY);
    }
    vec![ChatMessage::system(FILTER_SYSTEM), ChatMessage::user(user)]
}

pub fn map_messages(
    record: &Record,
    instruction: &str,
    outputs: &[OutputField],
    field_cap: usize,
    retry: bool,
) -> Vec<ChatMessage> {
    let fields = outputs.iter().map(|o| format!("- {} ({})", o.name, o.ty)).collect::<Vec<_>>().join("\n");
    let mut user = format!(
        "Extract the requested fields from the record.\n\nRECORD:\n{}\nINSTRUCTION: {instruction}\n\nOUTPUT FIELDS:\n{fields}",
        record.render(field_cap)
    );
    if retry {
        user.push_str("\n\n");
        user.push_str(MAP_RETRY);
    }
    vec![ChatMessage::system(MAP_SYSTEM), ChatMessage::user(user)]
}

/// First alphabetic token, lowercased, must be `yes` or `no`.
pub fn parse_bool(response: &str) -> Option<bool> {
    let token: String = response.split(|c: char| !c.is_alphabetic()).find(|t| !t.is_empty())?.to_lowercase();
    match token.as_str() {
        "yes" => Some(true),
        "no" => Some(false),
        _ => None,
    }
}

fn strip_fence(s: &str) -> &str {
    let t = s.trim();
    if let Some(rest) = t.strip_prefix("```") {
        let rest = rest.split_once('\n').map(|(_, body)| body).unwrap_or("");
        if let Some(body) = rest.trim_end().strip_suffix("```") {
            return body.trim();
        }
    }
    t
}

fn coerce(raw: &FieldValue, ty: FieldType) -> Option<FieldValue> {
    match (ty, raw) {
        (FieldType::Text, FieldValue::Text(_)) => Some(raw.clone()),
        (FieldType::Text, FieldValue::Null) => None,
        (FieldType::Text, other) => Some(FieldValue::Text(other.to_string())),
        (FieldType::Number, FieldValue::Number(_)) => Some(raw.clone()),
        (FieldType::Number, FieldValue::Text(s)) => parse_number(s),
        (FieldType::Boolean, FieldValue::Bool(_)) => Some(raw.clone()),
        (FieldType::Boolean, FieldValue::Text(s)) => parse_boolean_value(s),
        (FieldType::List, FieldValue::List(_)) => Some(raw.clone()),
        (FieldType::List, FieldValue::Text(s)) => parse_list(s),
        _ => None,
    }
}

fn unquote(s: &str) -> &str {
    let s = s.trim();
    if s.len() >= 2 && ((s.starts_with('"') && s.ends_with('"')) || (s.starts_with('\'') && s.ends_with('\''))) {
        &s[1..s.len() - 1]
    } else {
        s
    }
}

fn parse_number(s: &str) -> Option<FieldValue> {
    let cleaned: String = unquote(s).chars().filter(|c| *c != ',' && *c != '_').collect();
    cleaned.trim().parse::<f64>().ok().filter(|n| n.is_finite()).map(FieldValue::Number)
}

fn parse_boolean_value(s: &str) -> Option<FieldValue> {
    match unquote(s).to_lowercase().as_str() {
        "true" | "yes" => Some(FieldValue::Bool(true)),
        "false" | "no" => Some(FieldValue::Bool(false)),
        _ => None,
    }
}

fn parse_list(s: &str) -> Option<FieldValue> {
    let s = s.trim();
    if s.starts_with('[') {
        let json: serde_json::Value = serde_json::from_str(s).ok()?;
        return FieldValue::from_json(&json).ok().filter(|v| v.as_list().is_some());
    }
    Some(FieldValue::List(
        s.split(',')
            .map(|item| unquote(item).trim().to_string())
            .filter(|item| !item.is_empty())
            .map(FieldValue::Text)
            .collect(),
    ))
}

/// Parses a structured answer for exactly `outputs`.
///
/// Precedence: if the response (optionally inside one code fence) is a JSON
/// object, its keys are used. Otherwise each `name: value` line is read; the
/// first occurrence of a name wins. Names match case-insensitively.
pub fn parse_structured(response: &str, outputs: &[OutputField]) -> Result<IndexMap<String, FieldValue>, String> {
    let body = strip_fence(response);
    let mut found: IndexMap<String, FieldValue> = IndexMap::new();
    if let Ok(serde_json::Value::Object(obj)) = serde_json::from_str::<serde_json::Value>(body) {
        for (k, v) in obj {
            if let Ok(value) = FieldValue::from_json(&v) {
                found.entry(k.to_lowercase()).or_insert(value);
            }
        }
    } else {
        for line in body.lines() {
            let line = line.trim().trim_start_matches(['-', '*']).trim();
            if let Some((k, v)) = line.split_once(':') {
                let key = unquote(k).trim().to_lowercase();
                if !key.is_empty() {
                    found.entry(key).or_insert_with(|| FieldValue::Text(unquote(v).to_string()));
                }
            }
        }
    }
    let mut out = IndexMap::with_capacity(outputs.len());
    for field in outputs {
        let raw =
            found.get(&field.name.to_lowercase()).ok_or_else(|| format!("missing output field `{}`", field.name))?;
        let value =
            coerce(raw, field.ty).ok_or_else(|| format!("field `{}` is not a valid {}", field.name, field.ty))?;
        out.insert(field.name.clone(), value);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bool_parsing_is_strict() {
        assert_eq!(parse_bool("Yes."), Some(true));
        assert_eq!(parse_bool("  no, because"), Some(false));
        assert_eq!(parse_bool("**YES**"), Some(true));
        assert_eq!(parse_bool("maybe"), None);
        assert_eq!(parse_bool("yesterday"), None);
        assert_eq!(parse_bool("123"), None);
    }

    fn fields() -> Vec<OutputField> {
        vec![OutputField::new("sender", FieldType::Text), OutputField::new("n", FieldType::Number)]
    }

    #[test]
    fn key_value_lines() {
        let got = parse_structured("sender: alice@corp.com\nn: 12.5\n", &fields()).unwrap();
        assert_eq!(got["sender"], FieldValue::text("alice@corp.com"));
        assert_eq!(got["n"], FieldValue::Number(12.5));
    }

    #[test]
    fn json_document_takes_precedence() {
        let got = parse_structured("```json\n{\"Sender\": \"bob\", \"n\": \"1,135,291\"}\n```", &fields()).unwrap();
        assert_eq!(got["sender"], FieldValue::text("bob"));
        assert_eq!(got["n"], FieldValue::Number(1135291.0));
    }

    #[test]
    fn missing_and_invalid_fields() {
        assert!(parse_structured("I think it is from Alice.", &fields()).is_err());
        assert!(parse_structured("sender: a\nn: lots", &fields()).is_err());
    }

    #[test]
    fn lists_and_booleans() {
        let f = vec![OutputField::new("tags", FieldType::List), OutputField::new("ok", FieldType::Boolean)];
        let got = parse_structured("tags: a, b\nok: yes", &f).unwrap();
        assert_eq!(got["tags"], FieldValue::List(vec![FieldValue::text("a"), FieldValue::text("b")]));
        assert_eq!(got["ok"], FieldValue::Bool(true));
        let got = parse_structured("tags: [1, 2]\nok: false", &f).unwrap();
        assert_eq!(got["tags"].as_list().unwrap().len(), 2);
    }

    #[test]
    fn prompts_contain_record_and_predicate() {
        let r = Record::new("r", vec![("body".into(), FieldValue::text("Raptor transaction"))]).unwrap();
        let m = filter_messages(&r, "mentions raptor", 4000, false);
        assert!(m[1].content.contains("body: Raptor transaction\n"));
        assert!(m[1].content.contains("PREDICATE: mentions raptor"));
        let retry = filter_messages(&r, "mentions raptor", 4000, true);
        assert!(retry[1].content.ends_with(FILTER_RETRY));
    }
}
