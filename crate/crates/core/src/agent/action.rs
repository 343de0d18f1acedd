//! Agent action wire format.
//!
//! Each model reply must contain exactly one fenced block holding a JSON
//! object with a `thought` and either `tool` + `args` or `final_answer`
//! (plus an optional typed `value`), for example
//! `{"thought": "count", "tool": "run_pipeline", "args": {"pipeline": "scan(ctx) | limit(2)"}}`.
//! A reply that is nothing but a bare JSON object is also accepted.

use serde::{Deserialize, Serialize};

use crate::model::{FieldValue, ToolArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    ToolCall {
        tool: String,
        args: ToolArgs,
    },
    FinalAnswer {
        answer: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        value: Option<FieldValue>,
    },
}

/// A parsed reply: the model's stated reasoning and its action.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedAction {
    pub thought: String,
    pub action: Action,
}

fn fenced_blocks(text: &str) -> Vec<&str> {
    let mut blocks = Vec::new();
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let Some(newline) = after.find('\n') else { break };
        let body = &after[newline + 1..];
        let Some(close) = body.find("```") else { break };
        blocks.push(&body[..close]);
        rest = &body[close + 3..];
    }
    blocks
}

fn answer_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Parses one reply. The error string is fed back to the model verbatim in
/// the corrective re-ask.
pub fn parse_action(reply: &str) -> Result<ParsedAction, String> {
    let blocks = fenced_blocks(reply);
    let body = match blocks.len() {
        0 => {
            let t = reply.trim();
            if t.starts_with('{') && t.ends_with('}') {
                t
            } else {
                return Err("no fenced action block found".into());
            }
        }
        1 => blocks[0].trim(),
        n => return Err(format!("found {n} fenced blocks; send exactly one")),
    };
    let doc: serde_json::Value =
        serde_json::from_str(body).map_err(|e| format!("action block is not valid JSON: {e}"))?;
    let obj = doc.as_object().ok_or_else(|| "action block must be a JSON object".to_string())?;
    let thought = obj.get("thought").map(answer_text).unwrap_or_default();
    let tool = obj.get("tool");
    let final_answer = obj.get("final_answer");
    let action = match (tool, final_answer) {
        (Some(_), Some(_)) => return Err("give either `tool` or `final_answer`, not both".into()),
        (None, None) => return Err("action needs a `tool` or a `final_answer`".into()),
        (Some(tool), None) => {
            let tool = tool
                .as_str()
                .filter(|t| !t.trim().is_empty())
                .ok_or_else(|| "`tool` must be a nonempty string".to_string())?;
            let mut args = ToolArgs::new();
            match obj.get("args") {
                None | Some(serde_json::Value::Null) => {}
                Some(serde_json::Value::Object(map)) => {
                    for (k, v) in map {
                        let value = FieldValue::from_json(v).map_err(|e| format!("argument `{k}`: {e}"))?;
                        args.insert(k.clone(), value);
                    }
                }
                Some(_) => return Err("`args` must be a JSON object".into()),
            }
            Action::ToolCall { tool: tool.to_string(), args }
        }
        (None, Some(answer)) => {
            let value = match obj.get("value") {
                None | Some(serde_json::Value::Null) => None,
                Some(v) => Some(FieldValue::from_json(v).map_err(|e| format!("`value`: {e}"))?),
            };
            Action::FinalAnswer { answer: answer_text(answer), value }
        }
    };
    Ok(ParsedAction { thought, action })
}

/// Renders an action in the wire format.
pub fn render_action(thought: &str, action: &Action) -> String {
    let mut obj = serde_json::Map::new();
    obj.insert("thought".into(), thought.into());
    match action {
        Action::ToolCall { tool, args } => {
            obj.insert("tool".into(), tool.as_str().into());
            obj.insert(
                "args".into(),
                serde_json::Value::Object(args.iter().map(|(k, v)| (k.clone(), v.to_json())).collect()),
            );
        }
        Action::FinalAnswer { answer, value } => {
            obj.insert("final_answer".into(), answer.as_str().into());
            if let Some(v) = value {
                obj.insert("value".into(), v.to_json());
            }
        }
    }
    format!("```json\n{}\n```", serde_json::Value::Object(obj))
}
