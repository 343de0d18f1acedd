//! Scripted, deterministic chat backend.
//!
//! A script is an ordered list of rules. Each call renders the prompt as the
//! message contents joined by blank lines, and the first rule that matches
//! (and still has call budget) produces the reply. No match is an error.
//!
//! Script files are TOML:
//!
//! ```toml
//! [[rule]]
//! name = "raptor filter"          # optional, used in diagnostics
//! contains = ["PREDICATE: mentions raptor", "message_id: <e1>"]  # all must occur
//! ignore_case = true              # default false
//! last_message = false            # match only the final message
//! model = "mini"                  # restrict to one model id
//! budget = 1                      # max number of times this rule may fire
//! reply = "yes"
//!
//! [[rule]]
//! pattern = 'count_2024: (\d+)'   # regex; `$1` / `${name}` expand in reply
//! reply = "value $1"
//! ```
//!
//! Token counts are `ceil(chars / 4)`, summed over message contents for the
//! prompt and taken over the reply for the output. Latency is the model's
//! latency prior, so recorded wall time is deterministic.

use std::sync::atomic::{AtomicU32, Ordering};
use std::time::Duration;

use regex::Regex;
use serde::Deserialize;

use super::{ChatProvider, ChatRequest, ProviderReply};
use crate::error::{Error, Result};

pub fn count_tokens(text: &str) -> u64 {
    (text.chars().count() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RuleFile {
    name: Option<String>,
    #[serde(default)]
    contains: Option<OneOrMany>,
    pattern: Option<String>,
    #[serde(default)]
    ignore_case: bool,
    #[serde(default)]
    last_message: bool,
    model: Option<String>,
    budget: Option<u32>,
    reply: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScriptFile {
    #[serde(rename = "rule", default)]
    rules: Vec<RuleFile>,
}

#[derive(Debug, Clone)]
pub struct MockRule {
    pub name: Option<String>,
    pub contains: Vec<String>,
    pub pattern: Option<Regex>,
    pub ignore_case: bool,
    pub last_message: bool,
    pub model: Option<String>,
    pub budget: Option<u32>,
    pub reply: String,
}

impl MockRule {
    pub fn reply(reply: impl Into<String>) -> Self {
        MockRule {
            name: None,
            contains: Vec::new(),
            pattern: None,
            ignore_case: false,
            last_message: false,
            model: None,
            budget: None,
            reply: reply.into(),
        }
    }

    /// Rule firing when `needle` occurs in the prompt.
    pub fn contains(needle: impl Into<String>, reply: impl Into<String>) -> Self {
        MockRule::reply(reply).and_contains(needle)
    }

    pub fn and_contains(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn pattern(pattern: &str, reply: impl Into<String>) -> Result<Self> {
        let mut rule = MockRule::reply(reply);
        rule.pattern = Some(Regex::new(pattern).map_err(|e| Error::Config(format!("bad mock pattern: {e}")))?);
        Ok(rule)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn ignore_case(mut self) -> Self {
        self.ignore_case = true;
        self
    }

    pub fn last_message(mut self) -> Self {
        self.last_message = true;
        self
    }

    pub fn for_model(mut self, model: impl Into<String>) -> Self {
        self.model = Some(model.into());
        self
    }

    pub fn budget(mut self, n: u32) -> Self {
        self.budget = Some(n);
        self
    }

    /// Reply when the rule matches `prompt`, or `None`.
    fn apply(&self, prompt: &str, lowered: &str) -> Option<String> {
        let haystack = if self.ignore_case { lowered } else { prompt };
        let all_present = self.contains.iter().all(|needle| {
            if self.ignore_case {
                haystack.contains(&needle.to_lowercase())
            } else {
                haystack.contains(needle.as_str())
            }
        });
        if !all_present {
            return None;
        }
        match &self.pattern {
            None => Some(self.reply.clone()),
            Some(re) => {
                let caps = re.captures(prompt)?;
                if re.captures_len() > 1 && self.reply.contains('$') {
                    let mut out = String::new();
                    caps.expand(&self.reply, &mut out);
                    Some(out)
                } else {
                    Some(self.reply.clone())
                }
            }
        }
    }

    fn to_toml(&self) -> String {
        let mut out = String::from("[[rule]]\n");
        let q = |s: &str| toml::Value::String(s.to_string()).to_string();
        if let Some(name) = &self.name {
            out.push_str(&format!("name = {}\n", q(name)));
        }
        if !self.contains.is_empty() {
            let items: Vec<String> = self.contains.iter().map(|s| q(s)).collect();
            out.push_str(&format!("contains = [{}]\n", items.join(", ")));
        }
        if let Some(p) = &self.pattern {
            out.push_str(&format!("pattern = {}\n", q(p.as_str())));
        }
        if self.ignore_case {
            out.push_str("ignore_case = true\n");
        }
        if self.last_message {
            out.push_str("last_message = true\n");
        }
        if let Some(m) = &self.model {
            out.push_str(&format!("model = {}\n", q(m)));
        }
        if let Some(b) = self.budget {
            out.push_str(&format!("budget = {b}\n"));
        }
        out.push_str(&format!("reply = {}\n", q(&self.reply)));
        out
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockScript {
    rules: Vec<MockRule>,
}

impl MockScript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn push(&mut self, rule: MockRule) {
        self.rules.push(rule);
    }

    pub fn extend(&mut self, other: MockScript) {
        self.rules.extend(other.rules);
    }

    pub fn rules(&self) -> &[MockRule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScriptFile = toml::from_str(text).map_err(|e| Error::Config(format!("mock script: {e}")))?;
        let mut script = MockScript::new();
        for r in file.rules {
            let mut rule = match &r.pattern {
                Some(p) => MockRule::pattern(p, r.reply)?,
                None => MockRule::reply(r.reply),
            };
            rule.name = r.name;
            rule.contains = match r.contains {
                None => Vec::new(),
                Some(OneOrMany::One(s)) => vec![s],
                Some(OneOrMany::Many(v)) => v,
            };
            rule.ignore_case = r.ignore_case;
            rule.last_message = r.last_message;
            rule.model = r.model;
            rule.budget = r.budget;
            script.push(rule);
        }
        Ok(script)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read mock script {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        self.rules.iter().map(MockRule::to_toml).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    used: Vec<AtomicU32>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let used = script.rules.iter().map(|_| AtomicU32::new(0)).collect();
        MockBackend { script, used }
    }

    /// Claims one use of rule `i`; false when its budget is spent.
    fn claim(&self, i: usize) -> bool {
        let Some(budget) = self.script.rules[i].budget else {
            return true;
        };
        self.used[i].fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| (n < budget).then_some(n + 1)).is_ok()
    }

    pub fn uses(&self, i: usize) -> u32 {
        self.used[i].load(Ordering::SeqCst)
    }

    pub fn respond(&self, model_id: &str, messages: &[super::ChatMessage]) -> Result<String> {
        let prompt = messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n");
        let last = messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let prompt_lower = prompt.to_lowercase();
        let last_lower = last.to_lowercase();
        for (i, rule) in self.script.rules.iter().enumerate() {
            if rule.model.as_deref().is_some_and(|m| m != model_id) {
                continue;
            }
            let (text, lowered) =
                if rule.last_message { (last, last_lower.as_str()) } else { (prompt.as_str(), prompt_lower.as_str()) };
            if rule.budget.is_some_and(|b| self.uses(i) >= b) {
                continue;
            }
            if let Some(reply) = rule.apply(text, lowered) {
                if self.claim(i) {
                    return Ok(reply);
                }
            }
        }
        let tail: String = {
            let chars: Vec<char> = last.chars().collect();
            chars[chars.len().saturating_sub(200)..].iter().collect()
        };
        Err(Error::MockMiss { excerpt: tail })
    }
}

impl ChatProvider for MockBackend {
    fn name(&self) -> &str {
        "mock"
    }

    fn is_live(&self) -> bool {
        false
    }

    fn complete(&self, request: &ChatRequest<'_>) -> Result<ProviderReply> {
        let text = self.respond(&request.model.id, request.messages)?;
        let input_chars: u64 = request.messages.iter().map(|m| m.content.chars().count() as u64).sum();
        Ok(ProviderReply {
            input_tokens: input_chars.div_ceil(4),
            output_tokens: count_tokens(&text),
            text,
            latency: Some(Duration::from_secs_f64(request.model.latency_secs)),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{CallKind, ChatMessage, LlmClient, ModelCatalog, ModelSpec};
    use std::sync::Arc;

    fn user(s: &str) -> Vec<ChatMessage> {
        vec![ChatMessage::user(s)]
    }

    #[test]
    fn first_match_wins_and_miss_is_error() {
        let m = MockBackend::new(
            MockScript::new()
                .rule(MockRule::contains("PREDICATE: mentions raptor", "yes"))
                .rule(MockRule::contains("PREDICATE", "no")),
        );
        assert_eq!(m.respond("x", &user("..PREDICATE: mentions raptor")).unwrap(), "yes");
        assert_eq!(m.respond("x", &user("PREDICATE: other")).unwrap(), "no");
        assert!(matches!(m.respond("x", &user("nothing")), Err(Error::MockMiss { .. })));
    }

    #[test]
    fn budgets_sequence_replies() {
        let m = MockBackend::new(
            MockScript::new()
                .rule(MockRule::contains("go", "first").budget(1))
                .rule(MockRule::contains("go", "second")),
        );
        assert_eq!(m.respond("x", &user("go")).unwrap(), "first");
        assert_eq!(m.respond("x", &user("go")).unwrap(), "second");
        assert_eq!(m.respond("x", &user("go")).unwrap(), "second");
    }

    #[test]
    fn case_model_and_last_message_filters() {
        let m = MockBackend::new(
            MockScript::new()
                .rule(MockRule::contains("raptor", "ci").ignore_case().for_model("a"))
                .rule(MockRule::contains("tail", "last").last_message())
                .rule(MockRule::reply("fallback")),
        );
        assert_eq!(m.respond("a", &user("RAPTOR deal")).unwrap(), "ci");
        assert_eq!(m.respond("b", &user("RAPTOR deal")).unwrap(), "fallback");
        let msgs = vec![ChatMessage::user("tail"), ChatMessage::user("head")];
        assert_eq!(m.respond("b", &msgs).unwrap(), "fallback");
    }

    #[test]
    fn pattern_captures_expand() {
        let m =
            MockBackend::new(MockScript::new().rule(MockRule::pattern(r"a=(\d+).*b=(\d+)", "evaluate $1/$2").unwrap()));
        assert_eq!(m.respond("x", &user("a=10 and b=4")).unwrap(), "evaluate 10/4");
    }

    #[test]
    fn toml_round_trip() {
        let text = r#"
[[rule]]
name = "r1"
contains = ["a", "b"]
ignore_case = true
budget = 2
reply = "yes"

[[rule]]
pattern = 'n=(\d+)'
reply = "n: $1"
"#;
        let s = MockScript::from_toml_str(text).unwrap();
        assert_eq!(s.len(), 2);
        let again = MockScript::from_toml_str(&s.to_toml()).unwrap();
        assert_eq!(again.to_toml(), s.to_toml());
        assert!(MockScript::from_toml_str("[[rule]]\nbogus = 1\nreply='x'").is_err());
    }

    #[test]
    fn identical_calls_identical_usage() {
        let catalog = ModelCatalog::new(vec![ModelSpec::new("m", 0.002, 0.004, 0.9, 0.5).unwrap()]).unwrap();
        let model = catalog.models()[0].clone();
        let client =
            LlmClient::new(Arc::new(MockBackend::new(MockScript::new().rule(MockRule::reply("yes")))), &catalog);
        let msgs = user("12345678");
        let a = client.chat(&model, &msgs, 0.0, CallKind::Operator).unwrap();
        let b = client.chat(&model, &msgs, 0.0, CallKind::Operator).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(a.usage, b.usage);
        assert_eq!(a.usage.input_tokens, 2);
        assert_eq!(a.usage.output_tokens, 1);
        assert_eq!(a.usage.wall_secs, 0.5);
    }

    #[test]
    fn token_rule() {
        assert_eq!(count_tokens(""), 0);
        assert_eq!(count_tokens("abcd"), 1);
        assert_eq!(count_tokens("abcde"), 2);
        assert_eq!(count_tokens("ééééé"), 2);
    }
}
