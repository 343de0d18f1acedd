use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::FieldValue;
use crate::error::{Error, Result};

/// Hex-encoded SHA-256 prefix over the given parts, separated by a unit
/// separator so that `["ab", "c"]` and `["a", "bc"]` differ.
pub fn stable_hash(parts: &[&str]) -> String {
    let mut hasher = Sha256::new();
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            hasher.update([0x1f]);
        }
        hasher.update(part.as_bytes());
    }
    hex::encode(&hasher.finalize()[..8])
}

macro_rules! string_id {
    ($name:ident) => {
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(String);

        impl $name {
            pub fn new(s: impl Into<String>) -> Self {
                Self(s.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(RecordId);
string_id!(ContextId);

/// Where a derived record came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordLineage {
    pub parents: Vec<RecordId>,
    pub operator: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub id: RecordId,
    pub fields: IndexMap<String, FieldValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lineage: Option<RecordLineage>,
}

impl Record {
    /// Builds a source record. Field order is kept as given.
    pub fn new(id: impl Into<RecordId>, fields: impl IntoIterator<Item = (String, FieldValue)>) -> Result<Self> {
        let record = Record { id: id.into(), fields: fields.into_iter().collect(), lineage: None };
        record.check()?;
        Ok(record)
    }

    /// Source record whose id is derived from its content and its origin
    /// (path plus offset), so reloading the same data yields the same ids.
    pub fn from_source(
        origin: &str,
        offset: u64,
        fields: impl IntoIterator<Item = (String, FieldValue)>,
    ) -> Result<Self> {
        let fields: IndexMap<String, FieldValue> = fields.into_iter().collect();
        let content = serde_json::to_string(&fields)?;
        let id = stable_hash(&[origin, &offset.to_string(), &content]);
        Record::new(id, fields)
    }

    /// Record produced by an operator from `parent`. The id is a function of
    /// the operator id and the parent id.
    pub fn derived(parent: &Record, operator: &str, fields: IndexMap<String, FieldValue>) -> Self {
        Record {
            id: RecordId(stable_hash(&[operator, parent.id.as_str()])),
            fields,
            lineage: Some(RecordLineage { parents: vec![parent.id.clone()], operator: operator.to_string() }),
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.id.as_str().is_empty() {
            return Err(Error::Validation("record id is empty".into()));
        }
        for (name, value) in &self.fields {
            if name.is_empty() {
                return Err(Error::Validation(format!("record {} has an empty field name", self.id)));
            }
            value.check()?;
        }
        Ok(())
    }

    pub fn get(&self, field: &str) -> Option<&FieldValue> {
        self.fields.get(field)
    }

    pub fn has_text_field(&self) -> bool {
        self.fields.values().any(|v| matches!(v, FieldValue::Text(_)))
    }

    /// `name: value` lines, each value truncated to `field_cap` characters.
    pub fn render(&self, field_cap: usize) -> String {
        let mut out = String::new();
        for (name, value) in &self.fields {
            let rendered = value.to_string();
            out.push_str(name);
            out.push_str(": ");
            out.push_str(&truncate_chars(&rendered, field_cap));
            out.push('\n');
        }
        out
    }

    /// Short label for listings: the first of `path`, `subject`, `title`
    /// fields, else the first text field.
    pub fn label(&self) -> String {
        for key in ["path", "subject", "title", "name"] {
            if let Some(FieldValue::Text(s)) = self.fields.get(key) {
                return truncate_chars(s, 80);
            }
        }
        self.fields
            .values()
            .find_map(FieldValue::as_text)
            .map(|s| truncate_chars(s.lines().next().unwrap_or(""), 80))
            .unwrap_or_default()
    }
}

pub(crate) fn truncate_chars(s: &str, cap: usize) -> String {
    match s.char_indices().nth(cap) {
        Some((idx, _)) => s[..idx].to_string(),
        None => s.to_string(),
    }
}
