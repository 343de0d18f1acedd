use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub const MAX_DEPTH: usize = 8;

/// A record payload value.
///
/// Numbers are always finite and lists nest at most [`MAX_DEPTH`] levels.
/// Both invariants are enforced by the checked constructors and by
/// deserialization.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldValue {
    Text(String),
    Number(f64),
    Bool(bool),
    List(Vec<FieldValue>),
    Null,
}

impl FieldValue {
    pub fn text(s: impl Into<String>) -> Self {
        FieldValue::Text(s.into())
    }

    pub fn number(n: f64) -> Result<Self> {
        if n.is_finite() {
            Ok(FieldValue::Number(n))
        } else {
            Err(Error::Validation(format!("non-finite number {n}")))
        }
    }

    pub fn list(items: Vec<FieldValue>) -> Result<Self> {
        let v = FieldValue::List(items);
        v.check()?;
        Ok(v)
    }

    /// Depth of list nesting; scalars have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            FieldValue::List(items) => 1 + items.iter().map(FieldValue::depth).max().unwrap_or(0),
            _ => 0,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.depth() > MAX_DEPTH {
            return Err(Error::Validation(format!("value nesting depth {} exceeds {MAX_DEPTH}", self.depth())));
        }
        self.check_finite()
    }

    fn check_finite(&self) -> Result<()> {
        match self {
            FieldValue::Number(n) if !n.is_finite() => Err(Error::Validation(format!("non-finite number {n}"))),
            FieldValue::List(items) => items.iter().try_for_each(FieldValue::check_finite),
            _ => Ok(()),
        }
    }

    pub fn as_text(&self) -> Option<&str> {
        match self {
            FieldValue::Text(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            FieldValue::Number(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[FieldValue]> {
        match self {
            FieldValue::List(items) => Some(items),
            _ => None,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        match self {
            FieldValue::Text(s) => serde_json::Value::String(s.clone()),
            FieldValue::Number(n) => {
                serde_json::Number::from_f64(*n).map(serde_json::Value::Number).unwrap_or(serde_json::Value::Null)
            }
            FieldValue::Bool(b) => serde_json::Value::Bool(*b),
            FieldValue::List(items) => serde_json::Value::Array(items.iter().map(FieldValue::to_json).collect()),
            FieldValue::Null => serde_json::Value::Null,
        }
    }

    /// Converts a JSON value; objects are rejected because records are the
    /// only keyed structure.
    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let v = Self::from_json_unchecked(value)?;
        v.check()?;
        Ok(v)
    }

    fn from_json_unchecked(value: &serde_json::Value) -> Result<Self> {
        Ok(match value {
            serde_json::Value::Null => FieldValue::Null,
            serde_json::Value::Bool(b) => FieldValue::Bool(*b),
            serde_json::Value::Number(n) => {
                FieldValue::Number(n.as_f64().ok_or_else(|| Error::Validation(format!("unrepresentable number {n}")))?)
            }
            serde_json::Value::String(s) => FieldValue::Text(s.clone()),
            serde_json::Value::Array(items) => {
                FieldValue::List(items.iter().map(Self::from_json_unchecked).collect::<Result<_>>()?)
            }
            serde_json::Value::Object(_) => {
                return Err(Error::Validation("nested objects are not supported as field values".into()))
            }
        })
    }
}

impl fmt::Display for FieldValue {
    /// Prompt rendering: text is written raw, everything else as JSON.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldValue::Text(s) => f.write_str(s),
            FieldValue::Number(n) => write!(f, "{n}"),
            FieldValue::Bool(b) => write!(f, "{b}"),
            FieldValue::Null => f.write_str("null"),
            FieldValue::List(_) => write!(f, "{}", self.to_json()),
        }
    }
}

impl From<&str> for FieldValue {
    fn from(s: &str) -> Self {
        FieldValue::Text(s.to_string())
    }
}

impl From<String> for FieldValue {
    fn from(s: String) -> Self {
        FieldValue::Text(s)
    }
}

impl From<bool> for FieldValue {
    fn from(b: bool) -> Self {
        FieldValue::Bool(b)
    }
}

impl Serialize for FieldValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for FieldValue {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let json = serde_json::Value::deserialize(deserializer)?;
        FieldValue::from_json(&json).map_err(serde::de::Error::custom)
    }
}
