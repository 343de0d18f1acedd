use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{stable_hash, ParamType};

/// Semantic type of a `sem_map` output field.
pub type FieldType = ParamType;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputField {
    pub name: String,
    pub ty: FieldType,
}

impl OutputField {
    pub fn new(name: impl Into<String>, ty: FieldType) -> Self {
        OutputField { name: name.into(), ty }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum LogicalOp {
    Scan { context: String },
    SemFilter { predicate: String },
    SemMap { instruction: String, outputs: Vec<OutputField> },
    Project { fields: Vec<String> },
    Limit { n: u64 },
    Compute { instruction: String },
    Search { instruction: String },
}

impl LogicalOp {
    pub fn keyword(&self) -> &'static str {
        match self {
            LogicalOp::Scan { .. } => "scan",
            LogicalOp::SemFilter { .. } => "sem_filter",
            LogicalOp::SemMap { .. } => "sem_map",
            LogicalOp::Project { .. } => "project",
            LogicalOp::Limit { .. } => "limit",
            LogicalOp::Compute { .. } => "compute",
            LogicalOp::Search { .. } => "search",
        }
    }

    /// Ops that call a model and therefore get one bound in a physical plan.
    pub fn is_semantic(&self) -> bool {
        matches!(
            self,
            LogicalOp::SemFilter { .. }
                | LogicalOp::SemMap { .. }
                | LogicalOp::Compute { .. }
                | LogicalOp::Search { .. }
        )
    }

    /// Agentic ops consume their whole input context at once.
    pub fn is_agentic(&self) -> bool {
        matches!(self, LogicalOp::Compute { .. } | LogicalOp::Search { .. })
    }

    fn check(&self) -> Result<()> {
        let nonempty = |what: &str, s: &str| {
            if s.trim().is_empty() {
                Err(Error::InvalidPlan(format!("{} {what} is empty", self.keyword())))
            } else {
                Ok(())
            }
        };
        match self {
            LogicalOp::Scan { context } => nonempty("context reference", context),
            LogicalOp::SemFilter { predicate } => nonempty("predicate", predicate),
            LogicalOp::SemMap { instruction, outputs } => {
                nonempty("instruction", instruction)?;
                if outputs.is_empty() {
                    return Err(Error::InvalidPlan("sem_map needs at least one output field".into()));
                }
                let mut seen = HashSet::new();
                for f in outputs {
                    if !is_ident(&f.name) {
                        return Err(Error::InvalidPlan(format!("bad field name `{}`", f.name)));
                    }
                    if !seen.insert(f.name.as_str()) {
                        return Err(Error::InvalidPlan(format!("sem_map output field `{}` repeated", f.name)));
                    }
                }
                Ok(())
            }
            LogicalOp::Project { fields } => {
                if fields.is_empty() {
                    return Err(Error::InvalidPlan("project needs at least one field".into()));
                }
                match fields.iter().find(|f| !is_ident(f)) {
                    Some(f) => Err(Error::InvalidPlan(format!("bad field name `{f}`"))),
                    None => Ok(()),
                }
            }
            LogicalOp::Limit { n } => {
                if *n == 0 {
                    Err(Error::InvalidPlan("limit must be at least 1".into()))
                } else {
                    Ok(())
                }
            }
            LogicalOp::Compute { instruction } | LogicalOp::Search { instruction } => {
                nonempty("instruction", instruction)
            }
        }
    }
}

pub(crate) fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub(crate) fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for LogicalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogicalOp::Scan { context } => write!(f, "scan({context})"),
            LogicalOp::SemFilter { predicate } => write!(f, "sem_filter({})", quote(predicate)),
            LogicalOp::SemMap { instruction, outputs } => {
                let fields = outputs.iter().map(|o| format!("{}: {}", o.name, o.ty)).collect::<Vec<_>>().join(", ");
                write!(f, "sem_map({}, {{{fields}}})", quote(instruction))
            }
            LogicalOp::Project { fields } => write!(f, "project({})", fields.join(", ")),
            LogicalOp::Limit { n } => write!(f, "limit({n})"),
            LogicalOp::Compute { instruction } => write!(f, "compute({})", quote(instruction)),
            LogicalOp::Search { instruction } => write!(f, "search({})", quote(instruction)),
        }
    }
}

/// A linear pipeline whose first (and only first) op is `Scan`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogicalPlan {
    id: String,
    ops: Vec<LogicalOp>,
}

impl LogicalPlan {
    pub fn new(ops: Vec<LogicalOp>) -> Result<Self> {
        match ops.first() {
            Some(LogicalOp::Scan { .. }) => {}
            _ => return Err(Error::InvalidPlan("pipeline must start with scan".into())),
        }
        if ops[1..].iter().any(|op| matches!(op, LogicalOp::Scan { .. })) {
            return Err(Error::InvalidPlan("scan may only appear as the pipeline source".into()));
        }
        for op in &ops {
            op.check()?;
        }
        let canonical = canonical_text(&ops);
        Ok(LogicalPlan { id: stable_hash(&["logical-plan", &canonical]), ops })
    }

    /// Content hash of the canonical text.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn ops(&self) -> &[LogicalOp] {
        &self.ops
    }

    pub fn source_ref(&self) -> &str {
        match &self.ops[0] {
            LogicalOp::Scan { context } => context,
            _ => unreachable!("plan invariant: first op is scan"),
        }
    }

    /// Indices of ops that need a bound model.
    pub fn semantic_positions(&self) -> Vec<usize> {
        self.ops.iter().enumerate().filter(|(_, op)| op.is_semantic()).map(|(i, _)| i).collect()
    }

    pub fn canonical(&self) -> String {
        canonical_text(&self.ops)
    }
}

fn canonical_text(ops: &[LogicalOp]) -> String {
    ops.iter().map(ToString::to_string).collect::<Vec<_>>().join(" | ")
}

impl fmt::Display for LogicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}
