use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{LogicalOp, LogicalPlan};
use crate::model::Context;

/// Records sampled to infer the input schema.
const SCHEMA_SAMPLE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    UnknownContext,
    UnknownField,
    DataAccess,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub op_index: usize,
    pub kind: DiagnosticKind,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "op {}: {}", self.op_index, self.message)
    }
}

/// Checks that `plan` can run against `ctx`. An empty result means
/// executable. Field references are only checked when the schema can be
/// inferred from the context's records.
pub fn validate_plan(plan: &LogicalPlan, ctx: &Context) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if !ctx.answers_to(plan.source_ref()) {
        diags.push(Diagnostic {
            op_index: 0,
            kind: DiagnosticKind::UnknownContext,
            message: format!(
                "unknown context `{}` (this context answers to `{}`, `ctx` or its id)",
                plan.source_ref(),
                ctx.name()
            ),
        });
    }

    let mut schema: Option<BTreeSet<String>> = None;
    if !ctx.is_empty() {
        let mut fields = BTreeSet::new();
        let mut ok = true;
        for record in ctx.iter().take(SCHEMA_SAMPLE) {
            match record {
                Ok(r) => fields.extend(r.fields.keys().cloned()),
                Err(e) => {
                    diags.push(Diagnostic { op_index: 0, kind: DiagnosticKind::DataAccess, message: e.to_string() });
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            schema = Some(fields);
        }
    }

    for (i, op) in plan.ops().iter().enumerate() {
        match op {
            LogicalOp::SemMap { outputs, .. } => {
                if let Some(s) = schema.as_mut() {
                    s.extend(outputs.iter().map(|o| o.name.clone()));
                }
            }
            LogicalOp::Project { fields } => {
                if let Some(s) = schema.as_ref() {
                    for f in fields.iter().filter(|f| !s.contains(*f)) {
                        diags.push(Diagnostic {
                            op_index: i,
                            kind: DiagnosticKind::UnknownField,
                            message: format!("project references `{f}`, which no upstream op produces"),
                        });
                    }
                }
                if let Some(s) = schema.as_mut() {
                    s.retain(|name| fields.contains(name));
                }
            }
            _ => {}
        }
    }
    diags
}
