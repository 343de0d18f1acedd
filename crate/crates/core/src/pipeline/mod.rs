//! Pipeline DSL: parsing, canonical printing and validation.

mod ast;
mod parser;
mod validate;

pub use ast::{FieldType, LogicalOp, LogicalPlan, OutputField};
pub use parser::{parse_pipeline, print_pipeline};
pub use validate::{validate_plan, Diagnostic, DiagnosticKind};
