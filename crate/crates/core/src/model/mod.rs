//! Records, contexts, lineage and tool descriptors.

mod context;
mod index;
mod record;
mod source;
mod value;

pub use context::{
    Context, ContextLineage, OperatorKind, ParamType, ToolArgs, ToolHandler, ToolOutput, ToolParam, ToolSpec,
    DEFAULT_CONTEXT_NAME,
};
pub use index::VectorIndex;
pub(crate) use record::truncate_chars;
pub use record::{stable_hash, ContextId, Record, RecordId, RecordLineage};
pub use source::{load_jsonl, parse_record_line, write_jsonl, DirectorySource, MemorySource, RecordIter, RecordSource};
pub use value::{FieldValue, MAX_DEPTH};
