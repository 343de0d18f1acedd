//! Physical plans and their streaming execution.

mod executor;
mod operators;
mod physical;
mod prompt;

pub use executor::{
    pipeline_execute, AgenticOps, ExecutionReport, Executor, FailedRecord, FailurePolicy, OpReport, RunPolicy,
};
pub use operators::{sem_filter_execute, sem_map_execute, OpOutcome, OpSettings};
pub use physical::{PhysicalOp, PhysicalPlan, DEFAULT_RETRY_BUDGET};
pub use prompt::{
    filter_messages, map_messages, parse_bool, parse_structured, DEFAULT_FIELD_CHAR_CAP, PROMPT_STRATEGY_V1,
};
