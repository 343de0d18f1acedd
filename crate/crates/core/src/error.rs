use thiserror::Error;

use crate::agent::AgentTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Position of a lexical or syntactic problem in pipeline text (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Span {
    pub line: usize,
    pub column: usize,
}

impl std::fmt::Display for Span {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("{span}: {message} (at `{token}`)")]
pub struct ParseError {
    pub span: Span,
    pub token: String,
    pub message: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("capability error: context {context} has no {capability}")]
    Capability { context: String, capability: &'static str },

    #[error("data access error ({source_detail}): {message}")]
    DataAccess { source_detail: String, message: String },

    #[error("backend error (retryable={retryable}): {message}")]
    Backend { retryable: bool, message: String },

    #[error("mock backend has no rule matching prompt: {excerpt}")]
    MockMiss { excerpt: String },

    #[error("operator error in {operator}: {message}; raw response: {raw:?}")]
    Operator { operator: String, message: String, raw: String },

    #[error("parse error: {0}")]
    Parse(#[from] ParseError),

    #[error("plan invalid: {0}")]
    InvalidPlan(String),

    #[error("estimation error: no statistics for operator {op_index} under model {model}")]
    Estimation { op_index: usize, model: String },

    #[error("statistics error: {0}")]
    Stats(String),

    #[error("policy infeasible: {message}; best violator {plan_id}")]
    PolicyInfeasible { message: String, plan_id: String },

    #[error("context {0} already registered with different content")]
    Conflict(String),

    #[error("unknown context {0}")]
    UnknownContext(String),

    #[error("store corrupted: {0}")]
    Corrupt(String),

    #[error("cost budget exceeded: spent {spent:.6} of {budget:.6}")]
    BudgetExceeded { spent: f64, budget: f64 },

    #[error("failure budget exceeded: {failures} failed records (allowed {allowed})")]
    FailureBudget { failures: usize, allowed: usize },

    #[error("compute did not produce an answer (outcome: {})", .trace.outcome)]
    Compute { trace: Box<AgentTrace> },

    #[error("search aborted (outcome: {})", .trace.outcome)]
    Search { trace: Box<AgentTrace> },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    /// Stable, machine-parseable category used for CLI exit reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Validation(_) | Error::Config(_) | Error::Capability { .. } => "config-error",
            Error::UnknownContext(_) => "config-error",
            Error::Parse(_) | Error::InvalidPlan(_) => "parse-error",
            Error::DataAccess { .. } | Error::Io(_) | Error::Corrupt(_) | Error::Serde(_) => "data-error",
            Error::Backend { .. } | Error::MockMiss { .. } => "backend-error",
            Error::Operator { .. } | Error::FailureBudget { .. } => "operator-error",
            Error::Estimation { .. } | Error::Stats(_) | Error::PolicyInfeasible { .. } => "optimizer-error",
            Error::Conflict(_) => "cache-conflict",
            Error::BudgetExceeded { .. } => "budget-exceeded",
            Error::Compute { trace } | Error::Search { trace } => trace.outcome.category(),
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, Error::Backend { retryable: true, .. })
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<toml::de::Error> for Error {
    fn from(e: toml::de::Error) -> Self {
        Error::Config(e.to_string())
    }
}
