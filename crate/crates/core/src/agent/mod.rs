//! Step-bounded tool-calling agent and the `compute` / `search` operators.

mod action;
mod expr;
mod ops;
mod run;
mod tools;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::llm::{ModelSpec, Usage, DEFAULT_TEMPERATURE};
use crate::model::{ContextId, FieldValue, OperatorKind};

pub use action::{parse_action, render_action, Action, ParsedAction};
pub use expr::evaluate;
pub use ops::{compute, search, ComputeResult, SearchResult};
pub use run::{system_prompt, Agent, SYSTEM_PROMPT_VERSION};
pub use tools::{builtin_tools, PipelineRun, PipelineRunner, BUILTIN_TOOL_NAMES};

pub const DEFAULT_MAX_STEPS: usize = 12;
pub const DEFAULT_MAX_REASKS: u32 = 2;
pub const OBSERVATION_CAP: usize = 8000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub model: ModelSpec,
    pub max_steps: usize,
    /// Covers the agent's own calls plus model spend inside tools.
    pub cost_budget: Option<f64>,
    /// Corrective re-asks allowed per step before the run aborts.
    pub max_reasks: u32,
    pub observation_cap: usize,
    pub temperature: f64,
}

impl AgentConfig {
    pub fn new(model: ModelSpec) -> Self {
        AgentConfig {
            model,
            max_steps: DEFAULT_MAX_STEPS,
            cost_budget: None,
            max_reasks: DEFAULT_MAX_REASKS,
            observation_cap: OBSERVATION_CAP,
            temperature: DEFAULT_TEMPERATURE,
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::Config("agent max steps must be at least 1".into()));
        }
        if matches!(self.cost_budget, Some(b) if b.is_nan() || b < 0.0) {
            return Err(Error::Config("agent cost budget must be >= 0".into()));
        }
        if self.observation_cap < 64 {
            return Err(Error::Config("observation cap must be at least 64 characters".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum AbortReason {
    UnparseableAction { message: String },
    Budget { spent: f64, budget: f64 },
    Backend { category: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Outcome {
    Answered,
    StepLimit,
    Aborted(AbortReason),
}

impl Outcome {
    /// Error category reported when this outcome fails an operator.
    pub fn category(&self) -> &'static str {
        match self {
            Outcome::Answered => "ok",
            Outcome::StepLimit => "step-limit",
            Outcome::Aborted(AbortReason::UnparseableAction { .. }) => "agent-error",
            Outcome::Aborted(AbortReason::Budget { .. }) => "budget-exceeded",
            Outcome::Aborted(AbortReason::Backend { .. }) => "backend-error",
        }
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Outcome::Answered => f.write_str("answered"),
            Outcome::StepLimit => f.write_str("step-limit"),
            Outcome::Aborted(AbortReason::UnparseableAction { message }) => {
                write!(f, "aborted: unparseable action ({message})")
            }
            Outcome::Aborted(AbortReason::Budget { spent, budget }) => {
                write!(f, "aborted: cost budget exceeded ({spent:.6} > {budget:.6})")
            }
            Outcome::Aborted(AbortReason::Backend { message, .. }) => {
                write!(f, "aborted: {message}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentStep {
    pub index: usize,
    pub thought: String,
    /// `None` when the model never produced a parseable action.
    pub action: Option<Action>,
    pub observation: String,
    pub reasks: u32,
    /// Model calls made during this step, re-asks included.
    pub usage: Usage,
    pub tool_usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub operator: OperatorKind,
    pub instruction: String,
    pub context_id: ContextId,
    pub model: String,
    pub steps: Vec<AgentStep>,
    pub outcome: Outcome,
    pub answer: Option<String>,
    pub value: Option<FieldValue>,
    pub usage: Usage,
    pub tool_usage: Usage,
    pub derived_contexts: Vec<ContextId>,
    pub pipeline_ids: Vec<String>,
}

impl AgentTrace {
    /// Agent calls plus everything spent inside tools.
    pub fn total_usage(&self) -> Usage {
        let mut total = self.usage;
        total += &self.tool_usage;
        total
    }

    /// Distinct tool names in first-use order.
    pub fn tools_used(&self) -> Vec<&str> {
        let mut seen: Vec<&str> = Vec::new();
        for step in &self.steps {
            if let Some(Action::ToolCall { tool, .. }) = &step.action {
                if !seen.contains(&tool.as_str()) {
                    seen.push(tool);
                }
            }
        }
        seen
    }
}
