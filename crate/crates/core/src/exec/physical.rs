use std::fmt;

use serde::{Deserialize, Serialize};

use super::prompt::PROMPT_STRATEGY_V1;
use crate::error::{Error, Result};
use crate::llm::ModelSpec;
use crate::pipeline::{LogicalOp, LogicalPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalOp {
    pub op: LogicalOp,
    pub model: Option<ModelSpec>,
    pub prompt_strategy: String,
    pub retry_budget: u32,
}

/// A logical plan with a model bound to every semantic op.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPlan {
    id: String,
    logical: LogicalPlan,
    ops: Vec<PhysicalOp>,
}

pub const DEFAULT_RETRY_BUDGET: u32 = 1;

impl PhysicalPlan {
    /// Binds `models[j]` to the j-th semantic op of `logical`.
    pub fn bind(logical: &LogicalPlan, models: &[ModelSpec], retry_budget: u32) -> Result<Self> {
        let positions = logical.semantic_positions();
        if positions.len() != models.len() {
            return Err(Error::InvalidPlan(format!(
                "plan has {} semantic ops but {} models were given",
                positions.len(),
                models.len()
            )));
        }
        let mut models = models.iter();
        let ops = logical
            .ops()
            .iter()
            .map(|op| PhysicalOp {
                op: op.clone(),
                model: op.is_semantic().then(|| models.next().cloned()).flatten(),
                prompt_strategy: PROMPT_STRATEGY_V1.to_string(),
                retry_budget: if op.is_semantic() { retry_budget } else { 0 },
            })
            .collect::<Vec<_>>();
        let assignment =
            ops.iter().filter_map(|p| p.model.as_ref().map(|m| m.id.as_str())).collect::<Vec<_>>().join(",");
        Ok(PhysicalPlan { id: format!("{}[{assignment}]", logical.id()), logical: logical.clone(), ops })
    }

    /// Same model for every semantic op.
    pub fn uniform(logical: &LogicalPlan, model: &ModelSpec, retry_budget: u32) -> Result<Self> {
        let n = logical.semantic_positions().len();
        Self::bind(logical, &vec![model.clone(); n], retry_budget)
    }

    /// `<logical id>[model,model,...]`.
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn logical(&self) -> &LogicalPlan {
        &self.logical
    }

    pub fn ops(&self) -> &[PhysicalOp] {
        &self.ops
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.ops.iter().filter_map(|p| p.model.as_ref().map(|m| m.id.as_str())).collect()
    }

    pub fn with_retry_budget(mut self, retry_budget: u32) -> Self {
        for op in &mut self.ops {
            if op.op.is_semantic() {
                op.retry_budget = retry_budget;
            }
        }
        self
    }
}

impl fmt::Display for PhysicalPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts = self
            .ops
            .iter()
            .map(|p| match &p.model {
                Some(m) => format!("{}@{}", p.op, m.id),
                None => p.op.to_string(),
            })
            .collect::<Vec<_>>();
        f.write_str(&parts.join(" | "))
    }
}
