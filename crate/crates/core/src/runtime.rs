//! Wires the optimizer, executor, agent loop and context store together.

use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::agent::{self, Agent, AgentConfig, ComputeResult, PipelineRun, PipelineRunner, SearchResult};
use crate::cache::{augment, ContextEntry, ContextStore, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::exec::{AgenticOps, ExecutionReport, Executor, PhysicalPlan, RunPolicy};
use crate::llm::{HashingEmbedder, LlmClient, ModelSpec, Usage};
use crate::model::Context;
use crate::optimizer::{optimize, OptimizerConfig, OptimizerReport};
use crate::pipeline::{parse_pipeline, validate_plan, LogicalOp, LogicalPlan};

/// A stored context and its similarity to a query.
pub type Match = (ContextEntry, f64);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReuseConfig {
    pub k: usize,
    pub threshold: f64,
}

impl Default for ReuseConfig {
    fn default() -> Self {
        ReuseConfig { k: 3, threshold: DEFAULT_THRESHOLD }
    }
}

/// One optimized and executed pipeline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineLog {
    pub optimizer: OptimizerReport,
    pub plan: String,
    pub report: ExecutionReport,
}

#[derive(Debug)]
pub struct Runtime {
    client: LlmClient,
    models: Vec<ModelSpec>,
    policy: RunPolicy,
    optimizer: OptimizerConfig,
    agent: AgentConfig,
    reuse: ReuseConfig,
    store: Arc<ContextStore>,
    log: Mutex<Vec<PipelineLog>>,
}

impl Runtime {
    /// `models` are the optimizer's candidates; the agent uses
    /// `agent.model`. The store starts in memory.
    pub fn new(client: LlmClient, models: Vec<ModelSpec>, agent: AgentConfig) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::Config("at least one model is required".into()));
        }
        agent.check()?;
        Ok(Runtime {
            client,
            models,
            policy: RunPolicy::default(),
            optimizer: OptimizerConfig::default(),
            agent,
            reuse: ReuseConfig::default(),
            store: Arc::new(ContextStore::in_memory(Arc::new(HashingEmbedder::default()))),
            log: Mutex::new(Vec::new()),
        })
    }

    pub fn with_policy(mut self, policy: RunPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn with_optimizer(mut self, optimizer: OptimizerConfig) -> Self {
        self.optimizer = optimizer;
        self
    }

    pub fn with_reuse(mut self, reuse: ReuseConfig) -> Self {
        self.reuse = reuse;
        self
    }

    pub fn with_store(mut self, store: Arc<ContextStore>) -> Self {
        self.store = store;
        self
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn store(&self) -> &Arc<ContextStore> {
        &self.store
    }

    pub fn policy(&self) -> &RunPolicy {
        &self.policy
    }

    pub fn agent_config(&self) -> &AgentConfig {
        &self.agent
    }

    pub fn optimizer_config(&self) -> &OptimizerConfig {
        &self.optimizer
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    /// Pipelines executed so far, in completion order.
    pub fn pipeline_log(&self) -> Vec<PipelineLog> {
        self.log.lock().expect("pipeline log").clone()
    }

    fn parse_valid(&self, text: &str, ctx: &Context) -> Result<LogicalPlan> {
        let plan = parse_pipeline(text)?;
        let diags = validate_plan(&plan, ctx);
        if !diags.is_empty() {
            let text = diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidPlan(text));
        }
        Ok(plan)
    }

    /// Optimizes without executing.
    pub fn explain(&self, text: &str, ctx: &Arc<Context>) -> Result<(PhysicalPlan, OptimizerReport)> {
        let plan = self.parse_valid(text, ctx)?;
        optimize(&self.client, &plan, ctx, &self.models, &self.optimizer, None)
    }

    /// Parses, optimizes, executes and registers the output context.
    pub fn pipeline(&self, text: &str, ctx: &Arc<Context>) -> Result<PipelineRun> {
        let (physical, optimizer) = self.explain(text, ctx)?;
        let (out, report) = Executor::new(&self.client, &self.policy).with_agentic(self).execute(&physical, ctx)?;
        self.store.register(&out)?;
        self.log.lock().expect("pipeline log").push(PipelineLog {
            optimizer,
            plan: physical.to_string(),
            report: report.clone(),
        });
        Ok(PipelineRun { context: out, report, plan: physical.to_string() })
    }

    fn agent_with<'a>(&'a self, config: &'a AgentConfig) -> Agent<'a> {
        Agent::new(&self.client, config).with_pipelines(self)
    }

    pub fn compute(&self, ctx: &Arc<Context>, instruction: &str) -> Result<ComputeResult> {
        self.compute_with(&self.agent, ctx, instruction)
    }

    pub fn search(&self, ctx: &Arc<Context>, instruction: &str) -> Result<SearchResult> {
        self.search_with(&self.agent, ctx, instruction)
    }

    fn compute_with(&self, config: &AgentConfig, ctx: &Arc<Context>, instruction: &str) -> Result<ComputeResult> {
        let out = agent::compute(&self.agent_with(config), ctx, instruction)?;
        self.store.register(&out.context)?;
        Ok(out)
    }

    fn search_with(&self, config: &AgentConfig, ctx: &Arc<Context>, instruction: &str) -> Result<SearchResult> {
        let out = agent::search(&self.agent_with(config), ctx, instruction)?;
        self.store.register(&out.context)?;
        Ok(out)
    }

    /// Prior contexts similar to `instruction`, folded into `ctx`. Returns
    /// `ctx` itself when nothing qualifies.
    pub fn reuse(&self, ctx: &Arc<Context>, instruction: &str) -> Result<(Arc<Context>, Vec<Match>)> {
        let matches = self
            .store
            .retrieve(instruction, self.reuse.k, self.reuse.threshold)?
            .into_iter()
            .filter(|(e, _)| &e.id != ctx.id())
            .collect::<Vec<_>>();
        Ok((augment(ctx, &matches)?, matches))
    }
}

impl PipelineRunner for Runtime {
    fn run_pipeline(&self, text: &str, ctx: &Arc<Context>) -> Result<PipelineRun> {
        self.pipeline(text, ctx)
    }
}

impl AgenticOps for Runtime {
    fn run_agentic(&self, op: &LogicalOp, input: &Arc<Context>, model: &ModelSpec) -> Result<(Arc<Context>, Usage)> {
        let mut config = self.agent.clone();
        config.model = model.clone();
        match op {
            LogicalOp::Compute { instruction } => {
                let out = self.compute_with(&config, input, instruction)?;
                Ok((out.context, out.trace.total_usage()))
            }
            LogicalOp::Search { instruction } => {
                let out = self.search_with(&config, input, instruction)?;
                Ok((out.context, out.trace.total_usage()))
            }
            other => Err(Error::Validation(format!("`{}` is not an agentic op", other.keyword()))),
        }
    }
}
