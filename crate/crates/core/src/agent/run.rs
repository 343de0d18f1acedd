use std::sync::Arc;

use super::action::{parse_action, Action};
use super::tools::{builtin_tools, check_args, run_builtin, PipelineRunner, RunContexts};
use super::{AbortReason, AgentConfig, AgentStep, AgentTrace, Outcome, BUILTIN_TOOL_NAMES};
use crate::error::{Error, Result};
use crate::llm::{CallKind, ChatMessage, LlmClient, Usage};
use crate::model::{Context, OperatorKind, ToolOutput, ToolSpec};

pub const SYSTEM_PROMPT_VERSION: &str = "agent-v1";

const ACTION_FORMAT: &str = "Reply with exactly one fenced ```json block containing one object, either\n\
{\"thought\": \"<reasoning>\", \"tool\": \"<tool name>\", \"args\": {<arguments>}}\n\
or, when you are done,\n\
{\"thought\": \"<reasoning>\", \"final_answer\": \"<answer>\", \"value\": <optional number, text or list>}\n\
Tool results arrive in the next message as an observation.";

/// System prompt: task, context description, tool catalog and the action
/// format.
pub fn system_prompt(operator: OperatorKind, instruction: &str, ctx: &Context, tools: &[ToolSpec]) -> String {
    let goal = match operator {
        OperatorKind::Search => {
            "Search the context for information relevant to the instruction. Put your findings in the final answer."
        }
        _ => "Compute the output the instruction asks for. Put the result in the final answer.",
    };
    let catalog = tools.iter().map(|t| format!("- {}", t.signature())).collect::<Vec<_>>().join("\n");
    format!(
        "You are a data analysis agent working over a described collection of records (a context).\n\
{goal}\n\n\
TASK ({operator}): {instruction}\n\n\
CONTEXT `{}` (id {}, {} records):\n{}\n\n\
TOOLS:\n{catalog}\n\n\
ACTION FORMAT:\n{ACTION_FORMAT}",
        ctx.name(),
        ctx.id(),
        ctx.len(),
        ctx.description(),
    )
}

fn truncate_observation(text: &str, cap: usize) -> String {
    let total = text.chars().count();
    if total <= cap {
        return text.to_string();
    }
    let marker_budget = 48;
    let keep = cap.saturating_sub(marker_budget);
    let head = keep / 2;
    let tail = keep - head;
    let dropped = total - head - tail;
    let head_text: String = text.chars().take(head).collect();
    let tail_text: String = text.chars().skip(total - tail).collect();
    format!("{head_text}\n...[{dropped} characters truncated]...\n{tail_text}")
}

/// One agent bound to a client, a configuration and an optional pipeline
/// runner for the `run_pipeline` tool.
pub struct Agent<'a> {
    client: &'a LlmClient,
    config: &'a AgentConfig,
    pipelines: Option<&'a dyn PipelineRunner>,
}

impl<'a> Agent<'a> {
    pub fn new(client: &'a LlmClient, config: &'a AgentConfig) -> Self {
        Agent { client, config, pipelines: None }
    }

    pub fn with_pipelines(mut self, runner: &'a dyn PipelineRunner) -> Self {
        self.pipelines = Some(runner);
        self
    }

    pub fn config(&self) -> &AgentConfig {
        self.config
    }

    /// Runs the loop until a final answer, the step limit, or an abort.
    /// Only configuration problems are returned as errors; every other
    /// failure is recorded in the trace outcome.
    pub fn run(&self, operator: OperatorKind, instruction: &str, ctx: &Arc<Context>) -> Result<AgentTrace> {
        self.config.check()?;
        if instruction.trim().is_empty() {
            return Err(Error::Validation("instruction is empty".into()));
        }
        if let Some(clash) = ctx.tools().iter().find(|t| BUILTIN_TOOL_NAMES.contains(&t.name.as_str())) {
            return Err(Error::Config(format!("context tool `{}` shadows a built-in tool", clash.name)));
        }
        let mut registry = builtin_tools();
        registry.extend(ctx.tools().iter().cloned());

        let mut history = vec![
            ChatMessage::system(system_prompt(operator, instruction, ctx, &registry)),
            ChatMessage::user(format!("Instruction: {instruction}")),
        ];
        let mut trace = AgentTrace {
            operator,
            instruction: instruction.to_string(),
            context_id: ctx.id().clone(),
            model: self.config.model.id.clone(),
            steps: Vec::new(),
            outcome: Outcome::StepLimit,
            answer: None,
            value: None,
            usage: Usage::default(),
            tool_usage: Usage::default(),
            derived_contexts: Vec::new(),
            pipeline_ids: Vec::new(),
        };
        let mut contexts = RunContexts { contexts: vec![ctx.clone()] };

        for index in 0..self.config.max_steps {
            let mut step = AgentStep {
                index,
                thought: String::new(),
                action: None,
                observation: String::new(),
                reasks: 0,
                usage: Usage::default(),
                tool_usage: Usage::default(),
            };
            let mut correction: Option<(String, String)> = None;
            let parsed = loop {
                let mut messages = history.clone();
                if let Some((bad, problem)) = &correction {
                    messages.push(ChatMessage::assistant(bad.clone()));
                    messages.push(ChatMessage::user(format!(
                        "Your reply could not be parsed: {problem}. Reply again with exactly one fenced ```json action block."
                    )));
                }
                let reply =
                    match self.client.chat(&self.config.model, &messages, self.config.temperature, CallKind::Agent) {
                        Ok(r) => r,
                        Err(e) => {
                            step.observation = format!("error: {e}");
                            trace.outcome = Outcome::Aborted(AbortReason::Backend {
                                category: e.category().to_string(),
                                message: e.to_string(),
                            });
                            return Ok(finish(trace, step));
                        }
                    };
                step.usage += &reply.usage;
                trace.usage += &reply.usage;
                if let Some(outcome) = self.over_budget(&trace) {
                    step.observation = "error: cost budget exhausted".into();
                    trace.outcome = outcome;
                    return Ok(finish(trace, step));
                }
                match parse_action(&reply.text) {
                    Ok(p) => break (reply.text, p),
                    Err(problem) => {
                        if step.reasks >= self.config.max_reasks {
                            step.observation = format!("error: could not parse action: {problem}");
                            trace.outcome = Outcome::Aborted(AbortReason::UnparseableAction { message: problem });
                            return Ok(finish(trace, step));
                        }
                        step.reasks += 1;
                        correction = Some((reply.text, problem));
                    }
                }
            };
            let (raw, parsed) = parsed;
            step.thought = parsed.thought;
            match parsed.action {
                Action::FinalAnswer { answer, value } => {
                    step.observation = "final answer recorded".into();
                    step.action = Some(Action::FinalAnswer { answer: answer.clone(), value: value.clone() });
                    trace.answer = Some(answer);
                    trace.value = value;
                    trace.outcome = Outcome::Answered;
                    return Ok(finish(trace, step));
                }
                Action::ToolCall { tool, args } => {
                    let result = match registry.iter().find(|t| t.name == tool) {
                        None => Err(format!(
                            "unknown tool `{tool}`; available: {}",
                            registry.iter().map(|t| t.name.as_str()).collect::<Vec<_>>().join(", ")
                        )),
                        Some(spec) => check_args(spec, &args).and_then(|()| {
                            if BUILTIN_TOOL_NAMES.contains(&tool.as_str()) {
                                run_builtin(&tool, &args, &mut contexts, self.pipelines)
                            } else {
                                (spec.handler)(ctx, &args)
                            }
                        }),
                    };
                    let text = match result {
                        Ok(ToolOutput { text, usage, derived_contexts, pipeline_ids }) => {
                            step.tool_usage += &usage;
                            trace.tool_usage += &usage;
                            for id in derived_contexts {
                                if !trace.derived_contexts.contains(&id) {
                                    trace.derived_contexts.push(id);
                                }
                            }
                            trace.pipeline_ids.extend(pipeline_ids);
                            text
                        }
                        Err(message) => format!("error: {message}"),
                    };
                    step.observation = truncate_observation(&text, self.config.observation_cap);
                    step.action = Some(Action::ToolCall { tool: tool.clone(), args });
                    history.push(ChatMessage::assistant(raw));
                    history.push(ChatMessage::user(format!(
                        "Observation for step {index} ({tool}):\n{}",
                        step.observation
                    )));
                    trace.steps.push(step);
                    if let Some(outcome) = self.over_budget(&trace) {
                        trace.outcome = outcome;
                        return Ok(trace);
                    }
                }
            }
        }
        trace.outcome = Outcome::StepLimit;
        Ok(trace)
    }

    fn over_budget(&self, trace: &AgentTrace) -> Option<Outcome> {
        let budget = self.config.cost_budget?;
        let spent = trace.total_usage().cost;
        (spent > budget).then_some(Outcome::Aborted(AbortReason::Budget { spent, budget }))
    }
}

fn finish(mut trace: AgentTrace, step: AgentStep) -> AgentTrace {
    trace.steps.push(step);
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockRule, MockScript, ModelCatalog};
    use crate::model::{FieldValue, Record};

    fn ctx() -> Arc<Context> {
        let recs = (0..3)
            .map(|i| {
                Record::new(format!("f{i}"), vec![("path".to_string(), FieldValue::text(format!("file{i}.txt")))])
                    .unwrap()
            })
            .collect();
        Arc::new(Context::from_records("mem", recs, "three files").unwrap())
    }

    fn agent_run(script: MockScript, max_steps: usize) -> AgentTrace {
        let cat = ModelCatalog::builtin();
        let client = LlmClient::new(Arc::new(MockBackend::new(script)), &cat);
        let mut config = AgentConfig::new(cat.get("mini").unwrap().clone());
        config.max_steps = max_steps;
        Agent::new(&client, &config).run(OperatorKind::Compute, "how many files?", &ctx()).unwrap()
    }

    #[test]
    fn list_then_answer() {
        let script = MockScript::new()
            .rule(
                MockRule::contains(
                    "Observation for step 0 (list_sources)",
                    "```json\n{\"thought\": \"three\", \"final_answer\": \"3 files\", \"value\": 3}\n```",
                )
                .last_message(),
            )
            .rule(
                MockRule::contains("Instruction:", "```json\n{\"thought\": \"look\", \"tool\": \"list_sources\"}\n```")
                    .last_message(),
            );
        let trace = agent_run(script, 12);
        assert_eq!(trace.steps.len(), 2);
        assert_eq!(trace.outcome, Outcome::Answered);
        assert_eq!(trace.answer.as_deref(), Some("3 files"));
        assert_eq!(trace.value, Some(FieldValue::Number(3.0)));
        assert!(trace.steps[0].observation.contains("file2.txt"));
        assert_eq!(trace.usage.calls, 2);
    }

    #[test]
    fn gibberish_aborts_after_two_reasks() {
        let trace = agent_run(MockScript::new().rule(MockRule::reply("I am not sure.")), 12);
        assert_eq!(trace.steps.len(), 1);
        assert_eq!(trace.steps[0].reasks, 2);
        assert_eq!(trace.usage.calls, 3);
        assert!(matches!(trace.outcome, Outcome::Aborted(AbortReason::UnparseableAction { .. })));
        assert_eq!(trace.outcome.category(), "agent-error");
    }

    #[test]
    fn step_limit() {
        let script = MockScript::new()
            .rule(MockRule::reply("```json\n{\"tool\": \"evaluate\", \"args\": {\"expression\": \"1+1\"}}\n```"));
        let trace = agent_run(script, 4);
        assert_eq!(trace.steps.len(), 4);
        assert_eq!(trace.outcome, Outcome::StepLimit);
        assert!(trace.steps.iter().enumerate().all(|(i, s)| s.index == i));
    }

    #[test]
    fn tool_errors_become_observations() {
        let script = MockScript::new()
            .rule(
                MockRule::contains("error: unknown source id", "```json\n{\"final_answer\": \"gave up\"}\n```")
                    .last_message(),
            )
            .rule(MockRule::reply("```json\n{\"tool\": \"read_source\", \"args\": {\"id\": \"nope\"}}\n```"));
        let trace = agent_run(script, 12);
        assert_eq!(trace.outcome, Outcome::Answered);
        assert!(trace.steps[0].observation.starts_with("error: unknown source id"));
    }

    #[test]
    fn truncation_keeps_head_and_tail() {
        let long = format!("HEAD{}TAIL", "x".repeat(20_000));
        let t = truncate_observation(&long, 8000);
        assert!(t.chars().count() <= 8000);
        assert!(t.starts_with("HEAD") && t.ends_with("TAIL"));
        assert_eq!(truncate_observation("short", 8000), "short");
    }
}
