use std::sync::Arc;

use super::{Action, Agent, AgentTrace, Outcome};
use crate::error::{Error, Result};
use crate::model::{Context, FieldValue, OperatorKind};

const FINDING_CAP: usize = 200;

#[derive(Debug, Clone)]
pub struct ComputeResult {
    pub answer: String,
    pub value: Option<FieldValue>,
    pub context: Arc<Context>,
    pub trace: AgentTrace,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub context: Arc<Context>,
    /// True when the agent hit its step limit before answering.
    pub partial: bool,
    pub trace: AgentTrace,
}

fn list_or_none(items: &[&str]) -> String {
    if items.is_empty() {
        "none".to_string()
    } else {
        items.join(", ")
    }
}

/// Runs the agent to produce a specific output. The derived context shares
/// the parent's records and appends a summary block to its description.
pub fn compute(agent: &Agent<'_>, ctx: &Arc<Context>, instruction: &str) -> Result<ComputeResult> {
    let trace = agent.run(OperatorKind::Compute, instruction, ctx)?;
    if trace.outcome != Outcome::Answered {
        return Err(Error::Compute { trace: Box::new(trace) });
    }
    let answer = trace.answer.clone().unwrap_or_default();
    let mut block = format!("\n\n## compute: {instruction}\nanswer: {answer}\n");
    if let Some(v) = &trace.value {
        block.push_str(&format!("value: {}\n", v.to_json()));
    }
    let pipelines: Vec<&str> = trace.pipeline_ids.iter().map(String::as_str).collect();
    block.push_str(&format!("tools used: {}\n", list_or_none(&trace.tools_used())));
    block.push_str(&format!("pipelines: {}\n", list_or_none(&pipelines)));
    let description = format!("{}{block}", ctx.description());
    let derived = Context::derive(ctx, instruction, description, OperatorKind::Compute, None)?;
    Ok(ComputeResult { answer, value: trace.value.clone(), context: Arc::new(derived), trace })
}

/// Runs the agent to gather findings. A step-limit run still yields a
/// context, marked partial; aborted runs fail.
pub fn search(agent: &Agent<'_>, ctx: &Arc<Context>, instruction: &str) -> Result<SearchResult> {
    let trace = agent.run(OperatorKind::Search, instruction, ctx)?;
    let partial = match trace.outcome {
        Outcome::Answered => false,
        Outcome::StepLimit => true,
        Outcome::Aborted(_) => return Err(Error::Search { trace: Box::new(trace) }),
    };
    let mut block = format!(
        "\n\n## search findings: {instruction}{}\n",
        if partial { " (partial: step limit reached)" } else { "" }
    );
    match &trace.answer {
        Some(a) => block.push_str(&format!("{a}\n")),
        None => block.push_str("no final answer\n"),
    }
    let observed: Vec<String> = trace
        .steps
        .iter()
        .filter_map(|s| match &s.action {
            Some(Action::ToolCall { tool, .. }) => {
                let first = s.observation.lines().next().unwrap_or("");
                let first: String = first.chars().take(FINDING_CAP).collect();
                Some(format!("- step {} {tool}: {first}\n", s.index))
            }
            _ => None,
        })
        .collect();
    if !observed.is_empty() {
        block.push_str("observations:\n");
        for line in observed {
            block.push_str(&line);
        }
    }
    let description = format!("{}{block}", ctx.description());
    let derived = Context::derive(ctx, instruction, description, OperatorKind::Search, None)?;
    Ok(SearchResult { context: Arc::new(derived), partial, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::AgentConfig;
    use crate::llm::{LlmClient, MockBackend, MockRule, MockScript, ModelCatalog};
    use crate::model::Record;

    fn setup(script: MockScript) -> (LlmClient, AgentConfig, Arc<Context>) {
        let cat = ModelCatalog::builtin();
        let client = LlmClient::new(Arc::new(MockBackend::new(script)), &cat);
        let mut config = AgentConfig::new(cat.get("large").unwrap().clone());
        config.max_steps = 3;
        let recs = vec![Record::new("r", vec![("text".to_string(), FieldValue::text("hello"))]).unwrap()];
        let ctx = Arc::new(Context::from_records("mem", recs, "greeting corpus").unwrap());
        (client, config, ctx)
    }

    #[test]
    fn compute_answer_without_tools() {
        let (client, config, ctx) = setup(
            MockScript::new().rule(MockRule::reply("```json\n{\"final_answer\": \"one record\", \"value\": 1}\n```")),
        );
        let agent = Agent::new(&client, &config);
        let out = compute(&agent, &ctx, "count records").unwrap();
        assert_eq!(out.answer, "one record");
        let d = out.context.description();
        assert!(d.starts_with(ctx.description()));
        assert!(d.contains("answer: one record"));
        assert!(d.contains("pipelines: none"));
        assert_eq!(out.context.parent_id(), Some(ctx.id()));
        assert_eq!(out.context.len(), 1);
    }

    #[test]
    fn compute_step_limit_is_an_error() {
        let (client, config, ctx) =
            setup(MockScript::new().rule(MockRule::reply("```json\n{\"tool\": \"list_sources\"}\n```")));
        let agent = Agent::new(&client, &config);
        let err = compute(&agent, &ctx, "count").unwrap_err();
        assert_eq!(err.category(), "step-limit");
        match err {
            Error::Compute { trace } => assert_eq!(trace.steps.len(), 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn search_partial_and_aborted() {
        let (client, config, ctx) =
            setup(MockScript::new().rule(MockRule::reply("```json\n{\"tool\": \"list_sources\"}\n```")));
        let agent = Agent::new(&client, &config);
        let out = search(&agent, &ctx, "find greetings").unwrap();
        assert!(out.partial);
        assert!(out.context.description().contains("(partial: step limit reached)"));
        assert!(out.context.description().contains("- step 0 list_sources: contexts:"));

        let (client, config, ctx) = setup(MockScript::new().rule(MockRule::reply("???")));
        let agent = Agent::new(&client, &config);
        let err = search(&agent, &ctx, "find").unwrap_err();
        assert!(matches!(err, Error::Search { .. }));
    }
}
