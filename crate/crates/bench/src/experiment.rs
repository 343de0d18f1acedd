//! The three execution strategies over a labeled corpus, plus the ratio
//! query scenario.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use ctxrt::agent::{AgentConfig, AgentTrace, ComputeResult};
use ctxrt::exec::{sem_filter_execute, OpSettings, RunPolicy, DEFAULT_FIELD_CHAR_CAP};
use ctxrt::llm::{
    CallKind, LedgerSnapshot, LlmClient, MockBackend, MockRule, MockScript, ModelCatalog, ModelSpec, Usage,
    DEFAULT_TEMPERATURE,
};
use ctxrt::model::{Context, FieldValue, MemorySource, ParamType, ToolOutput, ToolParam, ToolSpec};
use ctxrt::runtime::Runtime;
use ctxrt::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::corpus::{EmailKind, LabeledCorpus, EMAIL_QUERY, ENTITY_PREDICATE, FIRST_HAND_PREDICATE};
use crate::metrics::{metrics, Metrics};
use crate::ratio::{
    RatioCorpus, ANY_COUNTS_PREDICATE, FINAL_COUNTS_PREDICATE, MAP_2001, MAP_2024, MAP_RATIO, RATIO_QUERY,
};

/// Share of relevant emails the basic agent's keyword skim finds.
pub const AGENT_BASIC_HIT_RATE: (usize, usize) = (18, 39);
pub const AGENT_BASIC_FALSE_POSITIVES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Built-in list/read tools only; skims and stops early.
    AgentBasic,
    /// Unoptimized per-record semantic filter tools, run back to back.
    AgentWithSemanticTools,
    /// One optimized pipeline through `run_pipeline`.
    PrototypeCompute,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::AgentBasic, Strategy::AgentWithSemanticTools, Strategy::PrototypeCompute];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::AgentBasic => "agent-basic",
            Strategy::AgentWithSemanticTools => "agent-with-semantic-tools",
            Strategy::PrototypeCompute => "prototype-compute",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenchBackend {
    Mock,
    Live { base_url: String },
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub backend: BenchBackend,
    pub catalog: ModelCatalog,
    /// Model driving the agents and the unoptimized semantic tools.
    pub strong_model: String,
    pub pool_width: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            backend: BenchBackend::Mock,
            catalog: ModelCatalog::builtin(),
            strong_model: "large".into(),
            pool_width: 8,
        }
    }
}

impl BenchConfig {
    pub fn check(&self) -> Result<&ModelSpec> {
        if let BenchBackend::Live { base_url } = &self.backend {
            return Err(Error::Config(format!(
                "benchmarks run on the mock backend only; refusing live provider {base_url}"
            )));
        }
        if self.pool_width == 0 {
            return Err(Error::Config("pool width must be at least 1".into()));
        }
        self.catalog
            .get(&self.strong_model)
            .ok_or_else(|| Error::Config(format!("model `{}` is not in the catalog", self.strong_model)))
    }

    fn runtime(&self, script: MockScript) -> Result<Runtime> {
        let strong = self.check()?.clone();
        let client = LlmClient::new(Arc::new(MockBackend::new(script)), &self.catalog);
        let policy = RunPolicy { pool_width: self.pool_width, ..RunPolicy::default() };
        Ok(Runtime::new(client, self.catalog.models().to_vec(), AgentConfig::new(strong))?.with_policy(policy))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub outcome: String,
    #[serde(flatten)]
    pub metrics: Metrics,
    pub semantic_calls: u64,
    pub agent_calls: u64,
    pub cost: f64,
    /// Simulated from model latency priors and the worker pool.
    pub wall_secs: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StrategyRun {
    pub result: StrategyResult,
    pub returned: Vec<String>,
    pub trace: AgentTrace,
    pub ledger: LedgerSnapshot,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub records: usize,
    pub relevant: usize,
    /// Ground-truth survivors of the first filter.
    pub first_filter_survivors: usize,
    pub runs: Vec<StrategyRun>,
}

impl ExperimentReport {
    pub fn run(&self, strategy: Strategy) -> Option<&StrategyRun> {
        self.runs.iter().find(|r| r.result.strategy == strategy)
    }

    pub fn rows(&self) -> Vec<&StrategyResult> {
        self.runs.iter().map(|r| &r.result).collect()
    }

    /// `N + S`: every record meets the first filter, survivors the second.
    pub fn expected_prototype_calls(&self) -> u64 {
        (self.records + self.first_filter_survivors) as u64
    }

    /// `2N`: both filters see every record.
    pub fn expected_semantic_tools_calls(&self) -> u64 {
        2 * self.records as u64
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "# strategy benchmark: {} emails, {} relevant, seed {}\n\
             # cost is mock-token cost from the model catalog; wall time is simulated from latency priors\n",
            self.records, self.relevant, self.seed
        );
        out.push_str(&format!(
            "{:<26} {:<15} {:>8} {:>9} {:>7} {:>7} {:>9} {:>11} {:>10} {:>9}\n",
            "strategy",
            "outcome",
            "returned",
            "precision",
            "recall",
            "f1",
            "sem_calls",
            "agent_calls",
            "cost",
            "wall_s"
        ));
        for r in self.rows() {
            out.push_str(&format!(
                "{:<26} {:<15} {:>8} {:>9.4} {:>7.4} {:>7.4} {:>9} {:>11} {:>10.6} {:>9.2}\n",
                r.strategy.as_str(),
                r.outcome,
                r.metrics.returned,
                r.metrics.precision,
                r.metrics.recall,
                r.metrics.f1,
                r.semantic_calls,
                r.agent_calls,
                r.cost,
                r.wall_secs
            ));
        }
        out
    }

    pub fn rows_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rows())?)
    }
}

fn fenced(doc: serde_json::Value) -> String {
    format!("```json\n{}\n```", serde_json::to_string_pretty(&doc).expect("json"))
}

/// Like [`fenced`], with the string `"<slot>"` swapped for a raw capture
/// reference such as `${1}`.
fn fenced_with(doc: serde_json::Value, slots: &[(&str, &str)]) -> String {
    let mut text = fenced(doc);
    for (slot, capture) in slots {
        text = text.replace(&format!("\"{slot}\""), capture);
    }
    text
}

fn step_done(step: usize, tool: &str) -> String {
    format!("Observation for step {step} ({tool}):")
}

fn last(needle: impl Into<String>, reply: String) -> MockRule {
    MockRule::contains(needle, reply).last_message()
}

/// Ids the basic agent returns: a prefix of the relevant set plus a couple
/// of keyword look-alikes.
pub fn agent_basic_answer(corpus: &LabeledCorpus) -> Vec<String> {
    let relevant = corpus.ids_of(EmailKind::Relevant);
    let (num, den) = AGENT_BASIC_HIT_RATE;
    let hits = (relevant.len() * num + den / 2) / den;
    let mut ids: Vec<String> = relevant.iter().take(hits).map(|s| s.to_string()).collect();
    ids.extend(corpus.ids_of(EmailKind::Distractor).into_iter().take(AGENT_BASIC_FALSE_POSITIVES).map(String::from));
    ids
}

pub fn agent_basic_script(corpus: &LabeledCorpus) -> MockScript {
    let answer = agent_basic_answer(corpus);
    let mut reads: Vec<String> = answer.iter().take(2).cloned().collect();
    while reads.len() < 2 {
        reads.push(corpus.records[0].id.to_string());
    }
    MockScript::new()
        .rule(last(
            step_done(2, "read_source"),
            fenced(serde_json::json!({
                "thought": "The skim plus two spot checks look right; reporting what I found.",
                "final_answer": format!("Found {} emails about the entities.", answer.len()),
                "value": answer,
            })),
        ))
        .rule(last(
            step_done(1, "read_source"),
            fenced(serde_json::json!({
                "thought": "One more spot check.",
                "tool": "read_source",
                "args": {"id": reads[1]},
            })),
        ))
        .rule(last(
            step_done(0, "list_sources"),
            fenced(serde_json::json!({
                "thought": "Subjects mentioning the entity names look promising; verify a couple.",
                "tool": "read_source",
                "args": {"id": reads[0]},
            })),
        ))
        .rule(last(
            "Instruction: ",
            fenced(serde_json::json!({
                "thought": "List the emails and skim for the entity names.",
                "tool": "list_sources",
                "args": {"limit": corpus.len()},
            })),
        ))
}

pub fn agent_semantic_tools_script() -> Result<MockScript> {
    let ids = r"(\[[^\]]*\])";
    Ok(MockScript::new()
        .rule(
            MockRule::pattern(
                &format!(r"{}\nresult: {ids}", regex_escape(&step_done(2, "intersect"))),
                fenced_with(
                    serde_json::json!({
                        "thought": "These emails pass both filters.",
                        "final_answer": "Emails passing both semantic filters.",
                        "value": "<ids>",
                    }),
                    &[("<ids>", "${1}")],
                ),
            )?
            .last_message(),
        )
        .rule(MockRule::pattern(
            &format!(
                r"(?s){}\nmatches: {ids}.*{}\nmatches: {ids}",
                regex_escape(&step_done(0, "sem_filter")),
                regex_escape(&step_done(1, "sem_filter"))
            ),
            fenced_with(
                serde_json::json!({
                    "thought": "Intersect the two result lists.",
                    "tool": "intersect",
                    "args": {"a": "<a>", "b": "<b>"},
                }),
                &[("<a>", "${1}"), ("<b>", "${2}")],
            ),
        )?)
        .rule(last(
            step_done(0, "sem_filter"),
            fenced(serde_json::json!({
                "thought": "Now the second criterion over every email.",
                "tool": "sem_filter",
                "args": {"predicate": FIRST_HAND_PREDICATE},
            })),
        ))
        .rule(last(
            "Instruction: ",
            fenced(serde_json::json!({
                "thought": "Run the entity filter over every email.",
                "tool": "sem_filter",
                "args": {"predicate": ENTITY_PREDICATE},
            })),
        )))
}

pub fn email_pipeline() -> String {
    format!(
        "scan(emails) | sem_filter({}) | sem_filter({})",
        serde_json::to_string(ENTITY_PREDICATE).expect("json"),
        serde_json::to_string(FIRST_HAND_PREDICATE).expect("json")
    )
}

pub fn prototype_script() -> Result<MockScript> {
    Ok(MockScript::new()
        .rule(
            MockRule::pattern(
                &format!(r"(?s){}.*?record ids: (\[[^\]]*\])", regex_escape(&step_done(0, "run_pipeline"))),
                fenced_with(
                    serde_json::json!({
                        "thought": "The pipeline output is the answer.",
                        "final_answer": "Emails returned by the optimized pipeline.",
                        "value": "<ids>",
                    }),
                    &[("<ids>", "${1}")],
                ),
            )?
            .last_message(),
        )
        .rule(last(
            "Instruction: ",
            fenced(serde_json::json!({
                "thought": "Both criteria are per-email semantic filters; one pipeline covers them.",
                "tool": "run_pipeline",
                "args": {"pipeline": email_pipeline()},
            })),
        )))
}

fn regex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        if "\\.+*?()|[]{}^$#&-~".contains(c) {
            out.push('\\');
        }
        out.push(c);
    }
    out
}

/// Unoptimized tools for the agent-with-semantic-tools strategy: a
/// sequential per-record filter over the whole context, and list intersection.
pub fn semantic_tools(client: LlmClient, model: ModelSpec) -> Vec<ToolSpec> {
    let filter = ToolSpec::new(
        "sem_filter",
        "run a natural-language filter over every record; returns matching ids",
        vec![ToolParam::required("predicate", ParamType::Text)],
        Arc::new(move |ctx: &Context, args| {
            let predicate = match args.get("predicate") {
                Some(FieldValue::Text(p)) => p.clone(),
                _ => return Err("predicate must be text".to_string()),
            };
            let settings = OpSettings {
                model: &model,
                retry_budget: 1,
                field_cap: DEFAULT_FIELD_CHAR_CAP,
                temperature: DEFAULT_TEMPERATURE,
                kind: CallKind::Operator,
            };
            let mut usage = Usage::default();
            let mut matches = Vec::new();
            let mut failures = 0;
            for record in ctx.iter() {
                let record = record.map_err(|e| e.to_string())?;
                let out = sem_filter_execute(&client, &record, &predicate, &settings);
                usage += &out.usage;
                match out.value {
                    Ok(true) => matches.push(record.id.to_string()),
                    Ok(false) => {}
                    Err(e) if e.category() == "backend-error" => return Err(e.to_string()),
                    Err(_) => failures += 1,
                }
            }
            Ok(ToolOutput {
                text: format!(
                    "matches: {}\ncount: {} of {}, failures: {failures}\n",
                    serde_json::to_string(&matches).expect("json"),
                    matches.len(),
                    ctx.len()
                ),
                usage,
                ..ToolOutput::default()
            })
        }),
    );
    let intersect = ToolSpec::new(
        "intersect",
        "items of list a that also appear in list b, in a's order",
        vec![ToolParam::required("a", ParamType::List), ToolParam::required("b", ParamType::List)],
        Arc::new(|_: &Context, args| {
            let list = |k: &str| match args.get(k) {
                Some(FieldValue::List(v)) => Ok(v.iter().map(|x| x.to_string()).collect::<Vec<_>>()),
                _ => Err(format!("{k} must be a list")),
            };
            let (a, b) = (list("a")?, list("b")?);
            let b: BTreeSet<&String> = b.iter().collect();
            let out: Vec<&String> = a.iter().filter(|x| b.contains(x)).collect();
            Ok(ToolOutput::text(format!("result: {}\n", serde_json::to_string(&out).expect("json"))))
        }),
    );
    vec![filter, intersect]
}

fn returned_ids(value: Option<&FieldValue>) -> Vec<String> {
    match value {
        Some(FieldValue::List(items)) => items.iter().map(|v| v.to_string()).collect(),
        _ => Vec::new(),
    }
}

fn email_context(corpus: &LabeledCorpus, tools: Vec<ToolSpec>) -> Result<Arc<Context>> {
    let source = MemorySource::new("emails", corpus.records.clone())?;
    let description =
        format!("{} internal emails with fields message_id, sender, date, subject and text.", corpus.len());
    Ok(Arc::new(Context::create(Arc::new(source), description, None, tools)?.with_name("emails")))
}

/// Outcome category and trace of a compute run, failed or not.
fn settle(run: Result<ComputeResult>) -> Result<(String, AgentTrace)> {
    match run {
        Ok(out) => Ok((out.trace.outcome.category().to_string(), out.trace)),
        Err(Error::Compute { trace }) => Ok((trace.outcome.category().to_string(), *trace)),
        Err(e) => Err(e),
    }
}

fn run_strategy(corpus: &LabeledCorpus, strategy: Strategy, config: &BenchConfig) -> Result<StrategyRun> {
    let mut script = match strategy {
        Strategy::AgentBasic => agent_basic_script(corpus),
        Strategy::AgentWithSemanticTools => agent_semantic_tools_script()?,
        Strategy::PrototypeCompute => prototype_script()?,
    };
    script.extend(corpus.script.clone());
    let rt = config.runtime(script)?;
    let tools = match strategy {
        Strategy::AgentWithSemanticTools => semantic_tools(rt.client().clone(), rt.agent_config().model.clone()),
        _ => Vec::new(),
    };
    let ctx = email_context(corpus, tools)?;
    let (outcome, trace) = settle(rt.compute(&ctx, EMAIL_QUERY))?;
    let returned = returned_ids(trace.value.as_ref());
    let ledger = rt.client().ledger().snapshot();
    let pipelines: f64 = rt.pipeline_log().iter().map(|p| p.report.elapsed_secs).sum();
    let wall_secs = match strategy {
        Strategy::PrototypeCompute => trace.usage.wall_secs + pipelines,
        _ => trace.usage.wall_secs + trace.tool_usage.wall_secs,
    };
    let result = StrategyResult {
        strategy,
        outcome,
        metrics: metrics(&returned, &corpus.relevant),
        semantic_calls: ledger.calls(CallKind::Operator) + ledger.calls(CallKind::Sampling),
        agent_calls: ledger.calls(CallKind::Agent),
        cost: ledger.total.cost,
        wall_secs,
    };
    Ok(StrategyRun { result, returned, trace, ledger })
}

/// Runs `strategies` one after another, each on a fresh mock backend and
/// ledger.
pub fn run_experiment(
    corpus: &LabeledCorpus,
    strategies: &[Strategy],
    config: &BenchConfig,
) -> Result<ExperimentReport> {
    config.check()?;
    if corpus.is_empty() {
        return Err(Error::Validation("corpus is empty".into()));
    }
    let runs = strategies.iter().map(|s| run_strategy(corpus, *s, config)).collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        seed: corpus.seed,
        records: corpus.len(),
        relevant: corpus.relevant.len(),
        first_filter_survivors: corpus.passes_entity.len(),
        runs,
    })
}

pub fn ratio_pipeline(map_instruction: &str, field: &str, predicate: &str) -> String {
    format!(
        "scan(stats) | sem_filter({}) | sem_map({}, {{{field}: number}})",
        serde_json::to_string(predicate).expect("json"),
        serde_json::to_string(map_instruction).expect("json")
    )
}

pub fn ratio_prototype_script() -> Result<MockScript> {
    Ok(MockScript::new()
        .rule(
            MockRule::pattern(
                &format!(r"{}\n(\S+)", regex_escape(&step_done(2, "evaluate"))),
                fenced_with(
                    serde_json::json!({
                        "thought": "Done.",
                        "final_answer": "The 2024 to 2001 ratio of identity theft reports.",
                        "value": "<ratio>",
                    }),
                    &[("<ratio>", "${1}")],
                ),
            )?
            .last_message(),
        )
        .rule(
            MockRule::pattern(
                r"(?s)count_2024: (\d+).*count_2001: (\d+)",
                fenced(serde_json::json!({
                    "thought": "Divide the two counts.",
                    "tool": "evaluate",
                    "args": {"expression": "${1} / ${2}"},
                })),
            )?
            .and_contains(step_done(1, "run_pipeline")),
        )
        .rule(last(
            step_done(0, "run_pipeline"),
            fenced(serde_json::json!({
                "thought": "Now the 2001 count.",
                "tool": "run_pipeline",
                "args": {"pipeline": ratio_pipeline(MAP_2001, "count_2001", FINAL_COUNTS_PREDICATE)},
            })),
        ))
        .rule(last(
            "Instruction: ",
            fenced(serde_json::json!({
                "thought": "Find the file with final yearly counts and extract 2024.",
                "tool": "run_pipeline",
                "args": {"pipeline": ratio_pipeline(MAP_2024, "count_2024", FINAL_COUNTS_PREDICATE)},
            })),
        )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioReport {
    pub planted_ratio: f64,
    pub prototype_outcome: String,
    pub prototype_answer: Option<f64>,
    /// `100 * |answer - planted| / planted`.
    pub percent_error: Option<f64>,
    /// One ratio per record the semantic-operator-only plan returned.
    pub semantic_only_ratios: Vec<f64>,
    pub prototype_trace: AgentTrace,
    pub prototype_ledger: LedgerSnapshot,
    pub semantic_only_ledger: LedgerSnapshot,
}

impl RatioReport {
    pub fn table(&self) -> String {
        let answer = self.prototype_answer.map_or("none".to_string(), |a| format!("{a}"));
        let error = self.percent_error.map_or("n/a".to_string(), |e| format!("{e:.4}%"));
        let ratios: Vec<String> = self.semantic_only_ratios.iter().map(|r| format!("{r}")).collect();
        format!(
            "# ratio query: planted ratio {}\n{:<20} {:<10} {}\n{:<20} {:<10} {} (error {error})\n{:<20} {:<10} [{}]\n",
            self.planted_ratio,
            "strategy",
            "outcome",
            "answer",
            "prototype-compute",
            self.prototype_outcome,
            answer,
            "semantic-ops-only",
            "ok",
            ratios.join(", ")
        )
    }
}

fn stats_context(corpus: &RatioCorpus) -> Result<Arc<Context>> {
    let source = MemorySource::new("stats", corpus.records.clone())?;
    let description = format!("{} statistics files with fields path and text.", corpus.records.len());
    Ok(Arc::new(Context::create(Arc::new(source), description, None, Vec::new())?.with_name("stats")))
}

pub fn run_ratio_experiment(corpus: &RatioCorpus, config: &BenchConfig) -> Result<RatioReport> {
    config.check()?;
    let planted = RatioCorpus::planted_ratio();

    let mut script = ratio_prototype_script()?;
    script.extend(corpus.script.clone());
    let rt = config.runtime(script)?;
    let (outcome, trace) = settle(rt.compute(&stats_context(corpus)?, RATIO_QUERY))?;
    let answer = match &trace.value {
        Some(FieldValue::Number(v)) => Some(*v),
        _ => None,
    };
    let prototype_ledger = rt.client().ledger().snapshot();

    let rt = config.runtime(corpus.script.clone())?;
    let run = rt.pipeline(&ratio_pipeline(MAP_RATIO, "ratio", ANY_COUNTS_PREDICATE), &stats_context(corpus)?)?;
    let semantic_only_ratios = run
        .context
        .records()?
        .iter()
        .filter_map(|r| match r.get("ratio") {
            Some(FieldValue::Number(v)) => Some(*v),
            _ => None,
        })
        .collect();

    Ok(RatioReport {
        planted_ratio: planted,
        prototype_outcome: outcome,
        prototype_answer: answer,
        percent_error: answer.map(|a| 100.0 * (a - planted).abs() / planted),
        semantic_only_ratios,
        prototype_trace: trace,
        prototype_ledger,
        semantic_only_ledger: rt.client().ledger().snapshot(),
    })
}
