use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{
    filter_messages, map_messages, sem_filter_execute, sem_map_execute, OpSettings, DEFAULT_FIELD_CHAR_CAP,
};
use crate::llm::{count_tokens, CallKind, LlmClient, ModelSpec, DEFAULT_TEMPERATURE};
use crate::model::{Context, Record, RecordId};
use crate::pipeline::{LogicalOp, LogicalPlan};

/// Selectivity assumed for filters when no sample was taken.
pub const PRIOR_SELECTIVITY: f64 = 0.5;
/// Records inspected (without model calls) to size prompts for priors.
const PRIOR_PROBE: usize = 32;
/// Assumed agent steps for a `compute`/`search` invocation.
const PRIOR_AGENT_STEPS: u64 = 6;
const PRIOR_AGENT_INPUT_TOKENS: u64 = 3000;
const PRIOR_AGENT_OUTPUT_TOKENS: u64 = 150;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpStat {
    /// Filters only.
    pub selectivity: Option<f64>,
    pub quality: f64,
    /// Per record for record-level ops, per invocation for agentic ops.
    pub cost_per_record: f64,
    pub latency_per_record: f64,
    pub sample_size: usize,
}

impl OpStat {
    pub fn check(&self) -> Result<()> {
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.quality) || !self.selectivity.into_iter().all(unit) {
            return Err(Error::Stats("selectivity and quality must lie in [0, 1]".into()));
        }
        if !(self.cost_per_record >= 0.0 && self.latency_per_record >= 0.0) {
            return Err(Error::Stats("cost and latency must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatEntry {
    pub op_index: usize,
    pub model: String,
    #[serde(flatten)]
    pub stat: OpStat,
}

/// Statistics keyed by (op index in the logical plan, model id).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OperatorStats {
    entries: BTreeMap<(usize, String), OpStat>,
}

impl OperatorStats {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, op_index: usize, model: &str, stat: OpStat) -> Result<()> {
        stat.check()?;
        self.entries.insert((op_index, model.to_string()), stat);
        Ok(())
    }

    pub fn get(&self, op_index: usize, model: &str) -> Option<&OpStat> {
        self.entries.get(&(op_index, model.to_string()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> Vec<StatEntry> {
        self.entries
            .iter()
            .map(|((op_index, model), stat)| StatEntry { op_index: *op_index, model: model.clone(), stat: *stat })
            .collect()
    }
}

impl Serialize for OperatorStats {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.entries().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OperatorStats {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let entries = Vec::<StatEntry>::deserialize(d)?;
        Ok(OperatorStats { entries: entries.into_iter().map(|e| ((e.op_index, e.model), e.stat)).collect() })
    }
}

/// Expected labels for filter ops, used to measure quality as observed
/// agreement instead of the catalog prior.
pub type FilterLabels = BTreeMap<usize, BTreeMap<RecordId, bool>>;

fn mean_tokens(messages_for: impl Fn(&Record) -> Vec<crate::llm::ChatMessage>, probe: &[Record]) -> u64 {
    if probe.is_empty() {
        return 200;
    }
    let total: u64 = probe
        .iter()
        .map(|r| {
            let prompt: String = messages_for(r).iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n\n");
            count_tokens(&prompt)
        })
        .sum();
    total.div_ceil(probe.len() as u64)
}

/// Statistics without model calls: catalog quality and latency priors,
/// selectivity [`PRIOR_SELECTIVITY`], and costs from prompt sizes of the
/// first few records.
pub fn prior_stats(plan: &LogicalPlan, ctx: &Context, models: &[ModelSpec]) -> Result<OperatorStats> {
    let probe: Vec<Record> = ctx.iter().take(PRIOR_PROBE).collect::<Result<_>>()?;
    let mut stats = OperatorStats::new();
    for (i, op) in plan.ops().iter().enumerate() {
        let (input, output, selectivity, per_invocation) = match op {
            LogicalOp::SemFilter { predicate } => (
                mean_tokens(|r| filter_messages(r, predicate, DEFAULT_FIELD_CHAR_CAP, false), &probe),
                1,
                Some(PRIOR_SELECTIVITY),
                false,
            ),
            LogicalOp::SemMap { instruction, outputs } => (
                mean_tokens(|r| map_messages(r, instruction, outputs, DEFAULT_FIELD_CHAR_CAP, false), &probe),
                8 * outputs.len() as u64,
                None,
                false,
            ),
            LogicalOp::Compute { .. } | LogicalOp::Search { .. } => {
                (PRIOR_AGENT_INPUT_TOKENS, PRIOR_AGENT_OUTPUT_TOKENS, None, true)
            }
            _ => continue,
        };
        for m in models {
            let calls = if per_invocation { PRIOR_AGENT_STEPS } else { 1 };
            stats.insert(
                i,
                &m.id,
                OpStat {
                    selectivity,
                    quality: m.quality,
                    cost_per_record: calls as f64 * m.call_cost(input, output),
                    latency_per_record: calls as f64 * m.latency_secs,
                    sample_size: 0,
                },
            )?;
        }
    }
    Ok(stats)
}

/// Runs every record-level semantic op on the first `min(k, N)` records
/// under each model. Agentic ops get priors.
pub fn sample_stats(
    client: &LlmClient,
    plan: &LogicalPlan,
    ctx: &Context,
    models: &[ModelSpec],
    k: usize,
    labels: Option<&FilterLabels>,
) -> Result<OperatorStats> {
    if k == 0 {
        return Err(Error::Stats("sample size must be at least 1".into()));
    }
    if ctx.is_empty() {
        return Err(Error::Stats(format!("context {} is empty; nothing to sample", ctx.id())));
    }
    if models.is_empty() {
        return Err(Error::Stats("no candidate models".into()));
    }
    let sample: Vec<Record> = ctx.iter().take(k).collect::<Result<_>>()?;
    let n = sample.len();
    let mut stats = prior_stats(plan, ctx, models)?;
    for (i, op) in plan.ops().iter().enumerate() {
        if !matches!(op, LogicalOp::SemFilter { .. } | LogicalOp::SemMap { .. }) {
            continue;
        }
        for m in models {
            let settings = OpSettings {
                model: m,
                retry_budget: 0,
                field_cap: DEFAULT_FIELD_CHAR_CAP,
                temperature: DEFAULT_TEMPERATURE,
                kind: CallKind::Sampling,
            };
            let mut cost = 0.0;
            let mut latency = 0.0;
            let mut passed = 0usize;
            let mut agree = 0usize;
            let mut labeled = 0usize;
            for r in &sample {
                match op {
                    LogicalOp::SemFilter { predicate } => {
                        let out = sem_filter_execute(client, r, predicate, &settings);
                        cost += out.usage.cost;
                        latency += out.usage.wall_secs;
                        let verdict = match out.value {
                            Ok(v) => v,
                            Err(Error::Operator { .. }) => false,
                            Err(e) => return Err(e),
                        };
                        passed += verdict as usize;
                        if let Some(expected) = labels.and_then(|l| l.get(&i)).and_then(|l| l.get(&r.id)) {
                            labeled += 1;
                            agree += (*expected == verdict) as usize;
                        }
                    }
                    LogicalOp::SemMap { instruction, outputs } => {
                        let out = sem_map_execute(client, r, instruction, outputs, "sample", &settings);
                        cost += out.usage.cost;
                        latency += out.usage.wall_secs;
                        match out.value {
                            Ok(_) | Err(Error::Operator { .. }) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    _ => unreachable!(),
                }
            }
            let quality = if labeled > 0 { agree as f64 / labeled as f64 } else { m.quality };
            stats.insert(
                i,
                &m.id,
                OpStat {
                    selectivity: matches!(op, LogicalOp::SemFilter { .. }).then(|| passed as f64 / n as f64),
                    quality,
                    cost_per_record: cost / n as f64,
                    latency_per_record: latency / n as f64,
                    sample_size: n,
                },
            )?;
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockRule, MockScript, ModelCatalog};
    use crate::model::FieldValue;
    use crate::pipeline::parse_pipeline;
    use std::sync::Arc;

    fn ctx(n: usize) -> Context {
        let recs = (0..n)
            .map(|i| {
                let tag = if i % 4 == 0 { "HIT" } else { "miss" };
                Record::new(format!("r{i}"), vec![("text".to_string(), FieldValue::text(format!("{tag} {i}")))])
                    .unwrap()
            })
            .collect();
        Context::from_records("mem", recs, "sample").unwrap()
    }

    fn client() -> LlmClient {
        let script = MockScript::new().rule(MockRule::contains("text: HIT", "yes")).rule(MockRule::reply("no"));
        LlmClient::new(Arc::new(MockBackend::new(script)), &ModelCatalog::builtin())
    }

    #[test]
    fn selectivity_from_sample() {
        let c = client();
        let plan = parse_pipeline(r#"scan(ctx) | sem_filter("is a hit")"#).unwrap();
        let cat = ModelCatalog::builtin();
        let stats = sample_stats(&c, &plan, &ctx(40), &cat.models()[..1], 20, None).unwrap();
        let s = stats.get(1, "mini").unwrap();
        assert_eq!(s.selectivity, Some(0.25));
        assert_eq!(s.sample_size, 20);
        let snap = c.ledger().snapshot();
        assert_eq!(snap.calls(CallKind::Sampling), 20);
        assert!((s.cost_per_record - snap.total.cost / 20.0).abs() < 1e-15);
    }

    #[test]
    fn k_beyond_n_and_errors() {
        let c = client();
        let plan = parse_pipeline(r#"scan(ctx) | sem_filter("is a hit")"#).unwrap();
        let cat = ModelCatalog::builtin();
        let stats = sample_stats(&c, &plan, &ctx(6), cat.models(), 100, None).unwrap();
        assert_eq!(stats.get(1, "large").unwrap().sample_size, 6);
        assert!(sample_stats(&c, &plan, &ctx(0), cat.models(), 5, None).is_err());
        assert!(sample_stats(&c, &plan, &ctx(5), cat.models(), 0, None).is_err());
    }

    #[test]
    fn labels_override_quality() {
        let c = client();
        let plan = parse_pipeline(r#"scan(ctx) | sem_filter("is a hit")"#).unwrap();
        let cat = ModelCatalog::builtin();
        let mut expected = BTreeMap::new();
        for i in 0..4 {
            // r0 is a hit; claim all four are hits
            expected.insert(RecordId::new(format!("r{i}")), true);
        }
        let labels: FilterLabels = [(1, expected)].into_iter().collect();
        let stats = sample_stats(&c, &plan, &ctx(8), &cat.models()[..1], 4, Some(&labels)).unwrap();
        assert_eq!(stats.get(1, "mini").unwrap().quality, 0.25);
    }

    #[test]
    fn priors_make_no_calls() {
        let c = client();
        let plan = parse_pipeline(r#"scan(ctx) | sem_filter("x") | sem_map("y", {a: text}) | compute("z")"#).unwrap();
        let cat = ModelCatalog::builtin();
        let stats = prior_stats(&plan, &ctx(10), cat.models()).unwrap();
        assert_eq!(stats.len(), 6);
        assert_eq!(stats.get(1, "mini").unwrap().selectivity, Some(PRIOR_SELECTIVITY));
        assert_eq!(stats.get(2, "large").unwrap().quality, 0.95);
        assert_eq!(c.ledger().snapshot().total.calls, 0);
    }
}
