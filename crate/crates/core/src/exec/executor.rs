use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::operators::{sem_filter_execute, sem_map_execute, OpOutcome, OpSettings};
use super::physical::{PhysicalOp, PhysicalPlan};
use super::prompt::DEFAULT_FIELD_CHAR_CAP;
use crate::error::{Error, Result};
use crate::llm::{CallKind, LlmClient, ModelSpec, Usage, DEFAULT_TEMPERATURE};
use crate::model::{Context, FieldValue, OperatorKind, Record, RecordId};
use crate::pipeline::{validate_plan, LogicalOp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum FailurePolicy {
    /// Drop records whose operator fails, up to `floor(fraction * N)`
    /// failures where N is the input size; beyond that the run aborts.
    DropAndLog {
        max_failure_fraction: f64,
    },
    Abort,
}

impl Default for FailurePolicy {
    fn default() -> Self {
        FailurePolicy::DropAndLog { max_failure_fraction: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunPolicy {
    pub failure: FailurePolicy,
    /// Max concurrent model calls within one operator.
    pub pool_width: usize,
    pub field_char_cap: usize,
    pub temperature: f64,
    /// Abort once cumulative spend exceeds this (checked between chunks).
    pub cost_budget: Option<f64>,
}

impl Default for RunPolicy {
    fn default() -> Self {
        RunPolicy {
            failure: FailurePolicy::default(),
            pool_width: 8,
            field_char_cap: DEFAULT_FIELD_CHAR_CAP,
            temperature: DEFAULT_TEMPERATURE,
            cost_budget: None,
        }
    }
}

/// Executes `compute` and `search` ops embedded in a pipeline.
pub trait AgenticOps {
    fn run_agentic(&self, op: &LogicalOp, input: &Arc<Context>, model: &ModelSpec) -> Result<(Arc<Context>, Usage)>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OpReport {
    pub index: usize,
    pub op: String,
    pub model: Option<String>,
    pub records_in: u64,
    pub records_out: u64,
    pub failures: u64,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedRecord {
    pub op_index: usize,
    pub record_id: RecordId,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionReport {
    pub plan_id: String,
    pub canonical: String,
    pub input_context: String,
    pub output_context: String,
    pub records_in: u64,
    pub records_out: u64,
    pub ops: Vec<OpReport>,
    pub failed_records: Vec<FailedRecord>,
    /// Sum over ops. Wall time is the sum of per-call latencies divided
    /// across each chunk's concurrent calls.
    pub total: Usage,
    /// Simulated elapsed time, accounting for the worker pool.
    pub elapsed_secs: f64,
}

impl ExecutionReport {
    pub fn semantic_calls(&self) -> u64 {
        self.ops.iter().map(|o| o.usage.calls).sum()
    }
}

struct RunState {
    failures: usize,
    allowed_failures: usize,
    spent: f64,
    elapsed: f64,
    failed: Vec<FailedRecord>,
}

/// Streams records through a physical plan.
///
/// Records are pulled in chunks no larger than the worker pool and no larger
/// than any downstream limit still needs, so a limit never causes a record to
/// be sent to a model and then discarded. A record rejected by a filter is not
/// seen by any later op.
pub struct Executor<'a> {
    client: &'a LlmClient,
    policy: &'a RunPolicy,
    agentic: Option<&'a dyn AgenticOps>,
}

impl<'a> Executor<'a> {
    pub fn new(client: &'a LlmClient, policy: &'a RunPolicy) -> Self {
        Executor { client, policy, agentic: None }
    }

    pub fn with_agentic(mut self, agentic: &'a dyn AgenticOps) -> Self {
        self.agentic = Some(agentic);
        self
    }

    pub fn execute(&self, plan: &PhysicalPlan, input: &Arc<Context>) -> Result<(Arc<Context>, ExecutionReport)> {
        let diags = validate_plan(plan.logical(), input);
        if !diags.is_empty() {
            let text = diags.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
            return Err(Error::InvalidPlan(text));
        }
        if self.policy.pool_width == 0 {
            return Err(Error::Validation("pool width must be at least 1".into()));
        }

        let n_in = input.len();
        let allowed_failures = match self.policy.failure {
            FailurePolicy::DropAndLog { max_failure_fraction } => {
                (max_failure_fraction.max(0.0) * n_in as f64).floor() as usize
            }
            FailurePolicy::Abort => 0,
        };
        let mut state = RunState { failures: 0, allowed_failures, spent: 0.0, elapsed: 0.0, failed: Vec::new() };
        let mut reports: Vec<OpReport> = plan
            .ops()
            .iter()
            .enumerate()
            .map(|(i, p)| OpReport {
                index: i,
                op: p.op.to_string(),
                model: p.model.as_ref().map(|m| m.id.clone()),
                ..Default::default()
            })
            .collect();

        let ops = plan.ops();
        let mut current: Arc<Context> = input.clone();
        let mut tail: Option<Vec<Record>> = None;
        let mut start = 1;
        loop {
            let end = (start..ops.len()).find(|&i| ops[i].op.is_agentic()).unwrap_or(ops.len());
            if start < end {
                let records = self.run_segment(plan, start..end, &current, start == 1, &mut reports, &mut state)?;
                if end == ops.len() {
                    tail = Some(records);
                    break;
                }
                current = Arc::new(Context::derive(
                    &current,
                    plan.logical().canonical(),
                    segment_description(&current, plan, end, records.len()),
                    OperatorKind::Pipeline,
                    Some(records),
                )?);
            } else if start == 1 {
                reports[0].records_in = n_in as u64;
                reports[0].records_out = n_in as u64;
            }
            if end == ops.len() {
                break;
            }
            let agentic = self.agentic.ok_or_else(|| {
                Error::Config(format!("pipeline contains `{}` but no agent runtime is attached", ops[end].op.keyword()))
            })?;
            let model =
                ops[end].model.as_ref().ok_or_else(|| Error::InvalidPlan(format!("op {end} has no model bound")))?;
            let before = current.len() as u64;
            let (derived, usage) = agentic.run_agentic(&ops[end].op, &current, model)?;
            let report = &mut reports[end];
            report.records_in = before;
            report.records_out = derived.len() as u64;
            report.usage += &usage;
            state.spent += usage.cost;
            state.elapsed += usage.wall_secs;
            self.check_budget(&state)?;
            current = derived;
            start = end + 1;
        }
        if tail.is_none() && Arc::ptr_eq(&current, input) {
            tail = Some(input.records()?);
        }

        let output = match tail {
            Some(records) => {
                let n_out = records.len();
                Arc::new(Context::derive(
                    &current,
                    plan.logical().canonical(),
                    output_description(input, &current, plan, n_in, n_out),
                    OperatorKind::Pipeline,
                    Some(records),
                )?)
            }
            None => current,
        };

        let mut total = Usage::default();
        for r in &reports {
            total += &r.usage;
        }
        let report = ExecutionReport {
            plan_id: plan.id().to_string(),
            canonical: plan.logical().canonical(),
            input_context: input.id().to_string(),
            output_context: output.id().to_string(),
            records_in: n_in as u64,
            records_out: output.len() as u64,
            ops: reports,
            failed_records: state.failed,
            total,
            elapsed_secs: state.elapsed,
        };
        Ok((output, report))
    }

    fn check_budget(&self, state: &RunState) -> Result<()> {
        match self.policy.cost_budget {
            Some(budget) if state.spent > budget => Err(Error::BudgetExceeded { spent: state.spent, budget }),
            _ => Ok(()),
        }
    }

    fn run_segment(
        &self,
        plan: &PhysicalPlan,
        range: std::ops::Range<usize>,
        ctx: &Context,
        count_scan: bool,
        reports: &mut [OpReport],
        state: &mut RunState,
    ) -> Result<Vec<Record>> {
        let ops = plan.ops();
        let mut emitted: IndexMap<usize, u64> =
            range.clone().filter(|&i| matches!(ops[i].op, LogicalOp::Limit { .. })).map(|i| (i, 0)).collect();
        let mut source = ctx.iter();
        let mut out = Vec::new();
        loop {
            let mut pull = self.policy.pool_width;
            for (&i, &done) in &emitted {
                if let LogicalOp::Limit { n } = ops[i].op {
                    pull = pull.min(n.saturating_sub(done) as usize);
                }
            }
            if pull == 0 {
                break;
            }
            let mut batch = Vec::with_capacity(pull);
            for _ in 0..pull {
                match source.next() {
                    Some(r) => batch.push(r?),
                    None => break,
                }
            }
            if batch.is_empty() {
                break;
            }
            let exhausted = batch.len() < pull;
            if count_scan {
                reports[0].records_in += batch.len() as u64;
                reports[0].records_out += batch.len() as u64;
            }
            for i in range.clone() {
                if batch.is_empty() {
                    break;
                }
                reports[i].records_in += batch.len() as u64;
                batch = self.apply(plan, i, &ops[i], batch, &mut emitted, reports, state)?;
                reports[i].records_out += batch.len() as u64;
            }
            out.extend(batch);
            self.check_budget(state)?;
            if exhausted {
                break;
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn apply(
        &self,
        plan: &PhysicalPlan,
        index: usize,
        pop: &PhysicalOp,
        batch: Vec<Record>,
        emitted: &mut IndexMap<usize, u64>,
        reports: &mut [OpReport],
        state: &mut RunState,
    ) -> Result<Vec<Record>> {
        let operator_id = format!("{}#{index}", plan.id());
        match &pop.op {
            LogicalOp::Limit { n } => {
                let done = emitted.get_mut(&index).expect("limit registered");
                let take = (n.saturating_sub(*done) as usize).min(batch.len());
                *done += take as u64;
                Ok(batch.into_iter().take(take).collect())
            }
            LogicalOp::Project { fields } => Ok(batch
                .iter()
                .map(|r| {
                    let kept: IndexMap<String, FieldValue> =
                        fields.iter().map(|f| (f.clone(), r.get(f).cloned().unwrap_or(FieldValue::Null))).collect();
                    Record::derived(r, &operator_id, kept)
                })
                .collect()),
            LogicalOp::SemFilter { predicate } => {
                let settings = self.settings(pop, index)?;
                let outcomes = par_map(&batch, |r| sem_filter_execute(self.client, r, predicate, &settings));
                let keep = self.settle(index, &batch, outcomes, reports, state)?;
                Ok(batch.into_iter().zip(keep).filter_map(|(r, k)| (k == Some(true)).then_some(r)).collect())
            }
            LogicalOp::SemMap { instruction, outputs } => {
                let settings = self.settings(pop, index)?;
                let outcomes =
                    par_map(&batch, |r| sem_map_execute(self.client, r, instruction, outputs, &operator_id, &settings));
                let mapped = self.settle(index, &batch, outcomes, reports, state)?;
                Ok(mapped.into_iter().flatten().collect())
            }
            LogicalOp::Scan { .. } | LogicalOp::Compute { .. } | LogicalOp::Search { .. } => {
                unreachable!("segments exclude scan and agentic ops")
            }
        }
    }

    fn settings<'p>(&self, pop: &'p PhysicalOp, index: usize) -> Result<OpSettings<'p>> {
        let model = pop.model.as_ref().ok_or_else(|| Error::InvalidPlan(format!("op {index} has no model bound")))?;
        Ok(OpSettings {
            model,
            retry_budget: pop.retry_budget,
            field_cap: self.policy.field_char_cap,
            temperature: self.policy.temperature,
            kind: CallKind::Operator,
        })
    }

    /// Folds per-record outcomes into the report and applies the failure
    /// policy. Failed records map to `None`.
    fn settle<T>(
        &self,
        index: usize,
        batch: &[Record],
        outcomes: Vec<OpOutcome<T>>,
        reports: &mut [OpReport],
        state: &mut RunState,
    ) -> Result<Vec<Option<T>>> {
        let mut chunk_wall: f64 = 0.0;
        let mut values = Vec::with_capacity(outcomes.len());
        let mut first_error = None;
        for (record, outcome) in batch.iter().zip(outcomes) {
            reports[index].usage += &outcome.usage;
            state.spent += outcome.usage.cost;
            chunk_wall = chunk_wall.max(outcome.usage.wall_secs);
            match outcome.value {
                Ok(v) => values.push(Some(v)),
                Err(e @ Error::Operator { .. }) => {
                    reports[index].failures += 1;
                    state.failures += 1;
                    state.failed.push(FailedRecord {
                        op_index: index,
                        record_id: record.id.clone(),
                        message: e.to_string(),
                    });
                    if matches!(self.policy.failure, FailurePolicy::Abort) && first_error.is_none() {
                        first_error = Some(e);
                    }
                    values.push(None);
                }
                Err(e) => {
                    if first_error.is_none() {
                        first_error = Some(e);
                    }
                    values.push(None);
                }
            }
        }
        state.elapsed += chunk_wall;
        if let Some(e) = first_error {
            return Err(e);
        }
        if state.failures > state.allowed_failures {
            return Err(Error::FailureBudget { failures: state.failures, allowed: state.allowed_failures });
        }
        Ok(values)
    }
}

/// Order-preserving map with one scoped thread per item. Callers bound the
/// slice length by the pool width.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let f = &f;
    std::thread::scope(|s| {
        let handles: Vec<_> = items.iter().map(|item| s.spawn(move || f(item))).collect();
        handles.into_iter().map(|h| h.join().unwrap_or_else(|p| std::panic::resume_unwind(p))).collect()
    })
}

fn segment_description(ctx: &Context, plan: &PhysicalPlan, upto: usize, n: usize) -> String {
    let prefix = plan.logical().ops()[..upto].iter().map(ToString::to_string).collect::<Vec<_>>().join(" | ");
    format!("{}\n\nIntermediate result of `{prefix}`: {n} records.", ctx.description())
}

fn output_description(input: &Context, current: &Context, plan: &PhysicalPlan, n_in: usize, n_out: usize) -> String {
    let base = if std::ptr::eq(input, current) { input.description() } else { current.description() };
    format!(
        "{base}\n\nResult of pipeline `{}` over context {}: {n_in} records in, {n_out} records out.",
        plan.logical().canonical(),
        input.id()
    )
}

/// Runs `plan` over `ctx`. Plans containing `compute` or `search` need an
/// [`AgenticOps`] implementation; see [`Executor::with_agentic`].
pub fn pipeline_execute(
    client: &LlmClient,
    plan: &PhysicalPlan,
    ctx: &Arc<Context>,
    policy: &RunPolicy,
) -> Result<(Arc<Context>, ExecutionReport)> {
    Executor::new(client, policy).execute(plan, ctx)
}
