//! Cost-based physical planning: statistics, enumeration, estimation and
//! policy-driven choice of one model per semantic op.

mod stats;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{PhysicalPlan, DEFAULT_RETRY_BUDGET};
use crate::llm::{LlmClient, ModelSpec};
use crate::model::Context;
use crate::pipeline::{LogicalOp, LogicalPlan};

pub use stats::{prior_stats, sample_stats, FilterLabels, OpStat, OperatorStats, StatEntry, PRIOR_SELECTIVITY};

/// Slack for quality floors and cost budgets, absorbing rounding in
/// products such as 0.8 * 0.95.
pub const POLICY_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub cost: f64,
    pub latency: f64,
    pub quality: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Policy {
    MinCost { min_quality: f64 },
    MaxQuality { budget: f64 },
    Weighted { cost: f64, latency: f64, quality: f64 },
}

impl Default for Policy {
    fn default() -> Self {
        Policy::MinCost { min_quality: 0.75 }
    }
}

impl Policy {
    pub fn check(&self) -> Result<()> {
        let ok = match *self {
            Policy::MinCost { min_quality } => (0.0..=1.0).contains(&min_quality),
            Policy::MaxQuality { budget } => budget >= 0.0,
            Policy::Weighted { cost, latency, quality } => {
                [cost, latency, quality].iter().all(|w| *w >= 0.0) && cost + latency + quality > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid policy {self}")))
        }
    }

    /// Weighted score; lower is better.
    pub fn score(&self, e: &CostEstimate) -> f64 {
        match *self {
            Policy::Weighted { cost, latency, quality } => {
                cost * e.cost + latency * e.latency + quality * (1.0 - e.quality)
            }
            _ => e.cost,
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Policy::MinCost { min_quality } => write!(f, "min-cost(quality >= {min_quality})"),
            Policy::MaxQuality { budget } => write!(f, "max-quality(cost <= {budget})"),
            Policy::Weighted { cost, latency, quality } => {
                write!(f, "weighted(cost {cost}, latency {latency}, quality {quality})")
            }
        }
    }
}

/// Every assignment of `models` to the semantic ops of `plan`. The first
/// semantic op varies slowest; models keep catalog order.
pub fn enumerate_physical_plans(plan: &LogicalPlan, models: &[ModelSpec]) -> Result<Vec<PhysicalPlan>> {
    if models.is_empty() {
        return Err(Error::Config("no candidate models".into()));
    }
    let slots = plan.semantic_positions().len();
    let total =
        models.len().checked_pow(slots as u32).ok_or_else(|| Error::Config("too many candidate plans".into()))?;
    let mut plans = Vec::with_capacity(total);
    let mut digits = vec![0usize; slots];
    for _ in 0..total {
        let assignment: Vec<ModelSpec> = digits.iter().map(|&d| models[d].clone()).collect();
        plans.push(PhysicalPlan::bind(plan, &assignment, DEFAULT_RETRY_BUDGET)?);
        for d in digits.iter_mut().rev() {
            *d += 1;
            if *d < models.len() {
                break;
            }
            *d = 0;
        }
    }
    Ok(plans)
}

/// Cardinality-propagating estimate. Record-level ops pay per incoming
/// record; agentic ops pay once. Latency is divided by the pool width for
/// record-level ops.
pub fn estimate(plan: &PhysicalPlan, stats: &OperatorStats, n: usize, pool_width: usize) -> Result<CostEstimate> {
    let pool = pool_width.max(1) as f64;
    let mut card = n as f64;
    let mut est = CostEstimate { cost: 0.0, latency: 0.0, quality: 1.0 };
    for (i, pop) in plan.ops().iter().enumerate() {
        let lookup = || {
            let model = pop.model.as_ref().map(|m| m.id.as_str()).unwrap_or("");
            stats.get(i, model).ok_or_else(|| Error::Estimation { op_index: i, model: model.to_string() })
        };
        match &pop.op {
            LogicalOp::Scan { .. } | LogicalOp::Project { .. } => {}
            LogicalOp::Limit { n } => card = card.min(*n as f64),
            LogicalOp::SemFilter { .. } | LogicalOp::SemMap { .. } => {
                let s = lookup()?;
                est.cost += card * s.cost_per_record;
                est.latency += card * s.latency_per_record / pool;
                est.quality *= s.quality;
                if let Some(sel) = s.selectivity {
                    card *= sel;
                }
            }
            LogicalOp::Compute { .. } | LogicalOp::Search { .. } => {
                let s = lookup()?;
                est.cost += s.cost_per_record;
                est.latency += s.latency_per_record;
                est.quality *= s.quality;
            }
        }
    }
    Ok(est)
}

fn by_f64(a: f64, b: f64) -> Ordering {
    a.total_cmp(&b)
}

/// Index of the plan `policy` selects.
///
/// * MinCost: cheapest with quality >= q*; ties by latency, then plan id.
/// * MaxQuality: best quality with cost <= B; ties by cost, latency, plan id.
/// * Weighted: lowest score; ties by plan id.
///
/// An infeasible policy names the best violator: the highest quality plan
/// for MinCost, the cheapest for MaxQuality.
pub fn choose_plan(candidates: &[PhysicalPlan], estimates: &[CostEstimate], policy: &Policy) -> Result<usize> {
    policy.check()?;
    if candidates.is_empty() || candidates.len() != estimates.len() {
        return Err(Error::Config("choose_plan needs one estimate per candidate".into()));
    }
    let id = |i: usize| candidates[i].id();
    let idx = 0..candidates.len();
    let chosen = match *policy {
        Policy::MinCost { min_quality } => {
            idx.filter(|&i| estimates[i].quality + POLICY_EPSILON >= min_quality).min_by(|&a, &b| {
                by_f64(estimates[a].cost, estimates[b].cost)
                    .then(by_f64(estimates[a].latency, estimates[b].latency))
                    .then(id(a).cmp(id(b)))
            })
        }
        Policy::MaxQuality { budget } => {
            idx.filter(|&i| estimates[i].cost <= budget + POLICY_EPSILON).min_by(|&a, &b| {
                by_f64(estimates[b].quality, estimates[a].quality)
                    .then(by_f64(estimates[a].cost, estimates[b].cost))
                    .then(by_f64(estimates[a].latency, estimates[b].latency))
                    .then(id(a).cmp(id(b)))
            })
        }
        Policy::Weighted { .. } => {
            idx.min_by(|&a, &b| by_f64(policy.score(&estimates[a]), policy.score(&estimates[b])).then(id(a).cmp(id(b))))
        }
    };
    if let Some(i) = chosen {
        return Ok(i);
    }
    let all = 0..candidates.len();
    let (violator, message) = match *policy {
        Policy::MinCost { min_quality } => {
            let v = all
                .min_by(|&a, &b| {
                    by_f64(estimates[b].quality, estimates[a].quality)
                        .then(by_f64(estimates[a].cost, estimates[b].cost))
                        .then(id(a).cmp(id(b)))
                })
                .expect("nonempty");
            (v, format!("no plan reaches quality {min_quality} (best {:.4})", estimates[v].quality))
        }
        Policy::MaxQuality { budget } => {
            let v = all
                .min_by(|&a, &b| by_f64(estimates[a].cost, estimates[b].cost).then(id(a).cmp(id(b))))
                .expect("nonempty");
            (v, format!("no plan costs at most {budget} (cheapest {:.6})", estimates[v].cost))
        }
        Policy::Weighted { .. } => unreachable!("weighted policy always has a choice"),
    };
    Err(Error::PolicyInfeasible { message, plan_id: id(violator).to_string() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateRow {
    pub plan_id: String,
    pub plan: String,
    pub models: Vec<String>,
    pub estimate: CostEstimate,
}

/// Everything the optimizer considered for one logical plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerReport {
    pub logical_plan: String,
    pub logical_id: String,
    pub input_records: usize,
    pub policy: Policy,
    pub sample_size: usize,
    pub stats: OperatorStats,
    pub candidates: Vec<CandidateRow>,
    pub chosen: String,
}

impl OptimizerReport {
    pub fn chosen_row(&self) -> Option<&CandidateRow> {
        self.candidates.iter().find(|c| c.plan_id == self.chosen)
    }

    /// Fixed-width table of candidates, chosen plan marked with `*`.
    pub fn render(&self) -> String {
        let mut out = format!(
            "logical plan: {}\npolicy: {}\ninput records: {}, sample size: {}\n\n  {:<28} {:>12} {:>10} {:>8}\n",
            self.logical_plan,
            self.policy,
            self.input_records,
            self.sample_size,
            "models",
            "cost",
            "latency",
            "quality"
        );
        for c in &self.candidates {
            let mark = if c.plan_id == self.chosen { '*' } else { ' ' };
            let models = if c.models.is_empty() { "-".to_string() } else { c.models.join(",") };
            out.push_str(&format!(
                "{mark} {:<28} {:>12.6} {:>10.3} {:>8.4}\n",
                models, c.estimate.cost, c.estimate.latency, c.estimate.quality
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub policy: Policy,
    /// 0 uses priors only and makes no model calls.
    pub sample_size: usize,
    pub pool_width: usize,
    pub retry_budget: u32,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { policy: Policy::default(), sample_size: 0, pool_width: 8, retry_budget: DEFAULT_RETRY_BUDGET }
    }
}

/// sample_stats (or priors) -> enumerate -> estimate -> choose.
pub fn optimize(
    client: &LlmClient,
    plan: &LogicalPlan,
    ctx: &Context,
    models: &[ModelSpec],
    config: &OptimizerConfig,
    labels: Option<&FilterLabels>,
) -> Result<(PhysicalPlan, OptimizerReport)> {
    config.policy.check()?;
    let stats = if config.sample_size == 0 || ctx.is_empty() {
        prior_stats(plan, ctx, models)?
    } else {
        sample_stats(client, plan, ctx, models, config.sample_size, labels)?
    };
    let candidates = enumerate_physical_plans(plan, models)?;
    let estimates =
        candidates.iter().map(|c| estimate(c, &stats, ctx.len(), config.pool_width)).collect::<Result<Vec<_>>>()?;
    let choice = choose_plan(&candidates, &estimates, &config.policy)?;
    let report = OptimizerReport {
        logical_plan: plan.canonical(),
        logical_id: plan.id().to_string(),
        input_records: ctx.len(),
        policy: config.policy,
        sample_size: if config.sample_size == 0 { 0 } else { config.sample_size.min(ctx.len()) },
        stats,
        candidates: candidates
            .iter()
            .zip(&estimates)
            .map(|(c, e)| CandidateRow {
                plan_id: c.id().to_string(),
                plan: c.to_string(),
                models: c.model_ids().into_iter().map(String::from).collect(),
                estimate: *e,
            })
            .collect(),
        chosen: candidates[choice].id().to_string(),
    };
    let chosen = candidates.into_iter().nth(choice).expect("choice in range").with_retry_budget(config.retry_budget);
    Ok((chosen, report))
}
