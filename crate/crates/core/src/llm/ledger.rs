use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{CallKind, ModelSpec};

/// Aggregated usage; also used for single calls (`calls == 1`).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Usage {
    pub calls: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub cost: f64,
    pub wall_secs: f64,
}

impl Usage {
    pub fn add(&mut self, other: &Usage) {
        self.calls += other.calls;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.cost += other.cost;
        self.wall_secs += other.wall_secs;
    }
}

impl std::ops::AddAssign<&Usage> for Usage {
    fn add_assign(&mut self, rhs: &Usage) {
        self.add(rhs);
    }
}

#[derive(Debug, Default)]
struct ModelAccount {
    input_cost_per_1k: f64,
    output_cost_per_1k: f64,
    calls: u64,
    input_tokens: u64,
    output_tokens: u64,
    wall: Duration,
}

impl ModelAccount {
    fn totals(&self) -> Usage {
        Usage {
            calls: self.calls,
            input_tokens: self.input_tokens,
            output_tokens: self.output_tokens,
            cost: self.input_tokens as f64 / 1000.0 * self.input_cost_per_1k
                + self.output_tokens as f64 / 1000.0 * self.output_cost_per_1k,
            wall_secs: self.wall.as_secs_f64(),
        }
    }
}

#[derive(Debug, Default)]
struct LedgerState {
    models: BTreeMap<String, ModelAccount>,
    calls_by_kind: BTreeMap<CallKind, u64>,
}

/// Running per-model totals.
///
/// Counters are integers (tokens, nanoseconds) so totals do not depend on
/// the order in which concurrent calls are recorded; cost is derived from
/// token totals at snapshot time, which equals the per-call sum because the
/// cost function is linear in tokens.
#[derive(Debug, Default)]
pub struct UsageLedger {
    state: Mutex<LedgerState>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerSnapshot {
    pub models: BTreeMap<String, Usage>,
    pub calls_by_kind: BTreeMap<CallKind, u64>,
    pub total: Usage,
}

impl LedgerSnapshot {
    pub fn calls(&self, kind: CallKind) -> u64 {
        self.calls_by_kind.get(&kind).copied().unwrap_or(0)
    }

    /// Totals accrued since `earlier`.
    pub fn since(&self, earlier: &LedgerSnapshot) -> Usage {
        Usage {
            calls: self.total.calls - earlier.total.calls,
            input_tokens: self.total.input_tokens - earlier.total.input_tokens,
            output_tokens: self.total.output_tokens - earlier.total.output_tokens,
            cost: self.total.cost - earlier.total.cost,
            wall_secs: self.total.wall_secs - earlier.total.wall_secs,
        }
    }
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&self, model: &ModelSpec, kind: CallKind, input_tokens: u64, output_tokens: u64, wall: Duration) {
        let mut state = self.state.lock().expect("ledger lock poisoned");
        let account = state.models.entry(model.id.clone()).or_insert_with(|| ModelAccount {
            input_cost_per_1k: model.input_cost_per_1k,
            output_cost_per_1k: model.output_cost_per_1k,
            ..Default::default()
        });
        account.calls += 1;
        account.input_tokens += input_tokens;
        account.output_tokens += output_tokens;
        account.wall += wall;
        *state.calls_by_kind.entry(kind).or_default() += 1;
    }

    pub fn snapshot(&self) -> LedgerSnapshot {
        let state = self.state.lock().expect("ledger lock poisoned");
        let models: BTreeMap<String, Usage> = state.models.iter().map(|(id, acc)| (id.clone(), acc.totals())).collect();
        let mut total = Usage::default();
        for usage in models.values() {
            total.add(usage);
        }
        LedgerSnapshot { models, calls_by_kind: state.calls_by_kind.clone(), total }
    }

    pub fn reset(&self) {
        *self.state.lock().expect("ledger lock poisoned") = LedgerState::default();
    }
}
