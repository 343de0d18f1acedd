//! Plain-text rendering of reports and run directories.

use std::fmt::Write;
use std::path::Path;

use ctxrt::agent::AgentTrace;
use ctxrt::exec::ExecutionReport;
use ctxrt::llm::{LedgerSnapshot, Usage};
use ctxrt::model::Record;
use ctxrt::{Error, Result};
use serde::de::DeserializeOwned;

fn usage_row(out: &mut String, label: &str, u: &Usage) {
    let _ = writeln!(
        out,
        "  {label:<24} {:>7} {:>10} {:>10} {:>12.6} {:>10.2}",
        u.calls, u.input_tokens, u.output_tokens, u.cost, u.wall_secs
    );
}

pub fn ledger(snapshot: &LedgerSnapshot) -> String {
    let mut out = format!(
        "ledger\n  {:<24} {:>7} {:>10} {:>10} {:>12} {:>10}\n",
        "model", "calls", "in tok", "out tok", "cost", "wall s"
    );
    for (model, u) in &snapshot.models {
        usage_row(&mut out, model, u);
    }
    usage_row(&mut out, "total", &snapshot.total);
    let kinds: Vec<String> = snapshot.calls_by_kind.iter().map(|(k, n)| format!("{k}={n}")).collect();
    let _ = writeln!(out, "  calls by kind: {}", if kinds.is_empty() { "-".into() } else { kinds.join(", ") });
    out
}

pub fn execution_report(r: &ExecutionReport) -> String {
    let mut out = format!(
        "pipeline {}: {} -> {} records, {} semantic calls, cost {:.6}, elapsed {:.2}s\n",
        r.plan_id,
        r.records_in,
        r.records_out,
        r.semantic_calls(),
        r.total.cost,
        r.elapsed_secs
    );
    let _ = writeln!(
        out,
        "  {:>3} {:<40} {:<10} {:>7} {:>7} {:>6} {:>7} {:>12}",
        "#", "op", "model", "in", "out", "fail", "calls", "cost"
    );
    for op in &r.ops {
        let mut name = op.op.replace('\n', " ");
        if name.chars().count() > 40 {
            name = name.chars().take(37).collect::<String>() + "...";
        }
        let _ = writeln!(
            out,
            "  {:>3} {:<40} {:<10} {:>7} {:>7} {:>6} {:>7} {:>12.6}",
            op.index,
            name,
            op.model.as_deref().unwrap_or("-"),
            op.records_in,
            op.records_out,
            op.failures,
            op.usage.calls,
            op.usage.cost
        );
    }
    for f in &r.failed_records {
        let _ = writeln!(out, "  failed: op {} record {}: {}", f.op_index, f.record_id, f.message);
    }
    out
}

pub fn preview(records: &[Record], n: usize) -> String {
    let mut out = String::new();
    for r in records.iter().take(n) {
        let _ = writeln!(out, "  {}  {}", r.id, r.label());
    }
    if records.len() > n {
        let _ = writeln!(out, "  ... {} more", records.len() - n);
    }
    out
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::DataAccess { source_detail: path.display().to_string(), message: e.to_string() })?;
    Ok(serde_json::from_str(&text)?)
}

pub fn stats(run: &Path) -> Result<String> {
    if !run.join("ledger.json").is_file() {
        return Err(Error::Config(format!("{} is not a run directory", run.display())));
    }
    let mut out = ledger(&read_json(&run.join("ledger.json"))?);
    let reports: Vec<ExecutionReport> = read_json(&run.join("report.json"))?;
    for r in &reports {
        out.push('\n');
        out.push_str(&execution_report(r));
    }
    let trace_path = run.join("trace.json");
    if trace_path.is_file() {
        let trace: AgentTrace = read_json(&trace_path)?;
        let _ = write!(
            out,
            "\nagent {} ({}): {} steps, outcome {}, tools [{}]\n",
            trace.operator,
            trace.model,
            trace.steps.len(),
            trace.outcome,
            trace.tools_used().join(", ")
        );
    }
    Ok(out)
}
