use std::sync::Arc;

use super::expr::evaluate;
use crate::error::Result;
use crate::exec::ExecutionReport;
use crate::model::{Context, FieldValue, ParamType, RecordId, ToolArgs, ToolOutput, ToolParam, ToolSpec};

pub const BUILTIN_TOOL_NAMES: [&str; 5] = ["list_sources", "read_source", "index_search", "evaluate", "run_pipeline"];

const LIST_LIMIT: usize = 100;
const READ_LENGTH: usize = 2000;
const PREVIEW_RECORDS: usize = 5;
const PREVIEW_FIELD_CAP: usize = 300;

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub context: Arc<Context>,
    pub report: ExecutionReport,
    /// Physical plan in display form, models included.
    pub plan: String,
}

/// Parses, optimizes, executes and registers a pipeline on behalf of the
/// `run_pipeline` tool.
pub trait PipelineRunner: Sync {
    fn run_pipeline(&self, text: &str, ctx: &Arc<Context>) -> Result<PipelineRun>;
}

fn unhandled() -> crate::model::ToolHandler {
    Arc::new(|_, _| Err("built-in tool is dispatched by the agent loop".to_string()))
}

/// Catalog entries for the built-in tools. Their handlers are placeholders:
/// the agent loop dispatches built-ins itself since they need run state.
pub fn builtin_tools() -> Vec<ToolSpec> {
    use ParamType::*;
    vec![
        ToolSpec::new(
            "list_sources",
            "list the contexts available in this run and the record ids of one of them",
            vec![
                ToolParam::optional("context", Text),
                ToolParam::optional("offset", Number),
                ToolParam::optional("limit", Number),
            ],
            unhandled(),
        ),
        ToolSpec::new(
            "read_source",
            "read a character slice of one record, addressed by record id, index key or path",
            vec![
                ToolParam::required("id", Text),
                ToolParam::optional("offset", Number),
                ToolParam::optional("length", Number),
                ToolParam::optional("context", Text),
            ],
            unhandled(),
        ),
        ToolSpec::new(
            "index_search",
            "vector search over the context's index; returns the k most similar records",
            vec![ToolParam::required("query", Text), ToolParam::optional("k", Number)],
            unhandled(),
        ),
        ToolSpec::new(
            "evaluate",
            "evaluate an arithmetic expression over numbers with + - * / and parentheses",
            vec![ToolParam::required("expression", Text)],
            unhandled(),
        ),
        ToolSpec::new(
            "run_pipeline",
            "optimize and run a semantic operator pipeline, e.g. scan(ctx) | sem_filter(\"...\") | sem_map(\"...\", {field: number}); \
returns a preview, the result context id and a cost report",
            vec![ToolParam::required("pipeline", Text), ToolParam::optional("context", Text)],
            unhandled(),
        ),
    ]
}

pub(crate) fn check_args(spec: &ToolSpec, args: &ToolArgs) -> std::result::Result<(), String> {
    for p in &spec.params {
        match args.get(&p.name) {
            None | Some(FieldValue::Null) if p.required => {
                return Err(format!("missing required argument `{}`", p.name));
            }
            None | Some(FieldValue::Null) => {}
            Some(v) => {
                let ok = match p.ty {
                    ParamType::Text => matches!(v, FieldValue::Text(_)),
                    ParamType::Number => matches!(v, FieldValue::Number(_)),
                    ParamType::Boolean => matches!(v, FieldValue::Bool(_)),
                    ParamType::List => matches!(v, FieldValue::List(_)),
                };
                if !ok {
                    return Err(format!("argument `{}` must be a {}", p.name, p.ty));
                }
            }
        }
    }
    if let Some(extra) = args.keys().find(|k| !spec.params.iter().any(|p| &p.name == *k)) {
        return Err(format!("unexpected argument `{extra}` for {}", spec.name));
    }
    Ok(())
}

fn text_arg<'a>(args: &'a ToolArgs, name: &str) -> Option<&'a str> {
    args.get(name).and_then(FieldValue::as_text)
}

fn count_arg(args: &ToolArgs, name: &str, default: usize) -> std::result::Result<usize, String> {
    match args.get(name).and_then(FieldValue::as_number) {
        None => Ok(default),
        Some(n) if n >= 0.0 && n.fract() == 0.0 => Ok(n as usize),
        Some(n) => Err(format!("`{name}` must be a non-negative integer, got {n}")),
    }
}

/// Contexts reachable by tools during one agent run: the input context plus
/// every context derived by `run_pipeline` so far.
pub(crate) struct RunContexts {
    pub contexts: Vec<Arc<Context>>,
}

impl RunContexts {
    fn resolve(&self, args: &ToolArgs) -> std::result::Result<&Arc<Context>, String> {
        match text_arg(args, "context") {
            None => Ok(&self.contexts[0]),
            Some(r) => self
                .contexts
                .iter()
                .rev()
                .find(|c| c.id().as_str() == r)
                .or_else(|| self.contexts.iter().find(|c| c.answers_to(r)))
                .ok_or_else(|| format!("unknown context `{r}`")),
        }
    }
}

pub(crate) fn run_builtin(
    name: &str,
    args: &ToolArgs,
    contexts: &mut RunContexts,
    pipelines: Option<&dyn PipelineRunner>,
) -> std::result::Result<ToolOutput, String> {
    match name {
        "list_sources" => list_sources(args, contexts),
        "read_source" => read_source(args, contexts),
        "index_search" => index_search(args, contexts),
        "evaluate" => {
            let expr = text_arg(args, "expression").unwrap_or_default();
            evaluate(expr).map(|v| ToolOutput::text(format_number(v)))
        }
        "run_pipeline" => run_pipeline(args, contexts, pipelines),
        other => Err(format!("unknown tool `{other}`")),
    }
}

fn format_number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn list_sources(args: &ToolArgs, contexts: &RunContexts) -> std::result::Result<ToolOutput, String> {
    let target = contexts.resolve(args)?;
    let offset = count_arg(args, "offset", 0)?;
    let limit = count_arg(args, "limit", LIST_LIMIT)?;
    let mut out = String::from("contexts:\n");
    for c in &contexts.contexts {
        out.push_str(&format!(
            "- {} (id {}): {} records, index: {}\n",
            c.name(),
            c.id(),
            c.len(),
            if c.index().is_some() { "yes" } else { "no" }
        ));
    }
    out.push_str(&format!(
        "\nsources in {} (showing {}..{} of {}):\n",
        target.id(),
        offset.min(target.len()),
        (offset + limit).min(target.len()),
        target.len()
    ));
    for record in target.iter().skip(offset).take(limit) {
        let record = record.map_err(|e| e.to_string())?;
        out.push_str(&format!("- {}  {}\n", record.id, record.label()));
    }
    Ok(ToolOutput::text(out))
}

fn read_source(args: &ToolArgs, contexts: &RunContexts) -> std::result::Result<ToolOutput, String> {
    let ctx = contexts.resolve(args)?;
    let id = text_arg(args, "id").unwrap_or_default();
    let offset = count_arg(args, "offset", 0)?;
    let length = count_arg(args, "length", READ_LENGTH)?;
    let mut found = ctx.source().get(&RecordId::new(id)).map_err(|e| e.to_string())?;
    if found.is_none() {
        if let Some(index) = ctx.index() {
            found = index.lookup(id).cloned();
        }
    }
    if found.is_none() {
        for record in ctx.iter() {
            let record = record.map_err(|e| e.to_string())?;
            if record.get("path").and_then(FieldValue::as_text) == Some(id) {
                found = Some(record);
                break;
            }
        }
    }
    let record = found.ok_or_else(|| format!("unknown source id `{id}`"))?;
    let text = record.render(usize::MAX);
    let total = text.chars().count();
    let slice: String = text.chars().skip(offset).take(length).collect();
    let end = (offset + length).min(total);
    Ok(ToolOutput::text(format!("source {} chars {}..{} of {total}:\n{slice}", record.id, offset.min(total), end)))
}

fn index_search(args: &ToolArgs, contexts: &RunContexts) -> std::result::Result<ToolOutput, String> {
    let ctx = &contexts.contexts[0];
    let query = text_arg(args, "query").unwrap_or_default();
    let k = count_arg(args, "k", 5)?;
    let hits = ctx.top_k(query, k).map_err(|e| e.to_string())?;
    let mut out = format!("{} matches for {query:?}:\n", hits.len());
    for (record, sim) in hits {
        out.push_str(&format!("- {} ({sim:.4}) {}\n", record.id, record.label()));
    }
    Ok(ToolOutput::text(out))
}

fn run_pipeline(
    args: &ToolArgs,
    contexts: &mut RunContexts,
    pipelines: Option<&dyn PipelineRunner>,
) -> std::result::Result<ToolOutput, String> {
    let runner = pipelines.ok_or_else(|| "run_pipeline is not available in this run".to_string())?;
    let ctx = contexts.resolve(args)?;
    let text = text_arg(args, "pipeline").unwrap_or_default();
    let run = runner.run_pipeline(text, ctx).map_err(|e| format!("{}: {e}", e.category()))?;
    let records = run.context.records().map_err(|e| e.to_string())?;
    let ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
    let mut out = format!(
        "pipeline_id: {}\nplan: {}\nresult_context: {}\nrecords: {} (from {})\ncalls: {}, cost: {:.6}\nrecord ids: {}\npreview:\n",
        run.report.plan_id,
        run.plan,
        run.context.id(),
        run.report.records_out,
        run.report.records_in,
        run.report.total.calls,
        run.report.total.cost,
        serde_json::to_string(&ids).unwrap_or_default(),
    );
    for record in records.iter().take(PREVIEW_RECORDS) {
        out.push_str(&format!("- {}\n", record.id));
        for line in record.render(PREVIEW_FIELD_CAP).lines() {
            out.push_str("    ");
            out.push_str(line);
            out.push('\n');
        }
    }
    if records.len() > PREVIEW_RECORDS {
        out.push_str(&format!("... {} more\n", records.len() - PREVIEW_RECORDS));
    }
    contexts.contexts.push(run.context.clone());
    Ok(ToolOutput {
        text: out,
        usage: run.report.total,
        derived_contexts: vec![run.context.id().clone()],
        pipeline_ids: vec![run.report.plan_id.clone()],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Record;

    fn ctx() -> Arc<Context> {
        let recs = vec![
            Record::new(
                "a",
                vec![
                    ("path".to_string(), FieldValue::text("2024.txt")),
                    ("text".to_string(), FieldValue::text("reports: 1135291")),
                ],
            )
            .unwrap(),
            Record::new(
                "b",
                vec![
                    ("path".to_string(), FieldValue::text("2001.txt")),
                    ("text".to_string(), FieldValue::text("reports: 86250")),
                ],
            )
            .unwrap(),
        ];
        Arc::new(Context::from_records("mem", recs, "stats files").unwrap())
    }

    fn args(pairs: &[(&str, FieldValue)]) -> ToolArgs {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    #[test]
    fn read_by_id_or_path_with_slice() {
        let mut rc = RunContexts { contexts: vec![ctx()] };
        let out = run_builtin("read_source", &args(&[("id", FieldValue::text("2001.txt"))]), &mut rc, None).unwrap();
        assert!(out.text.contains("reports: 86250"));
        let out = run_builtin(
            "read_source",
            &args(&[
                ("id", FieldValue::text("a")),
                ("offset", FieldValue::Number(6.0)),
                ("length", FieldValue::Number(8.0)),
            ]),
            &mut rc,
            None,
        )
        .unwrap();
        assert!(out.text.ends_with("2024.txt"));
        let err = run_builtin("read_source", &args(&[("id", FieldValue::text("zzz"))]), &mut rc, None).unwrap_err();
        assert!(err.contains("unknown source id"));
    }

    #[test]
    fn evaluate_and_list() {
        let mut rc = RunContexts { contexts: vec![ctx()] };
        let out = run_builtin("evaluate", &args(&[("expression", FieldValue::text("6*7"))]), &mut rc, None).unwrap();
        assert_eq!(out.text, "42");
        let out = run_builtin("list_sources", &ToolArgs::new(), &mut rc, None).unwrap();
        assert!(out.text.contains("- a  2024.txt"));
        assert!(run_builtin("index_search", &args(&[("query", FieldValue::text("x"))]), &mut rc, None).is_err());
        assert!(
            run_builtin("run_pipeline", &args(&[("pipeline", FieldValue::text("scan(ctx)"))]), &mut rc, None).is_err()
        );
    }

    #[test]
    fn arg_checking() {
        let specs = builtin_tools();
        let read = specs.iter().find(|s| s.name == "read_source").unwrap();
        assert!(check_args(read, &ToolArgs::new()).is_err());
        assert!(check_args(read, &args(&[("id", FieldValue::Number(1.0))])).is_err());
        assert!(check_args(read, &args(&[("id", FieldValue::text("a")), ("bogus", FieldValue::Null)])).is_err());
        assert!(check_args(read, &args(&[("id", FieldValue::text("a"))])).is_ok());
    }
}
