use indexmap::IndexMap;

use super::prompt::{filter_messages, map_messages, parse_bool, parse_structured};
use crate::error::{Error, Result};
use crate::llm::{CallKind, LlmClient, ModelSpec, Usage};
use crate::model::{FieldValue, Record};
use crate::pipeline::OutputField;

/// Per-call knobs shared by the record-level operators.
#[derive(Debug, Clone, Copy)]
pub struct OpSettings<'a> {
    pub model: &'a ModelSpec,
    pub retry_budget: u32,
    pub field_cap: usize,
    pub temperature: f64,
    pub kind: CallKind,
}

/// Outcome of one record-level operator invocation. Usage is reported even
/// when the operator fails, since the calls were still paid for.
#[derive(Debug)]
pub struct OpOutcome<T> {
    pub value: Result<T>,
    pub usage: Usage,
}

fn run_with_retries<T>(
    client: &LlmClient,
    settings: &OpSettings<'_>,
    operator: &str,
    mut messages: impl FnMut(bool) -> Vec<crate::llm::ChatMessage>,
    mut parse: impl FnMut(&str) -> std::result::Result<T, String>,
) -> OpOutcome<T> {
    let mut usage = Usage::default();
    let mut last_raw = String::new();
    let mut last_problem = String::new();
    for attempt in 0..=settings.retry_budget {
        let reply = client.chat(settings.model, &messages(attempt > 0), settings.temperature, settings.kind);
        let reply = match reply {
            Ok(r) => r,
            Err(e) => return OpOutcome { value: Err(e), usage },
        };
        usage += &reply.usage;
        match parse(&reply.text) {
            Ok(v) => return OpOutcome { value: Ok(v), usage },
            Err(problem) => {
                last_problem = problem;
                last_raw = reply.text;
            }
        }
    }
    OpOutcome {
        value: Err(Error::Operator { operator: operator.to_string(), message: last_problem, raw: last_raw }),
        usage,
    }
}

/// Asks the model whether `record` satisfies `predicate`.
pub fn sem_filter_execute(
    client: &LlmClient,
    record: &Record,
    predicate: &str,
    settings: &OpSettings<'_>,
) -> OpOutcome<bool> {
    if !record.has_text_field() {
        return OpOutcome {
            value: Err(Error::Operator {
                operator: "sem_filter".into(),
                message: format!("record {} has no text field", record.id),
                raw: String::new(),
            }),
            usage: Usage::default(),
        };
    }
    run_with_retries(
        client,
        settings,
        "sem_filter",
        |retry| filter_messages(record, predicate, settings.field_cap, retry),
        |text| parse_bool(text).ok_or_else(|| "response is not yes or no".to_string()),
    )
}

/// Extracts `outputs` from `record` and returns a derived record carrying the
/// input fields plus the new ones. `operator_id` scopes the derived id.
pub fn sem_map_execute(
    client: &LlmClient,
    record: &Record,
    instruction: &str,
    outputs: &[OutputField],
    operator_id: &str,
    settings: &OpSettings<'_>,
) -> OpOutcome<Record> {
    let outcome = run_with_retries(
        client,
        settings,
        "sem_map",
        |retry| map_messages(record, instruction, outputs, settings.field_cap, retry),
        |text| parse_structured(text, outputs),
    );
    OpOutcome {
        value: outcome.value.map(|extracted| {
            let mut fields: IndexMap<String, FieldValue> = record.fields.clone();
            fields.extend(extracted);
            Record::derived(record, operator_id, fields)
        }),
        usage: outcome.usage,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{MockBackend, MockRule, MockScript, ModelCatalog};
    use crate::pipeline::FieldType;
    use std::sync::Arc;

    fn client(script: MockScript) -> LlmClient {
        LlmClient::new(Arc::new(MockBackend::new(script)), &ModelCatalog::builtin())
    }

    fn email(body: &str) -> Record {
        Record::new("e1", vec![("body".to_string(), FieldValue::text(body))]).unwrap()
    }

    fn settings(model: &ModelSpec, retry_budget: u32) -> OpSettings<'_> {
        OpSettings { model, retry_budget, field_cap: 4000, temperature: 0.0, kind: CallKind::Operator }
    }

    #[test]
    fn filter_yes_no_and_retry() {
        let cat = ModelCatalog::builtin();
        let m = cat.get("mini").unwrap();
        let script = MockScript::new()
            .rule(MockRule::contains("Raptor", "Yes"))
            .rule(MockRule::contains("ambiguous", "perhaps").budget(1))
            .rule(MockRule::contains("ambiguous", "no"));
        let c = client(script);
        let out = sem_filter_execute(&c, &email("Raptor vehicles"), "mentions raptor", &settings(m, 0));
        assert!(out.value.unwrap());
        assert_eq!(out.usage.calls, 1);

        let out = sem_filter_execute(&c, &email("ambiguous"), "p", &settings(m, 1));
        assert!(!out.value.unwrap());
        assert_eq!(out.usage.calls, 2);
        assert_eq!(c.ledger().snapshot().total.calls, 3);
    }

    #[test]
    fn filter_failure_keeps_raw_response_and_usage() {
        let cat = ModelCatalog::builtin();
        let m = cat.get("mini").unwrap();
        let c = client(MockScript::new().rule(MockRule::reply("unsure")));
        let out = sem_filter_execute(&c, &email("x"), "p", &settings(m, 1));
        match out.value {
            Err(Error::Operator { raw, .. }) => assert_eq!(raw, "unsure"),
            other => panic!("{other:?}"),
        }
        assert_eq!(out.usage.calls, 2);
    }

    #[test]
    fn map_derives_record() {
        let cat = ModelCatalog::builtin();
        let m = cat.get("mini").unwrap();
        let c = client(MockScript::new().rule(MockRule::reply("sender: ken@enron.com")));
        let r = email("hello");
        let out = sem_map_execute(
            &c,
            &r,
            "who sent it",
            &[OutputField::new("sender", FieldType::Text)],
            "plan#1",
            &settings(m, 0),
        );
        let d = out.value.unwrap();
        assert_eq!(d.get("sender"), Some(&FieldValue::text("ken@enron.com")));
        assert_eq!(d.get("body"), r.get("body"));
        assert_eq!(d.lineage.unwrap().parents, vec![r.id.clone()]);
    }

    #[test]
    fn record_without_text_is_an_operator_error() {
        let cat = ModelCatalog::builtin();
        let m = cat.get("mini").unwrap();
        let c = client(MockScript::new());
        let r = Record::new("n", vec![("n".to_string(), FieldValue::Number(1.0))]).unwrap();
        let out = sem_filter_execute(&c, &r, "p", &settings(m, 0));
        assert_eq!(out.value.unwrap_err().category(), "operator-error");
        assert_eq!(out.usage.calls, 0);
    }
}
