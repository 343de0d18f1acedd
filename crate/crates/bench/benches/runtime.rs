use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ctxrt::agent::AgentConfig;
use ctxrt::cache::ContextStore;
use ctxrt::llm::{HashingEmbedder, LlmClient, MockBackend, ModelCatalog};
use ctxrt::model::{Context, MemorySource, OperatorKind};
use ctxrt::pipeline::{parse_pipeline, print_pipeline};
use ctxrt::runtime::Runtime;
use ctxrt_bench::experiment::email_pipeline;
use ctxrt_bench::gen_corpus;

fn emails(n: usize) -> (Arc<Context>, ctxrt::llm::MockScript) {
    let corpus = gen_corpus(7, n, 0.156).unwrap();
    let source = MemorySource::new("emails", corpus.records.clone()).unwrap();
    let ctx = Context::create(Arc::new(source), "emails", None, Vec::new()).unwrap().with_name("emails");
    (Arc::new(ctx), corpus.script)
}

fn runtime(script: ctxrt::llm::MockScript) -> Runtime {
    let catalog = ModelCatalog::builtin();
    let client = LlmClient::new(Arc::new(MockBackend::new(script)), &catalog);
    Runtime::new(client, catalog.models().to_vec(), AgentConfig::new(catalog.get("large").unwrap().clone())).unwrap()
}

fn parser(c: &mut Criterion) {
    let text =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../pipelines/raptor_senders.pz")).unwrap();
    c.bench_function("parse_print_pipeline", |b| b.iter(|| print_pipeline(&parse_pipeline(&text).unwrap())));
}

fn optimizer(c: &mut Criterion) {
    let (ctx, script) = emails(250);
    let rt = runtime(script);
    let text = email_pipeline();
    c.bench_function("explain_email_pipeline", |b| b.iter(|| rt.explain(&text, &ctx).unwrap()));
}

fn executor(c: &mut Criterion) {
    let (ctx, script) = emails(250);
    let text = email_pipeline();
    c.bench_function("execute_email_pipeline_250", |b| {
        b.iter_batched(|| runtime(script.clone()), |rt| rt.pipeline(&text, &ctx).unwrap(), BatchSize::SmallInput)
    });
}

fn retrieval(c: &mut Criterion) {
    let (root, _) = emails(1);
    let store = ContextStore::in_memory(Arc::new(HashingEmbedder::default()));
    for i in 0..1000 {
        let desc = format!("findings batch {i} about topic {} and entity {}", i % 37, i % 11);
        let ctx = Context::derive(&root, format!("q{i}"), desc, OperatorKind::Search, None).unwrap();
        store.register(&ctx).unwrap();
    }
    c.bench_function("retrieve_top5_of_1000", |b| {
        b.iter(|| store.retrieve("entity 3 findings about topic 12", 5, 0.5).unwrap())
    });
}

criterion_group!(benches, parser, optimizer, executor, retrieval);
criterion_main!(benches);
