//! Acceptance gate. Prints one PASS/FAIL line per criterion, then fails the
//! test if any criterion outside `KNOWN_UNATTAINABLE` failed.
//!
//! Run with `cargo test -p ctxrt-bench --test acceptance -- --nocapture`.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use ctxrt::agent::{self, Action, Agent, AgentConfig, Outcome};
use ctxrt::cache::ContextStore;
use ctxrt::exec::PhysicalPlan;
use ctxrt::llm::{
    CallKind, Embedder, HashingEmbedder, LlmClient, MockBackend, MockRule, MockScript, ModelCatalog, ModelSpec,
};
use ctxrt::model::{Context, FieldValue, MemorySource, OperatorKind, Record};
use ctxrt::optimizer::{
    choose_plan, enumerate_physical_plans, estimate, CostEstimate, OpStat, OperatorStats, Policy, POLICY_EPSILON,
};
use ctxrt::pipeline::{parse_pipeline, print_pipeline, validate_plan, FieldType, LogicalOp, LogicalPlan, OutputField};
use ctxrt::runtime::Runtime;
use ctxrt::Error;
use ctxrt_bench::experiment::email_pipeline;
use ctxrt_bench::{
    gen_corpus, gen_ratio_corpus, run_experiment, run_ratio_experiment, BenchConfig, RatioCorpus, Strategy,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 7;
const N_EMAILS: usize = 250;
const RHO: f64 = 0.156;
const EXPECTED_SURVIVORS: usize = 39;
const SHORT_CIRCUIT_TIME_LIMIT: Duration = Duration::from_secs(5);
const SAVING_FLOOR: f64 = 0.5;
const EXACT: f64 = 1e-12;
const F1_CEILING_BASIC: f64 = 0.65;
const WORKED_EXAMPLE_TOL: f64 = 1e-9;
const SELF_MATCH_TOL: f64 = 1e-6;
const OPTIMIZER_CASES: usize = 1000;
const MONOTONICITY_CASES: usize = 1000;
const STORE_ENTRIES: usize = 1000;
const AGENT_SCRIPTS: usize = 500;
const FUZZ_PROGRAMS: usize = 500;

/// Criteria implemented faithfully that cannot pass as stated. See the
/// criterion 2 detail line for the arithmetic.
const KNOWN_UNATTAINABLE: &[u32] = &[2];

struct Gate {
    results: Vec<(u32, bool)>,
}

impl Gate {
    fn record(&mut self, n: u32, name: &str, pass: bool, detail: String) {
        println!("criterion {n:>2} [{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((n, pass));
    }
}

fn catalog() -> ModelCatalog {
    ModelCatalog::builtin()
}

fn bench_config() -> BenchConfig {
    BenchConfig::default()
}

fn email_context(records: Vec<Record>) -> Arc<Context> {
    let source = MemorySource::new("emails", records).unwrap();
    Arc::new(Context::create(Arc::new(source), "emails", None, Vec::new()).unwrap().with_name("emails"))
}

fn stats_context(corpus: &RatioCorpus) -> Arc<Context> {
    let source = MemorySource::new("stats", corpus.records.clone()).unwrap();
    Arc::new(Context::create(Arc::new(source), "stats files", None, Vec::new()).unwrap().with_name("stats"))
}

fn criterion_1(gate: &mut Gate) {
    let corpus = gen_corpus(SEED, N_EMAILS, RHO).unwrap();
    let survivors = corpus.passes_entity.len();
    let expected = (N_EMAILS + EXPECTED_SURVIVORS) as u64;
    let cat = catalog();
    let client = LlmClient::new(Arc::new(MockBackend::new(corpus.script.clone())), &cat);
    let rt = Runtime::new(client, cat.models().to_vec(), AgentConfig::new(cat.get("large").unwrap().clone())).unwrap();
    let started = Instant::now();
    let run = rt.pipeline(&email_pipeline(), &email_context(corpus.records.clone()));
    let elapsed = started.elapsed();
    let (pass, detail) = match run {
        Ok(run) => {
            let ledger_calls = rt.client().ledger().snapshot().calls(CallKind::Operator);
            let report_calls = run.report.semantic_calls();
            let pass = survivors == EXPECTED_SURVIVORS
                && ledger_calls == expected
                && report_calls == expected
                && elapsed < SHORT_CIRCUIT_TIME_LIMIT;
            (pass, format!(
                "N={N_EMAILS} S={survivors}: {ledger_calls} ledger calls, {report_calls} reported, expected {expected}; {:.3}s",
                elapsed.as_secs_f64()
            ))
        }
        Err(e) => (false, format!("pipeline failed: {e}")),
    };
    gate.record(1, "short-circuit execution", pass, detail);
}

fn criterion_2_and_3(gate: &mut Gate) {
    let corpus = gen_corpus(SEED, N_EMAILS, RHO).unwrap();
    let report = run_experiment(&corpus, &Strategy::ALL, &bench_config()).unwrap();
    let proto = &report.run(Strategy::PrototypeCompute).unwrap().result;
    let tools = &report.run(Strategy::AgentWithSemanticTools).unwrap().result;
    let basic = &report.run(Strategy::AgentBasic).unwrap().result;

    // Harness oracle: calls are N + S1 and 2N, so the saving is fixed.
    let n = corpus.len() as f64;
    let s1 = corpus.passes_entity.len() as f64;
    let oracle_call_saving = 1.0 - (n + s1) / (2.0 * n);
    let call_saving = 1.0 - proto.semantic_calls as f64 / tools.semantic_calls as f64;
    let cost_saving = 1.0 - proto.cost / tools.cost;
    let calls_match_oracle = proto.semantic_calls == report.expected_prototype_calls()
        && tools.semantic_calls == report.expected_semantic_tools_calls()
        && (call_saving - oracle_call_saving).abs() < EXACT;
    let pass = calls_match_oracle && call_saving >= SAVING_FLOOR && cost_saving >= SAVING_FLOOR;
    gate.record(
        2,
        "cost-saving analogue",
        pass,
        format!(
        "calls {} vs {} (saving {:.4}, oracle {:.4}, matches oracle: {calls_match_oracle}; floor {SAVING_FLOOR} {}); \
         cost {:.6} vs {:.6} (saving {:.4}, floor {SAVING_FLOOR} {}). With two filters the saving is (N - S)/(2N), \
         below 0.5 for every S >= 0",
        proto.semantic_calls,
        tools.semantic_calls,
        call_saving,
        oracle_call_saving,
        if call_saving >= SAVING_FLOOR { "met" } else { "not met" },
        proto.cost,
        tools.cost,
        cost_saving,
        if cost_saving >= SAVING_FLOOR { "met" } else { "not met" },
    ),
    );

    let f1_formula = |p: f64, r: f64| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    let consistent = [proto, tools, basic]
        .iter()
        .all(|r| (r.metrics.f1 - f1_formula(r.metrics.precision, r.metrics.recall)).abs() < EXACT);
    let pass = (proto.metrics.f1 - 1.0).abs() < EXACT
        && basic.metrics.f1 <= F1_CEILING_BASIC
        && basic.metrics.precision >= basic.metrics.recall
        && consistent;
    gate.record(
        3,
        "quality ordering",
        pass,
        format!(
            "F1 prototype {:.4}, agent-basic {:.4} (P {:.4}, R {:.4}); ceiling {F1_CEILING_BASIC}",
            proto.metrics.f1, basic.metrics.f1, basic.metrics.precision, basic.metrics.recall
        ),
    );
}

fn criterion_4(gate: &mut Gate) {
    let corpus = gen_ratio_corpus(SEED).unwrap();
    let planted = 1_135_291.0 / 86_250.0;
    let report = run_ratio_experiment(&corpus, &bench_config()).unwrap();
    let pass = report.prototype_answer == Some(planted)
        && report.percent_error == Some(0.0)
        && report.semantic_only_ratios.len() >= 2;
    gate.record(
        4,
        "ratio-query scenario",
        pass,
        format!(
            "prototype answer {:?} vs planted {planted} (error {:?}%); semantic-only returned {} ratios {:?}",
            report.prototype_answer,
            report.percent_error,
            report.semantic_only_ratios.len(),
            report.semantic_only_ratios
        ),
    );
}

fn random_catalog(rng: &mut ChaCha8Rng, m: usize) -> Vec<ModelSpec> {
    (0..m)
        .map(|i| {
            ModelSpec::new(
                format!("m{i}"),
                rng.gen_range(0.0001..0.01),
                rng.gen_range(0.0001..0.03),
                rng.gen_range(0.5..1.0),
                rng.gen_range(0.1..3.0),
            )
            .unwrap()
        })
        .collect()
}

fn random_plan(rng: &mut ChaCha8Rng, semantic: usize) -> LogicalPlan {
    let mut ops = vec![LogicalOp::Scan { context: "ctx".into() }];
    for i in 0..semantic {
        if rng.gen_bool(0.3) {
            ops.push(LogicalOp::Limit { n: rng.gen_range(1..500) });
        }
        ops.push(if rng.gen_bool(0.6) {
            LogicalOp::SemFilter { predicate: format!("p{i}") }
        } else {
            LogicalOp::SemMap {
                instruction: format!("m{i}"),
                outputs: vec![OutputField::new(format!("f{i}"), FieldType::Text)],
            }
        });
    }
    LogicalPlan::new(ops).unwrap()
}

/// Per-record costs drawn from a small grid so that exact ties are common.
fn random_stats(rng: &mut ChaCha8Rng, plan: &LogicalPlan, models: &[ModelSpec]) -> OperatorStats {
    let mut stats = OperatorStats::new();
    for (i, op) in plan.ops().iter().enumerate() {
        if !op.is_semantic() {
            continue;
        }
        for m in models {
            let stat = OpStat {
                selectivity: matches!(op, LogicalOp::SemFilter { .. })
                    .then(|| [0.1, 0.25, 0.5, 1.0][rng.gen_range(0..4)]),
                quality: [0.6, 0.8, 0.9, 0.95, 1.0][rng.gen_range(0..5)],
                cost_per_record: [0.0005, 0.001, 0.002, 0.004][rng.gen_range(0..4)],
                latency_per_record: [0.5, 1.0, 2.0][rng.gen_range(0..3)],
                sample_size: 0,
            };
            stats.insert(i, &m.id, stat).unwrap();
        }
    }
    stats
}

fn random_policy(rng: &mut ChaCha8Rng) -> Policy {
    match rng.gen_range(0..3) {
        0 => Policy::MinCost { min_quality: rng.gen_range(0.0..1.0) },
        1 => Policy::MaxQuality { budget: rng.gen_range(0.0..3.0) },
        _ => loop {
            let w = Policy::Weighted {
                cost: rng.gen_range(0.0..2.0),
                latency: [0.0, rng.gen_range(0.0..1.0)][rng.gen_range(0..2)],
                quality: rng.gen_range(0.0..2.0),
            };
            if w.check().is_ok() {
                break w;
            }
        },
    }
}

/// Exhaustive scan: returns the first candidate no other candidate beats.
fn brute_force(plans: &[PhysicalPlan], est: &[CostEstimate], policy: &Policy) -> Result<usize, String> {
    let better = |a: usize, b: usize| -> bool {
        let (x, y) = (&est[a], &est[b]);
        let key = |e: &CostEstimate, id: &str| -> (Vec<f64>, String) {
            match *policy {
                Policy::MinCost { .. } => (vec![e.cost, e.latency], id.to_string()),
                Policy::MaxQuality { .. } => (vec![-e.quality, e.cost, e.latency], id.to_string()),
                Policy::Weighted { cost, latency, quality } => {
                    (vec![cost * e.cost + latency * e.latency + quality * (1.0 - e.quality)], id.to_string())
                }
            }
        };
        let (ka, kb) = (key(x, plans[a].id()), key(y, plans[b].id()));
        for (p, q) in ka.0.iter().zip(&kb.0) {
            if p < q {
                return true;
            }
            if p > q {
                return false;
            }
        }
        ka.1 < kb.1
    };
    let feasible = |i: usize| match *policy {
        Policy::MinCost { min_quality } => est[i].quality + POLICY_EPSILON >= min_quality,
        Policy::MaxQuality { budget } => est[i].cost <= budget + POLICY_EPSILON,
        Policy::Weighted { .. } => true,
    };
    let mut best: Option<usize> = None;
    for i in (0..plans.len()).filter(|&i| feasible(i)) {
        best = match best {
            Some(b) if !better(i, b) => Some(b),
            _ => Some(i),
        };
    }
    best.ok_or_else(|| "infeasible".to_string())
}

fn criterion_5(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut mismatches = 0;
    let mut infeasible = 0;
    let mut max_candidates = 0;
    for _ in 0..OPTIMIZER_CASES {
        let m = rng.gen_range(1..=4);
        let models = random_catalog(&mut rng, m);
        let s = rng.gen_range(0..=3);
        let plan = random_plan(&mut rng, s);
        let stats = random_stats(&mut rng, &plan, &models);
        let plans = enumerate_physical_plans(&plan, &models).unwrap();
        max_candidates = max_candidates.max(plans.len());
        let n = rng.gen_range(1..1000);
        let est: Vec<CostEstimate> =
            plans.iter().map(|p| estimate(p, &stats, n, rng.gen_range(1..16)).unwrap()).collect();
        let policy = random_policy(&mut rng);
        let got = choose_plan(&plans, &est, &policy);
        let want = brute_force(&plans, &est, &policy);
        match (got, want) {
            (Ok(g), Ok(w)) if g == w => {}
            (Err(Error::PolicyInfeasible { .. }), Err(_)) => infeasible += 1,
            _ => mismatches += 1,
        }
    }
    gate.record(
        5,
        "optimizer oracle equivalence",
        mismatches == 0,
        format!(
            "{OPTIMIZER_CASES} random cases up to 4 models x 3 semantic ops ({max_candidates} candidates max), \
         {mismatches} mismatches, {infeasible} agreed infeasible"
        ),
    );
}

fn criterion_6(gate: &mut Gate) {
    let cheap = ModelSpec::new("cheap", 0.1, 0.1, 0.8, 0.5).unwrap();
    let strong = ModelSpec::new("strong", 1.0, 1.0, 0.95, 1.0).unwrap();
    let plan = LogicalPlan::new(vec![
        LogicalOp::Scan { context: "ctx".into() },
        LogicalOp::SemFilter { predicate: "p".into() },
        LogicalOp::SemMap { instruction: "m".into(), outputs: vec![OutputField::new("x", FieldType::Text)] },
    ])
    .unwrap();
    let mut stats = OperatorStats::new();
    for (m, cost, q) in [(&cheap, 0.0001, 0.8), (&strong, 0.002, 0.95)] {
        let stat = |sel| OpStat {
            selectivity: sel,
            quality: q,
            cost_per_record: cost,
            latency_per_record: 1.0,
            sample_size: 0,
        };
        stats.insert(1, &m.id, stat(Some(0.2))).unwrap();
        stats.insert(2, &m.id, stat(None)).unwrap();
    }
    let ss = PhysicalPlan::bind(&plan, &[strong.clone(), strong.clone()], 1).unwrap();
    let cc = PhysicalPlan::bind(&plan, &[cheap.clone(), cheap.clone()], 1).unwrap();
    let e_ss = estimate(&ss, &stats, 100, 1).unwrap();
    let e_cc = estimate(&cc, &stats, 100, 1).unwrap();
    let worked = (e_ss.cost - (100.0 * 0.002 + 20.0 * 0.002)).abs() <= WORKED_EXAMPLE_TOL
        && (e_ss.cost - 0.24).abs() <= WORKED_EXAMPLE_TOL
        && (e_cc.cost - 0.012).abs() <= WORKED_EXAMPLE_TOL
        && (e_ss.quality - 0.9025).abs() <= WORKED_EXAMPLE_TOL;

    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 6);
    let mut violations = 0;
    for _ in 0..MONOTONICITY_CASES {
        let models = random_catalog(&mut rng, 2);
        let s = rng.gen_range(1..=3);
        let plan = random_plan(&mut rng, s);
        let mut stats = random_stats(&mut rng, &plan, &models);
        let candidates = enumerate_physical_plans(&plan, &models).unwrap();
        let chosen = candidates.choose(&mut rng).unwrap();
        let n = rng.gen_range(1..1000);
        let before = estimate(chosen, &stats, n, 4).unwrap();
        let positions = plan.semantic_positions();
        let i = *positions.choose(&mut rng).unwrap();
        let model = chosen.ops()[i].model.as_ref().unwrap().id.clone();
        let mut stat = *stats.get(i, &model).unwrap();
        if stat.selectivity.is_some() && rng.gen_bool(0.5) {
            stat.selectivity = stat.selectivity.map(|s| s * rng.gen_range(0.0..1.0));
            stats.insert(i, &model, stat).unwrap();
            if estimate(chosen, &stats, n, 4).unwrap().cost > before.cost {
                violations += 1;
            }
        } else {
            stat.cost_per_record += rng.gen_range(0.0..0.01);
            stats.insert(i, &model, stat).unwrap();
            if estimate(chosen, &stats, n, 4).unwrap().cost < before.cost {
                violations += 1;
            }
        }
    }
    gate.record(
        6,
        "estimator laws",
        worked && violations == 0,
        format!(
            "strong/strong cost {:.12} (want 0.24), cheap/cheap {:.12} (want 0.012), quality {:.6}; \
         {violations} monotonicity violations in {MONOTONICITY_CASES} perturbations",
            e_ss.cost, e_cc.cost, e_ss.quality
        ),
    );
}

const WORDS: [&str; 24] = [
    "raptor", "ljm", "chewco", "hedge", "equity", "losses", "emails", "gas", "trading", "board", "identity", "theft",
    "reports", "ratio", "2024", "2001", "counts", "files", "legal", "memo", "quarter", "credit", "summary", "findings",
];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(1..=6);
    (0..n).map(|_| *WORDS.choose(rng).unwrap()).collect::<Vec<_>>().join(" ")
}

fn criterion_7(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 7);
    let embedder = Arc::new(HashingEmbedder::default());
    let store = ContextStore::in_memory(embedder.clone());
    let root = email_context(vec![Record::new("r", vec![("text".into(), FieldValue::text("x"))]).unwrap()]);
    let mut descriptions: Vec<String> = Vec::new();
    for i in 0..STORE_ENTRIES {
        let d = if i > 0 && i % 10 == 0 { descriptions[rng.gen_range(0..i)].clone() } else { random_text(&mut rng) };
        let ctx = Context::derive(&root, format!("instruction {i}"), d.clone(), OperatorKind::Search, None).unwrap();
        store.register(&ctx).unwrap();
        descriptions.push(d);
    }
    let entries = store.snapshot();
    let mut mismatches = 0;
    let mut queries = 0;
    for q in 0..40 {
        let query =
            if q % 4 == 0 { descriptions[rng.gen_range(0..STORE_ENTRIES)].clone() } else { random_text(&mut rng) };
        let k = rng.gen_range(1..=25);
        let tau = [0.0, 0.5, 0.75, rng.gen_range(0.0..1.0)][q % 4];
        let qv = embedder.embed(&query).unwrap();
        let mut oracle: Vec<(f64, u64, String)> = entries
            .iter()
            .map(|e| {
                let dot: f64 = qv.components().iter().zip(e.embedding.components()).map(|(a, b)| a * b).sum();
                ((1.0 + dot.clamp(-1.0, 1.0)) / 2.0, e.seq, e.id.to_string())
            })
            .filter(|(s, _, _)| *s >= tau)
            .collect();
        oracle.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        oracle.truncate(k);
        let got: Vec<(f64, u64, String)> =
            store.retrieve(&query, k, tau).unwrap().into_iter().map(|(e, s)| (s, e.seq, e.id.to_string())).collect();
        queries += 1;
        if got != oracle {
            mismatches += 1;
        }
    }
    let mut self_ok = true;
    for i in (0..STORE_ENTRIES).step_by(97) {
        let hit = store.retrieve(&descriptions[i], 1, 0.0).unwrap();
        self_ok &= hit.first().is_some_and(|(_, s)| (s - 1.0).abs() <= SELF_MATCH_TOL);
    }
    let dir = tempfile::tempdir().unwrap();
    let reopened_ok = {
        let disk = ContextStore::open(dir.path(), embedder.clone()).unwrap();
        for (i, d) in descriptions.iter().enumerate() {
            let ctx =
                Context::derive(&root, format!("instruction {i}"), d.clone(), OperatorKind::Search, None).unwrap();
            disk.register(&ctx).unwrap();
        }
        let before = disk.snapshot();
        drop(disk);
        let after = ContextStore::open(dir.path(), embedder.clone()).unwrap().snapshot();
        let bits = |v: &ctxrt::llm::EmbeddingVector| v.components().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        before.len() == STORE_ENTRIES
            && before.len() == after.len()
            && before.iter().zip(after.iter()).all(|(a, b)| a == b && bits(&a.embedding) == bits(&b.embedding))
    };
    gate.record(
        7,
        "context retrieval oracle",
        mismatches == 0 && self_ok && reopened_ok,
        format!(
            "{STORE_ENTRIES}-entry store, {queries} queries, {mismatches} mismatches vs exhaustive ranking; \
         self-match within {SELF_MATCH_TOL}: {self_ok}; reopen bit-exact: {reopened_ok}"
        ),
    );
}

fn random_reply(rng: &mut ChaCha8Rng) -> String {
    let fence = |body: &str| format!("```json\n{body}\n```");
    match rng.gen_range(0..6) {
        0 => fence(r#"{"thought": "look", "tool": "list_sources"}"#),
        1 => fence(r#"{"thought": "math", "tool": "evaluate", "args": {"expression": "(2 + 3) * 4"}}"#),
        2 => fence(r#"{"thought": "read", "tool": "read_source", "args": {"id": "missing"}}"#),
        3 => fence(r#"{"thought": "oops", "tool": "no_such_tool"}"#),
        4 => "I am not sure what to do next.".to_string(),
        _ => fence(r#"{"thought": "done", "final_answer": "20", "value": 20}"#),
    }
}

fn criterion_8(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 8);
    let cat = catalog();
    let root = email_context(
        (0..3)
            .map(|i| {
                Record::new(format!("r{i}"), vec![("text".into(), FieldValue::text(format!("note {i}")))]).unwrap()
            })
            .collect(),
    );
    let mut violations = Vec::new();
    let (mut reasked, mut aborted, mut answered, mut limited) = (0, 0, 0, 0);
    for case in 0..AGENT_SCRIPTS {
        let mut script = MockScript::new();
        for _ in 0..rng.gen_range(0..14) {
            script.push(MockRule::reply(random_reply(&mut rng)).budget(1));
        }
        script.push(MockRule::reply("no idea"));
        let client = LlmClient::new(Arc::new(MockBackend::new(script)), &cat);
        let mut config = AgentConfig::new(cat.get("large").unwrap().clone());
        config.max_steps = rng.gen_range(1..=8);
        let agent = Agent::new(&client, &config);
        let (trace, derived) = if case % 2 == 0 {
            match agent::compute(&agent, &root, "count the notes") {
                Ok(out) => (out.trace, Some(out.context)),
                Err(Error::Compute { trace }) => (*trace, None),
                Err(e) => panic!("{e}"),
            }
        } else {
            match agent::search(&agent, &root, "find notes") {
                Ok(out) => (out.trace, Some(out.context)),
                Err(Error::Search { trace }) => (*trace, None),
                Err(e) => panic!("{e}"),
            }
        };
        let last_is_final =
            matches!(trace.steps.last().and_then(|s| s.action.as_ref()), Some(Action::FinalAnswer { .. }));
        if trace.steps.len() > config.max_steps {
            violations.push(format!("case {case}: {} steps > {}", trace.steps.len(), config.max_steps));
        }
        if trace.steps.iter().enumerate().any(|(i, s)| s.index != i) {
            violations.push(format!("case {case}: step indices not dense"));
        }
        if (trace.outcome == Outcome::Answered) != last_is_final {
            violations.push(format!("case {case}: answered iff final action broken"));
        }
        if let Some(ctx) = derived {
            let d = ctx.description();
            if !(d.starts_with(root.description()) && d.len() > root.description().len()) {
                violations.push(format!("case {case}: derived description does not extend parent"));
            }
        }
        if trace.steps.iter().any(|s| s.reasks > 0) {
            reasked += 1;
        }
        match trace.outcome {
            Outcome::Answered => answered += 1,
            Outcome::StepLimit => limited += 1,
            Outcome::Aborted(_) => {
                aborted += 1;
                if trace.steps.last().is_some_and(|s| s.action.is_some()) {
                    violations.push(format!("case {case}: abort recorded an action"));
                }
            }
        }
    }
    let covered = reasked > 0 && aborted > 0 && answered > 0 && limited > 0;
    gate.record(
        8,
        "agent loop properties",
        violations.is_empty() && covered,
        format!(
            "{AGENT_SCRIPTS} random scripts: {answered} answered, {limited} step-limit, {aborted} aborted, \
         {reasked} with re-asks; violations: {:?}",
            violations.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

fn random_string(rng: &mut ChaCha8Rng) -> String {
    const PIECES: [&str; 14] =
        ["a", "Raptor", " ", "\"", "\\", "\n", "\t", "|", "#", "é", "(", ")", "{x: text}", "2024"];
    let n = rng.gen_range(1..10);
    let s: String = (0..n).map(|_| *PIECES.choose(rng).unwrap()).collect();
    if s.trim().is_empty() {
        format!("{s}x")
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Random program text written independently of the printer, with random
/// spacing and comments.
fn random_program(rng: &mut ChaCha8Rng) -> String {
    let ws = |rng: &mut ChaCha8Rng| [" ", "", "\n  ", "  # note\n"][rng.gen_range(0..4)].to_string();
    let mut out = format!("scan({}ctx{})", ws(rng), ws(rng));
    for _ in 0..rng.gen_range(0..6) {
        let op = match rng.gen_range(0..6) {
            0 => format!("sem_filter({})", escape(&random_string(rng))),
            1 => {
                let n = rng.gen_range(1..4);
                let types = ["text", "number", "boolean", "list"];
                let fields: Vec<String> = (0..n).map(|i| format!("f{i}: {}", types[rng.gen_range(0..4)])).collect();
                format!("sem_map({}, {{{}}})", escape(&random_string(rng)), fields.join(","))
            }
            2 => format!("project(a{})", if rng.gen_bool(0.5) { ", b" } else { "" }),
            3 => format!("limit({})", rng.gen_range(1..10_000)),
            4 => format!("compute({})", escape(&random_string(rng))),
            _ => format!("search({})", escape(&random_string(rng))),
        };
        out.push_str(&format!("{}|{}{op}", ws(rng), ws(rng)));
    }
    out
}

fn criterion_9(gate: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let mut failures = Vec::new();
    for i in 0..FUZZ_PROGRAMS {
        let text = random_program(&mut rng);
        let result = parse_pipeline(&text).and_then(|p1| {
            let printed = print_pipeline(&p1);
            let p2 = parse_pipeline(&printed)?;
            Ok(p1 == p2 && print_pipeline(&p2) == printed)
        });
        match result {
            Ok(true) => {}
            Ok(false) => failures.push(format!("program {i}: not a fixed point")),
            Err(e) => failures.push(format!("program {i}: {e}")),
        }
    }
    let emails = email_context(gen_corpus(SEED, 20, 0.25).unwrap().records);
    let stats = stats_context(&gen_ratio_corpus(SEED).unwrap());
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../pipelines");
    let mut shipped = 0;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    for path in paths.iter().filter(|p| p.extension().is_some_and(|e| e == "pz")) {
        shipped += 1;
        let text = std::fs::read_to_string(path).unwrap();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        match parse_pipeline(&text) {
            Ok(plan) => {
                let ctx = if plan.source_ref() == "emails" { &emails } else { &stats };
                let diags = validate_plan(&plan, ctx);
                if !diags.is_empty() {
                    failures.push(format!("{name}: {diags:?}"));
                }
            }
            Err(e) => failures.push(format!("{name}: {e}")),
        }
    }
    let has_filter_map = paths.iter().any(|p| {
        let t = std::fs::read_to_string(p).unwrap_or_default();
        t.contains("sem_filter") && t.contains("sem_map")
    });
    gate.record(9, "parser round-trip", failures.is_empty() && shipped >= 3 && has_filter_map, format!(
        "{FUZZ_PROGRAMS} fuzz programs and {shipped} shipped pipelines (filter/map present: {has_filter_map}); failures: {:?}",
        failures.iter().take(3).collect::<Vec<_>>()
    ));
}

fn full_benchmark_bytes() -> Vec<u8> {
    let corpus = gen_corpus(SEED, N_EMAILS, RHO).unwrap();
    let report = run_experiment(&corpus, &Strategy::ALL, &bench_config()).unwrap();
    let ratio = run_ratio_experiment(&gen_ratio_corpus(SEED).unwrap(), &bench_config()).unwrap();
    let mut out = Vec::new();
    for run in &report.runs {
        out.extend(serde_json::to_vec(&run.ledger).unwrap());
        out.extend(serde_json::to_vec(&run.trace).unwrap());
    }
    out.extend(report.table().into_bytes());
    out.extend(report.rows_json().unwrap().into_bytes());
    out.extend(serde_json::to_vec(&ratio).unwrap());
    out.extend(ratio.table().into_bytes());
    out
}

fn criterion_10(gate: &mut Gate) {
    let a = full_benchmark_bytes();
    let b = full_benchmark_bytes();
    let first_diff = a.iter().zip(&b).position(|(x, y)| x != y);
    gate.record(
        10,
        "determinism",
        a == b,
        format!(
            "two seeded runs, {} vs {} bytes of ledgers, traces and tables; first difference at {:?}",
            a.len(),
            b.len(),
            first_diff
        ),
    );
}

#[test]
fn acceptance() {
    let mut gate = Gate { results: Vec::new() };
    criterion_1(&mut gate);
    criterion_2_and_3(&mut gate);
    criterion_4(&mut gate);
    criterion_5(&mut gate);
    criterion_6(&mut gate);
    criterion_7(&mut gate);
    criterion_8(&mut gate);
    criterion_9(&mut gate);
    criterion_10(&mut gate);
    gate.results.sort();
    let unexpected: Vec<u32> =
        gate.results.iter().filter(|(n, pass)| !pass && !KNOWN_UNATTAINABLE.contains(n)).map(|(n, _)| *n).collect();
    let known: Vec<u32> =
        gate.results.iter().filter(|(n, pass)| !pass && KNOWN_UNATTAINABLE.contains(n)).map(|(n, _)| *n).collect();
    println!("failed criteria: {unexpected:?}; known unattainable and failing: {known:?}");
    assert!(unexpected.is_empty(), "acceptance criteria failed: {unexpected:?}");
}
