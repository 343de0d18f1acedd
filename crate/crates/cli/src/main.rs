//! `ctxrt` command-line interface.
//!
//! Every failure prints one line `error: <category>: <message>` to stderr and
//! exits with status 1. Categories are stable strings (`config-error`,
//! `parse-error`, `budget-exceeded`, ...).

mod render;
mod rundir;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ctxrt::config::RunConfig;
use ctxrt::model::{write_jsonl, ContextId};
use ctxrt::{Error, Result};
use ctxrt_bench::{
    gen_corpus, gen_ratio_corpus, run_experiment, run_ratio_experiment, write_demo, BenchBackend, BenchConfig, Strategy,
};

use crate::rundir::RunDir;

#[derive(Debug, Parser)]
#[command(name = "ctxrt", version, about = "Context-centric runtime for semantic pipelines and agentic queries")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "ctxrt.toml")]
    config: PathBuf,
    /// Mock script to use instead of the configured backend.
    #[arg(long, global = true)]
    mock: Option<PathBuf>,
    /// Parent directory for run directories.
    #[arg(long, global = true)]
    run_dir: Option<PathBuf>,
    /// Context store directory.
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// Concurrent model calls per semantic operator.
    #[arg(long, global = true)]
    pool_width: Option<usize>,
    /// Cost budget in USD, applied to pipelines and to the agent.
    #[arg(long, global = true)]
    budget: Option<f64>,
    /// Agent step limit.
    #[arg(long, global = true)]
    max_steps: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Answer a natural-language instruction over a dataset with `compute`.
    Run {
        dataset: String,
        instruction: String,
        /// Fold similar prior contexts from the store into the input.
        #[arg(long)]
        reuse: bool,
    },
    /// Optimize and execute a pipeline file.
    Pipeline {
        file: PathBuf,
        dataset: String,
        /// Print candidate plans and estimates without executing.
        #[arg(long)]
        explain: bool,
        /// Records sampled per operator and model; 0 uses priors.
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Print the ledger and per-operator table of a run directory.
    Stats { run: PathBuf },
    /// Inspect or clear the context store.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
    /// Run the strategy benchmark on the deterministic mock backend.
    Bench {
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// Number of emails.
        #[arg(long, default_value_t = 250)]
        n: usize,
        /// Fraction of relevant emails.
        #[arg(long, default_value_t = 0.156)]
        rho: f64,
        /// Strategy to run; repeat for several. Defaults to all.
        #[arg(long = "strategy")]
        strategies: Vec<String>,
        /// Emit machine-readable rows instead of text tables.
        #[arg(long)]
        json: bool,
        /// Also write the corpora, mock scripts and a config here.
        #[arg(long)]
        emit_dir: Option<PathBuf>,
        /// Live provider URL. Benchmarks refuse live backends.
        #[arg(long)]
        base_url: Option<String>,
    },
}

#[derive(Debug, Subcommand)]
enum CacheAction {
    List,
    Show { id: String },
    Clear,
}

fn cwd_path(p: &Path) -> Result<PathBuf> {
    Ok(if p.is_absolute() { p.to_path_buf() } else { std::env::current_dir()?.join(p) })
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(&cli.config)?;
    if let Some(mock) = &cli.mock {
        config.backend.mock_script = Some(cwd_path(mock)?);
        config.backend.base_url = None;
    }
    if let Some(dir) = &cli.run_dir {
        config.run_dir = cwd_path(dir)?;
    }
    if let Some(dir) = &cli.store {
        config.store_dir = Some(cwd_path(dir)?);
    }
    if let Some(w) = cli.pool_width {
        config.pool_width = w;
    }
    if let Some(b) = cli.budget {
        config.budgets.run_cost = Some(b);
        config.budgets.agent_cost = Some(b);
    }
    if let Some(s) = cli.max_steps {
        config.budgets.max_steps = Some(s);
    }
    config.check()?;
    Ok(config)
}

fn cmd_run(cli: &Cli, dataset: &str, instruction: &str, reuse: bool) -> Result<()> {
    let config = load_config(cli)?;
    let rt = config.runtime()?;
    let mut ctx = config.load_dataset(dataset)?;
    if reuse {
        let (augmented, matches) = rt.reuse(&ctx, instruction)?;
        for (entry, sim) in &matches {
            eprintln!("reusing context {} (similarity {sim:.4})", entry.id);
        }
        ctx = augmented;
    }
    let result = rt.compute(&ctx, instruction);
    let dir = RunDir::create(&config.resolve(&config.run_dir))?;
    let trace = match &result {
        Ok(out) => &out.trace,
        Err(Error::Compute { trace }) => trace.as_ref(),
        Err(_) => {
            dir.write_common(&rt)?;
            eprintln!("run directory: {}", dir.path().display());
            return result.map(|_| ());
        }
    };
    dir.write_json("trace.json", trace)?;
    dir.write_common(&rt)?;
    eprintln!("run directory: {}", dir.path().display());
    let out = result?;
    let mut answer = out.answer.clone();
    if let Some(v) = &out.value {
        answer.push_str(&format!("\nvalue: {v}"));
    }
    dir.write_text("answer.txt", &format!("{answer}\n"))?;
    println!("{answer}");
    Ok(())
}

fn cmd_pipeline(cli: &Cli, file: &Path, dataset: &str, explain: bool, sample: Option<usize>) -> Result<()> {
    let mut config = load_config(cli)?;
    if let Some(n) = sample {
        config.sample_size = n;
    }
    let text = std::fs::read_to_string(file)
        .map_err(|e| Error::Config(format!("cannot read pipeline {}: {e}", file.display())))?;
    let rt = config.runtime()?;
    let ctx = config.load_dataset(dataset)?;
    if explain {
        let (chosen, report) = rt.explain(&text, &ctx)?;
        print!("{}", report.render());
        println!("\nchosen: {chosen}");
        println!("model calls: {}", rt.client().ledger().snapshot().total.calls);
        return Ok(());
    }
    let result = rt.pipeline(&text, &ctx);
    let dir = RunDir::create(&config.resolve(&config.run_dir))?;
    dir.write_common(&rt)?;
    eprintln!("run directory: {}", dir.path().display());
    let run = result?;
    dir.write_text("plan.txt", &format!("{}\n", run.plan))?;
    let records = run.context.records()?;
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &records)?;
    std::fs::write(dir.path().join("output.jsonl"), buf)?;
    println!("plan: {}", run.plan);
    print!("{}", render::execution_report(&run.report));
    print!("{}", render::preview(&records, 10));
    Ok(())
}

fn cmd_stats(run: &Path) -> Result<()> {
    print!("{}", render::stats(run)?);
    Ok(())
}

fn cmd_cache(cli: &Cli, action: &CacheAction) -> Result<()> {
    let config = load_config(cli)?;
    if config.store_dir.is_none() {
        return Err(Error::Config("no store directory configured (set store_dir or pass --store)".into()));
    }
    let store = config.open_store()?;
    match action {
        CacheAction::List => {
            for e in store.snapshot().iter() {
                let first = e.description.lines().next().unwrap_or("");
                println!("{:>4}  {}  {}", e.seq, e.id, first);
            }
        }
        CacheAction::Show { id } => {
            let entry = store.get(&ContextId::new(id.clone())).ok_or_else(|| Error::UnknownContext(id.clone()))?;
            println!("id: {}\nseq: {}\ncreated_ms: {}", entry.id, entry.seq, entry.created_ms);
            println!("instruction: {}\nlineage: {}\n\n{}", entry.instruction, entry.lineage, entry.description);
        }
        CacheAction::Clear => {
            let n = store.len();
            store.clear()?;
            println!("cleared {n} entries");
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_bench(
    seed: u64,
    n: usize,
    rho: f64,
    strategies: &[String],
    json: bool,
    emit_dir: Option<&Path>,
    base_url: Option<&str>,
) -> Result<()> {
    let mut config = BenchConfig::default();
    if let Some(url) = base_url {
        config.backend = BenchBackend::Live { base_url: url.to_string() };
    }
    config.check()?;
    let strategies = if strategies.is_empty() {
        Strategy::ALL.to_vec()
    } else {
        strategies.iter().map(|s| s.parse()).collect::<Result<Vec<Strategy>>>()?
    };
    let corpus = gen_corpus(seed, n, rho)?;
    let stats = gen_ratio_corpus(seed)?;
    if let Some(dir) = emit_dir {
        write_demo(dir, &corpus, &stats)?;
        eprintln!("wrote demo datasets and config to {}", dir.display());
    }
    let report = run_experiment(&corpus, &strategies, &config)?;
    let ratio = run_ratio_experiment(&stats, &config)?;
    if json {
        let doc = serde_json::json!({
            "emails": serde_json::from_str::<serde_json::Value>(&report.rows_json()?)?,
            "ratio": serde_json::to_value(&ratio)?,
        });
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        print!("{}\n{}", report.table(), ratio.table());
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Run { dataset, instruction, reuse } => cmd_run(cli, dataset, instruction, *reuse),
        Command::Pipeline { file, dataset, explain, sample } => cmd_pipeline(cli, file, dataset, *explain, *sample),
        Command::Stats { run } => cmd_stats(run),
        Command::Cache { action } => cmd_cache(cli, action),
        Command::Bench { seed, n, rho, strategies, json, emit_dir, base_url } => {
            cmd_bench(*seed, *n, *rho, strategies, *json, emit_dir.as_deref(), base_url.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let message = e.to_string().replace('\n', " ");
            eprintln!("error: {}: {message}", e.category());
            ExitCode::FAILURE
        }
    }
}
