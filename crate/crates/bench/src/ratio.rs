//! Statistics-file corpus for the ratio query: one file holds the true
//! yearly counts, one holds stale preliminary figures, the rest are noise.

use std::path::Path;

use ctxrt::llm::{MockRule, MockScript};
use ctxrt::model::{FieldValue, Record};
use ctxrt::Result;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RATIO_FILES: usize = 40;
pub const COUNT_2024: u64 = 1_135_291;
pub const COUNT_2001: u64 = 86_250;
pub const PRELIMINARY_2024: u64 = 1_036_903;
pub const PRELIMINARY_2001: u64 = 86_168;
pub const TRUTH_PATH: &str = "reports/identity_theft_by_year.txt";
pub const PRELIMINARY_PATH: &str = "reports/sentinel_preliminary_summary.txt";

pub const RATIO_QUERY: &str = "Compute the ratio of the number of identity theft reports in 2024 vs. 2001.";
/// Used by the prototype's pipelines: only final figures qualify.
pub const FINAL_COUNTS_PREDICATE: &str = "contains final yearly counts of identity theft reports";
/// Used by the semantic-operator-only plan: any identity theft figures qualify.
pub const ANY_COUNTS_PREDICATE: &str = "mentions yearly counts of identity theft reports";
pub const MAP_2024: &str = "extract the number of identity theft reports in 2024";
pub const MAP_2001: &str = "extract the number of identity theft reports in 2001";
pub const MAP_RATIO: &str = "compute the ratio of identity theft reports in 2024 to those in 2001";

const TOPICS: [&str; 8] = [
    "credit card fraud",
    "imposter scams",
    "online shopping complaints",
    "tax fraud",
    "phone scams",
    "auto loan complaints",
    "debt collection complaints",
    "mail fraud",
];

#[derive(Debug, Clone)]
pub struct RatioCorpus {
    pub seed: u64,
    pub records: Vec<Record>,
    pub script: MockScript,
}

impl RatioCorpus {
    pub fn planted_ratio() -> f64 {
        COUNT_2024 as f64 / COUNT_2001 as f64
    }

    /// Writes one file per record under `dir`, at its `path`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        for r in &self.records {
            let path = dir.as_ref().join(r.get("path").expect("path").to_string());
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            std::fs::write(path, r.get("text").expect("text").to_string())?;
        }
        Ok(())
    }
}

fn file_record(path: &str, text: String) -> Result<Record> {
    Record::new(path, vec![("path".to_string(), FieldValue::text(path)), ("text".to_string(), FieldValue::text(text))])
}

fn fmt_thousands(n: u64) -> String {
    let digits: Vec<char> = n.to_string().chars().collect();
    let groups: Vec<String> = digits.rchunks(3).rev().map(|g| g.iter().collect()).collect();
    groups.join(",")
}

pub fn gen_ratio_corpus(seed: u64) -> Result<RatioCorpus> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(RATIO_FILES);
    let mut truth = String::from("Consumer Sentinel Network: identity theft reports, final yearly counts\n");
    for year in 2001..=2024u64 {
        let count = match year {
            2001 => COUNT_2001,
            2024 => COUNT_2024,
            y => COUNT_2001 + (y - 2001) * rng.gen_range(30_000..50_000),
        };
        truth.push_str(&format!("{year}: {} reports\n", fmt_thousands(count)));
    }
    records.push(file_record(TRUTH_PATH, truth)?);
    records.push(file_record(
        PRELIMINARY_PATH,
        format!(
            "Preliminary summary (superseded). Identity theft reports: 2024 preliminary {}, 2001 baseline {}.\n",
            fmt_thousands(PRELIMINARY_2024),
            fmt_thousands(PRELIMINARY_2001)
        ),
    )?);
    let mut i = 0;
    while records.len() < RATIO_FILES {
        let topic = TOPICS.choose(&mut rng).expect("topics");
        let year = rng.gen_range(2001..=2024);
        let path = format!("tables/t{i:02}_{}.csv", topic.replace(' ', "_"));
        let text = format!(
            "category,year,count\n{topic},{year},{}\n{topic},{},{}\n",
            rng.gen_range(1_000..900_000),
            year - 1,
            rng.gen_range(1_000..900_000)
        );
        records.push(file_record(&path, text)?);
        i += 1;
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));

    let truth_marker = format!("path: {TRUTH_PATH}");
    let prelim_marker = format!("path: {PRELIMINARY_PATH}");
    let prelim_ratio = PRELIMINARY_2024 as f64 / PRELIMINARY_2001 as f64;
    let script = MockScript::new()
        .rule(MockRule::contains(format!("PREDICATE: {FINAL_COUNTS_PREDICATE}"), "yes").and_contains(&truth_marker))
        .rule(MockRule::contains(format!("PREDICATE: {FINAL_COUNTS_PREDICATE}"), "no"))
        .rule(MockRule::contains(format!("PREDICATE: {ANY_COUNTS_PREDICATE}"), "yes").and_contains(&truth_marker))
        .rule(MockRule::contains(format!("PREDICATE: {ANY_COUNTS_PREDICATE}"), "yes").and_contains(&prelim_marker))
        .rule(MockRule::contains(format!("PREDICATE: {ANY_COUNTS_PREDICATE}"), "no"))
        .rule(
            MockRule::contains(format!("INSTRUCTION: {MAP_2024}"), format!("count_2024: {COUNT_2024}"))
                .and_contains(&truth_marker),
        )
        .rule(
            MockRule::contains(format!("INSTRUCTION: {MAP_2001}"), format!("count_2001: {COUNT_2001}"))
                .and_contains(&truth_marker),
        )
        .rule(
            MockRule::contains(format!("INSTRUCTION: {MAP_RATIO}"), format!("ratio: {}", RatioCorpus::planted_ratio()))
                .and_contains(&truth_marker),
        )
        .rule(
            MockRule::contains(format!("INSTRUCTION: {MAP_RATIO}"), format!("ratio: {prelim_ratio}"))
                .and_contains(&prelim_marker),
        );
    Ok(RatioCorpus { seed, records, script })
}
