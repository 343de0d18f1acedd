//! Writes the benchmark corpora as on-disk datasets plus mock scripts and a
//! config file, so the CLI can replay the prototype strategy end to end.

use std::path::Path;

use ctxrt::llm::MockScript;
use ctxrt::Result;

use crate::experiment::{prototype_script, ratio_prototype_script};
use crate::{LabeledCorpus, RatioCorpus};

pub const EMAILS_FILE: &str = "emails.jsonl";
pub const STATS_DIR: &str = "stats";
pub const EMAILS_MOCK: &str = "mock_emails.toml";
pub const STATS_MOCK: &str = "mock_stats.toml";
pub const CONFIG_FILE: &str = "ctxrt.toml";

fn config_text() -> String {
    format!(
        r#"run_dir = "runs"
store_dir = "store"

[backend]
mock_script = "{EMAILS_MOCK}"

[[dataset]]
name = "emails"
kind = "jsonl"
path = "{EMAILS_FILE}"
description = "Internal company emails, one record per message"

[[dataset]]
name = "stats"
kind = "dir"
path = "{STATS_DIR}"
description = "Consumer fraud statistics files"
"#
    )
}

fn combined(mut agent: MockScript, operators: &MockScript) -> String {
    agent.extend(operators.clone());
    agent.to_toml()
}

/// Layout: `emails.jsonl`, `stats/`, one mock script per scenario and
/// `ctxrt.toml` pointing at the email scenario's script.
pub fn write_demo(dir: impl AsRef<Path>, emails: &LabeledCorpus, stats: &RatioCorpus) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join(STATS_DIR))?;
    emails.write_jsonl(dir.join(EMAILS_FILE))?;
    stats.write_dir(dir.join(STATS_DIR))?;
    std::fs::write(dir.join(EMAILS_MOCK), combined(prototype_script()?, &emails.script))?;
    std::fs::write(dir.join(STATS_MOCK), combined(ratio_prototype_script()?, &stats.script))?;
    std::fs::write(dir.join(CONFIG_FILE), config_text())?;
    Ok(())
}
