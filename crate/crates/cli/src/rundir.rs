//! Run directory layout:
//!
//! ```text
//! <run_dir>/run-0001/
//!   ledger.json     usage snapshot: per model, per call kind, total
//!   report.json     execution reports, one per pipeline executed
//!   optimizer.json  optimizer reports, same order as report.json
//!   trace.json      agent trace (`run` only)
//!   answer.txt      printed answer (`run` only, on success)
//!   plan.txt        chosen physical plan (`pipeline` only)
//!   output.jsonl    output records (`pipeline` only)
//! ```

use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use ctxrt::runtime::Runtime;
use ctxrt::Result;
use serde::Serialize;

pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    /// Creates the first free `run-NNNN` directory under `parent`.
    pub fn create(parent: &Path) -> Result<Self> {
        std::fs::create_dir_all(parent)?;
        for i in 1.. {
            let path = parent.join(format!("run-{i:04}"));
            match std::fs::create_dir(&path) {
                Ok(()) => return Ok(RunDir { path }),
                Err(e) if e.kind() == ErrorKind::AlreadyExists => continue,
                Err(e) => return Err(e.into()),
            }
        }
        unreachable!()
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_json<T: Serialize + ?Sized>(&self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)?;
        self.write_text(name, &format!("{text}\n"))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        std::fs::write(self.path.join(name), text)?;
        Ok(())
    }

    /// Ledger, execution reports and optimizer reports.
    pub fn write_common(&self, rt: &Runtime) -> Result<()> {
        let log = rt.pipeline_log();
        self.write_json("ledger.json", &rt.client().ledger().snapshot())?;
        self.write_json("report.json", &log.iter().map(|l| &l.report).collect::<Vec<_>>())?;
        self.write_json("optimizer.json", &log.iter().map(|l| &l.optimizer).collect::<Vec<_>>())
    }
}
