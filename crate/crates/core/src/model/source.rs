//! Record collections backing a [`Context`](super::Context).
//!
//! Sources are snapshots: a materialized list of records or a file listing
//! taken once at construction. Iterating twice yields the same sequence.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;

use super::{FieldValue, Record, RecordId, RecordLineage};
use crate::error::{Error, Result};

pub type RecordIter<'a> = Box<dyn Iterator<Item = Result<Record>> + 'a>;

pub trait RecordSource: Send + Sync + fmt::Debug {
    /// Human-readable origin, used in error details.
    fn origin(&self) -> String;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn iter(&self) -> RecordIter<'_>;

    fn get(&self, id: &RecordId) -> Result<Option<Record>> {
        for record in self.iter() {
            let record = record?;
            if &record.id == id {
                return Ok(Some(record));
            }
        }
        Ok(None)
    }
}

/// In-memory snapshot.
#[derive(Debug, Clone)]
pub struct MemorySource {
    origin: String,
    records: Arc<Vec<Record>>,
    positions: Arc<IndexMap<RecordId, usize>>,
}

impl MemorySource {
    pub fn new(origin: impl Into<String>, records: Vec<Record>) -> Result<Self> {
        let mut positions = IndexMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if positions.insert(r.id.clone(), i).is_some() {
                return Err(Error::Validation(format!("duplicate record id {}", r.id)));
            }
        }
        Ok(MemorySource { origin: origin.into(), records: Arc::new(records), positions: Arc::new(positions) })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }
}

impl RecordSource for MemorySource {
    fn origin(&self) -> String {
        self.origin.clone()
    }

    fn len(&self) -> usize {
        self.records.len()
    }

    fn iter(&self) -> RecordIter<'_> {
        Box::new(self.records.iter().cloned().map(Ok))
    }

    fn get(&self, id: &RecordId) -> Result<Option<Record>> {
        Ok(self.positions.get(id).map(|&i| self.records[i].clone()))
    }
}

/// One record per regular file under a directory (recursive), with fields
/// `path` (relative, `/`-separated) and `text`. The listing is fixed at
/// construction; contents are read on iteration.
#[derive(Debug, Clone)]
pub struct DirectorySource {
    root: PathBuf,
    files: Arc<Vec<String>>,
}

impl DirectorySource {
    pub fn open(root: impl AsRef<Path>) -> Result<Self> {
        let root = root.as_ref().to_path_buf();
        let mut files = Vec::new();
        collect_files(&root, &root, &mut files)
            .map_err(|e| Error::DataAccess { source_detail: root.display().to_string(), message: e.to_string() })?;
        files.sort();
        Ok(DirectorySource { root, files: Arc::new(files) })
    }

    fn read(&self, rel: &str) -> Result<Record> {
        let path = self.root.join(rel);
        let bytes = fs::read(&path)
            .map_err(|e| Error::DataAccess { source_detail: path.display().to_string(), message: e.to_string() })?;
        let text = String::from_utf8_lossy(&bytes).into_owned();
        Record::from_source(
            rel,
            0,
            [("path".to_string(), FieldValue::text(rel)), ("text".to_string(), FieldValue::Text(text))],
        )
    }
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<String>) -> std::io::Result<()> {
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let path = entry.path();
        let ty = entry.file_type()?;
        if ty.is_dir() {
            collect_files(root, &path, out)?;
        } else if ty.is_file() {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let rel =
                rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect::<Vec<_>>().join("/");
            out.push(rel);
        }
    }
    Ok(())
}

impl RecordSource for DirectorySource {
    fn origin(&self) -> String {
        self.root.display().to_string()
    }

    fn len(&self) -> usize {
        self.files.len()
    }

    fn iter(&self) -> RecordIter<'_> {
        Box::new(self.files.iter().map(move |rel| self.read(rel)))
    }
}

/// Parses one line of the record-per-line format.
///
/// A line is a JSON object. If it has a `fields` object, that object holds
/// the payload and optional `id` / `lineage` keys are honored; otherwise the
/// whole object is the payload. Records without an id get a content hash of
/// `origin`, the line number and the payload.
pub fn parse_record_line(origin: &str, line_no: u64, line: &str) -> Result<Record> {
    let detail = || format!("{origin}:{}", line_no + 1);
    let value: serde_json::Value = serde_json::from_str(line)
        .map_err(|e| Error::DataAccess { source_detail: detail(), message: e.to_string() })?;
    let obj = value.as_object().ok_or_else(|| Error::DataAccess {
        source_detail: detail(),
        message: "record line is not a JSON object".into(),
    })?;
    let (payload, id, lineage) = match obj.get("fields") {
        Some(serde_json::Value::Object(fields)) => {
            let id = obj.get("id").and_then(|v| v.as_str()).map(str::to_string);
            let lineage = match obj.get("lineage") {
                Some(l) if !l.is_null() => Some(
                    serde_json::from_value::<RecordLineage>(l.clone())
                        .map_err(|e| Error::DataAccess { source_detail: detail(), message: e.to_string() })?,
                ),
                _ => None,
            };
            (fields, id, lineage)
        }
        _ => (obj, None, None),
    };
    let mut fields = IndexMap::with_capacity(payload.len());
    for (k, v) in payload {
        let value = FieldValue::from_json(v).map_err(|e| Error::DataAccess {
            source_detail: format!("{}, field {k}", detail()),
            message: e.to_string(),
        })?;
        fields.insert(k.clone(), value);
    }
    let mut record = match id {
        Some(id) => Record::new(id, fields)?,
        None => Record::from_source(origin, line_no, fields)?,
    };
    record.lineage = lineage;
    Ok(record)
}

/// Loads a record-per-line file into a snapshot. Blank lines are skipped.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<MemorySource> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let file = fs::File::open(path)
        .map_err(|e| Error::DataAccess { source_detail: origin.clone(), message: e.to_string() })?;
    let mut records = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::DataAccess { source_detail: origin.clone(), message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(&origin, i as u64, &line)?);
    }
    MemorySource::new(origin, records)
}

/// Writes records in the full (`id`/`fields`/`lineage`) line format.
pub fn write_jsonl<'a, W: Write>(mut out: W, records: impl IntoIterator<Item = &'a Record>) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
