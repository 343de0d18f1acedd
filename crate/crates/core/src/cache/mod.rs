//! Store of materialized contexts, retrievable by description similarity.
//!
//! On-disk layout of a store directory:
//!
//! * `entries.jsonl`: one JSON object per line, append-only, with fields
//!   `seq`, `id`, `description`, `lineage`, `instruction`, `created_ms`,
//!   `dimension` and `checksum`. The checksum is the lowercase hex SHA-256 of
//!   the line's JSON with `checksum` set to `""`, followed by the entry's
//!   vector bytes.
//! * `vectors.bin`: the 8-byte magic `CTXVEC01`, the dimension as a
//!   little-endian `u32`, then one unit-norm vector per entry in `seq` order,
//!   each `dimension` little-endian `f64` values.
//!
//! Opening a store re-reads both files and validates every checksum.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::llm::{Embedder, EmbeddingVector};
use crate::model::{truncate_chars, Context, ContextId, OperatorKind};
use crate::rank::top_k;

pub const ENTRIES_FILE: &str = "entries.jsonl";
pub const VECTORS_FILE: &str = "vectors.bin";
pub const VECTOR_MAGIC: &[u8; 8] = b"CTXVEC01";
pub const DEFAULT_THRESHOLD: f64 = 0.75;
/// Characters quoted per match by [`augment`].
pub const AUGMENT_QUOTE_CAP: usize = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct ContextEntry {
    pub seq: u64,
    pub id: ContextId,
    pub description: String,
    pub embedding: EmbeddingVector,
    pub lineage: String,
    pub instruction: String,
    pub created_ms: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EntryLine {
    seq: u64,
    id: ContextId,
    description: String,
    lineage: String,
    instruction: String,
    created_ms: u64,
    dimension: usize,
    checksum: String,
}

fn vector_bytes(v: &EmbeddingVector) -> Vec<u8> {
    v.components().iter().flat_map(|x| x.to_le_bytes()).collect()
}

fn checksum(line: &EntryLine, vector: &[u8]) -> Result<String> {
    let mut blank = line.clone();
    blank.checksum = String::new();
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&blank)?);
    h.update(vector);
    Ok(hex::encode(h.finalize()))
}

fn header_len() -> u64 {
    VECTOR_MAGIC.len() as u64 + 4
}

#[derive(Debug)]
struct Files {
    dir: PathBuf,
}

/// Single-writer, multi-reader context store. Readers work on a snapshot
/// of the entry list; registrations are serialized.
#[derive(Debug)]
pub struct ContextStore {
    embedder: Arc<dyn Embedder>,
    entries: RwLock<Arc<Vec<ContextEntry>>>,
    writer: Mutex<Option<Files>>,
}

impl ContextStore {
    /// Store without persistence.
    pub fn in_memory(embedder: Arc<dyn Embedder>) -> Self {
        ContextStore { embedder, entries: RwLock::new(Arc::new(Vec::new())), writer: Mutex::new(None) }
    }

    /// Opens (creating if needed) a store directory and validates it.
    pub fn open(dir: impl AsRef<Path>, embedder: Arc<dyn Embedder>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let entries = load(&dir, embedder.dimension())?;
        Ok(ContextStore { embedder, entries: RwLock::new(Arc::new(entries)), writer: Mutex::new(Some(Files { dir })) })
    }

    pub fn dir(&self) -> Option<PathBuf> {
        self.writer.lock().expect("store writer").as_ref().map(|f| f.dir.clone())
    }

    pub fn snapshot(&self) -> Arc<Vec<ContextEntry>> {
        self.entries.read().expect("store entries").clone()
    }

    pub fn len(&self) -> usize {
        self.snapshot().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, id: &ContextId) -> Option<ContextEntry> {
        self.snapshot().iter().find(|e| &e.id == id).cloned()
    }

    /// Adds `ctx`. Re-registering identical content is a no-op returning the
    /// existing entry; different content under a known id is a conflict.
    pub fn register(&self, ctx: &Context) -> Result<ContextEntry> {
        let instruction = ctx.lineage().map(|l| l.instruction.clone()).unwrap_or_default();
        let lineage = ctx.lineage_summary();
        let mut writer = self.writer.lock().expect("store writer");
        let current = self.snapshot();
        if let Some(existing) = current.iter().find(|e| &e.id == ctx.id()) {
            if existing.description == ctx.description()
                && existing.instruction == instruction
                && existing.lineage == lineage
            {
                return Ok(existing.clone());
            }
            return Err(Error::Conflict(ctx.id().to_string()));
        }
        let entry = ContextEntry {
            seq: current.last().map_or(0, |e| e.seq + 1),
            id: ctx.id().clone(),
            description: ctx.description().to_string(),
            embedding: self.embedder.embed(ctx.description())?,
            lineage,
            instruction,
            created_ms: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0),
        };
        if let Some(files) = writer.as_mut() {
            append(&files.dir, &entry)?;
        }
        let mut next = (*current).clone();
        next.push(entry.clone());
        *self.entries.write().expect("store entries") = Arc::new(next);
        Ok(entry)
    }

    /// Entries with similarity >= `threshold` to `instruction`, best first;
    /// ties go to the earlier registration, then the smaller id.
    pub fn retrieve(&self, instruction: &str, k: usize, threshold: f64) -> Result<Vec<(ContextEntry, f64)>> {
        if k == 0 {
            return Err(Error::Validation("k must be at least 1".into()));
        }
        let query = self.embedder.embed(instruction)?;
        let entries = self.snapshot();
        let scored = entries.iter().enumerate().filter_map(|(i, e)| {
            let sim = query.similarity(&e.embedding);
            (sim >= threshold).then(|| (sim, (e.seq, e.id.as_str(), i)))
        });
        Ok(top_k(scored, k).into_iter().map(|(sim, (_, _, i))| (entries[i].clone(), sim)).collect())
    }

    /// Removes every entry, on disk too.
    pub fn clear(&self) -> Result<()> {
        let writer = self.writer.lock().expect("store writer");
        if let Some(files) = writer.as_ref() {
            for name in [ENTRIES_FILE, VECTORS_FILE] {
                let p = files.dir.join(name);
                if p.exists() {
                    fs::remove_file(p)?;
                }
            }
        }
        *self.entries.write().expect("store entries") = Arc::new(Vec::new());
        Ok(())
    }
}

fn append(dir: &Path, entry: &ContextEntry) -> Result<()> {
    let dim = entry.embedding.dimension();
    let vectors_path = dir.join(VECTORS_FILE);
    let mut vectors = OpenOptions::new().create(true).append(true).open(&vectors_path)?;
    if vectors.metadata()?.len() == 0 {
        vectors.write_all(VECTOR_MAGIC)?;
        vectors.write_all(&(dim as u32).to_le_bytes())?;
    }
    let bytes = vector_bytes(&entry.embedding);
    let mut line = EntryLine {
        seq: entry.seq,
        id: entry.id.clone(),
        description: entry.description.clone(),
        lineage: entry.lineage.clone(),
        instruction: entry.instruction.clone(),
        created_ms: entry.created_ms,
        dimension: dim,
        checksum: String::new(),
    };
    line.checksum = checksum(&line, &bytes)?;
    vectors.write_all(&bytes)?;
    vectors.sync_data()?;
    let mut entries = OpenOptions::new().create(true).append(true).open(dir.join(ENTRIES_FILE))?;
    let mut text = serde_json::to_string(&line)?;
    text.push('\n');
    entries.write_all(text.as_bytes())?;
    entries.sync_data()?;
    Ok(())
}

fn load(dir: &Path, expected_dim: usize) -> Result<Vec<ContextEntry>> {
    let entries_path = dir.join(ENTRIES_FILE);
    let vectors_path = dir.join(VECTORS_FILE);
    if !entries_path.exists() {
        return Ok(Vec::new());
    }
    let mut lines = Vec::new();
    for (n, line) in BufReader::new(File::open(&entries_path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: EntryLine =
            serde_json::from_str(&line).map_err(|e| Error::Corrupt(format!("{ENTRIES_FILE} line {}: {e}", n + 1)))?;
        lines.push(parsed);
    }
    if lines.is_empty() {
        return Ok(Vec::new());
    }
    let mut raw = Vec::new();
    File::open(&vectors_path).map_err(|e| Error::Corrupt(format!("{VECTORS_FILE}: {e}")))?.read_to_end(&mut raw)?;
    if raw.len() < header_len() as usize || &raw[..8] != VECTOR_MAGIC {
        return Err(Error::Corrupt(format!("{VECTORS_FILE}: bad header")));
    }
    let dim = u32::from_le_bytes(raw[8..12].try_into().expect("4 bytes")) as usize;
    if dim != expected_dim {
        return Err(Error::Config(format!("store dimension {dim} does not match embedder dimension {expected_dim}")));
    }
    let stride = dim * 8;
    let body = &raw[12..];
    if body.len() != stride * lines.len() {
        return Err(Error::Corrupt(format!(
            "{VECTORS_FILE} holds {} bytes of vectors, expected {} for {} entries",
            body.len(),
            stride * lines.len(),
            lines.len()
        )));
    }
    let mut out = Vec::with_capacity(lines.len());
    for (i, line) in lines.into_iter().enumerate() {
        if line.seq != i as u64 || line.dimension != dim {
            return Err(Error::Corrupt(format!("entry {i} out of sequence")));
        }
        let bytes = &body[i * stride..(i + 1) * stride];
        if checksum(&line, bytes)? != line.checksum {
            return Err(Error::Corrupt(format!("checksum mismatch for entry {}", line.id)));
        }
        let components = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        out.push(ContextEntry {
            seq: line.seq,
            id: line.id,
            description: line.description,
            embedding: EmbeddingVector::from_unit(components).map_err(|e| Error::Corrupt(format!("entry {i}: {e}")))?,
            lineage: line.lineage,
            instruction: line.instruction,
            created_ms: line.created_ms,
        });
    }
    Ok(out)
}

/// Derived context whose description gains a "related prior findings"
/// section quoting each match. Identity on an empty match list.
pub fn augment(ctx: &Arc<Context>, matches: &[(ContextEntry, f64)]) -> Result<Arc<Context>> {
    if matches.is_empty() {
        return Ok(ctx.clone());
    }
    let mut section = String::from("\n\n## related prior findings\n");
    for (entry, sim) in matches {
        section.push_str(&format!(
            "- context {} (similarity {sim:.4}):\n{}\n",
            entry.id,
            truncate_chars(&entry.description, AUGMENT_QUOTE_CAP)
        ));
    }
    let ids = matches.iter().map(|(e, _)| e.id.as_str()).collect::<Vec<_>>().join(",");
    let description = format!("{}{section}", ctx.description());
    Ok(Arc::new(Context::derive(ctx, format!("reuse {ids}"), description, OperatorKind::Reuse, None)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::HashingEmbedder;
    use crate::model::{FieldValue, Record};

    fn embedder() -> Arc<dyn Embedder> {
        Arc::new(HashingEmbedder::default())
    }

    fn ctx(desc: &str) -> Arc<Context> {
        let recs = vec![Record::new("r", vec![("t".to_string(), FieldValue::text("x"))]).unwrap()];
        Arc::new(Context::from_records("mem", recs, desc).unwrap())
    }

    fn derived(parent: &Arc<Context>, desc: &str) -> Context {
        Context::derive(parent, "find raptor emails", desc, OperatorKind::Search, None).unwrap()
    }

    #[test]
    fn register_is_idempotent_and_detects_conflicts() {
        let store = ContextStore::in_memory(embedder());
        let root = ctx("emails");
        let a = derived(&root, "emails about raptor");
        store.register(&a).unwrap();
        assert_eq!(store.len(), 1);
        store.register(&a).unwrap();
        assert_eq!(store.len(), 1);
        let imposter = derived(&root, "different text").with_id(a.id().clone());
        assert_eq!(store.register(&imposter).unwrap_err().category(), "cache-conflict");
    }

    #[test]
    fn self_match_and_threshold() {
        let store = ContextStore::in_memory(embedder());
        let root = ctx("emails");
        store.register(&derived(&root, "Raptor special purpose entities")).unwrap();
        store.register(&derived(&root, "lunch menu for friday")).unwrap();
        let hits = store.retrieve("Raptor special purpose entities", 5, DEFAULT_THRESHOLD).unwrap();
        assert!((hits[0].1 - 1.0).abs() < 1e-6);
        assert_eq!(hits[0].0.description, "Raptor special purpose entities");
        assert!(store.retrieve("Raptor special purpose", 5, 1.0).unwrap().is_empty());
        assert!(store.retrieve("x", 0, 0.0).is_err());
    }

    #[test]
    fn persistence_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let root = ctx("emails");
        let before = {
            let store = ContextStore::open(dir.path(), embedder()).unwrap();
            store.register(&derived(&root, "first finding")).unwrap();
            store.register(&derived(&root, "second finding")).unwrap();
            store.snapshot()
        };
        let reopened = ContextStore::open(dir.path(), embedder()).unwrap();
        assert_eq!(*reopened.snapshot(), *before);
        for (a, b) in reopened.snapshot().iter().zip(before.iter()) {
            let bits = |v: &EmbeddingVector| v.components().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.embedding), bits(&b.embedding));
        }

        let path = dir.path().join(ENTRIES_FILE);
        let text = fs::read_to_string(&path).unwrap().replace("second finding", "second findinG");
        fs::write(&path, text).unwrap();
        assert_eq!(ContextStore::open(dir.path(), embedder()).unwrap_err().category(), "data-error");

        reopened.clear().unwrap();
        assert!(ContextStore::open(dir.path(), embedder()).unwrap().is_empty());
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let store = ContextStore::open(dir.path(), embedder()).unwrap();
        store.register(&derived(&ctx("e"), "finding")).unwrap();
        let err = ContextStore::open(dir.path(), Arc::new(HashingEmbedder::new(64))).unwrap_err();
        assert_eq!(err.category(), "config-error");
    }

    #[test]
    fn augment_lists_matches_in_order() {
        let store = ContextStore::in_memory(embedder());
        let root = ctx("emails");
        let a = derived(&root, "raptor transactions and losses");
        let b = derived(&root, "raptor entities");
        store.register(&a).unwrap();
        store.register(&b).unwrap();
        assert!(Arc::ptr_eq(&augment(&root, &[]).unwrap(), &root));
        let hits = store.retrieve("raptor entities", 2, 0.0).unwrap();
        let out = augment(&root, &hits).unwrap();
        let d = out.description();
        assert!(d.starts_with("emails"));
        let first = d.find(&format!("context {}", hits[0].0.id)).unwrap();
        let second = d.find(&format!("context {}", hits[1].0.id)).unwrap();
        assert!(first < second);
        assert_eq!(hits[0].0.id, *b.id());
        assert_eq!(out.lineage().unwrap().operator, OperatorKind::Reuse);
    }
}
