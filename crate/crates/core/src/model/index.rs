use std::collections::HashMap;
use std::sync::Arc;

use super::{FieldValue, Record, RecordSource};
use crate::error::Result;
use crate::llm::{Embedder, EmbeddingVector};
use crate::rank::top_k;

/// Exact vector index over a context's records, plus a key map for point
/// lookups. Keys are record ids unless a key field is configured.
#[derive(Debug)]
pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    key_field: Option<String>,
    records: Vec<Record>,
    vectors: Vec<EmbeddingVector>,
    by_key: HashMap<String, usize>,
}

impl VectorIndex {
    pub fn build(source: &dyn RecordSource, embedder: Arc<dyn Embedder>, key_field: Option<String>) -> Result<Self> {
        let mut records = Vec::with_capacity(source.len());
        let mut vectors = Vec::with_capacity(source.len());
        let mut by_key = HashMap::with_capacity(source.len());
        for record in source.iter() {
            let record = record?;
            vectors.push(embedder.embed(&record.render(usize::MAX))?);
            let key = match &key_field {
                Some(f) => match record.get(f) {
                    Some(FieldValue::Text(s)) => Some(s.clone()),
                    Some(FieldValue::Null) | None => None,
                    Some(other) => Some(other.to_string()),
                },
                None => Some(record.id.to_string()),
            };
            if let Some(key) = key {
                // first record wins on duplicate keys
                by_key.entry(key).or_insert(records.len());
            }
            records.push(record);
        }
        Ok(VectorIndex { embedder, key_field, records, vectors, by_key })
    }

    pub fn key_field(&self) -> Option<&str> {
        self.key_field.as_deref()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn lookup(&self, key: &str) -> Option<&Record> {
        self.by_key.get(key).map(|&i| &self.records[i])
    }

    /// At most `k` records by descending similarity in [0, 1]; equal scores
    /// are ordered by ascending record id.
    pub fn top_k(&self, query: &str, k: usize) -> Result<Vec<(Record, f64)>> {
        let q = self.embedder.embed(query)?;
        let scored = self.vectors.iter().enumerate().map(|(i, v)| (q.similarity(v), (&self.records[i].id, i)));
        Ok(top_k(scored, k).into_iter().map(|(score, (_, i))| (self.records[i].clone(), score)).collect())
    }

    pub fn embedding_of(&self, key: &str) -> Option<&EmbeddingVector> {
        self.by_key.get(key).map(|&i| &self.vectors[i])
    }
}
