use std::fmt;
use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DIMENSION: usize = 256;

/// Unit-norm embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Normalizes `components` to unit L2 norm. A zero vector is rejected.
    pub fn normalized(mut components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Validation("embedding has zero dimension".into()));
        }
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Validation("embedding cannot be normalized".into()));
        }
        for c in &mut components {
            *c /= norm;
        }
        Ok(EmbeddingVector(components))
    }

    /// Wraps components that are already unit-norm (within 1e-6).
    pub fn from_unit(components: Vec<f64>) -> Result<Self> {
        let norm = components.iter().map(|x| x * x).sum::<f64>().sqrt();
        if components.is_empty() || (norm - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("embedding norm {norm} is not 1")));
        }
        Ok(EmbeddingVector(components))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[f64] {
        &self.0
    }

    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        let dot: f64 = self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum();
        dot.clamp(-1.0, 1.0)
    }

    /// Cosine similarity mapped to [0, 1] via (1 + cos) / 2.
    pub fn similarity(&self, other: &EmbeddingVector) -> f64 {
        (1.0 + self.cosine(other)) / 2.0
    }
}

pub trait Embedder: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;
    fn embed(&self, text: &str) -> Result<EmbeddingVector>;
}

/// Deterministic feature-hashing embedder.
///
/// Text is lowercased and split into maximal runs of alphanumeric
/// characters. Each token is hashed with 64-bit FNV-1a; the bucket is
/// `hash % dimension` and the sign is `+1` when bit 63 is clear, `-1`
/// otherwise. Counts are summed, then L2-normalized. Text with no tokens
/// maps to the first basis vector.
#[derive(Debug, Clone)]
pub struct HashingEmbedder {
    dimension: usize,
}

impl HashingEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        HashingEmbedder { dimension }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        HashingEmbedder::new(DEFAULT_DIMENSION)
    }
}

pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase)
}

impl Embedder for HashingEmbedder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let mut v = vec![0.0; self.dimension];
        let mut any = false;
        for token in tokenize(text) {
            let mut h = FnvHasher::default();
            h.write(token.as_bytes());
            let h = h.finish();
            let bucket = (h % self.dimension as u64) as usize;
            let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
            any = true;
        }
        if !any || v.iter().all(|x| *x == 0.0) {
            let mut basis = vec![0.0; self.dimension];
            basis[0] = 1.0;
            return Ok(EmbeddingVector(basis));
        }
        EmbeddingVector::normalized(v)
    }
}
