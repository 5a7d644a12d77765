//! Demonstration selection: a fixed seeded random draw, or exhaustive
//! cosine-similarity search over embedded corpus facts.

mod embed;
mod store;

use std::cmp::Ordering;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::UnifiedEntry;

pub use embed::{
    embed_corpus, fact_text, EmbedError, EmbeddingProvider, HashEmbedder, HttpEmbedder, HASH_EMBEDDER_DIM,
};
pub use store::{read_store, write_store, StoreError, VectorStore};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("zero vector")]
    ZeroVector,
    #[error("empty vector")]
    EmptyVector,
    #[error("non-finite component")]
    NonFinite,
    #[error("asked for {k} entries from a corpus of {size}")]
    KTooLarge { k: usize, size: usize },
    #[error("corpus is not embedded")]
    NotEmbedded,
}

/// A non-empty, finite, nonzero real vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::EmptyVector);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFinite);
        }
        if values.iter().all(|&v| v == 0.0) {
            return Err(RetrievalError::ZeroVector);
        }
        Ok(EmbeddingVector(values))
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// dot(a, b) / (|a| |b|), clamped into [-1, 1].
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dimension() != b.dimension() {
        return Err(RetrievalError::DimensionMismatch(a.dimension(), b.dimension()));
    }
    let dot: f64 = a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum();
    Ok((dot / (a.norm() * b.norm())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone)]
pub struct CorpusRecord {
    pub entry: UnifiedEntry,
    pub vector: Option<EmbeddingVector>,
}

/// Training records demonstrations are drawn from. Immutable once embedded.
#[derive(Debug, Clone, Default)]
pub struct DemoCorpus {
    records: Vec<CorpusRecord>,
}

impl DemoCorpus {
    pub fn new(entries: impl IntoIterator<Item = UnifiedEntry>) -> Self {
        DemoCorpus {
            records: entries
                .into_iter()
                .map(|entry| CorpusRecord { entry, vector: None })
                .collect(),
        }
    }

    /// Builds an embedded corpus; every vector must share one dimension.
    pub fn with_vectors(
        pairs: impl IntoIterator<Item = (UnifiedEntry, EmbeddingVector)>,
    ) -> Result<Self, RetrievalError> {
        let records: Vec<_> = pairs
            .into_iter()
            .map(|(entry, v)| CorpusRecord { entry, vector: Some(v) })
            .collect();
        let corpus = DemoCorpus { records };
        corpus.dimension()?;
        Ok(corpus)
    }

    pub fn records(&self) -> &[CorpusRecord] {
        &self.records
    }

    pub fn entries(&self) -> impl Iterator<Item = &UnifiedEntry> {
        self.records.iter().map(|r| &r.entry)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn is_embedded(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.vector.is_some())
    }

    /// Common vector dimension, or an error if vectors are missing or disagree.
    pub fn dimension(&self) -> Result<usize, RetrievalError> {
        let mut dim = None;
        for r in &self.records {
            let d = r.vector.as_ref().ok_or(RetrievalError::NotEmbedded)?.dimension();
            match dim {
                None => dim = Some(d),
                Some(prev) if prev != d => return Err(RetrievalError::DimensionMismatch(prev, d)),
                _ => {}
            }
        }
        dim.ok_or(RetrievalError::NotEmbedded)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ranked<'a> {
    pub entry: &'a UnifiedEntry,
    pub similarity: f64,
}

fn by_similarity_then_id(a: &Ranked<'_>, b: &Ranked<'_>) -> Ordering {
    b.similarity
        .total_cmp(&a.similarity)
        .then_with(|| a.entry.id.cmp(&b.entry.id))
}

/// Exact top-k by cosine to `query`: descending similarity, ties by id.
pub fn select_search<'a>(
    corpus: &'a DemoCorpus,
    query: &EmbeddingVector,
    k: usize,
) -> Result<Vec<Ranked<'a>>, RetrievalError> {
    let dim = corpus.dimension()?;
    if dim != query.dimension() {
        return Err(RetrievalError::DimensionMismatch(dim, query.dimension()));
    }
    if k > corpus.len() {
        return Err(RetrievalError::KTooLarge { k, size: corpus.len() });
    }
    let mut scored: Vec<Ranked<'a>> = corpus
        .records
        .par_iter()
        .map(|r| {
            let v = r.vector.as_ref().expect("checked by dimension()");
            Ranked {
                entry: &r.entry,
                similarity: cosine(query, v).expect("dimensions checked"),
            }
        })
        .collect();
    if k < scored.len() && k > 0 {
        scored.select_nth_unstable_by(k - 1, by_similarity_then_id);
    }
    scored.truncate(k);
    scored.sort_by(by_similarity_then_id);
    Ok(scored)
}

/// Unbiased index in `0..bound` (Lemire's multiply-shift with rejection).
fn bounded(rng: &mut ChaCha8Rng, bound: u64) -> u64 {
    let threshold = bound.wrapping_neg() % bound;
    loop {
        let m = u128::from(rng.next_u64()) * u128::from(bound);
        if (m as u64) >= threshold {
            return (m >> 64) as u64;
        }
    }
}

/// Draws `k` distinct entries. The generator is ChaCha8 seeded through
/// `seed_from_u64(seed)`; the draw is a partial Fisher-Yates shuffle over the
/// corpus ids sorted ascending, so input order never matters.
pub fn select_random(corpus: &DemoCorpus, k: usize, seed: u64) -> Result<Vec<&UnifiedEntry>, RetrievalError> {
    if k > corpus.len() {
        return Err(RetrievalError::KTooLarge { k, size: corpus.len() });
    }
    let mut pool: Vec<&UnifiedEntry> = corpus.entries().collect();
    pool.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..k {
        let j = i + bounded(&mut rng, (pool.len() - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    Ok(pool)
}
