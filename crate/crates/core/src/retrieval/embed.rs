//! Embedding providers and corpus embedding with an on-disk cache.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::store::{read_store, write_store, StoreError, VectorStore};
use super::{DemoCorpus, EmbeddingVector, RetrievalError};
use crate::http::{HttpError, JsonClient, RetryPolicy};
use crate::model::UnifiedEntry;
use crate::text::fnv1a64;

pub const HASH_EMBEDDER_DIM: usize = 16;
const BATCH_SIZE: usize = 32;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("embedding provider failed after {attempts} attempt(s): {message}")]
    Provider { message: String, attempts: u32 },
    #[error("embedding dimension changed from {expected} to {found}")]
    Dimension { expected: usize, found: usize },
    #[error("provider returned {found} vectors for {expected} texts")]
    Count { expected: usize, found: usize },
    #[error("entry {id}: {source}")]
    Vector { id: String, source: RetrievalError },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

/// The string embedded for a record: its fact query and new answer.
pub fn fact_text(entry: &UnifiedEntry) -> String {
    format!("{} {}", entry.edit.query, entry.edit.new_answer)
}

/// Offline bag-of-words embedder: each lowercased whitespace token adds 1.0
/// to component `fnv1a64(token) % 16`.
#[derive(Debug, Default, Clone, Copy)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub fn embed_one(text: &str) -> Vec<f64> {
        let mut v = vec![0.0; HASH_EMBEDDER_DIM];
        for token in text.split_whitespace() {
            let token = token.to_lowercase();
            v[(fnv1a64(&token) % HASH_EMBEDDER_DIM as u64) as usize] += 1.0;
        }
        v
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        Ok(texts.iter().map(|t| HashEmbedder::embed_one(t)).collect())
    }
}

#[derive(Serialize)]
struct EmbeddingRequest<'a> {
    input: &'a [String],
    model: &'a str,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

/// Client for `{"input": [...], "model"} -> {"data": [{"embedding"}]}`.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(
        endpoint: impl Into<String>,
        model: impl Into<String>,
        api_key: Option<String>,
        retry: RetryPolicy,
    ) -> Result<Self, HttpError> {
        Ok(HttpEmbedder {
            endpoint: endpoint.into(),
            model: model.into(),
            client: JsonClient::new(api_key, retry)?,
        })
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, EmbedError> {
        let body = EmbeddingRequest {
            input: texts,
            model: &self.model,
        };
        let resp: EmbeddingResponse = self
            .client
            .post(&self.endpoint, &body)
            .map_err(|e| EmbedError::Provider {
                attempts: e.attempts(),
                message: e.to_string(),
            })?;
        Ok(resp.data.into_iter().map(|d| d.embedding).collect())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EmbedStats {
    pub provider_calls: usize,
    pub cached: usize,
    pub computed: usize,
}

/// Gives every record a vector, reusing cached vectors whose id and text
/// hash match, and rewrites the cache when anything new was computed.
pub fn embed_corpus(
    corpus: &DemoCorpus,
    provider: &dyn EmbeddingProvider,
    cache: Option<&Path>,
    max_concurrency: usize,
) -> Result<(DemoCorpus, EmbedStats), EmbedError> {
    let store = match cache {
        Some(p) if p.is_file() => Some(read_store(p)?),
        _ => None,
    };
    let texts: Vec<String> = corpus.entries().map(fact_text).collect();
    let hashes: Vec<u64> = texts.iter().map(|t| fnv1a64(t)).collect();

    let mut vectors: Vec<Option<Vec<f64>>> = corpus
        .entries()
        .zip(&hashes)
        .map(|(e, h)| {
            store
                .as_ref()
                .and_then(|s| s.lookup(&e.id, *h))
                .map(|v| v.iter().map(|&x| f64::from(x)).collect())
        })
        .collect();
    let mut stats = EmbedStats {
        cached: vectors.iter().filter(|v| v.is_some()).count(),
        ..Default::default()
    };

    let missing: Vec<usize> = (0..vectors.len()).filter(|&i| vectors[i].is_none()).collect();
    if !missing.is_empty() {
        let batches: Vec<&[usize]> = missing.chunks(BATCH_SIZE).collect();
        stats.provider_calls = batches.len();
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(max_concurrency.max(1))
            .build()
            .expect("thread pool");
        let results: Vec<Result<Vec<Vec<f64>>, EmbedError>> = pool.install(|| {
            batches
                .par_iter()
                .map(|batch| {
                    let batch_texts: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
                    let out = provider.embed(&batch_texts)?;
                    if out.len() != batch.len() {
                        return Err(EmbedError::Count {
                            expected: batch.len(),
                            found: out.len(),
                        });
                    }
                    Ok(out)
                })
                .collect()
        });
        for (batch, result) in batches.iter().zip(results) {
            for (&i, v) in batch.iter().zip(result?) {
                vectors[i] = Some(v);
                stats.computed += 1;
            }
        }
    }

    let mut dimension = store.as_ref().filter(|_| stats.cached > 0).map(|s| s.dimension);
    let mut pairs = Vec::with_capacity(vectors.len());
    for (entry, v) in corpus.entries().zip(vectors) {
        let v = v.expect("every slot filled");
        match dimension {
            None => dimension = Some(v.len()),
            Some(d) if d != v.len() => {
                return Err(EmbedError::Dimension {
                    expected: d,
                    found: v.len(),
                })
            }
            _ => {}
        }
        let vector = EmbeddingVector::new(v).map_err(|source| EmbedError::Vector {
            id: entry.id.clone(),
            source,
        })?;
        pairs.push((entry.clone(), vector));
    }

    if let (Some(path), true) = (cache, stats.computed > 0) {
        let new_store = VectorStore {
            dimension: dimension.unwrap_or(0),
            ids: pairs.iter().map(|(e, _)| e.id.clone()).collect(),
            text_hashes: hashes,
            vectors: pairs
                .iter()
                .map(|(_, v)| v.values().iter().map(|&x| x as f32).collect())
                .collect(),
        };
        write_store(&new_store, path)?;
    }

    let embedded = DemoCorpus::with_vectors(pairs).map_err(|e| match e {
        RetrievalError::DimensionMismatch(expected, found) => EmbedError::Dimension { expected, found },
        other => EmbedError::Vector {
            id: String::new(),
            source: other,
        },
    })?;
    Ok((embedded, stats))
}
