//! Embedding-backed fact store with exact cosine top-N retrieval, prompt
//! augmentation, and G-code playbook lookup.
//!
//! Embedding computation is a provider seam: the local fallback is a hashed
//! character-trigram frequency vector (L2-normalized, 256 buckets), which is
//! deterministic and needs no network or weights. A remote provider speaking
//! a generic embeddings HTTP endpoint can be swapped in via environment
//! variables.
//!
//! Retrieval is a brute-force scan. At the scale of this store (a few
//! thousand facts) exactness beats any index.

use crate::gcode::{Codebook, CommandDescriptor};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

#[derive(Debug, Error)]
pub enum RagError {
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("zero vector has no direction")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedding contains non-finite values")]
    NonFiniteEmbedding,
    #[error("duplicate fact id '{0}'")]
    DuplicateId(String),
    #[error("line {line}: malformed fact record: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error("cannot read fact file: {0}")]
    Io(#[from] std::io::Error),
    #[error("codebook has no entries to retrieve from")]
    EmptyCodebook,
    #[error("embedding provider failed: {0}")]
    Provider(String),
    #[error("missing environment variable {0}")]
    MissingEnv(&'static str),
}

// ---------------------------------------------------------------------------
// Providers

/// Anything that can turn text into a fixed-dimension embedding.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError>;
}

/// Deterministic local fallback: hashed character-trigram frequencies,
/// L2-normalized, 256 dimensions.
#[derive(Debug, Clone, Default)]
pub struct LocalEmbedder;

pub const LOCAL_EMBED_DIM: usize = 256;

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

impl EmbeddingProvider for LocalEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError> {
        let normalized: String = text
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        if normalized.is_empty() {
            return Err(RagError::EmptyText);
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut counts = vec![0.0f64; LOCAL_EMBED_DIM];
        if chars.len() < 3 {
            let gram: String = chars.iter().collect();
            counts[(fnv1a64(gram.as_bytes()) % LOCAL_EMBED_DIM as u64) as usize] += 1.0;
        } else {
            for window in chars.windows(3) {
                let gram: String = window.iter().collect();
                counts[(fnv1a64(gram.as_bytes()) % LOCAL_EMBED_DIM as u64) as usize] += 1.0;
            }
        }
        let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut counts {
            *c /= norm;
        }
        Ok(counts)
    }
}

/// Remote provider speaking a generic embeddings endpoint: POST
/// `{model, input}`, answer `{data: [{embedding: [...]}]}`.
pub struct HttpEmbedder {
    endpoint: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpEmbedder {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            model: model.into(),
            api_key,
            client: reqwest::blocking::Client::new(),
        }
    }

    /// Configure from `EMBED_ENDPOINT`, `EMBED_MODEL`, `EMBED_API_KEY`.
    pub fn from_env() -> Result<Self, RagError> {
        let endpoint =
            std::env::var("EMBED_ENDPOINT").map_err(|_| RagError::MissingEnv("EMBED_ENDPOINT"))?;
        let model = std::env::var("EMBED_MODEL").unwrap_or_else(|_| "text-embedding".to_string());
        let api_key = std::env::var("EMBED_API_KEY").ok();
        Ok(Self::new(endpoint, model, api_key))
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a str,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl EmbeddingProvider for HttpEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, RagError> {
        if text.trim().is_empty() {
            return Err(RagError::EmptyText);
        }
        let mut request = self.client.post(&self.endpoint).json(&EmbedRequest {
            model: &self.model,
            input: text,
        });
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| RagError::Provider(e.to_string()))?;
        if !response.status().is_success() {
            return Err(RagError::Provider(format!("HTTP {}", response.status())));
        }
        let body: EmbedResponse =
            response.json().map_err(|e| RagError::Provider(e.to_string()))?;
        let vector = body
            .data
            .into_iter()
            .next()
            .ok_or_else(|| RagError::Provider("empty data array".to_string()))?
            .embedding;
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(RagError::NonFiniteEmbedding);
        }
        Ok(vector)
    }
}

/// Embed with the given provider; the plain functional entry point.
pub fn embed_text(text: &str, provider: &dyn EmbeddingProvider) -> Result<Vec<f64>, RagError> {
    provider.embed(text)
}

// ---------------------------------------------------------------------------
// Cosine

/// Plain cosine similarity; errors on dimension mismatch or zero vectors.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, RagError> {
    if a.len() != b.len() {
        return Err(RagError::DimensionMismatch(a.len(), b.len()));
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(RagError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

// ---------------------------------------------------------------------------
// Fact store

/// One knowledge unit: a factual statement under a mind-map topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub topic: String,
}

/// A fact paired with its embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedFact {
    #[serde(flatten)]
    pub fact: Fact,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub top_n: usize,
    pub min_similarity: Option<f64>,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            top_n: 5,
            min_similarity: None,
        }
    }
}

/// Immutable-after-ingest store of embedded facts, all sharing one
/// dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FactStore {
    facts: Vec<EmbeddedFact>,
    dimension: usize,
}

#[derive(Deserialize)]
struct FactRecord {
    id: String,
    text: String,
    #[serde(default)]
    topic: String,
    #[serde(default)]
    embedding: Option<Vec<f64>>,
}

impl FactStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn facts(&self) -> impl Iterator<Item = &EmbeddedFact> {
        self.facts.iter()
    }

    pub fn insert(&mut self, fact: Fact, embedding: Vec<f64>) -> Result<(), RagError> {
        if fact.text.is_empty() {
            return Err(RagError::EmptyText);
        }
        if embedding.iter().any(|v| !v.is_finite()) {
            return Err(RagError::NonFiniteEmbedding);
        }
        if self.facts.is_empty() {
            self.dimension = embedding.len();
        } else if embedding.len() != self.dimension {
            return Err(RagError::DimensionMismatch(self.dimension, embedding.len()));
        }
        if self.facts.iter().any(|f| f.fact.id == fact.id) {
            return Err(RagError::DuplicateId(fact.id));
        }
        self.facts.push(EmbeddedFact { fact, embedding });
        Ok(())
    }

    /// Parse a JSONL fact file, embedding any record that does not carry its
    /// own vector.
    pub fn ingest_str(text: &str, provider: &dyn EmbeddingProvider) -> Result<Self, RagError> {
        let mut store = Self::new();
        let mut seen: HashSet<String> = HashSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let record: FactRecord =
                serde_json::from_str(line).map_err(|e| RagError::MalformedRecord {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if record.text.trim().is_empty() {
                return Err(RagError::MalformedRecord {
                    line: line_no,
                    message: "empty text".to_string(),
                });
            }
            if !seen.insert(record.id.clone()) {
                return Err(RagError::DuplicateId(record.id));
            }
            let embedding = match record.embedding {
                Some(vector) => vector,
                None => provider.embed(&record.text)?,
            };
            store.insert(
                Fact {
                    id: record.id,
                    text: record.text,
                    topic: record.topic,
                },
                embedding,
            )?;
        }
        Ok(store)
    }

    /// Canonical JSONL dump, embeddings included; ingesting a dump
    /// reproduces it byte for byte.
    pub fn dump_jsonl(&self) -> String {
        let mut out = String::new();
        for embedded in &self.facts {
            let record = serde_json::json!({
                "id": embedded.fact.id,
                "text": embedded.fact.text,
                "topic": embedded.fact.topic,
                "embedding": embedded.embedding,
            });
            out.push_str(&record.to_string());
            out.push('\n');
        }
        out
    }
}

/// Load a JSONL fact file into a store.
pub fn ingest_facts(
    path: impl AsRef<Path>,
    provider: &dyn EmbeddingProvider,
) -> Result<FactStore, RagError> {
    let text = std::fs::read_to_string(path)?;
    FactStore::ingest_str(&text, provider)
}

fn rank_and_truncate(
    store: &FactStore,
    scores: Vec<f64>,
    cfg: &RetrievalConfig,
) -> Vec<(Fact, f64)> {
    let mut ranked: Vec<(usize, f64)> = scores.into_iter().enumerate().collect();
    ranked.sort_by(|(ia, sa), (ib, sb)| {
        sb.partial_cmp(sa)
            .expect("scores are finite")
            .then_with(|| store.facts[*ia].fact.id.cmp(&store.facts[*ib].fact.id))
    });
    ranked
        .into_iter()
        .filter(|(_, s)| cfg.min_similarity.map_or(true, |min| *s >= min))
        .take(cfg.top_n)
        .map(|(i, s)| (store.facts[i].fact.clone(), s))
        .collect()
}

/// Top-N facts by descending cosine similarity to the query; ties break by
/// ascending fact id. Returns fewer than N when the store is smaller.
pub fn retrieve_top_n(
    query: &str,
    store: &FactStore,
    cfg: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<(Fact, f64)>, RagError> {
    let query_vec = provider.embed(query)?;
    #[cfg(feature = "parallel")]
    let scores: Result<Vec<f64>, RagError> = store
        .facts
        .par_iter()
        .map(|f| cosine_similarity(&query_vec, &f.embedding))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let scores: Result<Vec<f64>, RagError> = store
        .facts
        .iter()
        .map(|f| cosine_similarity(&query_vec, &f.embedding))
        .collect();
    Ok(rank_and_truncate(store, scores?, cfg))
}

/// Sequential twin of [`retrieve_top_n`]; identical results.
pub fn retrieve_top_n_sequential(
    query: &str,
    store: &FactStore,
    cfg: &RetrievalConfig,
    provider: &dyn EmbeddingProvider,
) -> Result<Vec<(Fact, f64)>, RagError> {
    let query_vec = provider.embed(query)?;
    let scores: Result<Vec<f64>, RagError> = store
        .facts
        .iter()
        .map(|f| cosine_similarity(&query_vec, &f.embedding))
        .collect();
    Ok(rank_and_truncate(store, scores?, cfg))
}

/// Prepend retrieved facts to a query in a fixed layout: a context header,
/// numbered facts, a blank line, then the original query. With no facts the
/// query passes through unchanged.
pub fn augment_prompt(query: &str, retrieved: &[(Fact, f64)]) -> String {
    if retrieved.is_empty() {
        return query.to_string();
    }
    let mut out = String::from("Relevant facts:\n");
    for (i, (fact, _)) in retrieved.iter().enumerate() {
        out.push_str(&format!("{}. {}\n", i + 1, fact.text));
    }
    out.push('\n');
    out.push_str(query);
    out
}

// ---------------------------------------------------------------------------
// Codebook retrieval

/// Precompute embeddings for every codebook entry (brief plus usage notes).
pub fn embed_codebook(
    codebook: &mut Codebook,
    provider: &dyn EmbeddingProvider,
) -> Result<(), RagError> {
    for entry in codebook.entries.values_mut() {
        if entry.embedding.is_none() {
            entry.embedding = Some(provider.embed(&entry.retrieval_text())?);
        }
    }
    Ok(())
}

/// The single most relevant command descriptor for a piece of reasoning, by
/// cosine over the embedded briefs. Entries without a stored embedding are
/// embedded on the fly.
pub fn retrieve_gcode_command<'a>(
    reasoning: &str,
    codebook: &'a Codebook,
    provider: &dyn EmbeddingProvider,
) -> Result<&'a CommandDescriptor, RagError> {
    if codebook.is_empty() {
        return Err(RagError::EmptyCodebook);
    }
    let query = provider.embed(reasoning)?;
    let mut best: Option<(&CommandDescriptor, f64)> = None;
    for entry in codebook.entries.values() {
        let similarity = match &entry.embedding {
            Some(vector) => cosine_similarity(&query, vector)?,
            None => cosine_similarity(&query, &provider.embed(&entry.retrieval_text())?)?,
        };
        let better = match best {
            None => true,
            Some((_, best_sim)) => similarity > best_sim,
        };
        if better {
            best = Some((entry, similarity));
        }
    }
    Ok(best.expect("codebook non-empty").0)
}
