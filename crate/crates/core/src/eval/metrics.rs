//! Regression and caption metrics: MAE, multiset token recall, and CIDEr
//! over TF-IDF-weighted n-gram vectors.

use super::EvalError;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// One prediction paired with its ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionSample {
    pub y: f64,
    pub y_hat: f64,
}

/// Mean absolute error and the population std of the absolute errors.
pub fn mae(samples: &[RegressionSample]) -> Result<(f64, f64), EvalError> {
    if samples.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = samples.len() as f64;
    let errors: Vec<f64> = samples.iter().map(|s| (s.y_hat - s.y).abs()).collect();
    let mean = errors.iter().sum::<f64>() / n;
    let std = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n).sqrt();
    Ok((mean, std))
}

/// Lowercase, split on non-alphanumerics, drop empties. Shared by recall
/// and CIDEr; no stemming.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_string())
        .collect()
}

/// Prediction tokens against one or more reference token sequences.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallInput {
    pub prediction_tokens: Vec<String>,
    pub reference_tokens: Vec<Vec<String>>,
}

impl RecallInput {
    pub fn from_texts(prediction: &str, references: &[&str]) -> Self {
        Self {
            prediction_tokens: tokenize(prediction),
            reference_tokens: references.iter().map(|r| tokenize(r)).collect(),
        }
    }
}

fn counts(tokens: &[String]) -> BTreeMap<&str, usize> {
    let mut map = BTreeMap::new();
    for token in tokens {
        *map.entry(token.as_str()).or_insert(0) += 1;
    }
    map
}

/// Fraction of reference tokens the prediction covers (multiset
/// intersection over reference length); with several references the highest
/// recall wins.
pub fn token_recall(input: &RecallInput) -> Result<f64, EvalError> {
    if input.reference_tokens.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let pred_counts = counts(&input.prediction_tokens);
    let mut best: f64 = 0.0;
    for (idx, reference) in input.reference_tokens.iter().enumerate() {
        if reference.is_empty() {
            return Err(EvalError::EmptyReference(idx));
        }
        let ref_counts = counts(reference);
        let correct: usize = ref_counts
            .iter()
            .map(|(token, &ref_count)| ref_count.min(*pred_counts.get(token).unwrap_or(&0)))
            .sum();
        best = best.max(correct as f64 / reference.len() as f64);
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// CIDEr

/// Candidate caption against its reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct CiderInput {
    pub candidate: String,
    pub references: Vec<String>,
    /// Highest n-gram order scored; the published metric uses 4.
    pub n_max: usize,
}

impl CiderInput {
    pub fn new(candidate: impl Into<String>, references: Vec<String>) -> Self {
        Self {
            candidate: candidate.into(),
            references,
            n_max: 4,
        }
    }
}

/// n-gram vector weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiderWeighting {
    /// TF weighted by smoothed IDF over the reference set:
    /// `idf(g) = ln((1 + m) / (1 + df(g))) + 1`, `df` counting references
    /// that contain `g`. This is the standard metric's intent, smoothed so
    /// a single-reference self-comparison still scores 1.
    #[default]
    TfIdf,
    /// Raw n-gram frequency vectors, mirroring the plain formula.
    RawFrequency,
}

fn ngrams(tokens: &[String], n: usize) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *map.entry(window.join(" ")).or_insert(0.0) += 1.0;
        }
    }
    map
}

fn weighted(vector: &BTreeMap<String, f64>, idf: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    vector
        .iter()
        .map(|(gram, tf)| (gram.clone(), tf * idf.get(gram).copied().unwrap_or(1.0)))
        .collect()
}

fn sparse_cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a
        .iter()
        .filter_map(|(gram, va)| b.get(gram).map(|vb| va * vb))
        .sum();
    let na: f64 = a.values().map(|v| v * v).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na * nb)
}

/// CIDEr with the default TF-IDF weighting.
pub fn cider(input: &CiderInput) -> Result<f64, EvalError> {
    cider_with(input, CiderWeighting::TfIdf)
}

/// CIDEr score: for each n up to `n_max`, the cosine between the candidate's
/// and each reference's weighted n-gram vector, averaged over references;
/// the final score averages over n. Orders where a text has no n-grams
/// contribute zero cosine.
pub fn cider_with(input: &CiderInput, weighting: CiderWeighting) -> Result<f64, EvalError> {
    if input.references.is_empty() {
        return Err(EvalError::NoReferences);
    }
    let candidate_tokens = tokenize(&input.candidate);
    if candidate_tokens.is_empty() {
        return Err(EvalError::EmptyCandidate);
    }
    let reference_tokens: Vec<Vec<String>> =
        input.references.iter().map(|r| tokenize(r)).collect();
    for (idx, tokens) in reference_tokens.iter().enumerate() {
        if tokens.is_empty() {
            return Err(EvalError::EmptyReference(idx));
        }
    }
    let m = reference_tokens.len() as f64;
    let n_max = input.n_max.max(1);

    let mut total = 0.0;
    for n in 1..=n_max {
        let candidate_vec = ngrams(&candidate_tokens, n);
        let reference_vecs: Vec<BTreeMap<String, f64>> =
            reference_tokens.iter().map(|t| ngrams(t, n)).collect();

        let idf: BTreeMap<String, f64> = match weighting {
            CiderWeighting::RawFrequency => BTreeMap::new(),
            CiderWeighting::TfIdf => {
                let mut df: BTreeMap<String, f64> = BTreeMap::new();
                for vector in &reference_vecs {
                    for gram in vector.keys() {
                        *df.entry(gram.clone()).or_insert(0.0) += 1.0;
                    }
                }
                // Seen grams get their smoothed IDF; unseen candidate grams
                // fall back to the df = 0 value, ln(1 + m) + 1.
                let mut idf: BTreeMap<String, f64> = df
                    .into_iter()
                    .map(|(gram, df)| (gram, ((1.0 + m) / (1.0 + df)).ln() + 1.0))
                    .collect();
                for gram in candidate_vec.keys() {
                    idf.entry(gram.clone())
                        .or_insert(((1.0 + m) / 1.0).ln() + 1.0);
                }
                idf
            }
        };

        let candidate_weighted = match weighting {
            CiderWeighting::RawFrequency => candidate_vec.clone(),
            CiderWeighting::TfIdf => weighted(&candidate_vec, &idf),
        };
        let mut order_score = 0.0;
        for reference_vec in &reference_vecs {
            let reference_weighted = match weighting {
                CiderWeighting::RawFrequency => reference_vec.clone(),
                CiderWeighting::TfIdf => weighted(reference_vec, &idf),
            };
            order_score += sparse_cosine(&candidate_weighted, &reference_weighted);
        }
        total += order_score / m;
    }
    Ok(total / n_max as f64)
}
