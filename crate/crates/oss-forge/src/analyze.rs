//! Dataset analyses: TF-IDF similarity to benchmarks, token-length
//! histograms, and category breakdown.
//!
//! The TF-IDF variant is fixed and fully deterministic: lowercase
//! tokenization split on non-alphanumeric runs, raw term counts,
//! `idf = ln((1+N)/(1+df)) + 1`, and L2-normalized vectors. Similarity
//! models are fitted on the union of dataset and benchmark texts so both
//! sides share a vocabulary.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ForgeError, Result};
use crate::teacher::InstructionSample;

/// Lowercases and splits on non-alphanumeric runs, dropping empty tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Vocabulary and smoothed inverse-document-frequency weights fitted on a
/// document set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfIdfModel {
    /// Term -> dense index, indices assigned in sorted term order.
    pub vocabulary: BTreeMap<String, u32>,
    /// Per-term idf, aligned with vocabulary indices.
    pub idf: Vec<f64>,
    pub doc_count: usize,
    pub tokenizer_id: String,
}

/// Sparse L2-normalized document vector. Entries are sorted by term index;
/// an empty entry list is the zero vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    /// Wraps a dense embedding as a sparse vector, dropping exact zeros and
    /// L2-normalizing. Used to funnel remote embeddings through the same
    /// cosine path.
    pub fn from_dense(values: &[f64]) -> SparseVector {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector { entries: Vec::new() };
        }
        SparseVector {
            entries: values
                .iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(|(i, v)| (i as u32, v / norm))
                .collect(),
        }
    }
}

/// Fits the TF-IDF model: `idf = ln((1+N)/(1+df)) + 1`.
/// Errors when no document contributes a single token.
pub fn fit_tfidf(docs: &[String]) -> Result<TfIdfModel> {
    if docs.is_empty() {
        return Err(ForgeError::Analysis("cannot fit TF-IDF on an empty document list".into()));
    }
    let doc_count = docs.len();
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in docs {
        let mut terms = tokenize(doc);
        terms.sort_unstable();
        terms.dedup();
        for term in terms {
            *df.entry(term).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(ForgeError::Analysis("all documents tokenized to nothing; cannot fit TF-IDF".into()));
    }
    let mut vocabulary = BTreeMap::new();
    let mut idf = Vec::with_capacity(df.len());
    let n = doc_count as f64;
    for (index, (term, count)) in df.into_iter().enumerate() {
        vocabulary.insert(term, index as u32);
        idf.push(((1.0 + n) / (1.0 + count as f64)).ln() + 1.0);
    }
    Ok(TfIdfModel {
        vocabulary,
        idf,
        doc_count,
        tokenizer_id: "lowercase-alnum".to_string(),
    })
}

impl TfIdfModel {
    /// Embeds a document: raw term counts weighted by idf, L2-normalized.
    /// Out-of-vocabulary terms are ignored; an all-OOV document embeds to
    /// the zero vector.
    pub fn embed(&self, doc: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for term in tokenize(doc) {
            if let Some(&index) = self.vocabulary.get(&term) {
                *counts.entry(index).or_default() += 1.0;
            }
        }
        let mut entries: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(index, tf)| (index, tf * self.idf[index as usize]))
            .collect();
        let norm = entries.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
        if norm == 0.0 {
            return SparseVector { entries: Vec::new() };
        }
        for (_, w) in &mut entries {
            *w /= norm;
        }
        SparseVector { entries }
    }
}

/// Dot product of unit vectors; zero when either side is the zero vector.
/// In `[0, 1]` for nonnegative TF-IDF vectors.
pub fn cosine(u: &SparseVector, v: &SparseVector) -> f64 {
    if u.is_zero() || v.is_zero() {
        return 0.0;
    }
    let mut dot = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < u.entries.len() && j < v.entries.len() {
        let (ui, uw) = u.entries[i];
        let (vi, vw) = v.entries[j];
        match ui.cmp(&vi) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += uw * vw;
                i += 1;
                j += 1;
            }
        }
    }
    dot
}

/// Best benchmark match for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityRecord {
    pub sample_id: String,
    pub best_benchmark_entry_id: String,
    pub score: f64,
}

/// Distribution summary of per-sample maximum similarity scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimilaritySummary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub p10: f64,
    pub p25: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub tokenizer_id: String,
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = (p / 100.0 * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Associates every sample with the benchmark entry of highest cosine
/// similarity (ties broken by lowest entry index). The model is fitted on
/// the union of both text sets.
pub fn nearest_benchmark(
    samples: &[(String, String)],
    benchmark: &[(String, String)],
) -> Result<(Vec<SimilarityRecord>, SimilaritySummary)> {
    if benchmark.is_empty() {
        return Err(ForgeError::Analysis("similarity benchmark has no entries".into()));
    }
    let union: Vec<String> = samples
        .iter()
        .map(|(_, text)| text.clone())
        .chain(benchmark.iter().map(|(_, text)| text.clone()))
        .collect();
    let model = fit_tfidf(&union)?;
    let entry_vectors: Vec<SparseVector> = benchmark.par_iter().map(|(_, text)| model.embed(text)).collect();

    let records: Vec<SimilarityRecord> = samples
        .par_iter()
        .map(|(sample_id, text)| {
            let vector = model.embed(text);
            let mut best_index = 0usize;
            let mut best_score = cosine(&vector, &entry_vectors[0]);
            for (index, entry_vector) in entry_vectors.iter().enumerate().skip(1) {
                let score = cosine(&vector, entry_vector);
                if score > best_score {
                    best_score = score;
                    best_index = index;
                }
            }
            SimilarityRecord {
                sample_id: sample_id.clone(),
                best_benchmark_entry_id: benchmark[best_index].0.clone(),
                score: best_score,
            }
        })
        .collect();

    let mut scores: Vec<f64> = records.iter().map(|r| r.score).collect();
    scores.sort_by(|a, b| a.partial_cmp(b).expect("similarity scores are finite"));
    let summary = SimilaritySummary {
        count: scores.len(),
        mean: if scores.is_empty() {
            0.0
        } else {
            scores.iter().sum::<f64>() / scores.len() as f64
        },
        min: scores.first().copied().unwrap_or(0.0),
        max: scores.last().copied().unwrap_or(0.0),
        p10: percentile(&scores, 10.0),
        p25: percentile(&scores, 25.0),
        p50: percentile(&scores, 50.0),
        p75: percentile(&scores, 75.0),
        p90: percentile(&scores, 90.0),
        tokenizer_id: model.tokenizer_id.clone(),
    };
    Ok((records, summary))
}

// ---------------------------------------------------------------------------
// Token-length histogram
// ---------------------------------------------------------------------------

/// Pluggable token counter for the length distribution.
pub trait TokenCounter: Send + Sync {
    fn id(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

/// Built-in counter: whitespace-separated tokens.
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn id(&self) -> &str {
        "whitespace"
    }

    fn count(&self, text: &str) -> usize {
        text.split_whitespace().count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Inclusive lower token count.
    pub lo: usize,
    /// Exclusive upper token count.
    pub hi: usize,
    pub problems: usize,
    pub solutions: usize,
}

/// Token count distribution with separate problem and solution series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: usize,
    pub tokenizer_id: String,
    pub bins: Vec<HistogramBin>,
}

impl Histogram {
    pub fn problems_total(&self) -> usize {
        self.bins.iter().map(|b| b.problems).sum()
    }

    pub fn solutions_total(&self) -> usize {
        self.bins.iter().map(|b| b.solutions).sum()
    }
}

/// Bins problem and solution token counts at `bin_width` granularity.
/// Both series always sum to the dataset size.
pub fn token_length_histogram(
    samples: &[InstructionSample],
    counter: &dyn TokenCounter,
    bin_width: usize,
) -> Result<Histogram> {
    if bin_width == 0 {
        return Err(ForgeError::Analysis("histogram bin width must be positive".into()));
    }
    let problem_counts: Vec<usize> = samples.iter().map(|s| counter.count(&s.problem)).collect();
    let solution_counts: Vec<usize> = samples.iter().map(|s| counter.count(&s.solution)).collect();
    let max_count = problem_counts
        .iter()
        .chain(solution_counts.iter())
        .copied()
        .max()
        .unwrap_or(0);
    let bin_count = max_count / bin_width + 1;
    let mut bins: Vec<HistogramBin> = (0..bin_count)
        .map(|i| HistogramBin {
            lo: i * bin_width,
            hi: (i + 1) * bin_width,
            problems: 0,
            solutions: 0,
        })
        .collect();
    for count in problem_counts {
        bins[count / bin_width].problems += 1;
    }
    for count in solution_counts {
        bins[count / bin_width].solutions += 1;
    }
    Ok(Histogram {
        bin_width,
        tokenizer_id: counter.id().to_string(),
        bins,
    })
}

// ---------------------------------------------------------------------------
// Category breakdown
// ---------------------------------------------------------------------------

/// A named category with the description text that gets embedded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub description: String,
}

/// Number of categories the breakdown is defined over.
pub const CATEGORY_COUNT: usize = 10;

/// Pluggable text embedder: the TF-IDF model as the built-in, or a remote
/// embedding API.
pub trait Embedder: Send + Sync {
    fn id(&self) -> &str;
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<SparseVector>>;
}

/// Built-in embedder backed by a fitted TF-IDF model.
pub struct TfIdfEmbedder {
    model: TfIdfModel,
}

impl TfIdfEmbedder {
    pub fn new(model: TfIdfModel) -> Self {
        TfIdfEmbedder { model }
    }

    /// Fits the model on the union of sample texts and category
    /// descriptions so both sides share a vocabulary.
    pub fn fit(sample_texts: &[String], categories: &[Category]) -> Result<Self> {
        let mut union = sample_texts.to_vec();
        union.extend(categories.iter().map(|c| c.description.clone()));
        Ok(TfIdfEmbedder {
            model: fit_tfidf(&union)?,
        })
    }
}

impl Embedder for TfIdfEmbedder {
    fn id(&self) -> &str {
        "tfidf"
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<SparseVector>> {
        Ok(texts.iter().map(|t| self.model.embed(t)).collect())
    }
}

/// Assignment of every sample to its argmax-cosine category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub categories: Vec<String>,
    pub counts: Vec<usize>,
    /// Samples whose top score was shared by several categories; assigned
    /// to the lowest index.
    pub ties: usize,
    pub embedder_id: String,
    pub assignments: Vec<(String, usize)>,
}

/// Assigns each sample to the category with the highest cosine similarity.
/// Exactly [`CATEGORY_COUNT`] categories are required; ties go to the lowest
/// category index and are counted.
pub fn categorize(
    samples: &[(String, String)],
    categories: &[Category],
    embedder: &dyn Embedder,
) -> Result<CategoryBreakdown> {
    if categories.len() != CATEGORY_COUNT {
        return Err(ForgeError::Analysis(format!(
            "category breakdown needs exactly {CATEGORY_COUNT} categories, got {}",
            categories.len()
        )));
    }
    let descriptions: Vec<String> = categories.iter().map(|c| c.description.clone()).collect();
    let category_vectors = embedder.embed_texts(&descriptions)?;
    let sample_texts: Vec<String> = samples.iter().map(|(_, text)| text.clone()).collect();
    let sample_vectors = embedder.embed_texts(&sample_texts)?;

    let mut counts = vec![0usize; CATEGORY_COUNT];
    let mut ties = 0usize;
    let mut assignments = Vec::with_capacity(samples.len());
    for ((sample_id, _), vector) in samples.iter().zip(sample_vectors) {
        let scores: Vec<f64> = category_vectors.iter().map(|cv| cosine(&vector, cv)).collect();
        let mut best = 0usize;
        for (index, score) in scores.iter().enumerate().skip(1) {
            if *score > scores[best] {
                best = index;
            }
        }
        if scores.iter().enumerate().any(|(i, s)| i != best && *s == scores[best]) {
            ties += 1;
        }
        counts[best] += 1;
        assignments.push((sample_id.clone(), best));
    }
    Ok(CategoryBreakdown {
        categories: categories.iter().map(|c| c.name.clone()).collect(),
        counts,
        ties,
        embedder_id: embedder.id().to_string(),
        assignments,
    })
}

// ---------------------------------------------------------------------------
// Remote embedding API client
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct EmbeddingRequestBody<'a> {
    model: &'a str,
    input: &'a [String],
}

#[derive(Deserialize)]
struct EmbeddingResponseBody {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

/// Embedding API client (JSON over HTTPS, token via environment variable).
/// Mirrors the teacher client's configuration shape.
pub struct RemoteEmbedder {
    runtime: tokio::runtime::Runtime,
    client: reqwest::Client,
    endpoint: String,
    model: String,
    token: Option<String>,
    batch_size: usize,
    embedder_id: String,
}

impl RemoteEmbedder {
    pub fn new(endpoint: &str, model: &str, token_env: &str, batch_size: usize) -> Result<Self> {
        let runtime = tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .map_err(|e| ForgeError::Backend(format!("failed to start async runtime: {e}")))?;
        let client = reqwest::Client::new();
        Ok(RemoteEmbedder {
            runtime,
            client,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            token: std::env::var(token_env).ok(),
            batch_size: batch_size.max(1),
            embedder_id: format!("remote:{model}"),
        })
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> &str {
        &self.embedder_id
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<SparseVector>> {
        let mut vectors = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let body = EmbeddingRequestBody {
                model: &self.model,
                input: chunk,
            };
            let mut builder = self.client.post(&self.endpoint).json(&body);
            if let Some(token) = &self.token {
                builder = builder.bearer_auth(token);
            }
            let response: EmbeddingResponseBody = self
                .runtime
                .block_on(async {
                    let resp = builder.send().await?;
                    let resp = resp.error_for_status()?;
                    resp.json::<EmbeddingResponseBody>().await
                })
                .map_err(|e| ForgeError::Backend(format!("embedding request failed: {e}")))?;
            if response.data.len() != chunk.len() {
                return Err(ForgeError::Backend(format!(
                    "embedding API returned {} vectors for {} inputs",
                    response.data.len(),
                    chunk.len()
                )));
            }
            vectors.extend(response.data.into_iter().map(|d| SparseVector::from_dense(&d.embedding)));
        }
        Ok(vectors)
    }
}
