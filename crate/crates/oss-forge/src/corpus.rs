//! Corpus ingestion and reproducible seed-snippet sampling.
//!
//! The corpus is a newline-delimited record stream with fields
//! `{id, language, content, origin}`. Sampling is stratified per language
//! with an explicit quota and a mandatory RNG seed: identical
//! `(corpus bytes, quota, rng_seed)` always reproduce the identical seed set.
//! From every selected document a window of 1–15 consecutive lines is
//! extracted verbatim as the seed snippet.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, Lines};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{ForgeError, Result};
use crate::rng::derive_rng;
use crate::textutil::split_lines;

/// Longest seed snippet, in lines.
pub const MAX_SEED_LINES: usize = 15;

/// One ingested code document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeDocument {
    #[serde(rename = "id")]
    pub doc_id: String,
    pub language: String,
    pub content: String,
    #[serde(default)]
    pub origin: String,
}

/// A window of 1–15 consecutive lines extracted verbatim from a document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedSnippet {
    pub doc_id: String,
    pub language: String,
    /// 1-based index of the first extracted line.
    pub start_line: usize,
    pub line_count: usize,
    pub text: String,
}

/// Per-language document targets plus the root RNG seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingQuota {
    pub per_language: BTreeMap<String, usize>,
    pub rng_seed: u64,
}

impl SamplingQuota {
    pub fn validate(&self) -> Result<()> {
        let mut issues = Vec::new();
        if self.per_language.values().all(|&n| n == 0) {
            issues.push("sampling.quota: at least one language count must be > 0".to_string());
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ForgeError::config(issues))
        }
    }
}

/// Counters accumulated while streaming the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub records_read: usize,
    pub yielded: usize,
    pub skipped_empty: usize,
    pub skipped_language: usize,
    pub skipped_malformed: usize,
}

/// Streaming reader over a corpus record file.
///
/// Yields only documents whose language is in the configured set and whose
/// content is non-empty. Malformed records and filtered records are counted,
/// not fatal; an unreadable source is fatal.
pub struct CorpusReader {
    path: PathBuf,
    lines: Lines<BufReader<File>>,
    languages: BTreeSet<String>,
    seen_ids: BTreeSet<String>,
    stats: IngestStats,
}

impl CorpusReader {
    pub fn open(path: &Path, languages: &BTreeSet<String>) -> Result<Self> {
        let file = File::open(path).map_err(|e| ForgeError::io(path, e))?;
        Ok(CorpusReader {
            path: path.to_path_buf(),
            lines: BufReader::new(file).lines(),
            languages: languages.clone(),
            seen_ids: BTreeSet::new(),
            stats: IngestStats::default(),
        })
    }

    pub fn stats(&self) -> &IngestStats {
        &self.stats
    }

    fn next_document(&mut self) -> Result<Option<CodeDocument>> {
        loop {
            let Some(line) = self.lines.next() else {
                return Ok(None);
            };
            let line = line.map_err(|e| ForgeError::io(&self.path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.records_read += 1;
            let doc: CodeDocument = match serde_json::from_str(&line) {
                Ok(doc) => doc,
                Err(e) => {
                    warn!(error = %e, "skipping malformed corpus record");
                    self.stats.skipped_malformed += 1;
                    continue;
                }
            };
            if doc.content.is_empty() {
                self.stats.skipped_empty += 1;
                continue;
            }
            if !self.languages.contains(&doc.language) {
                self.stats.skipped_language += 1;
                continue;
            }
            if !self.seen_ids.insert(doc.doc_id.clone()) {
                warn!(doc_id = %doc.doc_id, "skipping duplicate document id");
                self.stats.skipped_malformed += 1;
                continue;
            }
            self.stats.yielded += 1;
            return Ok(Some(doc));
        }
    }
}

impl Iterator for CorpusReader {
    type Item = Result<CodeDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_document().transpose()
    }
}

/// Outcome of stratified sampling for one language.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageSampleStat {
    pub language: String,
    pub requested: usize,
    pub available: usize,
    pub selected: usize,
    pub shortfall: usize,
}

/// Per-language requested/selected/shortfall counts for the sampling report.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingReport {
    pub rng_seed: u64,
    pub languages: Vec<LanguageSampleStat>,
    pub total_selected: usize,
    #[serde(default)]
    pub ingest: IngestStats,
}

struct Reservoir {
    capacity: usize,
    seen: usize,
    rng: ChaCha8Rng,
    // (encounter index, document) so output can preserve corpus order
    slots: Vec<(usize, CodeDocument)>,
}

impl Reservoir {
    fn new(capacity: usize, rng: ChaCha8Rng) -> Self {
        Reservoir {
            capacity,
            seen: 0,
            rng,
            slots: Vec::with_capacity(capacity.min(1024)),
        }
    }

    // Algorithm R: keep the first k, then replace slot j < k with
    // probability k / i for the i-th document seen.
    fn offer(&mut self, doc: CodeDocument) {
        self.seen += 1;
        if self.capacity == 0 {
            return;
        }
        if self.slots.len() < self.capacity {
            self.slots.push((self.seen, doc));
            return;
        }
        let j = self.rng.random_range(0..self.seen);
        if j < self.capacity {
            self.slots[j] = (self.seen, doc);
        }
    }

    fn into_selected(mut self) -> Vec<CodeDocument> {
        self.slots.sort_by_key(|(idx, _)| *idx);
        self.slots.into_iter().map(|(_, doc)| doc).collect()
    }
}

/// Samples `min(quota, available)` documents per language, uniformly without
/// replacement, deterministically in `(corpus order, rng_seed)`.
///
/// Languages are emitted in sorted order; within a language the selection
/// preserves corpus encounter order. A quota language absent from the corpus
/// is recorded as shortfall, never fatal.
pub fn sample_documents<I>(corpus: I, quota: &SamplingQuota) -> Result<(Vec<CodeDocument>, SamplingReport)>
where
    I: IntoIterator<Item = Result<CodeDocument>>,
{
    quota.validate()?;
    let mut reservoirs: BTreeMap<String, Reservoir> = quota
        .per_language
        .iter()
        .map(|(lang, &cap)| {
            let rng = derive_rng(quota.rng_seed, &format!("sample:{lang}"));
            (lang.clone(), Reservoir::new(cap, rng))
        })
        .collect();

    for doc in corpus {
        let doc = doc?;
        if let Some(reservoir) = reservoirs.get_mut(&doc.language) {
            reservoir.offer(doc);
        }
    }

    let mut selected = Vec::new();
    let mut report = SamplingReport {
        rng_seed: quota.rng_seed,
        ..SamplingReport::default()
    };
    for (language, reservoir) in reservoirs {
        let requested = quota.per_language[&language];
        let available = reservoir.seen;
        let docs = reservoir.into_selected();
        let stat = LanguageSampleStat {
            language,
            requested,
            available,
            selected: docs.len(),
            shortfall: requested.saturating_sub(docs.len()),
        };
        if stat.shortfall > 0 {
            warn!(
                language = %stat.language,
                requested = stat.requested,
                available = stat.available,
                "sampling shortfall"
            );
        }
        report.total_selected += docs.len();
        report.languages.push(stat);
        selected.extend(docs);
    }
    Ok((selected, report))
}

/// Extracts one seed snippet: `line_count` uniform on
/// `[1, min(15, total_lines)]`, `start_line` uniform over valid starts,
/// text the verbatim slice.
pub fn extract_seed(doc: &CodeDocument, rng: &mut ChaCha8Rng) -> SeedSnippet {
    let lines = split_lines(&doc.content);
    let total = lines.len().max(1);
    let line_count = rng.random_range(1..=total.min(MAX_SEED_LINES));
    let start_line = rng.random_range(1..=total - line_count + 1);
    let text = if lines.is_empty() {
        String::new()
    } else {
        lines[start_line - 1..start_line - 1 + line_count].join("\n")
    };
    SeedSnippet {
        doc_id: doc.doc_id.clone(),
        language: doc.language.clone(),
        start_line,
        line_count,
        text,
    }
}

/// Extracts one seed per selected document from a single derived RNG stream.
pub fn extract_seeds(docs: &[CodeDocument], rng_seed: u64) -> Vec<SeedSnippet> {
    let mut rng = derive_rng(rng_seed, "extract");
    docs.iter().map(|doc| extract_seed(doc, &mut rng)).collect()
}

/// Line-comment syntax table keyed by language tag.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommentSyntax {
    prefixes: BTreeMap<String, Vec<String>>,
}

impl Default for CommentSyntax {
    fn default() -> Self {
        let mut prefixes = BTreeMap::new();
        let hash = vec!["#".to_string()];
        let slashes = vec!["//".to_string()];
        for lang in ["python", "shell", "ruby", "perl", "r", "yaml"] {
            prefixes.insert(lang.to_string(), hash.clone());
        }
        for lang in [
            "c", "c++", "c#", "java", "javascript", "typescript", "rust", "swift", "go", "kotlin",
            "scala",
        ] {
            prefixes.insert(lang.to_string(), slashes.clone());
        }
        prefixes.insert("php".to_string(), vec!["//".to_string(), "#".to_string()]);
        prefixes.insert("sql".to_string(), vec!["--".to_string()]);
        prefixes.insert("lua".to_string(), vec!["--".to_string()]);
        CommentSyntax { prefixes }
    }
}

impl CommentSyntax {
    /// Applies per-language overrides on top of the built-in table.
    pub fn with_overrides(overrides: &BTreeMap<String, Vec<String>>) -> Self {
        let mut syntax = CommentSyntax::default();
        for (lang, prefixes) in overrides {
            match syntax.prefixes.entry(lang.clone()) {
                Entry::Occupied(mut e) => {
                    *e.get_mut() = prefixes.clone();
                }
                Entry::Vacant(e) => {
                    e.insert(prefixes.clone());
                }
            }
        }
        syntax
    }

    pub fn prefixes_for(&self, language: &str) -> Option<&[String]> {
        self.prefixes.get(language).map(|v| v.as_slice())
    }
}

/// True iff every line of the seed is blank or a line comment for the seed's
/// language. Block comments are not modelled: a seed holding only an unclosed
/// block comment counts as non-trivial. Unknown languages are non-trivial.
pub fn is_trivial_seed(snippet: &SeedSnippet, syntax: &CommentSyntax) -> bool {
    let Some(prefixes) = syntax.prefixes_for(&snippet.language) else {
        warn!(language = %snippet.language, "no comment syntax for language; seed treated as non-trivial");
        return false;
    };
    snippet.text.split('\n').all(|line| {
        let trimmed = line.trim();
        trimmed.is_empty() || prefixes.iter().any(|p| trimmed.starts_with(p.as_str()))
    })
}

/// Convenience lookup used by tests and callers that already hold documents.
pub fn documents_by_id(docs: &[CodeDocument]) -> HashMap<&str, &CodeDocument> {
    docs.iter().map(|d| (d.doc_id.as_str(), d)).collect()
}
