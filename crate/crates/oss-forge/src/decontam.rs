//! Benchmark decontamination: drop samples that contain benchmark text.
//!
//! Benchmark entries (docstrings, solutions, prompts, questions) and sample
//! fields are both whitespace-normalized (runs collapsed to single spaces,
//! ends trimmed, case preserved); a sample is contaminated when a normalized
//! entry is a substring of its normalized problem or solution. All matching
//! entries are reported with byte spans into the normalized field text, so
//! every removal can be re-checked from the report alone.
//!
//! Matching runs on one immutable multi-pattern automaton shared across
//! worker threads; samples are scanned in parallel and results merged in
//! sample order. The naive normalize-then-substring scan is kept in tests
//! as the oracle.

use std::collections::btree_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use aho_corasick::AhoCorasick;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::warn;

use crate::error::{ForgeError, Result};
use crate::jsonl::read_jsonl;
use crate::teacher::InstructionSample;
use crate::textutil::normalize_ws;

/// What the benchmark entry is, in its source benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Docstring,
    Solution,
    Prompt,
    Question,
}

impl EntryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EntryKind::Docstring => "docstring",
            EntryKind::Solution => "solution",
            EntryKind::Prompt => "prompt",
            EntryKind::Question => "question",
        }
    }
}

/// One record of a benchmark descriptor file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkRecord {
    pub benchmark: String,
    pub kind: EntryKind,
    pub entry_id: String,
    pub text: String,
}

/// A usable contamination pattern after normalization and filtering.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkEntry {
    pub entry_id: String,
    pub kind: EntryKind,
    pub normalized: String,
}

/// A named set of contamination strings.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchmarkCorpus {
    pub name: String,
    pub entries: Vec<BenchmarkEntry>,
}

/// Load accounting per descriptor pass.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkLoadStats {
    pub records_read: usize,
    pub usable_entries: usize,
    pub dropped_short: usize,
    pub dropped_duplicate: usize,
    pub dropped_kind: usize,
}

/// Entry kinds admitted per benchmark. Unknown benchmark names admit all
/// kinds.
fn allowed_kinds(benchmark: &str) -> Option<&'static [EntryKind]> {
    match benchmark.to_ascii_lowercase().as_str() {
        "humaneval" | "mbpp" => Some(&[EntryKind::Docstring, EntryKind::Solution]),
        "apps" => Some(&[EntryKind::Docstring]),
        "ds-1000" | "ds1000" => Some(&[EntryKind::Prompt]),
        "gsm8k" => Some(&[EntryKind::Question]),
        _ => None,
    }
}

/// Reads descriptor records and builds per-benchmark corpora. Entries whose
/// normalized text is shorter than `min_match_len` are dropped and counted;
/// duplicate normalized texts within a benchmark are kept once.
pub fn load_benchmarks(
    records: Vec<BenchmarkRecord>,
    min_match_len: usize,
) -> (Vec<BenchmarkCorpus>, BenchmarkLoadStats) {
    let mut stats = BenchmarkLoadStats {
        records_read: records.len(),
        ..BenchmarkLoadStats::default()
    };
    let mut by_name: BTreeMap<String, Vec<BenchmarkEntry>> = BTreeMap::new();
    let mut seen: BTreeMap<String, std::collections::HashSet<String>> = BTreeMap::new();

    for record in records {
        if let Some(allowed) = allowed_kinds(&record.benchmark) {
            if !allowed.contains(&record.kind) {
                warn!(
                    benchmark = %record.benchmark,
                    kind = record.kind.as_str(),
                    entry = %record.entry_id,
                    "entry kind not admitted for this benchmark; skipping"
                );
                stats.dropped_kind += 1;
                continue;
            }
        }
        let normalized = normalize_ws(&record.text);
        if normalized.chars().count() < min_match_len {
            stats.dropped_short += 1;
            continue;
        }
        let dedup = seen.entry(record.benchmark.clone()).or_default();
        if !dedup.insert(normalized.clone()) {
            stats.dropped_duplicate += 1;
            continue;
        }
        by_name.entry(record.benchmark).or_default().push(BenchmarkEntry {
            entry_id: record.entry_id,
            kind: record.kind,
            normalized,
        });
        stats.usable_entries += 1;
    }

    let corpora: Vec<BenchmarkCorpus> = by_name
        .into_iter()
        .map(|(name, entries)| {
            if entries.is_empty() {
                warn!(benchmark = %name, "benchmark corpus is empty after filtering");
            }
            BenchmarkCorpus { name, entries }
        })
        .collect();
    (corpora, stats)
}

/// Reads one or more descriptor files and merges their records.
pub fn load_benchmark_files(
    paths: &[impl AsRef<Path>],
    min_match_len: usize,
) -> Result<(Vec<BenchmarkCorpus>, BenchmarkLoadStats)> {
    let mut records = Vec::new();
    for path in paths {
        records.extend(read_jsonl::<BenchmarkRecord>(path.as_ref())?);
    }
    Ok(load_benchmarks(records, min_match_len))
}

/// Which sample field a match was found in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleField {
    Problem,
    Solution,
}

/// Byte span into the *normalized* field text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MatchSpan {
    pub start: usize,
    pub end: usize,
}

/// Audit record: one benchmark entry found inside one sample field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ContaminationMatch {
    pub sample_id: String,
    pub benchmark: String,
    pub entry_id: String,
    pub kind: EntryKind,
    pub field: SampleField,
    pub matched_span: MatchSpan,
}

#[derive(Debug, Clone)]
struct PatternOwner {
    benchmark: String,
    entry_id: String,
    kind: EntryKind,
}

/// Immutable multi-pattern matcher over every benchmark entry.
pub struct ContaminationScanner {
    automaton: AhoCorasick,
    /// Pattern index -> entries sharing that normalized text.
    owners: Vec<Vec<PatternOwner>>,
    pattern_lens: Vec<usize>,
    benchmark_names: Vec<String>,
}

impl ContaminationScanner {
    pub fn build(corpora: &[BenchmarkCorpus]) -> Result<Self> {
        let mut pattern_ids: HashMap<&str, usize> = HashMap::new();
        let mut patterns: Vec<&str> = Vec::new();
        let mut owners: Vec<Vec<PatternOwner>> = Vec::new();
        for corpus in corpora {
            for entry in &corpus.entries {
                let id = match pattern_ids.entry(entry.normalized.as_str()) {
                    std::collections::hash_map::Entry::Occupied(e) => *e.get(),
                    std::collections::hash_map::Entry::Vacant(e) => {
                        let id = patterns.len();
                        patterns.push(entry.normalized.as_str());
                        owners.push(Vec::new());
                        e.insert(id);
                        id
                    }
                };
                owners[id].push(PatternOwner {
                    benchmark: corpus.name.clone(),
                    entry_id: entry.entry_id.clone(),
                    kind: entry.kind,
                });
            }
        }
        let automaton = AhoCorasick::new(&patterns)
            .map_err(|e| ForgeError::Analysis(format!("failed to build contamination automaton: {e}")))?;
        Ok(ContaminationScanner {
            automaton,
            owners,
            pattern_lens: patterns.iter().map(|p| p.len()).collect(),
            benchmark_names: corpora.iter().map(|c| c.name.clone()).collect(),
        })
    }

    pub fn benchmark_names(&self) -> &[String] {
        &self.benchmark_names
    }

    pub fn pattern_count(&self) -> usize {
        self.pattern_lens.len()
    }

    /// First-occurrence span of every pattern present in `normalized`.
    fn scan_normalized(&self, normalized: &str) -> Vec<(usize, MatchSpan)> {
        let mut first_span: HashMap<usize, MatchSpan> = HashMap::new();
        for mat in self.automaton.find_overlapping_iter(normalized) {
            let pattern = mat.pattern().as_usize();
            first_span.entry(pattern).or_insert(MatchSpan {
                start: mat.start(),
                end: mat.end(),
            });
        }
        let mut found: Vec<(usize, MatchSpan)> = first_span.into_iter().collect();
        found.sort_by_key(|(pattern, span)| (span.start, span.end, *pattern));
        found
    }

    fn scan_field(&self, sample_id: &str, field: SampleField, text: &str, out: &mut Vec<ContaminationMatch>) {
        let normalized = normalize_ws(text);
        for (pattern, span) in self.scan_normalized(&normalized) {
            for owner in &self.owners[pattern] {
                out.push(ContaminationMatch {
                    sample_id: sample_id.to_string(),
                    benchmark: owner.benchmark.clone(),
                    entry_id: owner.entry_id.clone(),
                    kind: owner.kind,
                    field,
                    matched_span: span,
                });
            }
        }
    }
}

/// All contamination matches for one sample, problem field first, then by
/// span start.
pub fn find_contamination(sample: &InstructionSample, scanner: &ContaminationScanner) -> Vec<ContaminationMatch> {
    let mut matches = Vec::new();
    scanner.scan_field(&sample.sample_id, SampleField::Problem, &sample.problem, &mut matches);
    scanner.scan_field(&sample.sample_id, SampleField::Solution, &sample.solution, &mut matches);
    matches
}

/// Stage summary written next to the match stream.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecontamReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub removed_count: usize,
    pub match_count: usize,
    /// Removed samples counted once per benchmark that flagged them.
    pub per_benchmark_removals: BTreeMap<String, usize>,
    pub min_match_len: usize,
    pub pattern_count: usize,
    #[serde(default)]
    pub load_stats: BenchmarkLoadStats,
}

/// Decontamination outcome: kept samples in input order, removed samples
/// with their full match lists, and the summary report.
pub struct DecontamOutcome {
    pub kept: Vec<InstructionSample>,
    pub removed: Vec<(InstructionSample, Vec<ContaminationMatch>)>,
    pub matches: Vec<ContaminationMatch>,
    pub report: DecontamReport,
}

/// Removes every sample with at least one match. Samples are scanned in
/// parallel; outputs preserve input order.
pub fn decontaminate(samples: Vec<InstructionSample>, scanner: &ContaminationScanner) -> DecontamOutcome {
    let match_lists: Vec<Vec<ContaminationMatch>> = samples
        .par_iter()
        .map(|sample| find_contamination(sample, scanner))
        .collect();

    let mut report = DecontamReport {
        input_count: samples.len(),
        pattern_count: scanner.pattern_count(),
        ..DecontamReport::default()
    };
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    let mut matches = Vec::new();
    for (sample, sample_matches) in samples.into_iter().zip(match_lists) {
        if sample_matches.is_empty() {
            kept.push(sample);
            continue;
        }
        report.match_count += sample_matches.len();
        let mut benchmarks: Vec<&str> = sample_matches.iter().map(|m| m.benchmark.as_str()).collect();
        benchmarks.sort_unstable();
        benchmarks.dedup();
        for benchmark in benchmarks {
            match report.per_benchmark_removals.entry(benchmark.to_string()) {
                Entry::Occupied(mut e) => *e.get_mut() += 1,
                Entry::Vacant(e) => {
                    e.insert(1);
                }
            }
        }
        matches.extend(sample_matches.iter().cloned());
        removed.push((sample, sample_matches));
    }
    report.kept_count = kept.len();
    report.removed_count = removed.len();
    DecontamOutcome {
        kept,
        removed,
        matches,
        report,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SeedSnippet;

    fn record(benchmark: &str, kind: EntryKind, id: &str, text: &str) -> BenchmarkRecord {
        BenchmarkRecord {
            benchmark: benchmark.to_string(),
            kind,
            entry_id: id.to_string(),
            text: text.to_string(),
        }
    }

    fn sample(id: &str, problem: &str, solution: &str) -> InstructionSample {
        InstructionSample {
            sample_id: id.to_string(),
            seed: SeedSnippet {
                doc_id: format!("doc-{id}"),
                language: "python".into(),
                start_line: 1,
                line_count: 1,
                text: format!("seed {id}"),
            },
            problem: problem.to_string(),
            solution: solution.to_string(),
            fenced_languages: Vec::new(),
            raw_response: String::new(),
            flags: Default::default(),
            origin: Default::default(),
        }
    }

    const DOCSTRING: &str = "Return a list with elements incremented by 1.";

    // Independent oracle: normalize both sides with split_whitespace/join and
    // run a naive substring scan over every (entry, field) pair.
    fn naive_oracle(
        samples: &[InstructionSample],
        corpora: &[BenchmarkCorpus],
    ) -> Vec<(String, String, String, SampleField, usize)> {
        let normalize = |s: &str| s.split_whitespace().collect::<Vec<_>>().join(" ");
        let mut found = Vec::new();
        for sample in samples {
            for (field, text) in [
                (SampleField::Problem, &sample.problem),
                (SampleField::Solution, &sample.solution),
            ] {
                let haystack = normalize(text);
                for corpus in corpora {
                    for entry in &corpus.entries {
                        if let Some(pos) = haystack.find(&entry.normalized) {
                            found.push((
                                sample.sample_id.clone(),
                                corpus.name.clone(),
                                entry.entry_id.clone(),
                                field,
                                pos,
                            ));
                        }
                    }
                }
            }
        }
        found.sort();
        found
    }

    #[test]
    fn load_drops_short_and_duplicate_entries() {
        let (corpora, stats) = load_benchmarks(
            vec![
                record("humaneval", EntryKind::Docstring, "h0", DOCSTRING),
                record("humaneval", EntryKind::Solution, "h0s", "return x"),
                record("humaneval", EntryKind::Docstring, "h1", DOCSTRING),
                record("gsm8k", EntryKind::Question, "g0", "How many apples are left after eating three?"),
            ],
            20,
        );
        assert_eq!(stats.dropped_short, 1);
        assert_eq!(stats.dropped_duplicate, 1);
        assert_eq!(stats.usable_entries, 2);
        assert_eq!(corpora.len(), 2);
    }

    #[test]
    fn load_enforces_kind_restrictions() {
        let (_, stats) = load_benchmarks(
            vec![
                record("apps", EntryKind::Solution, "a0", DOCSTRING),
                record("apps", EntryKind::Docstring, "a1", DOCSTRING),
                record("custom-bench", EntryKind::Solution, "c0", DOCSTRING),
            ],
            20,
        );
        assert_eq!(stats.dropped_kind, 1);
        assert_eq!(stats.usable_entries, 2);
    }

    #[test]
    fn humaneval_scale_corpus_loads() {
        let records: Vec<BenchmarkRecord> = (0..164)
            .flat_map(|i| {
                [
                    record(
                        "humaneval",
                        EntryKind::Docstring,
                        &format!("HumanEval/{i}/doc"),
                        &format!("Task {i}: {DOCSTRING}"),
                    ),
                    record(
                        "humaneval",
                        EntryKind::Solution,
                        &format!("HumanEval/{i}/sol"),
                        &format!("def solve_{i}(xs):\n    return [x + 1 for x in xs]"),
                    ),
                ]
            })
            .collect();
        let (corpora, stats) = load_benchmarks(records, 20);
        assert_eq!(corpora.len(), 1);
        assert!(stats.usable_entries <= 164 * 2);
        assert_eq!(stats.usable_entries, corpora[0].entries.len());
    }

    fn scanner_for(corpora: &[BenchmarkCorpus]) -> ContaminationScanner {
        ContaminationScanner::build(corpora).unwrap()
    }

    #[test]
    fn verbatim_contamination_is_found_in_problem() {
        let (corpora, _) = load_benchmarks(
            vec![record("humaneval", EntryKind::Docstring, "h0", DOCSTRING)],
            20,
        );
        let scanner = scanner_for(&corpora);
        let dirty = sample("s0", &format!("Solve this: {DOCSTRING} Now."), "no code");
        let matches = find_contamination(&dirty, &scanner);
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].field, SampleField::Problem);
        assert_eq!(matches[0].entry_id, "h0");
    }

    // Indentation changes must not hide a leak; verified against the naive
    // normalize+substring oracle.
    #[test]
    fn indented_contamination_still_matches() {
        let entry_text = "def inc(xs):\n    return [x + 1 for x in xs]";
        let (corpora, _) = load_benchmarks(
            vec![record("humaneval", EntryKind::Solution, "h0", entry_text)],
            20,
        );
        let scanner = scanner_for(&corpora);
        let reindented = "        def inc(xs):\n                return [x + 1 for x in xs]";
        let dirty = sample("s0", "Implement inc.", reindented);
        let matches = find_contamination(&dirty, &scanner);
        assert_eq!(matches.len(), 1);
        assert_eq!(matches[0].field, SampleField::Solution);

        let oracle = naive_oracle(&[dirty], &corpora);
        assert_eq!(oracle.len(), 1);
        assert_eq!(matches[0].matched_span.start, oracle[0].4);
    }

    #[test]
    fn clean_sample_has_no_matches() {
        let (corpora, _) = load_benchmarks(
            vec![record("humaneval", EntryKind::Docstring, "h0", DOCSTRING)],
            20,
        );
        let scanner = scanner_for(&corpora);
        let clean = sample("s0", "Compute a factorial.", "def f(n): ...");
        assert!(find_contamination(&clean, &scanner).is_empty());
    }

    #[test]
    fn match_span_is_recheckable() {
        let (corpora, _) = load_benchmarks(
            vec![record("humaneval", EntryKind::Docstring, "h0", DOCSTRING)],
            20,
        );
        let scanner = scanner_for(&corpora);
        let dirty = sample("s0", &format!("intro\n   {DOCSTRING}\nmore"), "x");
        let matches = find_contamination(&dirty, &scanner);
        let m = &matches[0];
        let normalized = normalize_ws(&dirty.problem);
        assert_eq!(
            &normalized[m.matched_span.start..m.matched_span.end],
            corpora[0].entries[0].normalized
        );
    }

    #[test]
    fn decontaminate_removes_planted_and_matches_oracle() {
        let entries: Vec<BenchmarkRecord> = (0..30)
            .map(|i| {
                record(
                    "humaneval",
                    EntryKind::Docstring,
                    &format!("h{i}"),
                    &format!("Benchmark docstring number {i} with enough length to match."),
                )
            })
            .collect();
        let (corpora, _) = load_benchmarks(entries, 20);
        let scanner = scanner_for(&corpora);

        let mut samples = Vec::new();
        for i in 0..100 {
            let text = if i % 10 == 0 {
                // plant entry i/10 with odd indentation
                format!(
                    "Please solve:\n\t Benchmark docstring   number {} with enough\n length to match. ok",
                    i / 10
                )
            } else {
                format!("An ordinary problem about task {i}.")
            };
            samples.push(sample(&format!("s{i}"), &text, "def f(): pass"));
        }
        let outcome = decontaminate(samples.clone(), &scanner);
        assert_eq!(outcome.removed.len(), 10);
        assert_eq!(outcome.kept.len(), 90);
        assert_eq!(outcome.report.removed_count, 10);
        assert_eq!(outcome.report.per_benchmark_removals["humaneval"], 10);
        assert!(outcome.report.input_count == outcome.report.kept_count + outcome.report.removed_count);

        let oracle = naive_oracle(&samples, &corpora);
        let got: Vec<(String, String, String, SampleField, usize)> = {
            let mut v: Vec<_> = outcome
                .matches
                .iter()
                .map(|m| {
                    (
                        m.sample_id.clone(),
                        m.benchmark.clone(),
                        m.entry_id.clone(),
                        m.field,
                        m.matched_span.start,
                    )
                })
                .collect();
            v.sort();
            v
        };
        assert_eq!(got, oracle);

        // Idempotence: decontaminating the kept set removes nothing.
        let again = decontaminate(outcome.kept.clone(), &scanner);
        assert_eq!(again.removed.len(), 0);
        assert_eq!(again.kept.len(), outcome.kept.len());
    }

    // Adding benchmark entries never shrinks the removed set.
    #[test]
    fn monotonic_in_corpora() {
        let base = vec![record("humaneval", EntryKind::Docstring, "h0", DOCSTRING)];
        let extended = vec![
            record("humaneval", EntryKind::Docstring, "h0", DOCSTRING),
            record("gsm8k", EntryKind::Question, "g0", "A train travels sixty miles in one hour."),
        ];
        let samples = vec![
            sample("s0", &format!("x {DOCSTRING}"), "s"),
            sample("s1", "A train travels sixty miles in one hour.", "s"),
            sample("s2", "unrelated", "s"),
        ];
        let (small, _) = load_benchmarks(base, 20);
        let (big, _) = load_benchmarks(extended, 20);
        let removed_small: Vec<String> = decontaminate(samples.clone(), &scanner_for(&small))
            .removed
            .into_iter()
            .map(|(s, _)| s.sample_id)
            .collect();
        let removed_big: Vec<String> = decontaminate(samples, &scanner_for(&big))
            .removed
            .into_iter()
            .map(|(s, _)| s.sample_id)
            .collect();
        for id in &removed_small {
            assert!(removed_big.contains(id));
        }
        assert!(removed_big.len() > removed_small.len());
    }

    // Shared normalized text across benchmarks must be reported for both.
    #[test]
    fn shared_pattern_reports_all_owners() {
        let (corpora, _) = load_benchmarks(
            vec![
                record("humaneval", EntryKind::Docstring, "h0", DOCSTRING),
                record("mbpp", EntryKind::Docstring, "m0", DOCSTRING),
            ],
            20,
        );
        let scanner = scanner_for(&corpora);
        let dirty = sample("s0", DOCSTRING, "x");
        let matches = find_contamination(&dirty, &scanner);
        let mut benchmarks: Vec<&str> = matches.iter().map(|m| m.benchmark.as_str()).collect();
        benchmarks.sort_unstable();
        assert_eq!(benchmarks, vec!["humaneval", "mbpp"]);
    }
}
