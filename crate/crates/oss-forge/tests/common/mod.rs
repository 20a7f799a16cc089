//! Shared fixture builders for the integration suites.
//!
//! Each test binary compiles this module separately and uses its own
//! subset of the helpers.
#![allow(dead_code)]

use std::collections::BTreeSet;
use std::path::Path;

use oss_forge::corpus::{CodeDocument, SeedSnippet};
use oss_forge::decontam::{BenchmarkRecord, EntryKind};
use oss_forge::teacher::InstructionSample;

pub fn doc(id: &str, language: &str, content: &str) -> CodeDocument {
    CodeDocument {
        doc_id: id.to_string(),
        language: language.to_string(),
        content: content.to_string(),
        origin: format!("fixture://{id}"),
    }
}

pub fn seed(doc_id: &str, language: &str, text: &str) -> SeedSnippet {
    SeedSnippet {
        doc_id: doc_id.to_string(),
        language: language.to_string(),
        start_line: 1,
        line_count: text.split('\n').count(),
        text: text.to_string(),
    }
}

pub fn sample(id: &str, problem: &str, solution: &str, seed_text: &str) -> InstructionSample {
    InstructionSample {
        sample_id: id.to_string(),
        seed: seed(&format!("doc-{id}"), "python", seed_text),
        problem: problem.to_string(),
        solution: solution.to_string(),
        fenced_languages: Vec::new(),
        raw_response: format!("[Problem Description] {problem} [Solution] {solution}"),
        flags: Default::default(),
        origin: Default::default(),
    }
}

pub fn benchmark_record(benchmark: &str, kind: EntryKind, id: &str, text: &str) -> BenchmarkRecord {
    BenchmarkRecord {
        benchmark: benchmark.to_string(),
        kind,
        entry_id: id.to_string(),
        text: text.to_string(),
    }
}

pub fn languages(names: &[&str]) -> BTreeSet<String> {
    names.iter().map(|s| s.to_string()).collect()
}

pub fn write_jsonl_values(path: &Path, values: &[serde_json::Value]) {
    let mut body = String::new();
    for value in values {
        body.push_str(&value.to_string());
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}

/// Recursively collects (relative path, bytes) of every file under `root`,
/// sorted by path.
pub fn snapshot_tree(root: &Path) -> Vec<(String, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().to_string();
                out.push((rel, std::fs::read(&path).unwrap()));
            }
        }
    }
    let mut out = Vec::new();
    walk(root, root, &mut out);
    out
}
