//! Cleaning pass: exact duplicates, same-seed duplicates, trivial seeds.
//!
//! A sample is removed when (a) an earlier sample had the byte-identical
//! (problem, solution) pair, else (b) an earlier sample used the same seed
//! text, else (c) its own seed is trivial (only comments or blank lines).
//! Each removal is counted under exactly one rule in that precedence order,
//! first occurrences win, and output order preserves input order.
//!
//! Duplicate keys are registered for every sample seen, surviving or not: a
//! sample identical to an earlier *removed* sample still counts as an exact
//! duplicate.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{is_trivial_seed, CommentSyntax};
use crate::teacher::InstructionSample;

/// Stage accounting; `output_count = input_count - removed_*` always holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CleanReport {
    pub input_count: usize,
    pub removed_exact_dup: usize,
    pub removed_seed_dup: usize,
    pub removed_trivial_seed: usize,
    pub output_count: usize,
}

impl CleanReport {
    pub fn removed_total(&self) -> usize {
        self.removed_exact_dup + self.removed_seed_dup + self.removed_trivial_seed
    }

    pub fn reconciles(&self) -> bool {
        self.input_count == self.output_count + self.removed_total()
    }
}

/// Applies the three cleaning rules in one ordered pass.
pub fn clean(
    samples: Vec<InstructionSample>,
    syntax: &CommentSyntax,
) -> (Vec<InstructionSample>, CleanReport) {
    let mut report = CleanReport {
        input_count: samples.len(),
        ..CleanReport::default()
    };
    let mut seen_pairs: HashSet<(String, String)> = HashSet::new();
    let mut seen_seeds: HashSet<String> = HashSet::new();
    let mut kept = Vec::with_capacity(samples.len());

    for sample in samples {
        let pair_key = (sample.problem.clone(), sample.solution.clone());
        let pair_is_new = seen_pairs.insert(pair_key);
        let seed_is_new = seen_seeds.insert(sample.seed.text.clone());
        if !pair_is_new {
            report.removed_exact_dup += 1;
            continue;
        }
        if !seed_is_new {
            report.removed_seed_dup += 1;
            continue;
        }
        if is_trivial_seed(&sample.seed, syntax) {
            report.removed_trivial_seed += 1;
            continue;
        }
        kept.push(sample);
    }

    report.output_count = kept.len();
    debug_assert!(report.reconciles());
    (kept, report)
}
