//! Consolidated machine-readable run report and the stage ledger.
//!
//! The ledger identity is the accounting invariant across stages: every
//! seed is attributed to exactly one outcome per stage.
//!
//! ```text
//! seeds     = accepted + rejected
//! accepted  = clean survivors + clean removed
//! survivors = decontaminated kept + decontaminated removed
//! ```

use serde::{Deserialize, Serialize};

use crate::analyze::SimilaritySummary;
use crate::clean::CleanReport;
use crate::corpus::SamplingReport;
use crate::decontam::DecontamReport;
use crate::export::SplitReport;
use crate::pairminer::{MineReport, PrioritizeReport};
use crate::teacher::GenerationReport;

/// Cross-stage accounting. Built from the individual stage reports.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerIdentity {
    pub seeds: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub clean_survivors: usize,
    pub clean_removed: usize,
    pub decontam_kept: usize,
    pub decontam_removed: usize,
    pub generation_accounted: bool,
    pub clean_accounted: bool,
    pub decontam_accounted: bool,
}

impl LedgerIdentity {
    pub fn from_reports(
        sampling: Option<&SamplingReport>,
        generation: Option<&GenerationReport>,
        clean: Option<&CleanReport>,
        decontam: Option<&DecontamReport>,
    ) -> Self {
        let seeds = sampling.map(|r| r.total_selected).unwrap_or_default();
        let (accepted, rejected) = generation.map(|r| (r.accepted, r.rejected)).unwrap_or_default();
        let (clean_survivors, clean_removed) = clean
            .map(|r| (r.output_count, r.removed_total()))
            .unwrap_or_default();
        let (decontam_kept, decontam_removed) = decontam
            .map(|r| (r.kept_count, r.removed_count))
            .unwrap_or_default();
        LedgerIdentity {
            seeds,
            accepted,
            rejected,
            clean_survivors,
            clean_removed,
            decontam_kept,
            decontam_removed,
            generation_accounted: generation.is_none() || seeds == accepted + rejected,
            clean_accounted: clean.is_none() || accepted == clean_survivors + clean_removed,
            decontam_accounted: decontam.is_none() || clean_survivors == decontam_kept + decontam_removed,
        }
    }

    pub fn reconciles(&self) -> bool {
        self.generation_accounted && self.clean_accounted && self.decontam_accounted
    }
}

/// Category counts without the per-sample assignment list (that lives in a
/// CSV next to the report).
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategorySummary {
    pub categories: Vec<String>,
    pub counts: Vec<usize>,
    pub ties: usize,
    pub embedder_id: String,
}

/// Analysis block of the consolidated report.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub histogram_tokenizer: String,
    pub histogram_bin_width: usize,
    pub problems_total: usize,
    pub solutions_total: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilaritySummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub categories: Option<CategorySummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningSummary {
    pub mine: MineReport,
    pub prioritize: PrioritizeReport,
}

/// Thresholds that shaped the run, recorded so results are interpretable
/// without the config file.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub min_match_len: usize,
    pub short_solution_chars: usize,
    pub min_comment_tokens: usize,
    pub min_body_lines: usize,
}

/// The consolidated run report: counts, thresholds, tokenizer ids, and the
/// config hash. Deterministic content only; no timestamps.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    pub config_hash: String,
    pub thresholds: Thresholds,
    pub ledger: LedgerIdentity,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generation: Option<GenerationReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean: Option<CleanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decontam: Option<DecontamReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mining: Option<MiningSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub analysis: Option<AnalysisSummary>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_reconciles_when_counts_add_up() {
        let sampling = SamplingReport {
            total_selected: 100,
            ..SamplingReport::default()
        };
        let generation = GenerationReport {
            requests: 100,
            accepted: 95,
            rejected: 5,
            ..GenerationReport::default()
        };
        let clean = CleanReport {
            input_count: 95,
            removed_exact_dup: 2,
            removed_seed_dup: 1,
            removed_trivial_seed: 1,
            output_count: 91,
        };
        let decontam = DecontamReport {
            input_count: 91,
            kept_count: 90,
            removed_count: 1,
            ..DecontamReport::default()
        };
        let ledger = LedgerIdentity::from_reports(
            Some(&sampling),
            Some(&generation),
            Some(&clean),
            Some(&decontam),
        );
        assert!(ledger.reconciles());
        assert_eq!(ledger.seeds, 100);
        assert_eq!(ledger.decontam_kept, 90);
    }

    #[test]
    fn ledger_flags_missing_samples() {
        let sampling = SamplingReport {
            total_selected: 100,
            ..SamplingReport::default()
        };
        let generation = GenerationReport {
            requests: 100,
            accepted: 90,
            rejected: 5, // 5 unaccounted
            ..GenerationReport::default()
        };
        let ledger = LedgerIdentity::from_reports(Some(&sampling), Some(&generation), None, None);
        assert!(!ledger.generation_accounted);
        assert!(!ledger.reconciles());
    }

    #[test]
    fn empty_report_is_all_zeros_and_reconciles() {
        let ledger = LedgerIdentity::from_reports(None, None, None, None);
        assert!(ledger.reconciles());
        let report = PipelineReport::default();
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"config_hash\":\"\""));
    }
}
