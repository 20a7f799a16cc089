//! Training-ready dataset export, ablation language split, and manifests.
//!
//! The interchange format is newline-delimited JSON with an explicit schema
//! block in the manifest: the problem maps to the instruction field, the
//! solution to the response field, and the full pipeline record rides along
//! in a metadata field so that export round-trips losslessly.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::clean::CleanReport;
use crate::decontam::DecontamReport;
use crate::error::{ForgeError, Result};
use crate::jsonl::{read_jsonl, write_jsonl};
use crate::teacher::InstructionSample;

/// The literal whose presence sends a sample to the python split.
pub const PYTHON_FENCE: &str = "```python";

/// Exhaustive, disjoint partition by the exact `"```python"` substring rule
/// over problem and solution. Case-sensitive: a `"```Python"` fence does not
/// count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitSets {
    pub python: Vec<InstructionSample>,
    pub other: Vec<InstructionSample>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitReport {
    pub input_count: usize,
    pub python_count: usize,
    pub other_count: usize,
}

pub fn split_by_language(samples: Vec<InstructionSample>) -> (SplitSets, SplitReport) {
    let mut sets = SplitSets::default();
    let input_count = samples.len();
    for sample in samples {
        if sample.problem.contains(PYTHON_FENCE) || sample.solution.contains(PYTHON_FENCE) {
            sets.python.push(sample);
        } else {
            sets.other.push(sample);
        }
    }
    let report = SplitReport {
        input_count,
        python_count: sets.python.len(),
        other_count: sets.other.len(),
    };
    (sets, report)
}

/// Field mapping of the exported records.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportSchema {
    pub instruction_field: String,
    pub response_field: String,
    /// Carries the full pipeline record; makes re-import the identity.
    pub meta_field: String,
}

impl Default for ExportSchema {
    fn default() -> Self {
        ExportSchema {
            instruction_field: "instruction".to_string(),
            response_field: "response".to_string(),
            meta_field: "meta".to_string(),
        }
    }
}

impl ExportSchema {
    /// Field names must be non-empty and pairwise distinct.
    pub fn validate_fields(instruction: &str, response: &str, meta: &str) -> Result<()> {
        let mut names = [instruction, response, meta];
        names.sort_unstable();
        if names.iter().any(|n| n.is_empty()) || names.windows(2).any(|w| w[0] == w[1]) {
            return Err(ForgeError::config(vec![
                "export schema fields must be non-empty and distinct".to_string(),
            ]));
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        ExportSchema::validate_fields(&self.instruction_field, &self.response_field, &self.meta_field)
    }
}

/// Finetuning settings recorded in the manifest for the downstream trainer.
/// Informational only: this pipeline never trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub base_model: String,
    pub epochs: u32,
    pub initial_learning_rate: f64,
    pub warmup_steps: u32,
    pub lr_scheduler: String,
    pub optimizer: String,
    pub batch_size: u32,
    pub max_sequence_length: u32,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            base_model: "unspecified".to_string(),
            epochs: 2,
            initial_learning_rate: 5e-5,
            warmup_steps: 15,
            lr_scheduler: "linear".to_string(),
            optimizer: "adafactor".to_string(),
            batch_size: 512,
            max_sequence_length: 1216,
        }
    }
}

/// Reports of the stages the exported samples went through.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReports {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clean: Option<CleanReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decontam: Option<DecontamReport>,
}

/// Manifest written beside every exported dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_name: String,
    pub sample_count: usize,
    /// Samples per fenced-block language tag.
    pub fenced_language_counts: BTreeMap<String, usize>,
    pub config_hash: String,
    pub schema: ExportSchema,
    pub stage_reports: StageReports,
    pub training: TrainingParams,
}

fn fenced_language_counts(samples: &[InstructionSample]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for sample in samples {
        for tag in &sample.fenced_languages {
            *counts.entry(tag.clone()).or_default() += 1;
        }
    }
    counts
}

/// Writes the dataset file and its manifest. One record per sample, UTF-8,
/// newline-delimited; the export is loss-free.
pub fn export_jsonl(
    samples: &[InstructionSample],
    schema: &ExportSchema,
    dataset_name: &str,
    config_hash: &str,
    stage_reports: StageReports,
    training: TrainingParams,
    dataset_path: &Path,
    manifest_path: &Path,
) -> Result<DatasetManifest> {
    schema.validate()?;
    let records: Vec<BTreeMap<String, Value>> = samples
        .iter()
        .map(|sample| {
            let mut record = BTreeMap::new();
            record.insert(schema.instruction_field.clone(), Value::String(sample.problem.clone()));
            record.insert(schema.response_field.clone(), Value::String(sample.solution.clone()));
            record.insert(
                schema.meta_field.clone(),
                serde_json::to_value(sample).expect("sample serializes"),
            );
            record
        })
        .collect();
    write_jsonl(dataset_path, &records)?;

    let manifest = DatasetManifest {
        dataset_name: dataset_name.to_string(),
        sample_count: samples.len(),
        fenced_language_counts: fenced_language_counts(samples),
        config_hash: config_hash.to_string(),
        schema: schema.clone(),
        stage_reports,
        training,
    };
    crate::jsonl::write_json_pretty(manifest_path, &manifest)?;
    Ok(manifest)
}

/// Reads an exported dataset back into pipeline records.
pub fn import_jsonl(dataset_path: &Path, schema: &ExportSchema) -> Result<Vec<InstructionSample>> {
    let records: Vec<BTreeMap<String, Value>> = read_jsonl(dataset_path)?;
    let mut samples = Vec::with_capacity(records.len());
    for (index, mut record) in records.into_iter().enumerate() {
        let meta = record.remove(&schema.meta_field).ok_or_else(|| ForgeError::MalformedRecord {
            path: dataset_path.to_path_buf(),
            line: index + 1,
            message: format!("missing metadata field `{}`", schema.meta_field),
        })?;
        let sample: InstructionSample =
            serde_json::from_value(meta).map_err(|e| ForgeError::MalformedRecord {
                path: dataset_path.to_path_buf(),
                line: index + 1,
                message: e.to_string(),
            })?;
        samples.push(sample);
    }
    Ok(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::SeedSnippet;
    use crate::teacher::fenced_languages;

    fn sample(id: &str, problem: &str, solution: &str) -> InstructionSample {
        InstructionSample {
            sample_id: id.to_string(),
            seed: SeedSnippet {
                doc_id: format!("doc-{id}"),
                language: "python".into(),
                start_line: 3,
                line_count: 2,
                text: "a\nb".into(),
            },
            fenced_languages: {
                let mut tags = fenced_languages(problem);
                for tag in fenced_languages(solution) {
                    if !tags.contains(&tag) {
                        tags.push(tag);
                    }
                }
                tags
            },
            problem: problem.to_string(),
            solution: solution.to_string(),
            raw_response: format!("raw {id}"),
            flags: Default::default(),
            origin: Default::default(),
        }
    }

    #[test]
    fn split_follows_exact_literal_rule() {
        let samples = vec![
            sample("py", "Use this:\n```python\nx\n```", "done"),
            sample("cap", "```Python\nx\n```", "done"),
            sample("none", "no fences at all", "plain"),
            sample("sol", "problem text", "```python\ny\n```"),
        ];
        let (sets, report) = split_by_language(samples.clone());
        let ids =
            |v: &[InstructionSample]| v.iter().map(|s| s.sample_id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&sets.python), vec!["py", "sol"]);
        assert_eq!(ids(&sets.other), vec!["cap", "none"]);
        assert_eq!(report.python_count + report.other_count, report.input_count);
        // partition: exhaustive and disjoint
        assert_eq!(sets.python.len() + sets.other.len(), samples.len());
        for s in &sets.python {
            assert!(!sets.other.iter().any(|o| o.sample_id == s.sample_id));
        }
    }

    #[test]
    fn export_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("data.jsonl");
        let manifest_path = dir.path().join("data.manifest.json");
        let samples = vec![
            sample("a", "P with \"quotes\"", "S\nwith\nnewlines"),
            sample("b", "```python\nprint(1)\n```", "done"),
            sample("c", "unicode: héllo ✓", "tabs\tand\rreturns"),
        ];
        let manifest = export_jsonl(
            &samples,
            &ExportSchema::default(),
            "unit",
            "cafebabe",
            StageReports::default(),
            TrainingParams::default(),
            &dataset,
            &manifest_path,
        )
        .unwrap();
        assert_eq!(manifest.sample_count, 3);
        assert_eq!(manifest.fenced_language_counts["python"], 1);

        let back = import_jsonl(&dataset, &ExportSchema::default()).unwrap();
        assert_eq!(back, samples);

        // exported line count equals sample count
        let text = std::fs::read_to_string(&dataset).unwrap();
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn export_uses_schema_field_names() {
        let dir = tempfile::tempdir().unwrap();
        let dataset = dir.path().join("data.jsonl");
        let schema = ExportSchema {
            instruction_field: "prompt".into(),
            response_field: "completion".into(),
            meta_field: "provenance".into(),
        };
        export_jsonl(
            &[sample("a", "P", "S")],
            &schema,
            "unit",
            "hash",
            StageReports::default(),
            TrainingParams::default(),
            &dataset,
            &dir.path().join("m.json"),
        )
        .unwrap();
        let line = std::fs::read_to_string(&dataset).unwrap();
        let value: Value = serde_json::from_str(line.lines().next().unwrap()).unwrap();
        assert_eq!(value["prompt"], "P");
        assert_eq!(value["completion"], "S");
        assert!(value["provenance"]["sample_id"].is_string());
    }

    #[test]
    fn schema_rejects_colliding_fields() {
        let schema = ExportSchema {
            instruction_field: "text".into(),
            response_field: "text".into(),
            meta_field: "meta".into(),
        };
        assert!(schema.validate().is_err());
    }

    #[test]
    fn empty_dataset_exports_zeros() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = export_jsonl(
            &[],
            &ExportSchema::default(),
            "empty",
            "hash",
            StageReports::default(),
            TrainingParams::default(),
            &dir.path().join("d.jsonl"),
            &dir.path().join("m.json"),
        )
        .unwrap();
        assert_eq!(manifest.sample_count, 0);
        assert!(manifest.fenced_language_counts.is_empty());
    }
}
