//! Declarative pipeline configuration.
//!
//! One TOML file drives every stage. Paths are resolved relative to the
//! config file's directory. Secrets never live in the config: backends name
//! the environment variable that holds their token. The RNG seed is
//! mandatory so no run depends on implicit entropy.
//!
//! The config hash is the SHA-256 of the parsed config's canonical JSON
//! serialization, so formatting, comments, and table order do not affect
//! it, while any semantic change does.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analyze::Category;
use crate::corpus::SamplingQuota;
use crate::error::{ForgeError, Result};
use crate::export::{ExportSchema, TrainingParams};
use crate::pairminer::MinerConfig;
use crate::teacher::{Decoding, SectionMarkers};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusConfig {
    pub source: PathBuf,
    pub languages: BTreeSet<String>,
    /// Per-language line-comment prefix overrides for the trivial-seed rule.
    #[serde(default)]
    pub comment_prefixes: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub rng_seed: u64,
    pub quota: BTreeMap<String, usize>,
}

impl SamplingConfig {
    pub fn to_quota(&self) -> SamplingQuota {
        SamplingQuota {
            per_language: self.quota.clone(),
            rng_seed: self.rng_seed,
        }
    }
}

fn default_problem_marker() -> String {
    crate::teacher::DEFAULT_PROBLEM_MARKER.to_string()
}

fn default_solution_marker() -> String {
    crate::teacher::DEFAULT_SOLUTION_MARKER.to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PromptConfig {
    /// Template file with a `{seed}` placeholder; the built-in template is
    /// used when unset.
    pub template_path: Option<PathBuf>,
    pub problem_marker: String,
    pub solution_marker: String,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            template_path: None,
            problem_marker: default_problem_marker(),
            solution_marker: default_solution_marker(),
        }
    }
}

impl PromptConfig {
    pub fn markers(&self) -> SectionMarkers {
        SectionMarkers {
            problem: self.problem_marker.clone(),
            solution: self.solution_marker.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Http,
    Mock,
    MockEcho,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodingConfig {
    pub mode: String,
    pub temperature: f64,
    pub top_p: f64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            mode: "greedy".to_string(),
            temperature: 0.8,
            top_p: 0.95,
        }
    }
}

impl DecodingConfig {
    pub fn to_decoding(&self) -> Result<Decoding> {
        match self.mode.as_str() {
            "greedy" => Ok(Decoding::Greedy),
            "sampled" => Ok(Decoding::Sampled {
                temperature: self.temperature,
                top_p: self.top_p,
            }),
            other => Err(ForgeError::config(vec![format!(
                "teacher.decoding.mode: unknown mode `{other}` (expected `greedy` or `sampled`)"
            )])),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    pub backend: BackendKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub token_env: String,
    pub concurrency: usize,
    pub max_retries: u32,
    pub retry_initial_ms: u64,
    pub retry_max_ms: u64,
    pub request_timeout_ms: u64,
    pub max_new_tokens: u32,
    pub short_solution_chars: usize,
    pub mock_fixtures: Option<PathBuf>,
    pub mock_latency_ms: u64,
    pub decoding: DecodingConfig,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            backend: BackendKind::MockEcho,
            endpoint: None,
            model: None,
            token_env: "TEACHER_API_TOKEN".to_string(),
            concurrency: 8,
            max_retries: 3,
            retry_initial_ms: 500,
            retry_max_ms: 8_000,
            request_timeout_ms: 60_000,
            max_new_tokens: 2_048,
            short_solution_chars: 64,
            mock_fixtures: None,
            mock_latency_ms: 0,
            decoding: DecodingConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecontamConfig {
    pub benchmarks: Vec<PathBuf>,
    pub min_match_len: usize,
}

impl Default for DecontamConfig {
    fn default() -> Self {
        DecontamConfig {
            benchmarks: Vec::new(),
            min_match_len: 20,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmbedderKind {
    Tfidf,
    Http,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    pub tokenizer: String,
    pub histogram_bin_width: usize,
    /// Benchmark descriptor for the similarity analysis; skipped when unset.
    pub similarity_benchmark: Option<PathBuf>,
    /// TOML file with exactly ten `[[category]]` entries; skipped when unset.
    pub categories: Option<PathBuf>,
    pub embedder: EmbedderKind,
    pub embedder_endpoint: Option<String>,
    pub embedder_model: Option<String>,
    pub embedder_token_env: String,
    pub embedder_batch_size: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        AnalyzeConfig {
            tokenizer: "whitespace".to_string(),
            histogram_bin_width: 64,
            similarity_benchmark: None,
            categories: None,
            embedder: EmbedderKind::Tfidf,
            embedder_endpoint: None,
            embedder_model: None,
            embedder_token_env: "EMBEDDER_API_TOKEN".to_string(),
            embedder_batch_size: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairMinerSettings {
    pub enabled: bool,
    pub languages: Vec<String>,
    /// Output size; defaults to the decontaminated sample count when unset.
    pub target: Option<usize>,
    pub min_comment_tokens: usize,
    pub min_body_lines: usize,
    pub include_leading_comments: bool,
}

impl Default for PairMinerSettings {
    fn default() -> Self {
        let miner = MinerConfig::default();
        PairMinerSettings {
            enabled: true,
            languages: vec!["python".to_string()],
            target: None,
            min_comment_tokens: miner.min_comment_tokens,
            min_body_lines: miner.min_body_lines,
            include_leading_comments: miner.include_leading_comments,
        }
    }
}

impl PairMinerSettings {
    pub fn miner_config(&self) -> MinerConfig {
        MinerConfig {
            min_comment_tokens: self.min_comment_tokens,
            min_body_lines: self.min_body_lines,
            include_leading_comments: self.include_leading_comments,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportConfig {
    pub dataset_name: String,
    pub instruction_field: String,
    pub response_field: String,
    pub meta_field: String,
    pub training: TrainingParams,
}

impl Default for ExportConfig {
    fn default() -> Self {
        let schema = ExportSchema::default();
        ExportConfig {
            dataset_name: "dataset".to_string(),
            instruction_field: schema.instruction_field,
            response_field: schema.response_field,
            meta_field: schema.meta_field,
            training: TrainingParams::default(),
        }
    }
}

impl ExportConfig {
    pub fn schema(&self) -> ExportSchema {
        ExportSchema {
            instruction_field: self.instruction_field.clone(),
            response_field: self.response_field.clone(),
            meta_field: self.meta_field.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

/// The whole declarative pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub corpus: CorpusConfig,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub prompt: PromptConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub decontam: DecontamConfig,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    #[serde(default)]
    pub pairminer: PairMinerSettings,
    #[serde(default)]
    pub export: ExportConfig,
    pub output: OutputConfig,
}

/// A parsed config together with its base directory and canonical hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    /// Directory the config file lives in; relative paths resolve here.
    pub base_dir: PathBuf,
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        let config: PipelineConfig = toml::from_str(&text)
            .map_err(|e| ForgeError::config(vec![format!("{}: {e}", path.display())]))?;
        let base_dir = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let hash = config_hash(&config);
        Ok(LoadedConfig {
            config,
            base_dir,
            hash,
        })
    }

    /// Resolves a config-relative path against the config file directory.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Collects every validation issue; empty means the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let cfg = &self.config;
        let mut issues = Vec::new();
        let check_path = |issues: &mut Vec<String>, field: &str, path: &Path| {
            if !self.resolve(path).exists() {
                issues.push(format!("{field}: path `{}` does not exist", path.display()));
            }
        };

        check_path(&mut issues, "corpus.source", &cfg.corpus.source);
        if cfg.corpus.languages.is_empty() {
            issues.push("corpus.languages: at least one language is required".to_string());
        }
        if cfg.sampling.quota.is_empty() {
            issues.push("sampling.quota: at least one language quota is required".to_string());
        } else if cfg.sampling.quota.values().all(|&n| n == 0) {
            issues.push("sampling.quota: at least one language count must be > 0".to_string());
        }
        for language in cfg.sampling.quota.keys() {
            if !cfg.corpus.languages.contains(language) {
                issues.push(format!(
                    "sampling.quota: language `{language}` is not in corpus.languages"
                ));
            }
        }
        if let Some(template) = &cfg.prompt.template_path {
            check_path(&mut issues, "prompt.template_path", template);
        }
        if cfg.prompt.problem_marker.is_empty() || cfg.prompt.solution_marker.is_empty() {
            issues.push("prompt: section markers must be non-empty".to_string());
        }
        match cfg.teacher.backend {
            BackendKind::Http => {
                if cfg.teacher.endpoint.is_none() {
                    issues.push("teacher.endpoint: required for the http backend".to_string());
                }
                if cfg.teacher.model.is_none() {
                    issues.push("teacher.model: required for the http backend".to_string());
                }
            }
            BackendKind::Mock => match &cfg.teacher.mock_fixtures {
                Some(path) => check_path(&mut issues, "teacher.mock_fixtures", path),
                None => issues.push("teacher.mock_fixtures: required for the mock backend".to_string()),
            },
            BackendKind::MockEcho => {}
        }
        if let Err(ForgeError::Config { issues: more }) = cfg.teacher.decoding.to_decoding() {
            issues.extend(more);
        } else if cfg.teacher.decoding.mode == "sampled" {
            if !(0.0..=2.0).contains(&cfg.teacher.decoding.temperature) {
                issues.push("teacher.decoding.temperature: must be in [0, 2]".to_string());
            }
            if !(0.0..=1.0).contains(&cfg.teacher.decoding.top_p) || cfg.teacher.decoding.top_p == 0.0 {
                issues.push("teacher.decoding.top_p: must be in (0, 1]".to_string());
            }
        }
        if cfg.teacher.max_new_tokens == 0 {
            issues.push("teacher.max_new_tokens: must be positive".to_string());
        }
        for path in &cfg.decontam.benchmarks {
            check_path(&mut issues, "decontam.benchmarks", path);
        }
        if cfg.analyze.histogram_bin_width == 0 {
            issues.push("analyze.histogram_bin_width: must be positive".to_string());
        }
        if cfg.analyze.tokenizer != "whitespace" {
            issues.push(format!(
                "analyze.tokenizer: unknown tokenizer `{}` (built-in: `whitespace`)",
                cfg.analyze.tokenizer
            ));
        }
        if let Some(path) = &cfg.analyze.similarity_benchmark {
            check_path(&mut issues, "analyze.similarity_benchmark", path);
        }
        if let Some(path) = &cfg.analyze.categories {
            check_path(&mut issues, "analyze.categories", path);
            if self.resolve(path).exists() {
                match load_categories(&self.resolve(path)) {
                    Ok(categories) => {
                        if categories.len() != crate::analyze::CATEGORY_COUNT {
                            issues.push(format!(
                                "analyze.categories: exactly {} categories required, found {}",
                                crate::analyze::CATEGORY_COUNT,
                                categories.len()
                            ));
                        }
                    }
                    Err(e) => issues.push(format!("analyze.categories: {e}")),
                }
            }
        }
        if cfg.analyze.embedder == EmbedderKind::Http {
            if cfg.analyze.embedder_endpoint.is_none() {
                issues.push("analyze.embedder_endpoint: required for the http embedder".to_string());
            }
            if cfg.analyze.embedder_model.is_none() {
                issues.push("analyze.embedder_model: required for the http embedder".to_string());
            }
        }
        if let Err(ForgeError::Config { issues: more }) = crate::export::ExportSchema::validate_fields(
            &cfg.export.instruction_field,
            &cfg.export.response_field,
            &cfg.export.meta_field,
        ) {
            issues.extend(more);
        }
        if cfg.output.dir.as_os_str().is_empty() {
            issues.push("output.dir: must be non-empty".to_string());
        }
        issues
    }
}

/// SHA-256 over the canonical JSON form of the parsed config.
pub fn config_hash(config: &PipelineConfig) -> String {
    let canonical = serde_json::to_vec(config).expect("config serializes");
    let mut hasher = Sha256::new();
    hasher.update(&canonical);
    hex::encode(hasher.finalize())
}

#[derive(Debug, Deserialize)]
struct CategoriesFile {
    category: Vec<Category>,
}

/// Loads the `[[category]]` entries of a categories TOML file.
pub fn load_categories(path: &Path) -> Result<Vec<Category>> {
    let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
    let parsed: CategoriesFile = toml::from_str(&text)
        .map_err(|e| ForgeError::config(vec![format!("{}: {e}", path.display())]))?;
    Ok(parsed.category)
}
