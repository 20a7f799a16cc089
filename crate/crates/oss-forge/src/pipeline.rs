//! Stage orchestration: artifact layout, resumability, locking, dry runs.
//!
//! Every stage reads the artifacts of the stage before it and writes its own
//! under the output directory. Existing stage outputs are reused unless
//! `--force` is given. All writes are atomic (temp file + rename), and one
//! lock file per output directory keeps concurrent runs out.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use tracing::{error, info, warn};

use crate::analyze::{
    categorize, nearest_benchmark, token_length_histogram, Category, CategoryBreakdown, Embedder,
    Histogram, RemoteEmbedder, SimilarityRecord, SimilaritySummary, TfIdfEmbedder, WhitespaceCounter,
};
use crate::clean::{clean, CleanReport};
use crate::config::{load_categories, BackendKind, EmbedderKind, LoadedConfig};
use crate::corpus::{
    extract_seeds, sample_documents, CodeDocument, CommentSyntax, CorpusReader, SamplingReport,
    SeedSnippet,
};
use crate::decontam::{
    decontaminate, load_benchmark_files, BenchmarkRecord, ContaminationScanner, DecontamReport,
};
use crate::error::{ForgeError, Result};
use crate::export::{export_jsonl, split_by_language, SplitReport, StageReports};
use crate::jsonl::{atomic_write, read_jsonl, write_json_pretty, write_jsonl};
use crate::pairminer::{mine_pairs, pairs_to_samples, prioritize_pairs, CommentFunctionPair};
use crate::report::{
    AnalysisSummary, CategorySummary, LedgerIdentity, MiningSummary, PipelineReport, Thresholds,
};
use crate::teacher::{
    run_generation_blocking, EchoBackend, FinishReason, GenerationOptions, GenerationReport,
    GenerationResult, HttpBackend, InstructionSample, MockBackend, PromptTemplate, TeacherBackend,
    TeacherResponse,
};

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    SampleSeeds,
    Generate,
    Clean,
    Decontaminate,
    Analyze,
    MinePairs,
    Split,
    Export,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 9] = [
        Stage::SampleSeeds,
        Stage::Generate,
        Stage::Clean,
        Stage::Decontaminate,
        Stage::Analyze,
        Stage::MinePairs,
        Stage::Split,
        Stage::Export,
        Stage::Report,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::SampleSeeds => "sample-seeds",
            Stage::Generate => "generate",
            Stage::Clean => "clean",
            Stage::Decontaminate => "decontaminate",
            Stage::Analyze => "analyze",
            Stage::MinePairs => "mine-pairs",
            Stage::Split => "split",
            Stage::Export => "export",
            Stage::Report => "report",
        }
    }
}

/// CLI-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct RunOverrides {
    pub force: bool,
    pub dry_run: bool,
    pub stage_dir: Option<PathBuf>,
    pub concurrency: Option<usize>,
}

/// Raw-response log record: the seed plus the teacher's reply.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResponseRecord {
    pub seed: SeedSnippet,
    #[serde(flatten)]
    pub response: TeacherResponse,
}

/// Quarantine record for a rejected response.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuarantineRecord {
    pub seed: SeedSnippet,
    pub prompt_sha256: String,
    pub reason: String,
    pub finish_reason: FinishReason,
    pub raw_text: Option<String>,
    pub error: Option<String>,
}

struct LockGuard {
    path: PathBuf,
}

impl LockGuard {
    fn acquire(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| ForgeError::io(dir, e))?;
        let path = dir.join(".oss-forge.lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut file) => {
                use std::io::Write;
                let _ = write!(file, "{}", std::process::id());
                Ok(LockGuard { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(ForgeError::Locked { path })
            }
            Err(e) => Err(ForgeError::io(&path, e)),
        }
    }
}

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}

/// One configured pipeline run rooted at an output directory.
pub struct Pipeline {
    loaded: LoadedConfig,
    out_dir: PathBuf,
    overrides: RunOverrides,
}

impl Pipeline {
    pub fn new(loaded: LoadedConfig, overrides: RunOverrides) -> Self {
        let out_dir = match &overrides.stage_dir {
            Some(dir) => dir.clone(),
            None => loaded.resolve(&loaded.config.output.dir),
        };
        Pipeline {
            loaded,
            out_dir,
            overrides,
        }
    }

    pub fn out_dir(&self) -> &Path {
        &self.out_dir
    }

    pub fn config_hash(&self) -> &str {
        &self.loaded.hash
    }

    // ----- artifact paths -------------------------------------------------

    pub fn documents_path(&self) -> PathBuf {
        self.out_dir.join("documents.jsonl")
    }
    pub fn seeds_path(&self) -> PathBuf {
        self.out_dir.join("seeds.jsonl")
    }
    pub fn sampling_report_path(&self) -> PathBuf {
        self.out_dir.join("sampling_report.json")
    }
    pub fn responses_path(&self) -> PathBuf {
        self.out_dir.join("responses.jsonl")
    }
    pub fn samples_path(&self) -> PathBuf {
        self.out_dir.join("samples.jsonl")
    }
    pub fn rejects_path(&self) -> PathBuf {
        self.out_dir.join("rejects.jsonl")
    }
    pub fn generation_report_path(&self) -> PathBuf {
        self.out_dir.join("generation_report.json")
    }
    pub fn cleaned_path(&self) -> PathBuf {
        self.out_dir.join("cleaned.jsonl")
    }
    pub fn clean_report_path(&self) -> PathBuf {
        self.out_dir.join("clean_report.json")
    }
    pub fn decontaminated_path(&self) -> PathBuf {
        self.out_dir.join("decontaminated.jsonl")
    }
    pub fn decontam_removed_path(&self) -> PathBuf {
        self.out_dir.join("decontam_removed.jsonl")
    }
    pub fn decontam_matches_path(&self) -> PathBuf {
        self.out_dir.join("decontam_matches.jsonl")
    }
    pub fn decontam_report_path(&self) -> PathBuf {
        self.out_dir.join("decontam_report.json")
    }
    pub fn analysis_dir(&self) -> PathBuf {
        self.out_dir.join("analysis")
    }
    pub fn histogram_csv_path(&self) -> PathBuf {
        self.analysis_dir().join("histogram.csv")
    }
    pub fn histogram_json_path(&self) -> PathBuf {
        self.analysis_dir().join("histogram.json")
    }
    pub fn similarity_csv_path(&self) -> PathBuf {
        self.analysis_dir().join("similarity.csv")
    }
    pub fn similarity_summary_path(&self) -> PathBuf {
        self.analysis_dir().join("similarity_summary.json")
    }
    pub fn categories_json_path(&self) -> PathBuf {
        self.analysis_dir().join("categories.json")
    }
    pub fn category_assignments_path(&self) -> PathBuf {
        self.analysis_dir().join("category_assignments.csv")
    }
    pub fn pairs_path(&self) -> PathBuf {
        self.out_dir.join("pairs.jsonl")
    }
    pub fn pair_samples_path(&self) -> PathBuf {
        self.out_dir.join("pair_samples.jsonl")
    }
    pub fn pair_report_path(&self) -> PathBuf {
        self.out_dir.join("pair_report.json")
    }
    pub fn splits_dir(&self) -> PathBuf {
        self.out_dir.join("splits")
    }
    pub fn split_python_path(&self) -> PathBuf {
        self.splits_dir().join("python.jsonl")
    }
    pub fn split_other_path(&self) -> PathBuf {
        self.splits_dir().join("other.jsonl")
    }
    pub fn split_report_path(&self) -> PathBuf {
        self.splits_dir().join("split_report.json")
    }
    pub fn dataset_dir(&self) -> PathBuf {
        self.out_dir.join("dataset")
    }
    pub fn dataset_path(&self, suffix: Option<&str>) -> PathBuf {
        let name = &self.loaded.config.export.dataset_name;
        match suffix {
            Some(suffix) => self.dataset_dir().join(format!("{name}.{suffix}.jsonl")),
            None => self.dataset_dir().join(format!("{name}.jsonl")),
        }
    }
    pub fn manifest_path(&self, suffix: Option<&str>) -> PathBuf {
        let name = &self.loaded.config.export.dataset_name;
        match suffix {
            Some(suffix) => self.dataset_dir().join(format!("{name}.{suffix}.manifest.json")),
            None => self.dataset_dir().join(format!("{name}.manifest.json")),
        }
    }
    pub fn report_path(&self) -> PathBuf {
        self.out_dir.join("report").join("report.json")
    }

    fn stage_outputs(&self, stage: Stage) -> Vec<PathBuf> {
        match stage {
            Stage::SampleSeeds => vec![
                self.documents_path(),
                self.seeds_path(),
                self.sampling_report_path(),
            ],
            Stage::Generate => vec![
                self.responses_path(),
                self.samples_path(),
                self.rejects_path(),
                self.generation_report_path(),
            ],
            Stage::Clean => vec![self.cleaned_path(), self.clean_report_path()],
            Stage::Decontaminate => vec![
                self.decontaminated_path(),
                self.decontam_removed_path(),
                self.decontam_matches_path(),
                self.decontam_report_path(),
            ],
            Stage::Analyze => vec![self.histogram_csv_path(), self.histogram_json_path()],
            Stage::MinePairs => vec![
                self.pairs_path(),
                self.pair_samples_path(),
                self.pair_report_path(),
            ],
            Stage::Split => vec![
                self.split_python_path(),
                self.split_other_path(),
                self.split_report_path(),
            ],
            Stage::Export => vec![self.dataset_path(None), self.manifest_path(None)],
            Stage::Report => vec![self.report_path()],
        }
    }

    fn stage_inputs(&self, stage: Stage) -> Vec<(PathBuf, &'static str)> {
        match stage {
            Stage::SampleSeeds => vec![],
            Stage::Generate => vec![(self.seeds_path(), "sample-seeds")],
            Stage::Clean => vec![(self.samples_path(), "generate")],
            Stage::Decontaminate => vec![(self.cleaned_path(), "clean")],
            Stage::Analyze => vec![(self.decontaminated_path(), "decontaminate")],
            Stage::MinePairs => vec![
                (self.documents_path(), "sample-seeds"),
                (self.seeds_path(), "sample-seeds"),
            ],
            Stage::Split => vec![(self.decontaminated_path(), "decontaminate")],
            Stage::Export => vec![(self.decontaminated_path(), "decontaminate")],
            Stage::Report => vec![],
        }
    }

    fn check_inputs(&self, stage: Stage) -> Result<()> {
        for (path, producer) in self.stage_inputs(stage) {
            if !path.exists() {
                return Err(ForgeError::MissingArtifact {
                    stage: stage.name(),
                    path,
                    producer,
                });
            }
        }
        Ok(())
    }

    fn outputs_exist(&self, stage: Stage) -> bool {
        self.stage_outputs(stage).iter().all(|p| p.exists())
    }

    /// Runs one stage, honoring resumability and dry runs.
    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        if self.overrides.dry_run {
            let inputs: Vec<String> = self
                .stage_inputs(stage)
                .iter()
                .map(|(p, _)| p.display().to_string())
                .collect();
            let outputs: Vec<String> = self
                .stage_outputs(stage)
                .iter()
                .map(|p| p.display().to_string())
                .collect();
            println!(
                "dry-run: {} reads [{}] writes [{}]",
                stage.name(),
                inputs.join(", "),
                outputs.join(", ")
            );
            return Ok(());
        }
        let _lock = LockGuard::acquire(&self.out_dir)?;
        self.run_stage_locked(stage)
    }

    /// Runs stages in order under a single lock.
    pub fn run_all(&self) -> Result<()> {
        if self.overrides.dry_run {
            for stage in Stage::ALL {
                self.run_stage(stage)?;
            }
            return Ok(());
        }
        let _lock = LockGuard::acquire(&self.out_dir)?;
        for stage in Stage::ALL {
            self.run_stage_locked(stage)?;
        }
        Ok(())
    }

    fn run_stage_locked(&self, stage: Stage) -> Result<()> {
        if !self.overrides.force && self.outputs_exist(stage) {
            info!(stage = stage.name(), "outputs exist; skipping (use --force to rerun)");
            return Ok(());
        }
        self.check_inputs(stage)?;
        info!(stage = stage.name(), "running");
        match stage {
            Stage::SampleSeeds => self.stage_sample_seeds(),
            Stage::Generate => self.stage_generate(),
            Stage::Clean => self.stage_clean(),
            Stage::Decontaminate => self.stage_decontaminate(),
            Stage::Analyze => self.stage_analyze(),
            Stage::MinePairs => self.stage_mine_pairs(),
            Stage::Split => self.stage_split(),
            Stage::Export => self.stage_export(),
            Stage::Report => self.stage_report(),
        }
    }

    // ----- stages ---------------------------------------------------------

    fn stage_sample_seeds(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let source = self.loaded.resolve(&cfg.corpus.source);
        let mut reader = CorpusReader::open(&source, &cfg.corpus.languages)?;
        let quota = cfg.sampling.to_quota();
        let (documents, mut report) = sample_documents(&mut reader, &quota)?;
        report.ingest = reader.stats().clone();
        let seeds = extract_seeds(&documents, quota.rng_seed);
        write_jsonl(&self.documents_path(), &documents)?;
        write_jsonl(&self.seeds_path(), &seeds)?;
        write_json_pretty(&self.sampling_report_path(), &report)?;
        info!(
            stage = "sample-seeds",
            selected = report.total_selected,
            seeds = seeds.len(),
            "done"
        );
        Ok(())
    }

    fn build_backend(&self) -> Result<Arc<dyn TeacherBackend>> {
        let teacher = &self.loaded.config.teacher;
        let markers = self.loaded.config.prompt.markers();
        match teacher.backend {
            BackendKind::Http => {
                let endpoint = teacher.endpoint.as_deref().ok_or_else(|| {
                    ForgeError::config(vec!["teacher.endpoint: required for the http backend".into()])
                })?;
                let model = teacher.model.as_deref().ok_or_else(|| {
                    ForgeError::config(vec!["teacher.model: required for the http backend".into()])
                })?;
                Ok(Arc::new(HttpBackend::new(
                    endpoint,
                    model,
                    &teacher.token_env,
                    Duration::from_millis(teacher.request_timeout_ms),
                )?))
            }
            BackendKind::Mock => {
                let path = teacher.mock_fixtures.as_ref().ok_or_else(|| {
                    ForgeError::config(vec!["teacher.mock_fixtures: required for the mock backend".into()])
                })?;
                let backend = MockBackend::from_fixture_file(&self.loaded.resolve(path))?
                    .with_latency(Duration::from_millis(teacher.mock_latency_ms));
                Ok(Arc::new(backend))
            }
            BackendKind::MockEcho => Ok(Arc::new(
                EchoBackend::new(&markers.problem, &markers.solution)
                    .with_latency(Duration::from_millis(teacher.mock_latency_ms)),
            )),
        }
    }

    fn load_template(&self) -> Result<PromptTemplate> {
        let prompt = &self.loaded.config.prompt;
        let markers = prompt.markers();
        match &prompt.template_path {
            Some(path) => PromptTemplate::from_file(&self.loaded.resolve(path), &markers),
            None => PromptTemplate::builtin(&markers),
        }
    }

    fn generation_options(&self) -> GenerationOptions {
        let teacher = &self.loaded.config.teacher;
        GenerationOptions {
            concurrency: self.overrides.concurrency.unwrap_or(teacher.concurrency),
            max_retries: teacher.max_retries,
            retry_initial: Duration::from_millis(teacher.retry_initial_ms),
            retry_max: Duration::from_millis(teacher.retry_max_ms),
            short_solution_chars: teacher.short_solution_chars,
            markers: self.loaded.config.prompt.markers(),
        }
    }

    fn stage_generate(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let seeds: Vec<SeedSnippet> = read_jsonl(&self.seeds_path())?;
        let template = self.load_template()?;
        let backend = self.build_backend()?;
        let options = self.generation_options();
        let decoding = cfg.teacher.decoding.to_decoding()?;
        let (outcomes, report) = run_generation_blocking(
            seeds,
            &template,
            decoding,
            cfg.teacher.max_new_tokens,
            backend,
            &options,
        )?;

        let mut responses = Vec::with_capacity(outcomes.len());
        let mut samples = Vec::new();
        let mut rejects = Vec::new();
        for outcome in outcomes {
            responses.push(ResponseRecord {
                seed: outcome.seed.clone(),
                response: outcome.response.clone(),
            });
            match outcome.result {
                GenerationResult::Accepted { sample } => samples.push(sample),
                GenerationResult::Rejected { reason } => rejects.push(QuarantineRecord {
                    seed: outcome.seed,
                    prompt_sha256: outcome.response.prompt_sha256,
                    reason: reason.as_str().to_string(),
                    finish_reason: outcome.response.finish_reason,
                    raw_text: outcome.response.raw_text,
                    error: outcome.response.error,
                }),
            }
        }
        write_jsonl(&self.responses_path(), &responses)?;
        write_jsonl(&self.samples_path(), &samples)?;
        write_jsonl(&self.rejects_path(), &rejects)?;
        write_json_pretty(&self.generation_report_path(), &report)?;
        info!(
            stage = "generate",
            requests = report.requests,
            accepted = report.accepted,
            rejected = report.rejected,
            "done"
        );
        Ok(())
    }

    fn stage_clean(&self) -> Result<()> {
        let samples: Vec<InstructionSample> = read_jsonl(&self.samples_path())?;
        let syntax = CommentSyntax::with_overrides(&self.loaded.config.corpus.comment_prefixes);
        let (kept, report) = clean(samples, &syntax);
        write_jsonl(&self.cleaned_path(), &kept)?;
        write_json_pretty(&self.clean_report_path(), &report)?;
        info!(
            stage = "clean",
            input = report.input_count,
            exact_dup = report.removed_exact_dup,
            seed_dup = report.removed_seed_dup,
            trivial_seed = report.removed_trivial_seed,
            output = report.output_count,
            "done"
        );
        Ok(())
    }

    fn stage_decontaminate(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let samples: Vec<InstructionSample> = read_jsonl(&self.cleaned_path())?;
        let paths: Vec<PathBuf> = cfg
            .decontam
            .benchmarks
            .iter()
            .map(|p| self.loaded.resolve(p))
            .collect();
        if paths.is_empty() {
            warn!("no benchmark descriptors configured; decontamination removes nothing");
        }
        let (corpora, load_stats) = load_benchmark_files(&paths, cfg.decontam.min_match_len)?;
        let scanner = ContaminationScanner::build(&corpora)?;
        let mut outcome = decontaminate(samples, &scanner);
        outcome.report.min_match_len = cfg.decontam.min_match_len;
        outcome.report.load_stats = load_stats;

        let removed: Vec<&InstructionSample> = outcome.removed.iter().map(|(s, _)| s).collect();
        write_jsonl(&self.decontaminated_path(), &outcome.kept)?;
        write_jsonl(&self.decontam_removed_path(), &removed)?;
        write_jsonl(&self.decontam_matches_path(), &outcome.matches)?;
        write_json_pretty(&self.decontam_report_path(), &outcome.report)?;
        info!(
            stage = "decontaminate",
            input = outcome.report.input_count,
            kept = outcome.report.kept_count,
            removed = outcome.report.removed_count,
            patterns = outcome.report.pattern_count,
            "done"
        );
        Ok(())
    }

    fn write_csv(&self, path: &Path, rows: &[Vec<String>]) -> Result<()> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in rows {
            writer
                .write_record(row)
                .map_err(|e| ForgeError::io(path, std::io::Error::other(e)))?;
        }
        let bytes = writer
            .into_inner()
            .map_err(|e| ForgeError::io(path, std::io::Error::other(e)))?;
        atomic_write(path, &bytes)
    }

    fn write_histogram(&self, histogram: &Histogram) -> Result<()> {
        let mut rows = vec![vec![
            "lo".to_string(),
            "hi".to_string(),
            "problems".to_string(),
            "solutions".to_string(),
        ]];
        for bin in &histogram.bins {
            rows.push(vec![
                bin.lo.to_string(),
                bin.hi.to_string(),
                bin.problems.to_string(),
                bin.solutions.to_string(),
            ]);
        }
        self.write_csv(&self.histogram_csv_path(), &rows)?;
        write_json_pretty(&self.histogram_json_path(), histogram)
    }

    fn write_similarity(&self, records: &[SimilarityRecord], summary: &SimilaritySummary) -> Result<()> {
        let mut rows = vec![vec![
            "sample_id".to_string(),
            "best_benchmark_entry_id".to_string(),
            "score".to_string(),
        ]];
        for record in records {
            rows.push(vec![
                record.sample_id.clone(),
                record.best_benchmark_entry_id.clone(),
                record.score.to_string(),
            ]);
        }
        self.write_csv(&self.similarity_csv_path(), &rows)?;
        write_json_pretty(&self.similarity_summary_path(), summary)
    }

    fn write_categories(&self, breakdown: &CategoryBreakdown) -> Result<()> {
        let summary = CategorySummary {
            categories: breakdown.categories.clone(),
            counts: breakdown.counts.clone(),
            ties: breakdown.ties,
            embedder_id: breakdown.embedder_id.clone(),
        };
        write_json_pretty(&self.categories_json_path(), &summary)?;
        let mut rows = vec![vec![
            "sample_id".to_string(),
            "category_index".to_string(),
            "category_name".to_string(),
        ]];
        for (sample_id, index) in &breakdown.assignments {
            rows.push(vec![
                sample_id.clone(),
                index.to_string(),
                breakdown.categories[*index].clone(),
            ]);
        }
        self.write_csv(&self.category_assignments_path(), &rows)
    }

    fn stage_analyze(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let samples: Vec<InstructionSample> = read_jsonl(&self.decontaminated_path())?;

        let histogram = token_length_histogram(&samples, &WhitespaceCounter, cfg.analyze.histogram_bin_width)?;
        self.write_histogram(&histogram)?;

        if let Some(path) = &cfg.analyze.similarity_benchmark {
            let records: Vec<BenchmarkRecord> = read_jsonl(&self.loaded.resolve(path))?;
            if records.is_empty() {
                warn!("similarity benchmark has no entries; skipping similarity analysis");
            } else {
                let sample_texts: Vec<(String, String)> = samples
                    .iter()
                    .map(|s| (s.sample_id.clone(), format!("{}\n\n{}", s.problem, s.solution)))
                    .collect();
                let entries: Vec<(String, String)> = records
                    .into_iter()
                    .map(|r| (r.entry_id, r.text))
                    .collect();
                let (sim_records, summary) = nearest_benchmark(&sample_texts, &entries)?;
                self.write_similarity(&sim_records, &summary)?;
            }
        }

        if let Some(path) = &cfg.analyze.categories {
            let categories = load_categories(&self.loaded.resolve(path))?;
            match self.run_categorize(&samples, &categories) {
                Ok(breakdown) => self.write_categories(&breakdown)?,
                // embedder failure is fatal for this analysis only
                Err(e) => error!(error = %e, "category analysis failed; continuing"),
            }
        }
        info!(stage = "analyze", samples = samples.len(), "done");
        Ok(())
    }

    fn run_categorize(
        &self,
        samples: &[InstructionSample],
        categories: &[Category],
    ) -> Result<CategoryBreakdown> {
        let cfg = &self.loaded.config.analyze;
        let texts: Vec<(String, String)> = samples
            .iter()
            .map(|s| (s.sample_id.clone(), format!("{}\n\n{}", s.problem, s.solution)))
            .collect();
        match cfg.embedder {
            EmbedderKind::Tfidf => {
                let sample_texts: Vec<String> = texts.iter().map(|(_, t)| t.clone()).collect();
                let embedder = TfIdfEmbedder::fit(&sample_texts, categories)?;
                categorize(&texts, categories, &embedder)
            }
            EmbedderKind::Http => {
                let endpoint = cfg.embedder_endpoint.as_deref().ok_or_else(|| {
                    ForgeError::config(vec!["analyze.embedder_endpoint: required".into()])
                })?;
                let model = cfg.embedder_model.as_deref().ok_or_else(|| {
                    ForgeError::config(vec!["analyze.embedder_model: required".into()])
                })?;
                let embedder =
                    RemoteEmbedder::new(endpoint, model, &cfg.embedder_token_env, cfg.embedder_batch_size)?;
                categorize(&texts, categories, &embedder as &dyn Embedder)
            }
        }
    }

    fn stage_mine_pairs(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        if !cfg.pairminer.enabled {
            info!(stage = "mine-pairs", "disabled in config; writing empty artifacts");
            write_jsonl::<CommentFunctionPair>(&self.pairs_path(), &[])?;
            write_jsonl::<InstructionSample>(&self.pair_samples_path(), &[])?;
            write_json_pretty(&self.pair_report_path(), &MiningSummary::default())?;
            return Ok(());
        }
        let documents: Vec<CodeDocument> = read_jsonl(&self.documents_path())?;
        let seeds: Vec<SeedSnippet> = read_jsonl(&self.seeds_path())?;
        let (pairs, mine_report) = mine_pairs(&documents, &cfg.pairminer.languages, &cfg.pairminer.miner_config());
        let target = match cfg.pairminer.target {
            Some(target) => Some(target),
            None => {
                // default: match the size of the decontaminated dataset
                let path = self.decontaminated_path();
                if path.exists() {
                    Some(read_jsonl::<InstructionSample>(&path)?.len())
                } else {
                    None
                }
            }
        };
        let (prioritized, prioritize_report) = prioritize_pairs(pairs, &seeds, target);
        let samples = pairs_to_samples(&prioritized);
        write_jsonl(&self.pairs_path(), &prioritized)?;
        write_jsonl(&self.pair_samples_path(), &samples)?;
        write_json_pretty(
            &self.pair_report_path(),
            &MiningSummary {
                mine: mine_report,
                prioritize: prioritize_report.clone(),
            },
        )?;
        info!(
            stage = "mine-pairs",
            pairs = prioritize_report.total_pairs,
            overlapping = prioritize_report.overlapping,
            selected = prioritize_report.selected,
            "done"
        );
        Ok(())
    }

    fn stage_split(&self) -> Result<()> {
        let samples: Vec<InstructionSample> = read_jsonl(&self.decontaminated_path())?;
        let (sets, report) = split_by_language(samples);
        write_jsonl(&self.split_python_path(), &sets.python)?;
        write_jsonl(&self.split_other_path(), &sets.other)?;
        write_json_pretty(&self.split_report_path(), &report)?;
        info!(
            stage = "split",
            python = report.python_count,
            other = report.other_count,
            "done"
        );
        Ok(())
    }

    fn read_stage_reports(&self) -> StageReports {
        let clean: Option<CleanReport> = std::fs::read_to_string(self.clean_report_path())
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        let decontam: Option<DecontamReport> = std::fs::read_to_string(self.decontam_report_path())
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok());
        StageReports { clean, decontam }
    }

    fn stage_export(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let schema = cfg.export.schema();
        let stage_reports = self.read_stage_reports();
        let samples: Vec<InstructionSample> = read_jsonl(&self.decontaminated_path())?;
        let manifest = export_jsonl(
            &samples,
            &schema,
            &cfg.export.dataset_name,
            &self.loaded.hash,
            stage_reports.clone(),
            cfg.export.training.clone(),
            &self.dataset_path(None),
            &self.manifest_path(None),
        )?;

        let mut exported = manifest.sample_count;
        for (suffix, source) in [
            ("python", self.split_python_path()),
            ("other", self.split_other_path()),
            ("pairs", self.pair_samples_path()),
        ] {
            if !source.exists() {
                continue;
            }
            let subset: Vec<InstructionSample> = read_jsonl(&source)?;
            let sub_manifest = export_jsonl(
                &subset,
                &schema,
                &format!("{}.{suffix}", cfg.export.dataset_name),
                &self.loaded.hash,
                stage_reports.clone(),
                cfg.export.training.clone(),
                &self.dataset_path(Some(suffix)),
                &self.manifest_path(Some(suffix)),
            )?;
            exported += sub_manifest.sample_count;
        }
        info!(stage = "export", records = exported, "done");
        Ok(())
    }

    fn read_json_if_exists<T: serde::de::DeserializeOwned>(&self, path: &Path) -> Option<T> {
        std::fs::read_to_string(path)
            .ok()
            .and_then(|s| serde_json::from_str(&s).ok())
    }

    fn stage_report(&self) -> Result<()> {
        let cfg = &self.loaded.config;
        let sampling: Option<SamplingReport> = self.read_json_if_exists(&self.sampling_report_path());
        let generation: Option<GenerationReport> = self.read_json_if_exists(&self.generation_report_path());
        let clean: Option<CleanReport> = self.read_json_if_exists(&self.clean_report_path());
        let decontam: Option<DecontamReport> = self.read_json_if_exists(&self.decontam_report_path());
        let split: Option<SplitReport> = self.read_json_if_exists(&self.split_report_path());
        let mining: Option<MiningSummary> = self.read_json_if_exists(&self.pair_report_path());
        let histogram: Option<Histogram> = self.read_json_if_exists(&self.histogram_json_path());
        let similarity: Option<SimilaritySummary> = self.read_json_if_exists(&self.similarity_summary_path());
        let categories: Option<CategorySummary> = self.read_json_if_exists(&self.categories_json_path());

        let ledger = LedgerIdentity::from_reports(
            sampling.as_ref(),
            generation.as_ref(),
            clean.as_ref(),
            decontam.as_ref(),
        );
        if !ledger.reconciles() {
            warn!("stage ledger does not reconcile; see report for counts");
        }
        let analysis = histogram.map(|h| AnalysisSummary {
            histogram_tokenizer: h.tokenizer_id.clone(),
            histogram_bin_width: h.bin_width,
            problems_total: h.problems_total(),
            solutions_total: h.solutions_total(),
            similarity,
            categories,
        });
        let report = PipelineReport {
            config_hash: self.loaded.hash.clone(),
            thresholds: Thresholds {
                min_match_len: cfg.decontam.min_match_len,
                short_solution_chars: cfg.teacher.short_solution_chars,
                min_comment_tokens: cfg.pairminer.min_comment_tokens,
                min_body_lines: cfg.pairminer.min_body_lines,
            },
            ledger,
            sampling,
            generation,
            clean,
            decontam,
            split,
            mining,
            analysis,
        };
        write_json_pretty(&self.report_path(), &report)?;
        info!(stage = "report", reconciles = report.ledger.reconciles(), "done");
        Ok(())
    }
}
