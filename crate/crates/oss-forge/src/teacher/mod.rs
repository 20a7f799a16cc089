//! Prompt construction, teacher invocation, and response parsing.
//!
//! A seed snippet is substituted into the prompt template, sent to a
//! [`TeacherBackend`], and the response is split into a problem section and
//! a solution section at configurable markers. Noisy-but-present content is
//! kept; a response is rejected only when a marker is missing or a section
//! is empty after trimming. Rejected responses go to a quarantine stream
//! with a reason code, never silently dropped.

mod backend;

pub use backend::{
    prompt_sha256, BackendError, BackendReply, EchoBackend, HttpBackend, MockBackend, MockFixture,
    TeacherBackend,
};

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::Arc;
use std::time::Duration;

use futures::StreamExt;
use serde::{Deserialize, Serialize};

use crate::corpus::SeedSnippet;
use crate::error::{ForgeError, Result};

/// Token substituted with the seed text when rendering a prompt.
pub const SEED_PLACEHOLDER: &str = "{seed}";

/// Built-in prompt template. The seed snippet goes in the fenced block; the
/// teacher is asked to answer in the two marked sections that the parser
/// splits on.
pub const DEFAULT_PROMPT_TEMPLATE: &str = r#"Please gain inspiration from the following random code snippet to create a high-quality programming problem. Present your output in two distinct sections: [Problem Description] and [Solution].

Code snippet for inspiration:
```
{seed}
```

Guidelines for each section:
1. [Problem Description]: This should be **completely self-contained**, providing all the contextual information one needs to understand and solve the problem. Assume common programming knowledge, but ensure that any specific context, variables, or code snippets pertinent to this problem are explicitly included.
2. [Solution]: Offer a comprehensive, **correct** solution that accurately addresses the [Problem Description] you provided.
"#;

/// Default problem-section marker.
pub const DEFAULT_PROBLEM_MARKER: &str = "[Problem Description]";
/// Default solution-section marker.
pub const DEFAULT_SOLUTION_MARKER: &str = "[Solution]";

/// The pair of section markers the parser splits responses on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionMarkers {
    pub problem: String,
    pub solution: String,
}

impl Default for SectionMarkers {
    fn default() -> Self {
        SectionMarkers {
            problem: DEFAULT_PROBLEM_MARKER.to_string(),
            solution: DEFAULT_SOLUTION_MARKER.to_string(),
        }
    }
}

/// A validated prompt template: must contain the `{seed}` placeholder and
/// both section markers.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>, markers: &SectionMarkers) -> Result<Self> {
        let text = text.into();
        if !text.contains(SEED_PLACEHOLDER) {
            return Err(ForgeError::InvalidTemplate(format!(
                "missing seed placeholder `{SEED_PLACEHOLDER}`"
            )));
        }
        if !text.contains(&markers.problem) {
            return Err(ForgeError::InvalidTemplate(format!(
                "missing problem marker `{}`",
                markers.problem
            )));
        }
        if !text.contains(&markers.solution) {
            return Err(ForgeError::InvalidTemplate(format!(
                "missing solution marker `{}`",
                markers.solution
            )));
        }
        Ok(PromptTemplate { text })
    }

    pub fn builtin(markers: &SectionMarkers) -> Result<Self> {
        PromptTemplate::new(DEFAULT_PROMPT_TEMPLATE, markers)
    }

    pub fn from_file(path: &Path, markers: &SectionMarkers) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ForgeError::io(path, e))?;
        PromptTemplate::new(text, markers)
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    /// Substitutes the first placeholder occurrence with the seed text
    /// verbatim. A literal `{seed}` inside the seed itself is preserved.
    pub fn render(&self, seed: &SeedSnippet) -> String {
        self.text.replacen(SEED_PLACEHOLDER, &seed.text, 1)
    }
}

/// Decoding strategy for the teacher call. Greedy is the default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Decoding {
    Greedy,
    Sampled { temperature: f64, top_p: f64 },
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding::Greedy
    }
}

/// One prepared teacher call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub seed: SeedSnippet,
    pub prompt: String,
    pub decoding: Decoding,
    pub max_new_tokens: u32,
}

impl GenerationRequest {
    pub fn new(seed: SeedSnippet, template: &PromptTemplate, decoding: Decoding, max_new_tokens: u32) -> Self {
        let prompt = template.render(&seed);
        GenerationRequest {
            seed,
            prompt,
            decoding,
            max_new_tokens,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Complete,
    Truncated,
    Error,
}

/// Raw teacher output, logged verbatim for every request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherResponse {
    /// Hex SHA-256 of the rendered prompt (joins the response log to the
    /// mock fixture table).
    pub prompt_sha256: String,
    /// Present iff `finish_reason != error`.
    pub raw_text: Option<String>,
    pub finish_reason: FinishReason,
    pub backend_id: String,
    pub retries: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Quality flags carried on accepted samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleFlag {
    Truncated,
    NoFence,
    ShortSolution,
}

/// Where a sample came from: teacher generation or direct pair mining.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleOrigin {
    #[default]
    OssInstruct,
    PairMined,
}

/// The pipeline's central record: one generated (problem, solution) pair
/// with its seed provenance and processing metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionSample {
    pub sample_id: String,
    pub seed: SeedSnippet,
    pub problem: String,
    pub solution: String,
    #[serde(default)]
    pub fenced_languages: Vec<String>,
    #[serde(default)]
    pub raw_response: String,
    #[serde(default)]
    pub flags: BTreeSet<SampleFlag>,
    #[serde(default)]
    pub origin: SampleOrigin,
}

/// Reason a response was quarantined instead of accepted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    BackendError,
    NoProblemSection,
    NoSolutionSection,
    EmptyProblem,
    EmptySolution,
}

impl RejectReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            RejectReason::BackendError => "backend_error",
            RejectReason::NoProblemSection => "no_problem_section",
            RejectReason::NoSolutionSection => "no_solution_section",
            RejectReason::EmptyProblem => "empty_problem",
            RejectReason::EmptySolution => "empty_solution",
        }
    }
}

/// Splits `raw` into problem and solution sections at the first occurrence
/// of each marker (the solution marker is searched after the problem
/// marker). Sections are trimmed; noisy content inside them is kept.
pub fn parse_response(raw: &str, markers: &SectionMarkers) -> std::result::Result<(String, String), RejectReason> {
    let problem_at = raw.find(&markers.problem).ok_or(RejectReason::NoProblemSection)?;
    let problem_from = problem_at + markers.problem.len();
    let solution_rel = raw[problem_from..]
        .find(&markers.solution)
        .ok_or(RejectReason::NoSolutionSection)?;
    let solution_at = problem_from + solution_rel;
    let problem = raw[problem_from..solution_at].trim();
    let solution = raw[solution_at + markers.solution.len()..].trim();
    if problem.is_empty() {
        return Err(RejectReason::EmptyProblem);
    }
    if solution.is_empty() {
        return Err(RejectReason::EmptySolution);
    }
    Ok((problem.to_string(), solution.to_string()))
}

/// Collects the unique fenced code-block language tags of `text` in first
/// appearance order, lowercased. Closing fences carry no tag.
pub fn fenced_languages(text: &str) -> Vec<String> {
    let mut tags = Vec::new();
    let mut in_fence = false;
    for line in text.lines() {
        let trimmed = line.trim_start();
        if let Some(rest) = trimmed.strip_prefix("```") {
            if in_fence {
                in_fence = false;
            } else {
                in_fence = true;
                if let Some(tag) = rest.trim().split_whitespace().next() {
                    let tag = tag.to_lowercase();
                    if !tags.contains(&tag) {
                        tags.push(tag);
                    }
                }
            }
        }
    }
    tags
}

fn merged_fenced_languages(problem: &str, solution: &str) -> Vec<String> {
    let mut tags = fenced_languages(problem);
    for tag in fenced_languages(solution) {
        if !tags.contains(&tag) {
            tags.push(tag);
        }
    }
    tags
}

/// Deterministic sample identifier derived from the seed coordinates.
pub fn sample_id_for_seed(seed: &SeedSnippet) -> String {
    format!("{}:{}:{}", seed.doc_id, seed.start_line, seed.line_count)
}

/// Turns a teacher response into an [`InstructionSample`], or a reject
/// reason when the response cannot be sectioned.
pub fn assemble_sample(
    seed: &SeedSnippet,
    response: &TeacherResponse,
    markers: &SectionMarkers,
    short_solution_chars: usize,
) -> std::result::Result<InstructionSample, RejectReason> {
    if response.finish_reason == FinishReason::Error {
        return Err(RejectReason::BackendError);
    }
    let raw = response.raw_text.as_deref().unwrap_or_default();
    let (problem, solution) = parse_response(raw, markers)?;
    let mut flags = BTreeSet::new();
    if response.finish_reason == FinishReason::Truncated {
        flags.insert(SampleFlag::Truncated);
    }
    if !solution.contains("```") {
        flags.insert(SampleFlag::NoFence);
    }
    if solution.chars().count() < short_solution_chars {
        flags.insert(SampleFlag::ShortSolution);
    }
    Ok(InstructionSample {
        sample_id: sample_id_for_seed(seed),
        fenced_languages: merged_fenced_languages(&problem, &solution),
        seed: seed.clone(),
        problem,
        solution,
        raw_response: raw.to_string(),
        flags,
        origin: SampleOrigin::OssInstruct,
    })
}

/// Retry and concurrency knobs for the generation stage.
#[derive(Debug, Clone)]
pub struct GenerationOptions {
    pub concurrency: usize,
    pub max_retries: u32,
    pub retry_initial: Duration,
    pub retry_max: Duration,
    pub short_solution_chars: usize,
    pub markers: SectionMarkers,
}

impl Default for GenerationOptions {
    fn default() -> Self {
        GenerationOptions {
            concurrency: 8,
            max_retries: 3,
            retry_initial: Duration::from_millis(500),
            retry_max: Duration::from_millis(8_000),
            short_solution_chars: 64,
            markers: SectionMarkers::default(),
        }
    }
}

fn backoff_delay(attempt: u32, options: &GenerationOptions) -> Duration {
    let factor = 1u32.checked_shl(attempt).unwrap_or(u32::MAX);
    options
        .retry_initial
        .saturating_mul(factor)
        .min(options.retry_max)
}

/// Calls the backend once per attempt, retrying transient failures with
/// exponential backoff. Authentication failures abort the whole run;
/// exhausted retries and permanent failures become an error response.
pub async fn generate(
    request: &GenerationRequest,
    backend: &dyn TeacherBackend,
    options: &GenerationOptions,
) -> Result<TeacherResponse> {
    let key = prompt_sha256(&request.prompt);
    let mut retries = 0u32;
    loop {
        match backend.complete(request).await {
            Ok(reply) => {
                return Ok(TeacherResponse {
                    prompt_sha256: key,
                    raw_text: Some(reply.raw_text),
                    finish_reason: if reply.truncated {
                        FinishReason::Truncated
                    } else {
                        FinishReason::Complete
                    },
                    backend_id: backend.id().to_string(),
                    retries,
                    error: None,
                });
            }
            Err(BackendError::Auth(message)) => {
                return Err(ForgeError::Backend(format!("authentication failed: {message}")));
            }
            Err(BackendError::Permanent(message)) => {
                return Ok(TeacherResponse {
                    prompt_sha256: key,
                    raw_text: None,
                    finish_reason: FinishReason::Error,
                    backend_id: backend.id().to_string(),
                    retries,
                    error: Some(message),
                });
            }
            Err(err @ (BackendError::RateLimited | BackendError::Transient(_))) => {
                if retries >= options.max_retries {
                    return Ok(TeacherResponse {
                        prompt_sha256: key,
                        raw_text: None,
                        finish_reason: FinishReason::Error,
                        backend_id: backend.id().to_string(),
                        retries,
                        error: Some(format!("retries exhausted: {err}")),
                    });
                }
                tokio::time::sleep(backoff_delay(retries, options)).await;
                retries += 1;
            }
        }
    }
}

/// Runs all requests with at most `options.concurrency` in flight. Results
/// come back in request order regardless of completion order, so downstream
/// artifacts are deterministic for deterministic backends.
pub async fn generate_batch(
    requests: Vec<GenerationRequest>,
    backend: Arc<dyn TeacherBackend>,
    options: &GenerationOptions,
) -> Result<Vec<TeacherResponse>> {
    let concurrency = options.concurrency.max(1);
    let mut stream = futures::stream::iter(requests.into_iter().map(|request| {
        let backend = Arc::clone(&backend);
        let options = options.clone();
        async move { generate(&request, backend.as_ref(), &options).await }
    }))
    .buffered(concurrency);

    let mut responses = Vec::new();
    while let Some(response) = stream.next().await {
        responses.push(response?);
    }
    Ok(responses)
}

/// Per-seed outcome of the generate-parse stage.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenerationOutcome {
    pub seed: SeedSnippet,
    pub response: TeacherResponse,
    pub result: GenerationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum GenerationResult {
    Accepted { sample: InstructionSample },
    Rejected { reason: RejectReason },
}

/// Stage counters; acceptance and rejection partition the request count.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub requests: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub rejection_reasons: std::collections::BTreeMap<String, usize>,
    pub retries_total: u64,
    pub concurrency: usize,
    pub backend_id: String,
}

/// Full generate-parse stage over a seed list.
pub async fn run_generation(
    seeds: Vec<SeedSnippet>,
    template: &PromptTemplate,
    decoding: Decoding,
    max_new_tokens: u32,
    backend: Arc<dyn TeacherBackend>,
    options: &GenerationOptions,
) -> Result<(Vec<GenerationOutcome>, GenerationReport)> {
    let requests: Vec<GenerationRequest> = seeds
        .iter()
        .map(|seed| GenerationRequest::new(seed.clone(), template, decoding, max_new_tokens))
        .collect();
    let responses = generate_batch(requests, Arc::clone(&backend), options).await?;

    let mut outcomes = Vec::with_capacity(seeds.len());
    let mut report = GenerationReport {
        requests: seeds.len(),
        concurrency: options.concurrency,
        backend_id: backend.id().to_string(),
        ..GenerationReport::default()
    };
    for (seed, response) in seeds.into_iter().zip(responses) {
        report.retries_total += u64::from(response.retries);
        let result = match assemble_sample(&seed, &response, &options.markers, options.short_solution_chars) {
            Ok(sample) => {
                report.accepted += 1;
                GenerationResult::Accepted { sample }
            }
            Err(reason) => {
                report.rejected += 1;
                *report.rejection_reasons.entry(reason.as_str().to_string()).or_default() += 1;
                GenerationResult::Rejected { reason }
            }
        };
        outcomes.push(GenerationOutcome { seed, response, result });
    }
    Ok((outcomes, report))
}

/// Synchronous wrapper around [`run_generation`] for non-async callers.
pub fn run_generation_blocking(
    seeds: Vec<SeedSnippet>,
    template: &PromptTemplate,
    decoding: Decoding,
    max_new_tokens: u32,
    backend: Arc<dyn TeacherBackend>,
    options: &GenerationOptions,
) -> Result<(Vec<GenerationOutcome>, GenerationReport)> {
    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ForgeError::Backend(format!("failed to start async runtime: {e}")))?;
    runtime.block_on(run_generation(seeds, template, decoding, max_new_tokens, backend, options))
}

#[cfg(test)]
mod tests {
    use super::*;
    use async_trait::async_trait;
    use std::sync::Mutex;

    fn seed(text: &str) -> SeedSnippet {
        SeedSnippet {
            doc_id: "doc".into(),
            language: "python".into(),
            start_line: 1,
            line_count: text.split('\n').count(),
            text: text.into(),
        }
    }

    fn markers() -> SectionMarkers {
        SectionMarkers::default()
    }

    fn ok_response(raw: &str) -> TeacherResponse {
        TeacherResponse {
            prompt_sha256: "x".into(),
            raw_text: Some(raw.to_string()),
            finish_reason: FinishReason::Complete,
            backend_id: "test".into(),
            retries: 0,
            error: None,
        }
    }

    #[test]
    fn render_substitutes_seed_verbatim() {
        let template = PromptTemplate::new(
            "[Problem Description] and [Solution] around:\n{seed}\nend",
            &markers(),
        )
        .unwrap();
        let prompt = template.render(&seed("print(1)"));
        assert!(prompt.contains("print(1)"));
        assert!(!prompt.contains(SEED_PLACEHOLDER));
    }

    #[test]
    fn render_does_not_recurse_into_seed() {
        let template = PromptTemplate::new(
            "[Problem Description][Solution] {seed}",
            &markers(),
        )
        .unwrap();
        let prompt = template.render(&seed("literal {seed} stays"));
        assert_eq!(prompt.matches("{seed}").count(), 1);
        assert!(prompt.contains("literal {seed} stays"));
    }

    // Arithmetic length oracle: substitution changes length by exactly
    // seed length minus placeholder length.
    #[test]
    fn render_length_arithmetic() {
        let template_text = "[Problem Description]\n{seed}\n[Solution]";
        let template = PromptTemplate::new(template_text, &markers()).unwrap();
        let fifteen_lines = (0..15).map(|i| format!("line {i}")).collect::<Vec<_>>().join("\n");
        let s = seed(&fifteen_lines);
        let prompt = template.render(&s);
        assert_eq!(
            prompt.len(),
            template_text.len() - SEED_PLACEHOLDER.len() + s.text.len()
        );
    }

    #[test]
    fn template_validation_errors() {
        assert!(matches!(
            PromptTemplate::new("no placeholder [Problem Description] [Solution]", &markers()),
            Err(ForgeError::InvalidTemplate(_))
        ));
        assert!(matches!(
            PromptTemplate::new("{seed} [Solution]", &markers()),
            Err(ForgeError::InvalidTemplate(_))
        ));
        assert!(matches!(
            PromptTemplate::new("{seed} [Problem Description]", &markers()),
            Err(ForgeError::InvalidTemplate(_))
        ));
        assert!(PromptTemplate::builtin(&markers()).is_ok());
    }

    #[test]
    fn parse_well_formed_response() {
        let raw = "[Problem Description] P [Solution] S";
        let (problem, solution) = parse_response(raw, &markers()).unwrap();
        assert_eq!(problem, "P");
        assert_eq!(solution, "S");
    }

    #[test]
    fn parse_missing_solution_marker() {
        let raw = "[Problem Description] P only";
        assert_eq!(parse_response(raw, &markers()), Err(RejectReason::NoSolutionSection));
    }

    #[test]
    fn parse_missing_problem_marker() {
        assert_eq!(parse_response("free text", &markers()), Err(RejectReason::NoProblemSection));
    }

    #[test]
    fn parse_empty_sections() {
        assert_eq!(
            parse_response("[Problem Description]\n\n[Solution] S", &markers()),
            Err(RejectReason::EmptyProblem)
        );
        assert_eq!(
            parse_response("[Problem Description] P [Solution]  ", &markers()),
            Err(RejectReason::EmptySolution)
        );
    }

    // Noisy-but-present content is kept: an unterminated code fence is
    // accepted and only flagged.
    #[test]
    fn unterminated_fence_is_kept_and_flagged() {
        let raw = "[Problem Description] Count words.\n[Solution] short\n```python\ndef f():";
        let response = ok_response(raw);
        let sample = assemble_sample(&seed("x = 1"), &response, &markers(), 64).unwrap();
        assert!(sample.solution.contains("def f():"));
        assert!(sample.flags.contains(&SampleFlag::ShortSolution));
        assert!(!sample.flags.contains(&SampleFlag::NoFence));
        assert_eq!(sample.fenced_languages, vec!["python".to_string()]);
    }

    #[test]
    fn no_fence_flag_set_when_solution_has_no_fence() {
        let raw = "[Problem Description] P\n[Solution] plain prose answer without code";
        let sample = assemble_sample(&seed("x"), &ok_response(raw), &markers(), 10).unwrap();
        assert!(sample.flags.contains(&SampleFlag::NoFence));
    }

    #[test]
    fn sections_are_substrings_of_raw_response() {
        let raw = "[Problem Description]\n  A problem.\n[Solution]\n  ```rust\nfn main() {}\n```\n";
        let sample = assemble_sample(&seed("x"), &ok_response(raw), &markers(), 4).unwrap();
        assert!(sample.raw_response.contains(&sample.problem));
        assert!(sample.raw_response.contains(&sample.solution));
    }

    #[test]
    fn fenced_language_scan() {
        let text = "intro\n```python\nx\n```\nmid\n```Rust\ny\n```\n```python\nz\n```\n``` \nuntagged\n```";
        assert_eq!(fenced_languages(text), vec!["python".to_string(), "rust".to_string()]);
    }

    struct ScriptedBackend {
        script: Mutex<Vec<std::result::Result<BackendReply, BackendError>>>,
    }

    impl ScriptedBackend {
        fn new(script: Vec<std::result::Result<BackendReply, BackendError>>) -> Self {
            ScriptedBackend {
                script: Mutex::new(script),
            }
        }
    }

    #[async_trait]
    impl TeacherBackend for ScriptedBackend {
        fn id(&self) -> &str {
            "scripted"
        }

        async fn complete(&self, _request: &GenerationRequest) -> std::result::Result<BackendReply, BackendError> {
            self.script.lock().unwrap().remove(0)
        }
    }

    fn request(text: &str) -> GenerationRequest {
        let template = PromptTemplate::builtin(&markers()).unwrap();
        GenerationRequest::new(seed(text), &template, Decoding::Greedy, 128)
    }

    fn fast_options() -> GenerationOptions {
        GenerationOptions {
            retry_initial: Duration::from_millis(1),
            retry_max: Duration::from_millis(2),
            ..GenerationOptions::default()
        }
    }

    #[tokio::test]
    async fn rate_limited_twice_then_success_records_two_retries() {
        let backend = ScriptedBackend::new(vec![
            Err(BackendError::RateLimited),
            Err(BackendError::RateLimited),
            Ok(BackendReply {
                raw_text: "ok".into(),
                truncated: false,
            }),
        ]);
        let response = generate(&request("x"), &backend, &fast_options()).await.unwrap();
        assert_eq!(response.retries, 2);
        assert_eq!(response.finish_reason, FinishReason::Complete);
        assert_eq!(response.raw_text.as_deref(), Some("ok"));
    }

    #[tokio::test]
    async fn retries_exhausted_becomes_error_response() {
        let backend = ScriptedBackend::new(vec![
            Err(BackendError::Transient("t1".into())),
            Err(BackendError::Transient("t2".into())),
            Err(BackendError::Transient("t3".into())),
            Err(BackendError::Transient("t4".into())),
        ]);
        let response = generate(&request("x"), &backend, &fast_options()).await.unwrap();
        assert_eq!(response.finish_reason, FinishReason::Error);
        assert_eq!(response.retries, 3);
        assert!(response.raw_text.is_none());
    }

    #[tokio::test]
    async fn auth_failure_is_fatal() {
        let backend = ScriptedBackend::new(vec![Err(BackendError::Auth("401".into()))]);
        let err = generate(&request("x"), &backend, &fast_options()).await.unwrap_err();
        assert!(matches!(err, ForgeError::Backend(_)));
    }

    #[test]
    fn backoff_is_exponential_and_capped() {
        let options = GenerationOptions {
            retry_initial: Duration::from_millis(100),
            retry_max: Duration::from_millis(450),
            ..GenerationOptions::default()
        };
        assert_eq!(backoff_delay(0, &options), Duration::from_millis(100));
        assert_eq!(backoff_delay(1, &options), Duration::from_millis(200));
        assert_eq!(backoff_delay(2, &options), Duration::from_millis(400));
        assert_eq!(backoff_delay(3, &options), Duration::from_millis(450));
    }

    #[test]
    fn mock_backend_is_deterministic() {
        let template = PromptTemplate::builtin(&markers()).unwrap();
        let req = GenerationRequest::new(seed("x = 1"), &template, Decoding::Greedy, 64);
        let fixture = MockFixture {
            prompt_sha256: prompt_sha256(&req.prompt),
            raw_text: "[Problem Description] P [Solution] S".into(),
            truncated: false,
        };
        let run = |fixture: MockFixture| {
            let backend: Arc<dyn TeacherBackend> = Arc::new(MockBackend::new([fixture]));
            let options = fast_options();
            let (outcomes, report) = run_generation_blocking(
                vec![seed("x = 1")],
                &template,
                Decoding::Greedy,
                64,
                backend,
                &options,
            )
            .unwrap();
            (outcomes, report)
        };
        let (first, report) = run(fixture.clone());
        let (second, _) = run(fixture);
        assert_eq!(report.accepted, 1);
        assert_eq!(
            serde_json::to_string(&first).unwrap(),
            serde_json::to_string(&second).unwrap()
        );
    }

    #[test]
    fn acceptance_and_rejection_partition_the_batch() {
        let template = PromptTemplate::builtin(&markers()).unwrap();
        let seeds: Vec<SeedSnippet> = (0..6).map(|i| SeedSnippet {
            doc_id: format!("d{i}"),
            language: "python".into(),
            start_line: 1,
            line_count: 1,
            text: format!("x = {i}"),
        }).collect();
        let fixtures: Vec<MockFixture> = seeds
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != 5) // seed 5 has no fixture -> backend error
            .map(|(i, s)| {
                let prompt = template.render(s);
                let raw_text = if i % 2 == 0 {
                    format!("[Problem Description] P{i} [Solution] S{i}")
                } else {
                    format!("[Problem Description] P{i} and nothing else")
                };
                MockFixture {
                    prompt_sha256: prompt_sha256(&prompt),
                    raw_text,
                    truncated: false,
                }
            })
            .collect();
        let backend: Arc<dyn TeacherBackend> = Arc::new(MockBackend::new(fixtures));
        let (outcomes, report) =
            run_generation_blocking(seeds, &template, Decoding::Greedy, 64, backend, &fast_options()).unwrap();
        assert_eq!(report.requests, 6);
        assert_eq!(report.accepted + report.rejected, report.requests);
        assert_eq!(report.rejection_reasons.values().sum::<usize>(), report.rejected);
        assert_eq!(report.accepted, 3);
        assert_eq!(report.rejection_reasons["no_solution_section"], 2);
        assert_eq!(report.rejection_reasons["backend_error"], 1);
        assert_eq!(outcomes.len(), 6);
    }

    #[tokio::test]
    async fn concurrency_never_exceeds_bound() {
        let template = PromptTemplate::builtin(&markers()).unwrap();
        let seeds: Vec<SeedSnippet> = (0..20)
            .map(|i| SeedSnippet {
                doc_id: format!("d{i}"),
                language: "python".into(),
                start_line: 1,
                line_count: 1,
                text: format!("v = {i}"),
            })
            .collect();
        let fixtures: Vec<MockFixture> = seeds
            .iter()
            .map(|s| MockFixture {
                prompt_sha256: prompt_sha256(&template.render(s)),
                raw_text: "[Problem Description] P [Solution] S".into(),
                truncated: false,
            })
            .collect();
        let mock = Arc::new(MockBackend::new(fixtures).with_latency(Duration::from_millis(5)));
        let backend: Arc<dyn TeacherBackend> = mock.clone();
        let requests: Vec<GenerationRequest> = seeds
            .iter()
            .map(|s| GenerationRequest::new(s.clone(), &template, Decoding::Greedy, 64))
            .collect();
        let options = GenerationOptions {
            concurrency: 4,
            ..fast_options()
        };
        let responses = generate_batch(requests, backend, &options).await.unwrap();
        assert_eq!(responses.len(), 20);
        assert!(mock.high_water_mark() <= 4, "high water {}", mock.high_water_mark());
        assert!(mock.high_water_mark() >= 2, "latency should force overlap");
    }

    #[tokio::test]
    async fn echo_backend_is_deterministic_and_parseable() {
        let backend = EchoBackend::new(DEFAULT_PROBLEM_MARKER, DEFAULT_SOLUTION_MARKER);
        let req = request("total = a + b");
        let first = backend.complete(&req).await.unwrap();
        let second = backend.complete(&req).await.unwrap();
        assert_eq!(first.raw_text, second.raw_text);
        let (problem, solution) = parse_response(&first.raw_text, &markers()).unwrap();
        assert!(!problem.is_empty());
        assert!(solution.contains("total = a + b"));
        assert!(solution.contains("```python"));
    }

}
