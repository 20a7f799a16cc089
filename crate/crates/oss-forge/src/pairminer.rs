//! Comment-function pair mining for the direct-finetuning ablation data.
//!
//! The built-in miner handles the indentation-delimited language (`python`)
//! with line-structure parsing: a definition line, an optional docstring
//! opening on the line directly after the signature, and a body that runs
//! until the first non-blank line at or below the definition's indentation.
//! Brace-delimited languages can plug in through the same interface; AST
//! fidelity is a non-goal.
//!
//! Pairs overlapping the sampled seed snippets are prioritized, then the
//! remainder in deterministic `(doc_id, start_line)` order, truncated to the
//! requested target.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CodeDocument, SeedSnippet};
use crate::teacher::{InstructionSample, SampleOrigin};
use crate::textutil::split_lines;

/// 1-based inclusive line range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LineSpan {
    pub start_line: usize,
    pub end_line: usize,
}

impl LineSpan {
    pub fn len(&self) -> usize {
        self.end_line - self.start_line + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn intersects(&self, other_start: usize, other_end: usize) -> bool {
        self.start_line <= other_end && other_start <= self.end_line
    }
}

/// Where the pair's comment sits in the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommentStyle {
    /// Docstring between signature and body.
    Docstring,
    /// `#` comment block directly above the signature.
    Leading,
}

/// A (signature, comment, body) triple mined from one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentFunctionPair {
    pub doc_id: String,
    pub language: String,
    pub signature: String,
    pub comment: String,
    pub body: String,
    pub span: LineSpan,
    pub comment_style: CommentStyle,
    pub overlaps_seed: bool,
}

impl CommentFunctionPair {
    /// Joins the three fields in document order; equals the verbatim slice
    /// of the source at `span`.
    pub fn reconstruct(&self) -> String {
        match self.comment_style {
            CommentStyle::Docstring => format!("{}\n{}\n{}", self.signature, self.comment, self.body),
            CommentStyle::Leading => format!("{}\n{}\n{}", self.comment, self.signature, self.body),
        }
    }
}

/// Relevance thresholds and comment-style switches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinerConfig {
    /// Minimum whitespace tokens in the comment text (delimiters stripped).
    pub min_comment_tokens: usize,
    /// Minimum non-blank body lines.
    pub min_body_lines: usize,
    /// Also mine functions documented by a leading `#` block.
    pub include_leading_comments: bool,
}

impl Default for MinerConfig {
    fn default() -> Self {
        MinerConfig {
            min_comment_tokens: 3,
            min_body_lines: 2,
            include_leading_comments: true,
        }
    }
}

/// Mining counters.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MineReport {
    pub documents_scanned: usize,
    pub documents_skipped_language: usize,
    pub functions_seen: usize,
    pub functions_undocumented: usize,
    pub functions_unparseable: usize,
    pub filtered_short_comment: usize,
    pub filtered_short_body: usize,
    pub pairs: usize,
}

fn indent_of(line: &str) -> usize {
    line.chars().take_while(|c| c.is_whitespace()).count()
}

/// Returns the indentation of a `def`/`async def` line.
fn def_indent(line: &str) -> Option<usize> {
    let trimmed = line.trim_start();
    let rest = trimmed.strip_prefix("async ").map(str::trim_start).unwrap_or(trimmed);
    let after = rest.strip_prefix("def")?;
    let mut chars = after.chars();
    if !chars.next()?.is_whitespace() {
        return None;
    }
    let name_and_paren = after.trim_start();
    let mut saw_name = false;
    for c in name_and_paren.chars() {
        if c == '(' {
            return if saw_name { Some(indent_of(line)) } else { None };
        }
        if c.is_alphanumeric() || c == '_' {
            saw_name = true;
        } else {
            return None;
        }
    }
    None
}

/// Detects a docstring opener after optional string-prefix letters; returns
/// the delimiter.
fn docstring_delimiter(trimmed: &str) -> Option<&'static str> {
    let stripped = trimmed.trim_start_matches(|c: char| "rRbBuUfF".contains(c));
    if stripped.starts_with("\"\"\"") {
        Some("\"\"\"")
    } else if stripped.starts_with("'''") {
        Some("'''")
    } else {
        None
    }
}

struct ParsedFunction {
    sig_end: usize,     // 0-based index of the `:` line
    doc_range: Option<(usize, usize)>,
    body_range: Option<(usize, usize)>,
}

const MAX_SIGNATURE_LINES: usize = 20;

fn parse_function(lines: &[&str], def_at: usize, indent: usize) -> Option<ParsedFunction> {
    // Signature: accumulate until parentheses balance and the line ends in `:`.
    let mut depth = 0i64;
    let mut saw_paren = false;
    let mut sig_end = None;
    for (offset, line) in lines[def_at..].iter().take(MAX_SIGNATURE_LINES).enumerate() {
        for c in line.chars() {
            match c {
                '(' => {
                    depth += 1;
                    saw_paren = true;
                }
                ')' => depth -= 1,
                _ => {}
            }
        }
        if saw_paren && depth == 0 && line.trim_end().ends_with(':') {
            sig_end = Some(def_at + offset);
            break;
        }
    }
    let sig_end = sig_end?;

    // Docstring must open on the line directly after the signature so the
    // mined region stays contiguous.
    let mut doc_range = None;
    let mut body_start = sig_end + 1;
    if let Some(first_body) = lines.get(sig_end + 1) {
        if indent_of(first_body) > indent || first_body.trim().is_empty() {
            let trimmed = first_body.trim_start();
            if let Some(delim) = docstring_delimiter(trimmed) {
                let after_open = &trimmed[trimmed.find(delim).unwrap() + delim.len()..];
                let mut doc_end = None;
                if after_open.contains(delim) {
                    doc_end = Some(sig_end + 1);
                } else {
                    for (offset, line) in lines[sig_end + 2..].iter().enumerate() {
                        if line.contains(delim) {
                            doc_end = Some(sig_end + 2 + offset);
                            break;
                        }
                    }
                }
                let doc_end = doc_end?;
                doc_range = Some((sig_end + 1, doc_end));
                body_start = doc_end + 1;
            }
        }
    }

    // Body: lines strictly indented past the definition, up to the first
    // non-blank dedent; trailing blanks excluded.
    let mut last_body = None;
    for (offset, line) in lines[body_start..].iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        if indent_of(line) <= indent {
            break;
        }
        last_body = Some(body_start + offset);
    }
    let body_range = last_body.map(|end| (body_start, end));
    Some(ParsedFunction {
        sig_end,
        doc_range,
        body_range,
    })
}

fn leading_comment_range(lines: &[&str], def_at: usize, indent: usize) -> Option<(usize, usize)> {
    let mut start = def_at;
    while start > 0 {
        let line = lines[start - 1];
        if indent_of(line) == indent && line.trim_start().starts_with('#') {
            start -= 1;
        } else {
            break;
        }
    }
    (start < def_at).then_some((start, def_at - 1))
}

fn comment_token_count(comment: &str, style: CommentStyle) -> usize {
    match style {
        CommentStyle::Docstring => comment
            .replace("\"\"\"", " ")
            .replace("'''", " ")
            .split_whitespace()
            .count(),
        CommentStyle::Leading => comment
            .split('\n')
            .map(|l| l.trim_start().trim_start_matches('#'))
            .collect::<Vec<_>>()
            .join(" ")
            .split_whitespace()
            .count(),
    }
}

fn mine_python_document(doc: &CodeDocument, config: &MinerConfig, report: &mut MineReport) -> Vec<CommentFunctionPair> {
    let lines = split_lines(&doc.content);
    let join = |range: (usize, usize)| lines[range.0..=range.1].join("\n");
    let mut pairs = Vec::new();

    for def_at in 0..lines.len() {
        let Some(indent) = def_indent(lines[def_at]) else {
            continue;
        };
        report.functions_seen += 1;
        let Some(parsed) = parse_function(&lines, def_at, indent) else {
            report.functions_unparseable += 1;
            continue;
        };
        let Some(body_range) = parsed.body_range else {
            report.functions_unparseable += 1;
            continue;
        };

        let (comment_range, style, span_start) = match parsed.doc_range {
            Some(range) => (range, CommentStyle::Docstring, def_at),
            None => {
                let Some(range) = config
                    .include_leading_comments
                    .then(|| leading_comment_range(&lines, def_at, indent))
                    .flatten()
                else {
                    report.functions_undocumented += 1;
                    continue;
                };
                (range, CommentStyle::Leading, range.0)
            }
        };

        let comment = join(comment_range);
        if comment_token_count(&comment, style) < config.min_comment_tokens {
            report.filtered_short_comment += 1;
            continue;
        }
        let body = join(body_range);
        let non_blank_body = body.split('\n').filter(|l| !l.trim().is_empty()).count();
        if non_blank_body < config.min_body_lines {
            report.filtered_short_body += 1;
            continue;
        }

        pairs.push(CommentFunctionPair {
            doc_id: doc.doc_id.clone(),
            language: doc.language.clone(),
            signature: join((def_at, parsed.sig_end)),
            comment,
            body,
            span: LineSpan {
                start_line: span_start + 1,
                end_line: body_range.1 + 1,
            },
            comment_style: style,
            overlaps_seed: false,
        });
        report.pairs += 1;
    }
    pairs
}

/// Mines comment-function pairs from every document of a supported
/// language. Results are sorted by `(doc_id, start_line)`.
pub fn mine_pairs(
    docs: &[CodeDocument],
    languages: &[String],
    config: &MinerConfig,
) -> (Vec<CommentFunctionPair>, MineReport) {
    let mut report = MineReport::default();
    let mut pairs = Vec::new();
    for doc in docs {
        if !languages.contains(&doc.language) || doc.language != "python" {
            report.documents_skipped_language += 1;
            continue;
        }
        report.documents_scanned += 1;
        pairs.extend(mine_python_document(doc, config, &mut report));
    }
    pairs.sort_by(|a, b| (&a.doc_id, a.span.start_line).cmp(&(&b.doc_id, b.span.start_line)));
    (pairs, report)
}

/// Prioritization accounting.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrioritizeReport {
    pub total_pairs: usize,
    pub overlapping: usize,
    pub target: Option<usize>,
    pub selected: usize,
    pub shortfall: usize,
}

/// Puts pairs whose span intersects a seed window (same document) first,
/// keeps `(doc_id, start_line)` order within each group, and truncates to
/// `target` when given. A target above the pair count is a reported
/// shortfall.
pub fn prioritize_pairs(
    mut pairs: Vec<CommentFunctionPair>,
    seeds: &[SeedSnippet],
    target: Option<usize>,
) -> (Vec<CommentFunctionPair>, PrioritizeReport) {
    let mut seed_windows: HashMap<&str, Vec<(usize, usize)>> = HashMap::new();
    for seed in seeds {
        seed_windows
            .entry(seed.doc_id.as_str())
            .or_default()
            .push((seed.start_line, seed.start_line + seed.line_count - 1));
    }
    for pair in &mut pairs {
        pair.overlaps_seed = seed_windows
            .get(pair.doc_id.as_str())
            .is_some_and(|windows| windows.iter().any(|(s, e)| pair.span.intersects(*s, *e)));
    }
    let mut report = PrioritizeReport {
        total_pairs: pairs.len(),
        overlapping: pairs.iter().filter(|p| p.overlaps_seed).count(),
        target,
        ..PrioritizeReport::default()
    };
    // stable partition keeps (doc_id, start_line) order inside each group
    let (mut front, back): (Vec<_>, Vec<_>) = pairs.into_iter().partition(|p| p.overlaps_seed);
    front.extend(back);
    if let Some(target) = target {
        report.shortfall = target.saturating_sub(front.len());
        front.truncate(target);
    }
    report.selected = front.len();
    (front, report)
}

/// Formats each pair as a completion task: the problem shows the documented
/// signature in document order, the solution is the body verbatim.
pub fn pairs_to_samples(pairs: &[CommentFunctionPair]) -> Vec<InstructionSample> {
    pairs
        .iter()
        .map(|pair| {
            let shown = match pair.comment_style {
                CommentStyle::Docstring => format!("{}\n{}", pair.signature, pair.comment),
                CommentStyle::Leading => format!("{}\n{}", pair.comment, pair.signature),
            };
            let problem = format!(
                "Complete the implementation of the following {language} function so that it \
                 behaves as its documentation describes.\n\n```{language}\n{shown}\n```",
                language = pair.language,
            );
            InstructionSample {
                sample_id: format!(
                    "{}:{}-{}:pair",
                    pair.doc_id, pair.span.start_line, pair.span.end_line
                ),
                seed: SeedSnippet {
                    doc_id: pair.doc_id.clone(),
                    language: pair.language.clone(),
                    start_line: pair.span.start_line,
                    line_count: pair.span.len(),
                    text: pair.reconstruct(),
                },
                fenced_languages: crate::teacher::fenced_languages(&problem),
                problem,
                solution: pair.body.clone(),
                raw_response: String::new(),
                flags: Default::default(),
                origin: SampleOrigin::PairMined,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textutil::slice_lines;

    fn doc(id: &str, content: &str) -> CodeDocument {
        CodeDocument {
            doc_id: id.to_string(),
            language: "python".to_string(),
            content: content.to_string(),
            origin: String::new(),
        }
    }

    const DOCUMENTED: &str = r#"import os

def area(width, height):
    """Compute the rectangle area.

    Width and height must be nonnegative.
    """
    result = width * height
    return result

def undocumented(x):
    return x + 1
"#;

    #[test]
    fn single_documented_function_yields_one_pair() {
        let (pairs, report) = mine_pairs(&[doc("d0", DOCUMENTED)], &["python".into()], &MinerConfig::default());
        assert_eq!(pairs.len(), 1);
        assert_eq!(report.functions_seen, 2);
        assert_eq!(report.functions_undocumented, 1);
        let pair = &pairs[0];
        assert_eq!(pair.span, LineSpan { start_line: 3, end_line: 9 });
        assert_eq!(pair.signature, "def area(width, height):");
        assert!(pair.comment.contains("rectangle area"));
        assert!(pair.body.contains("return result"));
    }

    #[test]
    fn span_reslices_to_reconstruction() {
        let d = doc("d0", DOCUMENTED);
        let (pairs, _) = mine_pairs(&[d.clone()], &["python".into()], &MinerConfig::default());
        let pair = &pairs[0];
        let slice = slice_lines(&d.content, pair.span.start_line, pair.span.len()).unwrap();
        assert_eq!(slice, pair.reconstruct());
    }

    #[test]
    fn function_without_docstring_yields_no_pair() {
        let source = "def f(x):\n    return x\n";
        let (pairs, report) = mine_pairs(
            &[doc("d0", source)],
            &["python".into()],
            &MinerConfig {
                include_leading_comments: false,
                ..MinerConfig::default()
            },
        );
        assert!(pairs.is_empty());
        assert_eq!(report.functions_undocumented, 1);
    }

    const THREE_OF_FIVE: &str = r#"def one(a):
    """Add one to the given number."""
    b = a + 1
    return b

def two(a):
    return a

def three(xs):
    '''Sum all list elements together.'''
    total = 0
    for x in xs:
        total += x
    return total

def four(a, b):
    return a * b

def five(name):
    """Greet the given person politely."""
    message = "hello " + name
    return message
"#;

    #[test]
    fn three_documented_of_five_yield_three_pairs() {
        let d = doc("d0", THREE_OF_FIVE);
        let (pairs, report) = mine_pairs(&[d.clone()], &["python".into()], &MinerConfig::default());
        assert_eq!(pairs.len(), 3);
        assert_eq!(report.functions_seen, 5);
        assert_eq!(report.functions_undocumented, 2);
        for pair in &pairs {
            let slice = slice_lines(&d.content, pair.span.start_line, pair.span.len()).unwrap();
            assert_eq!(slice, pair.reconstruct(), "span fidelity for {}", pair.signature);
        }
    }

    #[test]
    fn nested_documented_function_is_found() {
        let source = r#"def outer(x):
    """Wraps the inner helper function."""
    def inner(y):
        """Double the provided value."""
        doubled = y * 2
        return doubled
    return inner(x)
"#;
        let d = doc("d0", source);
        let (pairs, _) = mine_pairs(&[d.clone()], &["python".into()], &MinerConfig::default());
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().any(|p| p.signature.trim_start().starts_with("def inner")));
        for pair in &pairs {
            let slice = slice_lines(&d.content, pair.span.start_line, pair.span.len()).unwrap();
            assert_eq!(slice, pair.reconstruct());
        }
    }

    #[test]
    fn leading_comment_block_counts_as_documentation() {
        let source = "# Normalize a vector to unit length.\n# Zero vectors are returned unchanged.\ndef normalize(v):\n    n = norm(v)\n    return v / n if n else v\n";
        let d = doc("d0", source);
        let (pairs, _) = mine_pairs(&[d.clone()], &["python".into()], &MinerConfig::default());
        assert_eq!(pairs.len(), 1);
        let pair = &pairs[0];
        assert_eq!(pair.comment_style, CommentStyle::Leading);
        assert_eq!(pair.span.start_line, 1);
        let slice = slice_lines(&d.content, pair.span.start_line, pair.span.len()).unwrap();
        assert_eq!(slice, pair.reconstruct());

        let (without, _) = mine_pairs(
            &[d],
            &["python".into()],
            &MinerConfig {
                include_leading_comments: false,
                ..MinerConfig::default()
            },
        );
        assert!(without.is_empty());
    }

    #[test]
    fn relevance_filters_apply() {
        let short_comment = "def f(x):\n    \"\"\"Hi.\"\"\"\n    a = 1\n    return a\n";
        let short_body = "def g(x):\n    \"\"\"A perfectly good comment here.\"\"\"\n    return x\n";
        let (pairs, report) = mine_pairs(
            &[doc("a", short_comment), doc("b", short_body)],
            &["python".into()],
            &MinerConfig::default(),
        );
        assert!(pairs.is_empty());
        assert_eq!(report.filtered_short_comment, 1);
        assert_eq!(report.filtered_short_body, 1);
    }

    #[test]
    fn unsupported_language_documents_are_counted() {
        let mut rust_doc = doc("r0", "fn main() {}\n");
        rust_doc.language = "rust".into();
        let (pairs, report) = mine_pairs(&[rust_doc], &["python".into()], &MinerConfig::default());
        assert!(pairs.is_empty());
        assert_eq!(report.documents_skipped_language, 1);
    }

    fn seed_at(doc_id: &str, start: usize, count: usize) -> SeedSnippet {
        SeedSnippet {
            doc_id: doc_id.to_string(),
            language: "python".into(),
            start_line: start,
            line_count: count,
            text: String::new(),
        }
    }

    #[test]
    fn prioritize_puts_overlapping_first_and_truncates() {
        let d = doc("d0", THREE_OF_FIVE);
        let (pairs, _) = mine_pairs(&[d], &["python".into()], &MinerConfig::default());
        assert_eq!(pairs.len(), 3);
        // seed window 18-19 overlaps the last documented function (lines 19-22)
        let seeds = vec![seed_at("d0", 18, 2)];
        let (prioritized, report) = prioritize_pairs(pairs.clone(), &seeds, Some(2));
        assert_eq!(report.overlapping, 1);
        assert_eq!(prioritized.len(), 2);
        assert!(prioritized[0].overlaps_seed);
        assert!(prioritized[0].signature.contains("five"));
        assert!(!prioritized[1].overlaps_seed);

        // priority correctness: no non-overlapping pair precedes an overlapping one
        let (all, _) = prioritize_pairs(pairs, &seeds, None);
        let first_non_overlap = all.iter().position(|p| !p.overlaps_seed).unwrap_or(all.len());
        assert!(all[first_non_overlap..].iter().all(|p| !p.overlaps_seed));
    }

    #[test]
    fn prioritize_reports_shortfall() {
        let d = doc("d0", THREE_OF_FIVE);
        let (pairs, _) = mine_pairs(&[d], &["python".into()], &MinerConfig::default());
        let (selected, report) = prioritize_pairs(pairs, &[], Some(10));
        assert_eq!(selected.len(), 3);
        assert_eq!(report.shortfall, 7);
    }

    #[test]
    fn samples_carry_pair_fields_verbatim() {
        let d = doc("d0", DOCUMENTED);
        let (pairs, _) = mine_pairs(&[d.clone()], &["python".into()], &MinerConfig::default());
        let samples = pairs_to_samples(&pairs);
        assert_eq!(samples.len(), pairs.len());
        let (sample, pair) = (&samples[0], &pairs[0]);
        assert!(sample.problem.contains(&pair.signature));
        assert!(sample.problem.contains(&pair.comment));
        assert_eq!(sample.solution, pair.body);
        assert_eq!(sample.origin, SampleOrigin::PairMined);
        assert!(sample.fenced_languages.contains(&"python".to_string()));

        // Round-trip: fence content plus solution reproduces the mined region.
        let fence_start = sample.problem.find("```python\n").unwrap() + "```python\n".len();
        let fence_end = sample.problem.rfind("\n```").unwrap();
        let shown = &sample.problem[fence_start..fence_end];
        let rebuilt = format!("{}\n{}", shown, sample.solution);
        assert_eq!(rebuilt, pair.reconstruct());
        let slice = slice_lines(&d.content, pair.span.start_line, pair.span.len()).unwrap();
        assert_eq!(rebuilt, slice);
    }

    #[test]
    fn mining_is_deterministic() {
        let docs = vec![doc("b", THREE_OF_FIVE), doc("a", DOCUMENTED)];
        let (first, _) = mine_pairs(&docs, &["python".into()], &MinerConfig::default());
        let (second, _) = mine_pairs(&docs, &["python".into()], &MinerConfig::default());
        assert_eq!(first, second);
        // sorted by (doc_id, start_line)
        assert!(first.windows(2).all(|w| {
            (&w[0].doc_id, w[0].span.start_line) <= (&w[1].doc_id, w[1].span.start_line)
        }));
    }
}
