//! oss-forge: a batch pipeline that manufactures coding instruction-tuning
//! data from open-source code snippets.
//!
//! The pipeline samples seed snippets from a code corpus, prompts a teacher
//! model to invent a (problem, solution) pair per seed, cleans and
//! decontaminates the results against evaluation benchmarks, analyzes the
//! dataset, and exports training-ready files with full accounting.
//!
//! Stages are exposed both as a library (this crate) and through the
//! `oss-forge` binary. Every stage is deterministic given the config's RNG
//! seed and a deterministic backend; see the guide under `book/` for
//! concept chapters with runnable snippets.

pub mod analyze;
pub mod clean;
pub mod config;
pub mod corpus;
pub mod decontam;
pub mod error;
pub mod export;
pub mod jsonl;
pub mod pairminer;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod teacher;
pub mod textutil;

pub use config::{LoadedConfig, PipelineConfig};
pub use corpus::{CodeDocument, SamplingQuota, SeedSnippet};
pub use error::{ForgeError, Result};
pub use teacher::InstructionSample;

// The book's code blocks compile and run as doc-tests so the guide cannot
// drift from the library.
#[cfg(doctest)]
mod book {
    macro_rules! doc_check {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            #[allow(unused)]
            mod $name {}
        };
    }

    doc_check!(introduction, "../../../book/src/introduction.md");
    doc_check!(pipeline_chapter, "../../../book/src/pipeline.md");
    doc_check!(seed_sampling, "../../../book/src/seed-sampling.md");
    doc_check!(generation, "../../../book/src/generation.md");
    doc_check!(cleaning, "../../../book/src/cleaning.md");
    doc_check!(decontamination, "../../../book/src/decontamination.md");
    doc_check!(analysis, "../../../book/src/analysis.md");
    doc_check!(pair_mining, "../../../book/src/pair-mining.md");
    doc_check!(exporting, "../../../book/src/exporting.md");
    doc_check!(cli_reference, "../../../book/src/cli-reference.md");
}
