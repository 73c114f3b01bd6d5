//! Core of the AQUALLM dataset pipeline.
//!
//! Turns annotated audio captions into (audio, question, answer) triplets in
//! four stages: candidate answer extraction, question generation, round-trip
//! QA filtering, and question paraphrasing. Everything here is pure and only
//! needs an allocator; file formats, HTTP and the command line live in the
//! `aquallm` crate.
//!
//! Language models are reached through the [`gateway::ModelGateway`] trait.
//! [`gateway::MockGateway`] is a deterministic implementation used for
//! offline runs and tests.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod annotation;
pub mod candidates;
pub mod dataset;
pub mod exec;
pub mod filtering;
pub mod gateway;
pub mod generation;
pub mod metric;
pub mod paraphrase;
pub mod sampling;
pub mod text;

pub use annotation::{
    build_corpus, AnnotatedCaption, AnnotationError, Corpus, CorpusManifest, CorpusWarning,
    ManifestEntry, Split, Token, Upos,
};
pub use candidates::{extract_candidates, AnswerCandidate, CandidateType, Span};
pub use dataset::{assemble, compute_stats, AqaTriplet, DatasetStats, Provenance};
pub use exec::{Executor, Sequential};
pub use filtering::{filter_pairs, verify_pair, FilterConfig, FilterReport, VerificationResult};
pub use gateway::{GatewayError, MockGateway, ModelGateway, QaOutcome};
pub use generation::{generate_all, GenerationReport, InjectionConfig, QaPairDraft};
pub use metric::{normalize_answer, token_f1};
pub use paraphrase::{expand, ExpandedPair, ParaphraseConfig};
