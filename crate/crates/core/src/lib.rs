//! Retrieval-augmented, intent-conditioned code comment generation.
//!
//! The pipeline selects demonstrations similar to a query method
//! ([`retrieval`]), renders a completion prompt for the requested comment
//! intent ([`prompt`]), samples candidates from a pluggable backend
//! ([`llm`]), optionally reranks them against the comment of the most
//! similar corpus code ([`rerank`]) and scores the result ([`metrics`]).
//! [`harness`] runs the whole grid over labeled corpora ([`corpus`]).

pub mod codetok;
pub mod corpus;
pub mod error;
pub mod harness;
pub mod llm;
pub mod metrics;
pub mod prompt;
pub mod remote;
pub mod rerank;
pub mod retrieval;

pub use codetok::{code_subtokens, comment_tokens, split_identifier, SubTokenSet, WordSequence};
pub use corpus::{load_corpus, Corpus, CorpusEntry, Intent, Split};
pub use error::{Error, Result};
pub use harness::{
    export, generate, prepare_prompt, run_cell, run_experiment, Cell, ExperimentConfig,
    ExperimentOutcome, ExportFormat, RerankMode, ResultRow,
};
pub use llm::{build_backend, BackendSpec, CandidateComment, CompletionBackend, SamplingParams};
pub use metrics::{aggregate, bleu, meteor, rouge_l, score_pair, MetricReport, MetricScores};
pub use prompt::{build_prompt, intent_instruction, Demonstration, PromptSpec, RenderedPrompt};
pub use remote::{RateLimit, RetryPolicy};
pub use rerank::{rerank, select_reference, RankedCandidate, RerankSpec, RerankStrategy};
pub use retrieval::{
    cosine, jaccard, retrieve, EmbedderSpec, EmbeddingVector, Retriever, ScoredEntry, Strategy,
};
