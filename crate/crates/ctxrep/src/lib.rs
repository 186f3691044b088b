//! ctxrep: context repetition (CoRe) for misordered multi-hop contexts.
//!
//! Left-to-right readers are sensitive to the relative order of the
//! supporting documents in their context. Repeating the context k times makes
//! every relative order of k supporting documents available as an increasing
//! subsequence, so some pass always presents them in the order the reader
//! needs. This crate provides:
//!
//! - [`context`]: the document/context model, order enumeration, the
//!   repetition augmentation, exhaustive order-coverage checking, and
//!   explicit selection witnesses;
//! - [`synthetic`]: a chained-list benchmark with a deterministic oracle
//!   whose solution must be traced against reading order;
//! - [`prompt`]: byte-stable chat templates that carry the repetition in a
//!   scripted assistant turn;
//! - [`scoring`]: short-answer token F1 and integer exact match;
//! - [`model`]: the chat-model boundary with an OpenAI-compatible HTTP
//!   backend and a deterministic single-register mock reasoner;
//! - [`harness`]: experiment orchestration, JSONL records, and aggregation.

pub mod context;
pub mod harness;
pub mod model;
pub mod prompt;
pub mod scoring;
pub mod synthetic;

pub use context::{
    apply_order, build_context, enumerate_orders, extract_order_witness, is_in_order_set,
    reorder_supporting, repeat_context, verify_order_coverage, ContextError, ContextSpec, Document,
    OrderPermutation, OrderWitness, Role,
};
pub use harness::{run_eval, EvalDataset, HarnessError, QaSample, RunOptions, RunRecord};
pub use model::{
    estimate_optimal_order, Capability, GenerationResult, Model, ModelError, ModelHandle,
    OrderSample, OrderScorer,
};
pub use prompt::{ChatMessage, ChatRole, PromptError, PromptPlan, RepetitionStyle, TemplateKind};
pub use scoring::{exact_match_int, extract_answer, normalize_answer, token_f1, ScoredAnswer};
pub use synthetic::{
    generate_dataset, mock_passes_required, oracle_answer, ChainError, ChainList, SyntheticSample,
};
