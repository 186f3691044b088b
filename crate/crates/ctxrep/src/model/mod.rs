//! Pluggable model boundary: a chat-completion interface with two backends,
//! an OpenAI-compatible HTTP client and a deterministic mock reasoner that
//! exhibits the left-to-right reading limitation the repetition method
//! targets.

mod http;
mod mock;

pub use http::{HttpConfig, HttpModel, RetryPolicy};
pub use mock::{mock_chain_read, MockChainReader, MockConfig};

use crate::context::{
    enumerate_orders, reorder_supporting, ContextError, ContextSpec, OrderPermutation,
};
use crate::prompt::{render_qa_prompt, ChatMessage, PromptError, PromptPlan, TemplateKind};
use crate::scoring::score_qa;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("request failed after {attempts} attempts: {message}")]
    Retryable { attempts: u32, message: String },
    #[error("http {status}: {excerpt}")]
    Fatal { status: u16, excerpt: String },
    #[error("capability missing: {0}")]
    Capability(String),
    #[error("messages must be non-empty")]
    EmptyMessages,
    #[error("target must be non-empty")]
    EmptyTarget,
    #[error("mock could not parse prompt: {0}")]
    MockParse(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Capability {
    Generate,
    ScoreTarget,
}

/// One model continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationResult {
    pub text: String,
    pub finish_reason: String,
    pub token_logprobs: Option<Vec<f64>>,
    pub latency_ms: u64,
}

/// A chat model. Implementations are immutable and shareable; callers own
/// throttling.
pub trait Model: Send + Sync {
    fn name(&self) -> &str;

    fn supports(&self, capability: Capability) -> bool;

    /// Continue a chat. Deterministic for the mock backend at any
    /// temperature; HTTP determinism is up to the server.
    fn generate(
        &self,
        messages: &[ChatMessage],
        max_tokens: u32,
        temperature: f64,
    ) -> Result<GenerationResult, ModelError>;

    /// Mean per-token log-probability of `target` forced as the continuation
    /// of `messages`. Length-normalized so answer length does not confound
    /// comparisons; absolute values are backend-relative.
    fn score_target(&self, messages: &[ChatMessage], target: &str) -> Result<f64, ModelError>;
}

/// A concrete backend choice behind the [`Model`] trait.
pub enum ModelHandle {
    Http(HttpModel),
    Mock(MockChainReader),
}

impl ModelHandle {
    pub fn mock() -> Self {
        ModelHandle::Mock(MockChainReader::default())
    }

    pub fn http(config: HttpConfig) -> Result<Self, ModelError> {
        Ok(ModelHandle::Http(HttpModel::new(config)?))
    }
}

impl Model for ModelHandle {
    fn name(&self) -> &str {
        match self {
            ModelHandle::Http(m) => m.name(),
            ModelHandle::Mock(m) => m.name(),
        }
    }

    fn supports(&self, capability: Capability) -> bool {
        match self {
            ModelHandle::Http(m) => m.supports(capability),
            ModelHandle::Mock(m) => m.supports(capability),
        }
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        max_tokens: u32,
        temperature: f64,
    ) -> Result<GenerationResult, ModelError> {
        match self {
            ModelHandle::Http(m) => m.generate(messages, max_tokens, temperature),
            ModelHandle::Mock(m) => m.generate(messages, max_tokens, temperature),
        }
    }

    fn score_target(&self, messages: &[ChatMessage], target: &str) -> Result<f64, ModelError> {
        match self {
            ModelHandle::Http(m) => m.score_target(messages, target),
            ModelHandle::Mock(m) => m.score_target(messages, target),
        }
    }
}

/// Scoring rule for order estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderScorer {
    /// Mean target log-probability via [`Model::score_target`].
    LogProb,
    /// Token F1 of a greedy generation against the answer.
    F1,
}

/// One (question, context, answer) triple for order estimation.
#[derive(Debug, Clone)]
pub struct OrderSample {
    pub question: String,
    pub context: ContextSpec,
    pub answer: String,
}

/// Estimate the order the model prefers: the argmax over all k! orders of the
/// mean per-sample score with the supporting documents rebuilt in that order
/// (noise positions held fixed). Ties resolve to the lexicographically
/// smallest order. The expectation over noise is approximated by the sample
/// mean over the provided triples.
pub fn estimate_optimal_order(
    samples: &[OrderSample],
    model: &dyn Model,
    scorer: OrderScorer,
) -> Result<OrderPermutation, ModelError> {
    let Some(first) = samples.first() else {
        return Err(ModelError::InvalidInput("no samples".into()));
    };
    let k = first.context.k();
    if let Some(bad) = samples.iter().find(|s| s.context.k() != k) {
        return Err(ModelError::InvalidInput(format!(
            "mixed hop counts: expected k = {k}, found k = {}",
            bad.context.k()
        )));
    }
    if scorer == OrderScorer::LogProb && !model.supports(Capability::ScoreTarget) {
        return Err(ModelError::Capability(format!(
            "model '{}' cannot score targets; use the F1 scorer",
            model.name()
        )));
    }
    let plan = PromptPlan::new(TemplateKind::QaBase, 1);
    let mut best: Option<(OrderPermutation, f64)> = None;
    for sigma in enumerate_orders(k)? {
        let mut total = 0.0;
        for sample in samples {
            let ctx = reorder_supporting(&sample.context, &sigma)?;
            let messages = render_qa_prompt(&sample.question, &ctx, &plan)?;
            total += match scorer {
                OrderScorer::LogProb => model.score_target(&messages, &sample.answer)?,
                OrderScorer::F1 => {
                    let generated = model.generate(&messages, 64, 0.0)?;
                    score_qa(&generated.text, std::slice::from_ref(&sample.answer)).f1
                }
            };
        }
        let mean = total / samples.len() as f64;
        // strict comparison keeps the earlier (lexicographically smaller) order on ties
        if best.as_ref().is_none_or(|(_, best_mean)| mean > *best_mean) {
            best = Some((sigma, mean));
        }
    }
    Ok(best.expect("at least one order").0)
}
