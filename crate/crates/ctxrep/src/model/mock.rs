//! Deterministic mock reasoner: a single-register backward-chaining reader
//! over the synthetic chain facts.
//!
//! The reader scans all rendered context occurrences left to right as one
//! stream and keeps exactly one sought value, initially the queried element.
//! Whenever a fact states "a is positioned immediately before sought" the
//! register moves back one hop. Because the round-robin rendering places each
//! needed fact before the fact that triggers it, at most one hop resolves per
//! pass over the context, so the reader succeeds exactly when the context is
//! presented at least n-1 times (or already ordered along the chain).

use super::{Capability, GenerationResult, Model, ModelError};
use crate::prompt::ChatMessage;
use std::time::Instant;

#[derive(Debug, Clone)]
pub struct MockConfig {
    pub name: String,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            name: "mock-chain-reader".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct MockChainReader {
    config: MockConfig,
}

impl MockChainReader {
    pub fn new(config: MockConfig) -> Self {
        MockChainReader { config }
    }
}

const FACT_PHRASE: &str = " is positioned immediately before ";
const QUERY_PHRASE: &str = "that contains ";

fn digits_before(text: &str, end: usize) -> Option<u32> {
    let bytes = text.as_bytes();
    let mut start = end;
    while start > 0 && bytes[start - 1].is_ascii_digit() {
        start -= 1;
    }
    if start == end {
        return None;
    }
    text[start..end].parse().ok()
}

fn digits_after(text: &str, start: usize) -> Option<u32> {
    let bytes = text.as_bytes();
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return None;
    }
    text[start..end].parse().ok()
}

/// Run the single-register reader over a rendered prompt and return the value
/// it would answer: the resolved head element, or "unknown" when the register
/// is still mid-chain after the full stream.
pub fn mock_chain_read(
    _config: &MockConfig,
    messages: &[ChatMessage],
) -> Result<String, ModelError> {
    if messages.is_empty() {
        return Err(ModelError::EmptyMessages);
    }
    let stream: String = messages
        .iter()
        .map(|m| m.content.as_str())
        .collect::<Vec<_>>()
        .join("\n");

    let query_at = stream.find(QUERY_PHRASE).ok_or_else(|| {
        ModelError::MockParse("no question of the form 'that contains <value>?' found".into())
    })?;
    let query = digits_after(&stream, query_at + QUERY_PHRASE.len()).ok_or_else(|| {
        ModelError::MockParse("question does not name an integer query element".into())
    })?;

    let mut facts: Vec<(u32, u32)> = Vec::new();
    let mut search_from = 0;
    while let Some(found) = stream[search_from..].find(FACT_PHRASE) {
        let at = search_from + found;
        let before = digits_before(&stream, at);
        let after = digits_after(&stream, at + FACT_PHRASE.len());
        if let (Some(a), Some(b)) = (before, after) {
            facts.push((a, b));
        }
        search_from = at + FACT_PHRASE.len();
    }
    if facts.is_empty() {
        return Err(ModelError::MockParse(
            "no chain facts found in prompt".into(),
        ));
    }

    let mut sought = query;
    for &(a, b) in &facts {
        if b == sought {
            sought = a;
        }
    }
    if facts.iter().any(|&(_, b)| b == sought) {
        Ok("unknown".into())
    } else {
        Ok(sought.to_string())
    }
}

impl Model for MockChainReader {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn supports(&self, _capability: Capability) -> bool {
        true
    }

    fn generate(
        &self,
        messages: &[ChatMessage],
        _max_tokens: u32,
        _temperature: f64,
    ) -> Result<GenerationResult, ModelError> {
        let started = Instant::now();
        let answer = mock_chain_read(&self.config, messages)?;
        Ok(GenerationResult {
            text: format!("Answer: {answer}"),
            finish_reason: "stop".into(),
            token_logprobs: None,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }

    fn score_target(&self, messages: &[ChatMessage], target: &str) -> Result<f64, ModelError> {
        if target.trim().is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        let answer = mock_chain_read(&self.config, messages)?;
        // calibrated two-level score: resolved answers sit strictly above
        // anything else
        Ok(if answer == target.trim() { 0.0 } else { -1.0 })
    }
}
