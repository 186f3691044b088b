//! Answer extraction and metrics: token-level F1 for short answers and
//! exact-match accuracy for integer answers.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// A scored model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAnswer {
    pub raw_output: String,
    pub extracted: String,
    pub normalized: String,
    pub f1: f64,
    pub exact_match: bool,
    /// Which gold alias produced the reported F1, when aliases were given.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matched_gold: Option<String>,
}

/// Pull the answer out of a model output: the substring after the last
/// occurrence of "Answer:" (any casing), trimmed of whitespace and trailing
/// periods. Without the marker the whole output is used, trimmed.
pub fn extract_answer(raw_output: &str) -> String {
    const MARKER: &[u8] = b"answer:";
    let bytes = raw_output.as_bytes();
    let mut tail_start = 0;
    if bytes.len() >= MARKER.len() {
        for start in (0..=bytes.len() - MARKER.len()).rev() {
            if bytes[start..start + MARKER.len()].eq_ignore_ascii_case(MARKER) {
                tail_start = start + MARKER.len();
                break;
            }
        }
    }
    raw_output[tail_start..]
        .trim()
        .trim_end_matches('.')
        .trim()
        .to_string()
}

/// SQuAD-style normalization: lowercase, drop punctuation, drop the articles
/// "a", "an", "the" as whole tokens, collapse whitespace.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let depunct: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    depunct
        .split_whitespace()
        .filter(|tok| !matches!(*tok, "a" | "an" | "the"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn token_bag(text: &str) -> HashMap<&str, usize> {
    let mut bag = HashMap::new();
    for tok in text.split_whitespace() {
        *bag.entry(tok).or_insert(0) += 1;
    }
    bag
}

/// Bag-of-tokens F1 over normalized whitespace tokens. Both sides empty
/// scores 1.0; exactly one empty scores 0.0.
pub fn token_f1(prediction: &str, gold: &str) -> f64 {
    let pred_norm = normalize_answer(prediction);
    let gold_norm = normalize_answer(gold);
    let pred_bag = token_bag(&pred_norm);
    let gold_bag = token_bag(&gold_norm);
    let pred_total: usize = pred_bag.values().sum();
    let gold_total: usize = gold_bag.values().sum();
    if pred_total == 0 && gold_total == 0 {
        return 1.0;
    }
    if pred_total == 0 || gold_total == 0 {
        return 0.0;
    }
    let common: usize = pred_bag
        .iter()
        .map(|(tok, &count)| count.min(gold_bag.get(tok).copied().unwrap_or(0)))
        .sum();
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred_total as f64;
    let recall = common as f64 / gold_total as f64;
    2.0 * precision * recall / (precision + recall)
}

/// True iff the first maximal digit run in the extracted answer parses to
/// `gold`. Leading zeros are ignored; no digit run means no match.
pub fn exact_match_int(prediction: &str, gold: u32) -> bool {
    let extracted = extract_answer(prediction);
    let Some(start) = extracted.find(|c: char| c.is_ascii_digit()) else {
        return false;
    };
    let run: &str = extracted[start..]
        .split(|c: char| !c.is_ascii_digit())
        .next()
        .unwrap_or("");
    let trimmed = run.trim_start_matches('0');
    if trimmed.is_empty() {
        return gold == 0;
    }
    trimmed
        .parse::<u64>()
        .map(|v| v == gold as u64)
        .unwrap_or(false)
}

/// Score a QA output against one or more gold aliases: F1 is the max over
/// aliases, exact match is normalized string equality with any alias.
pub fn score_qa(raw_output: &str, golds: &[String]) -> ScoredAnswer {
    let extracted = extract_answer(raw_output);
    let normalized = normalize_answer(&extracted);
    let mut best_f1 = 0.0;
    let mut matched_gold = None;
    let mut exact = false;
    for gold in golds {
        let f1 = token_f1(&extracted, gold);
        if matched_gold.is_none() || f1 > best_f1 {
            best_f1 = f1;
            matched_gold = Some(gold.clone());
        }
        if normalize_answer(gold) == normalized {
            exact = true;
        }
    }
    ScoredAnswer {
        raw_output: raw_output.to_string(),
        extracted,
        normalized,
        f1: best_f1,
        exact_match: exact,
        matched_gold,
    }
}

/// Score a synthetic-task output against the integer oracle. The F1 field
/// mirrors accuracy so aggregation code can treat both tasks uniformly.
pub fn score_synthetic(raw_output: &str, gold: u32) -> ScoredAnswer {
    let extracted = extract_answer(raw_output);
    let normalized = normalize_answer(&extracted);
    let exact = exact_match_int(raw_output, gold);
    ScoredAnswer {
        raw_output: raw_output.to_string(),
        extracted,
        normalized,
        f1: if exact { 1.0 } else { 0.0 },
        exact_match: exact,
        matched_gold: None,
    }
}
