//! QA dataset ingestion: JSON Lines, one sample per line.
//!
//! Line schema:
//! `{"id", "question", "answers": [...], "supporting": [{"title"?, "text", "hop_index"}...], "noisy": [{"title"?, "text"}...]}`

use super::{HarnessError, QaSample};
use crate::context::{Document, Role};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};
use std::path::Path;

#[derive(Serialize, Deserialize)]
struct RawSupporting {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    title: Option<String>,
    text: String,
    hop_index: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct RawNoisy {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    title: Option<String>,
    text: String,
}

#[derive(Serialize, Deserialize)]
struct RawSample {
    id: String,
    question: String,
    answers: Vec<String>,
    supporting: Vec<RawSupporting>,
    #[serde(default)]
    noisy: Vec<RawNoisy>,
}

fn sample_from_raw(raw: RawSample) -> Result<QaSample, HarnessError> {
    let mut supporting = Vec::with_capacity(raw.supporting.len());
    for doc in raw.supporting {
        let hop = doc.hop_index.ok_or_else(|| HarnessError::Validation {
            sample_id: raw.id.clone(),
            reason: "supporting document is missing hop_index".into(),
        })?;
        supporting.push(
            Document::new(
                format!("{}-sup{hop}", raw.id),
                doc.title,
                doc.text,
                Role::Supporting,
                Some(hop),
            )
            .map_err(|e| HarnessError::Validation {
                sample_id: raw.id.clone(),
                reason: e.to_string(),
            })?,
        );
    }
    let mut noisy = Vec::with_capacity(raw.noisy.len());
    for (j, doc) in raw.noisy.into_iter().enumerate() {
        noisy.push(
            Document::new(
                format!("{}-noise{j}", raw.id),
                doc.title,
                doc.text,
                Role::Noisy,
                None,
            )
            .map_err(|e| HarnessError::Validation {
                sample_id: raw.id.clone(),
                reason: e.to_string(),
            })?,
        );
    }
    QaSample::new(raw.id, raw.question, raw.answers, supporting, noisy)
}

/// Parse and validate a QA dataset file.
pub fn ingest_qa_dataset(path: &Path) -> Result<Vec<QaSample>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut samples = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawSample = serde_json::from_str(&line).map_err(|e| HarnessError::Ingest {
            line: i + 1,
            reason: e.to_string(),
        })?;
        samples.push(sample_from_raw(raw)?);
    }
    Ok(samples)
}

/// Write samples in the ingestion format, one JSON line each.
pub fn write_qa_dataset(path: &Path, samples: &[QaSample]) -> Result<(), HarnessError> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    for sample in samples {
        let raw = RawSample {
            id: sample.id.clone(),
            question: sample.question.clone(),
            answers: sample.answers.clone(),
            supporting: sample
                .supporting
                .iter()
                .map(|d| RawSupporting {
                    title: d.title.clone(),
                    text: d.text.clone(),
                    hop_index: d.hop_index,
                })
                .collect(),
            noisy: sample
                .noisy
                .iter()
                .map(|d| RawNoisy {
                    title: d.title.clone(),
                    text: d.text.clone(),
                })
                .collect(),
        };
        let line = serde_json::to_string(&raw).expect("sample serializes");
        writeln!(w, "{line}")?;
    }
    Ok(())
}
