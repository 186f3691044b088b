//! Run records: one JSON line per (sample, condition, model) evaluation,
//! append-only and resumable.

use super::HarnessError;
use crate::prompt::{ChatMessage, RepetitionStyle, TemplateKind};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, HashSet};
use std::io::{BufRead, Read, Seek, Write};
use std::path::Path;

/// The knobs that, together with the sample, fully determine a prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Condition {
    pub template: TemplateKind,
    pub k_hat: usize,
    pub repetition_style: RepetitionStyle,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sigma: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub offset: Option<usize>,
    pub seed: u64,
}

impl Condition {
    pub fn new(template: TemplateKind, k_hat: usize, style: RepetitionStyle, seed: u64) -> Self {
        Condition {
            template,
            k_hat,
            repetition_style: style,
            sigma: None,
            offset: None,
            seed,
        }
    }

    pub fn with_sigma(mut self, sigma: Vec<usize>) -> Self {
        self.sigma = Some(sigma);
        self
    }

    pub fn with_offset(mut self, offset: usize) -> Self {
        self.offset = Some(offset);
        self
    }

    /// Canonical key used for resume deduplication.
    pub fn key(&self) -> String {
        serde_json::to_string(self).expect("condition serializes")
    }
}

/// One evaluation outcome. `timestamp_ms` and `latency_ms` are the only
/// fields allowed to differ between reruns of the same configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub sample_id: String,
    pub condition: Condition,
    pub model_name: String,
    pub prompt_hash: String,
    pub raw_output: String,
    pub extracted: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub exact_match: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub logprob_score: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hop_count: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub timestamp_ms: u64,
    pub latency_ms: u64,
}

impl RunRecord {
    pub fn resume_key(&self) -> (String, String) {
        (self.sample_id.clone(), self.condition.key())
    }
}

/// SHA-256 of the canonical JSON serialization of a message sequence.
pub fn prompt_hash(messages: &[ChatMessage]) -> String {
    let json = serde_json::to_string(messages).expect("messages serialize");
    let digest = Sha256::digest(json.as_bytes());
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Read every record from a JSONL file. A malformed line is an error naming
/// its line number.
pub fn read_records(path: &Path) -> Result<Vec<RunRecord>, HarnessError> {
    let file = std::fs::File::open(path)?;
    let reader = std::io::BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: RunRecord = serde_json::from_str(&line).map_err(|e| HarnessError::Records {
            line: i + 1,
            reason: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(records)
}

/// Scan an existing records file for resume: returns the set of
/// (sample_id, condition-key) pairs already present and the byte length of
/// the valid prefix. A trailing partial line (interrupted write) is dropped
/// from the valid length so appends restart at a record boundary.
pub fn scan_for_resume(path: &Path) -> Result<(HashSet<(String, String)>, u64), HarnessError> {
    let mut file = std::fs::File::open(path)?;
    let mut content = String::new();
    file.read_to_string(&mut content)?;
    let mut keys = HashSet::new();
    let mut valid_len = 0u64;
    let mut offset = 0usize;
    for segment in content.split_inclusive('\n') {
        let end = offset + segment.len();
        if segment.ends_with('\n') {
            let line = segment.trim_end_matches('\n');
            if !line.trim().is_empty() {
                match serde_json::from_str::<RunRecord>(line) {
                    Ok(record) => {
                        keys.insert(record.resume_key());
                    }
                    Err(e) => {
                        return Err(HarnessError::Records {
                            line: content[..offset].matches('\n').count() + 1,
                            reason: e.to_string(),
                        })
                    }
                }
            }
            valid_len = end as u64;
        }
        offset = end;
    }
    Ok((keys, valid_len))
}

/// Appends records to a file in job order regardless of completion order:
/// out-of-order results wait in a reorder buffer until their predecessors
/// have been written.
pub struct RecordWriter {
    file: std::io::BufWriter<std::fs::File>,
    pending: BTreeMap<usize, RunRecord>,
    next_index: usize,
}

impl RecordWriter {
    /// Open for append, truncating any partial trailing line first.
    pub fn append_to(path: &Path) -> Result<Self, HarnessError> {
        if path.exists() {
            let (_, valid_len) = scan_for_resume(path)?;
            let file = std::fs::OpenOptions::new().write(true).open(path)?;
            file.set_len(valid_len)?;
        }
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)?;
        file.seek(std::io::SeekFrom::End(0))?;
        Ok(RecordWriter {
            file: std::io::BufWriter::new(file),
            pending: BTreeMap::new(),
            next_index: 0,
        })
    }

    /// Submit the result for job `index` (0-based, contiguous).
    pub fn push(&mut self, index: usize, record: RunRecord) -> Result<(), HarnessError> {
        self.pending.insert(index, record);
        while let Some(record) = self.pending.remove(&self.next_index) {
            let line = serde_json::to_string(&record).expect("record serializes");
            writeln!(self.file, "{line}")?;
            self.next_index += 1;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        debug_assert!(self.pending.is_empty(), "records missing before finish");
        self.file.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::ChatMessage;

    fn record(id: &str) -> RunRecord {
        RunRecord {
            sample_id: id.into(),
            condition: Condition::new(TemplateKind::QaBase, 2, RepetitionStyle::Verbatim, 0),
            model_name: "mock".into(),
            prompt_hash: "abc".into(),
            raw_output: "Answer: x".into(),
            extracted: "x".into(),
            f1: Some(1.0),
            exact_match: None,
            logprob_score: None,
            hop_count: Some(2),
            error: None,
            timestamp_ms: 1,
            latency_ms: 0,
        }
    }

    #[test]
    fn prompt_hash_is_stable_and_input_sensitive() {
        let a = vec![ChatMessage::user("hello")];
        let b = vec![ChatMessage::user("hello!")];
        assert_eq!(prompt_hash(&a), prompt_hash(&a));
        assert_ne!(prompt_hash(&a), prompt_hash(&b));
        assert_eq!(prompt_hash(&a).len(), 64);
    }

    #[test]
    fn writer_reorders_out_of_order_results() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut writer = RecordWriter::append_to(&path).unwrap();
        writer.push(2, record("c")).unwrap();
        writer.push(0, record("a")).unwrap();
        writer.push(1, record("b")).unwrap();
        writer.finish().unwrap();
        let records = read_records(&path).unwrap();
        let ids: Vec<&str> = records.iter().map(|r| r.sample_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn resume_scan_drops_partial_trailing_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let mut writer = RecordWriter::append_to(&path).unwrap();
        writer.push(0, record("a")).unwrap();
        writer.finish().unwrap();
        let full_len = std::fs::metadata(&path).unwrap().len();
        let mut content = std::fs::read_to_string(&path).unwrap();
        content.push_str("{\"sample_id\": \"torn");
        std::fs::write(&path, &content).unwrap();
        let (keys, valid_len) = scan_for_resume(&path).unwrap();
        assert_eq!(valid_len, full_len);
        assert!(keys.contains(&record("a").resume_key()));
        // reopening for append repairs the file
        let writer = RecordWriter::append_to(&path).unwrap();
        writer.finish().unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), full_len);
    }

    #[test]
    fn malformed_interior_line_is_an_error_with_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("records.jsonl");
        let line = serde_json::to_string(&record("a")).unwrap();
        std::fs::write(&path, format!("{line}\nnot json\n{line}\n")).unwrap();
        match read_records(&path) {
            Err(HarnessError::Records { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected records error, got {other:?}"),
        }
    }
}
