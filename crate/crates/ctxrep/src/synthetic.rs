//! Synthetic chained-list task with a deterministic oracle.
//!
//! Each sample holds several lists of globally unique integers. The context
//! states every adjacent pair as a fact line ("X is positioned immediately
//! before Y"), position pair by position pair across lists, so resolving the
//! question (the first element of the list containing a given last element)
//! requires walking the chain right-to-left against the reading order.

use rand::Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::Path;
use thiserror::Error;

/// Elements are drawn from this inclusive range.
pub const ELEMENT_MAX: u32 = 9999;

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("cannot draw {requested} unique integers from 0..={max}")]
    CapacityError { requested: usize, max: u32 },
    #[error("invalid sample {sample_id}: {reason}")]
    InvalidSample { sample_id: String, reason: String },
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("dataset io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {line}: {reason}")]
    Format { line: usize, reason: String },
}

/// One list of chained integers. `list_id` is the label used in fact lines;
/// it is decoupled from storage position so the queried list does not always
/// print first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainList {
    pub list_id: usize,
    pub elements: Vec<u32>,
}

/// A task instance: lists, the queried list, and the pre-rendered textual
/// form. `lists[target_list]` contains `query_element` as its last element
/// and `oracle_answer` as its first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticSample {
    pub sample_id: String,
    pub lists: Vec<ChainList>,
    pub target_list: usize,
    pub query_element: u32,
    pub oracle_answer: u32,
    pub fact_lines: Vec<String>,
    pub question_line: String,
}

/// How list facts are interleaved in the rendered context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactOrder {
    /// Position pair by position pair, lists in label order within each pair.
    /// The canonical rendering; the chain must be walked backwards against it.
    #[default]
    RoundRobin,
    /// All facts of one list before the next. Kept for sensitivity checks.
    GroupedByList,
}

/// Wording of the context header line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HeaderWording {
    /// "described below", the canonical wording.
    #[default]
    DescribedBelow,
    /// "described in the below", a variant wording kept selectable.
    DescribedInTheBelow,
}

/// The header line preceding the fact lines in a rendered context.
pub fn header_line(num_lists: usize, elements_per_list: usize, wording: HeaderWording) -> String {
    match wording {
        HeaderWording::DescribedBelow => {
            format!("All the {num_lists} lists described below contain exactly {elements_per_list} elements.")
        }
        HeaderWording::DescribedInTheBelow => {
            format!("All the {num_lists} lists described in the below contain exactly {elements_per_list} elements.")
        }
    }
}

/// One chain fact.
pub fn fact_line(list_id: usize, before: u32, after: u32) -> String {
    format!("In the list {list_id}, {before} is positioned immediately before {after}.")
}

/// Parse a fact line produced by [`fact_line`].
pub fn parse_fact_line(line: &str) -> Option<(usize, u32, u32)> {
    let rest = line.strip_prefix("In the list ")?;
    let (list_id, rest) = rest.split_once(", ")?;
    let (before, rest) = rest.split_once(" is positioned immediately before ")?;
    let after = rest.strip_suffix('.')?;
    Some((
        list_id.parse().ok()?,
        before.parse().ok()?,
        after.parse().ok()?,
    ))
}

/// The question asked about a sample.
pub fn question_text(query_element: u32) -> String {
    format!("What is the first element of the list that contains {query_element}?")
}

impl SyntheticSample {
    /// Assemble a sample from explicit lists. `target_list` indexes into
    /// `lists`; the question asks for the first element of that list given
    /// its last element.
    pub fn from_lists(
        sample_id: impl Into<String>,
        lists: Vec<ChainList>,
        target_list: usize,
    ) -> Result<Self, ChainError> {
        let sample_id = sample_id.into();
        let target = lists
            .get(target_list)
            .ok_or_else(|| ChainError::InvalidSample {
                sample_id: sample_id.clone(),
                reason: format!("target_list {target_list} out of range"),
            })?;
        let query_element = *target
            .elements
            .last()
            .ok_or_else(|| ChainError::InvalidSample {
                sample_id: sample_id.clone(),
                reason: "target list is empty".into(),
            })?;
        let oracle_answer = target.elements[0];
        let mut sample = SyntheticSample {
            sample_id,
            lists,
            target_list,
            query_element,
            oracle_answer,
            fact_lines: Vec::new(),
            question_line: question_text(query_element),
        };
        sample.fact_lines = render_fact_lines_with(&sample, FactOrder::RoundRobin);
        sample.validate()?;
        Ok(sample)
    }

    pub fn num_lists(&self) -> usize {
        self.lists.len()
    }

    pub fn elements_per_list(&self) -> usize {
        self.lists.first().map_or(0, |l| l.elements.len())
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        let fail = |reason: String| ChainError::InvalidSample {
            sample_id: self.sample_id.clone(),
            reason,
        };
        if self.lists.is_empty() {
            return Err(fail("no lists".into()));
        }
        let n = self.elements_per_list();
        if n < 2 {
            return Err(fail(format!(
                "lists must have at least 2 elements, found {n}"
            )));
        }
        let mut seen = HashSet::new();
        let mut labels = HashSet::new();
        for list in &self.lists {
            if list.elements.len() != n {
                return Err(fail(format!(
                    "list {} has {} elements, expected {n}",
                    list.list_id,
                    list.elements.len()
                )));
            }
            if !labels.insert(list.list_id) {
                return Err(fail(format!("duplicate list label {}", list.list_id)));
            }
            for &e in &list.elements {
                if e > ELEMENT_MAX {
                    return Err(fail(format!("element {e} exceeds {ELEMENT_MAX}")));
                }
                if !seen.insert(e) {
                    return Err(fail(format!("element {e} appears twice")));
                }
            }
        }
        let target = self
            .lists
            .get(self.target_list)
            .ok_or_else(|| ChainError::InvalidSample {
                sample_id: self.sample_id.clone(),
                reason: format!("target_list {} out of range", self.target_list),
            })?;
        if target.elements[n - 1] != self.query_element {
            return Err(fail(
                "query_element is not the last element of the target list".into(),
            ));
        }
        if target.elements[0] != self.oracle_answer {
            return Err(fail(
                "oracle_answer is not the first element of the target list".into(),
            ));
        }
        if self.fact_lines.len() != self.lists.len() * (n - 1) {
            return Err(fail(format!(
                "expected {} fact lines, found {}",
                self.lists.len() * (n - 1),
                self.fact_lines.len()
            )));
        }
        Ok(())
    }
}

/// Render the fact lines of a sample in the canonical round-robin order.
pub fn render_fact_lines(sample: &SyntheticSample) -> Vec<String> {
    render_fact_lines_with(sample, FactOrder::RoundRobin)
}

/// Render fact lines in the requested interleaving. Lists are visited in
/// label order in both modes.
pub fn render_fact_lines_with(sample: &SyntheticSample, order: FactOrder) -> Vec<String> {
    let mut by_label: Vec<&ChainList> = sample.lists.iter().collect();
    by_label.sort_by_key(|l| l.list_id);
    let n = sample.elements_per_list();
    let mut lines = Vec::with_capacity(sample.lists.len() * n.saturating_sub(1));
    match order {
        FactOrder::RoundRobin => {
            for j in 0..n.saturating_sub(1) {
                for list in &by_label {
                    lines.push(fact_line(
                        list.list_id,
                        list.elements[j],
                        list.elements[j + 1],
                    ));
                }
            }
        }
        FactOrder::GroupedByList => {
            for list in &by_label {
                for j in 0..n.saturating_sub(1) {
                    lines.push(fact_line(
                        list.list_id,
                        list.elements[j],
                        list.elements[j + 1],
                    ));
                }
            }
        }
    }
    lines
}

/// The first element of the unique list containing the query element.
pub fn oracle_answer(sample: &SyntheticSample) -> u32 {
    sample.lists[sample.target_list].elements[0]
}

/// Number of left-to-right passes a single-register backward-chaining reader
/// needs on the round-robin rendering: one backward hop resolves per pass
/// because each needed fact precedes the fact that triggers it, so n-1 hops
/// take n-1 passes.
pub fn mock_passes_required(sample: &SyntheticSample) -> usize {
    sample.elements_per_list().saturating_sub(1)
}

/// Deterministic dataset generation. Integers are drawn uniformly without
/// replacement from `0..=ELEMENT_MAX` per sample; list labels are shuffled so
/// the queried list (always stored at index 0) prints at a random position
/// within each fact group.
pub fn generate_dataset(
    num_samples: usize,
    num_lists: usize,
    elements_per_list: usize,
    seed: u64,
) -> Result<Vec<SyntheticSample>, ChainError> {
    if num_samples == 0 || num_lists == 0 {
        return Err(ChainError::InvalidParams(
            "num_samples and num_lists must be positive".into(),
        ));
    }
    if elements_per_list < 2 {
        return Err(ChainError::InvalidParams(
            "elements_per_list must be at least 2".into(),
        ));
    }
    let needed = num_lists * elements_per_list;
    if needed > (ELEMENT_MAX as usize + 1) {
        return Err(ChainError::CapacityError {
            requested: needed,
            max: ELEMENT_MAX,
        });
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(num_samples);
    let mut pool: Vec<u32> = (0..=ELEMENT_MAX).collect();
    for idx in 0..num_samples {
        // partial Fisher-Yates: the first `needed` entries are a uniform draw
        // without replacement
        for i in 0..needed {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        let mut labels: Vec<usize> = (0..num_lists).collect();
        for i in 0..num_lists {
            let j = rng.gen_range(i..num_lists);
            labels.swap(i, j);
        }
        let lists: Vec<ChainList> = (0..num_lists)
            .map(|li| ChainList {
                list_id: labels[li],
                elements: pool[li * elements_per_list..(li + 1) * elements_per_list].to_vec(),
            })
            .collect();
        let sample = SyntheticSample::from_lists(format!("synth-{seed}-{idx:05}"), lists, 0)?;
        samples.push(sample);
    }
    Ok(samples)
}

/// Generation parameters, persisted as the dataset file header line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetParams {
    pub kind: String,
    pub num_samples: usize,
    pub num_lists: usize,
    pub elements_per_list: usize,
    pub seed: u64,
}

pub const DATASET_KIND: &str = "synthetic_dataset";

impl DatasetParams {
    pub fn new(num_samples: usize, num_lists: usize, elements_per_list: usize, seed: u64) -> Self {
        DatasetParams {
            kind: DATASET_KIND.into(),
            num_samples,
            num_lists,
            elements_per_list,
            seed,
        }
    }
}

/// Write a dataset as JSON Lines: a header line with the generation
/// parameters, then one sample per line.
pub fn write_dataset<W: Write>(
    mut w: W,
    params: &DatasetParams,
    samples: &[SyntheticSample],
) -> Result<(), ChainError> {
    let header = serde_json::to_string(params).expect("params serialize");
    writeln!(w, "{header}")?;
    for sample in samples {
        let line = serde_json::to_string(sample).expect("sample serialize");
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn write_dataset_file(
    path: &Path,
    params: &DatasetParams,
    samples: &[SyntheticSample],
) -> Result<(), ChainError> {
    let file = std::fs::File::create(path)?;
    write_dataset(std::io::BufWriter::new(file), params, samples)
}

/// Read a dataset written by [`write_dataset`], validating every sample.
pub fn read_dataset(path: &Path) -> Result<(DatasetParams, Vec<SyntheticSample>), ChainError> {
    let file = std::fs::File::open(path)?;
    let mut lines = std::io::BufReader::new(file).lines();
    let header = lines.next().ok_or(ChainError::Format {
        line: 1,
        reason: "empty file".into(),
    })??;
    let params: DatasetParams = serde_json::from_str(&header).map_err(|e| ChainError::Format {
        line: 1,
        reason: e.to_string(),
    })?;
    if params.kind != DATASET_KIND {
        return Err(ChainError::Format {
            line: 1,
            reason: format!("unexpected dataset kind '{}'", params.kind),
        });
    }
    let mut samples = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let sample: SyntheticSample =
            serde_json::from_str(&line).map_err(|e| ChainError::Format {
                line: i + 2,
                reason: e.to_string(),
            })?;
        sample.validate()?;
        samples.push(sample);
    }
    Ok((params, samples))
}

/// True when a file starts with a synthetic dataset header line.
pub fn is_synthetic_dataset(path: &Path) -> bool {
    let Ok(file) = std::fs::File::open(path) else {
        return false;
    };
    let mut first = String::new();
    if std::io::BufReader::new(file).read_line(&mut first).is_err() {
        return false;
    }
    serde_json::from_str::<DatasetParams>(&first)
        .map(|p| p.kind == DATASET_KIND)
        .unwrap_or(false)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The fixed 2-list instance used across the fixture tests.
    pub(crate) fn two_list_fixture() -> SyntheticSample {
        SyntheticSample::from_lists(
            "fixture-0",
            vec![
                ChainList {
                    list_id: 0,
                    elements: vec![381, 512, 1021],
                },
                ChainList {
                    list_id: 1,
                    elements: vec![7123, 34, 6397],
                },
            ],
            0,
        )
        .unwrap()
    }

    #[test]
    fn fixed_instance_fact_lines_exact() {
        let sample = two_list_fixture();
        assert_eq!(
            sample.fact_lines,
            vec![
                "In the list 0, 381 is positioned immediately before 512.",
                "In the list 1, 7123 is positioned immediately before 34.",
                "In the list 0, 512 is positioned immediately before 1021.",
                "In the list 1, 34 is positioned immediately before 6397.",
            ]
        );
        assert_eq!(
            sample.question_line,
            "What is the first element of the list that contains 1021?"
        );
        assert_eq!(oracle_answer(&sample), 381);
        assert_eq!(sample.query_element, 1021);
    }

    #[test]
    fn single_list_renders_one_line_per_pair() {
        let sample = SyntheticSample::from_lists(
            "s",
            vec![ChainList {
                list_id: 0,
                elements: vec![5, 9],
            }],
            0,
        )
        .unwrap();
        assert_eq!(
            sample.fact_lines,
            vec!["In the list 0, 5 is positioned immediately before 9."]
        );
        assert_eq!(oracle_answer(&sample), 5);
        assert_eq!(mock_passes_required(&sample), 1);
    }

    #[test]
    fn facts_ascend_in_position_within_each_list() {
        let samples = generate_dataset(5, 6, 4, 17).unwrap();
        for sample in &samples {
            for list in &sample.lists {
                let positions: Vec<usize> = sample
                    .fact_lines
                    .iter()
                    .enumerate()
                    .filter_map(|(i, line)| {
                        let (label, _, _) = parse_fact_line(line)?;
                        (label == list.list_id).then_some(i)
                    })
                    .collect();
                assert_eq!(positions.len(), 3);
                assert!(positions.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn generation_shapes_and_uniqueness() {
        let samples = generate_dataset(20, 10, 3, 123).unwrap();
        assert_eq!(samples.len(), 20);
        for sample in &samples {
            assert_eq!(sample.lists.len(), 10);
            let mut seen = HashSet::new();
            for list in &sample.lists {
                assert_eq!(list.elements.len(), 3);
                for &e in &list.elements {
                    assert!(e <= ELEMENT_MAX);
                    assert!(seen.insert(e), "duplicate element {e}");
                }
            }
            assert_eq!(sample.target_list, 0);
            sample.validate().unwrap();
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(5, 6, 3, 7).unwrap();
        let b = generate_dataset(5, 6, 3, 7).unwrap();
        assert_eq!(a, b);
        let fact_bytes_a: Vec<&str> = a
            .iter()
            .flat_map(|s| s.fact_lines.iter().map(|l| l.as_str()))
            .collect();
        let fact_bytes_b: Vec<&str> = b
            .iter()
            .flat_map(|s| s.fact_lines.iter().map(|l| l.as_str()))
            .collect();
        assert_eq!(fact_bytes_a, fact_bytes_b);
        let c = generate_dataset(5, 6, 3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_single_chain() {
        let samples = generate_dataset(1, 1, 2, 0).unwrap();
        let sample = &samples[0];
        assert_eq!(sample.lists.len(), 1);
        assert_eq!(oracle_answer(sample), sample.lists[0].elements[0]);
        assert_eq!(sample.fact_lines.len(), 1);
    }

    #[test]
    fn capacity_guard() {
        assert!(matches!(
            generate_dataset(1, 5001, 2, 0),
            Err(ChainError::CapacityError {
                requested: 10002,
                ..
            })
        ));
        // exactly at capacity is feasible
        assert!(generate_dataset(1, 5000, 2, 0).is_ok());
    }

    #[test]
    fn oracle_matches_brute_force_scan() {
        let samples = generate_dataset(10_000, 6, 3, 99).unwrap();
        for sample in &samples {
            let by_scan = sample
                .lists
                .iter()
                .find(|l| l.elements.contains(&sample.query_element))
                .map(|l| l.elements[0])
                .unwrap();
            assert_eq!(oracle_answer(sample), by_scan);
            assert_eq!(sample.oracle_answer, by_scan);
        }
    }

    #[test]
    fn fact_lines_parse_back_to_lists() {
        let samples = generate_dataset(10, 5, 4, 3).unwrap();
        for sample in &samples {
            let mut rebuilt: std::collections::BTreeMap<usize, Vec<u32>> = Default::default();
            for line in &sample.fact_lines {
                let (label, a, b) = parse_fact_line(line).expect("fact line parses");
                let chain = rebuilt.entry(label).or_default();
                if chain.is_empty() {
                    chain.push(a);
                } else {
                    assert_eq!(*chain.last().unwrap(), a, "facts out of chain order");
                }
                chain.push(b);
            }
            for list in &sample.lists {
                assert_eq!(rebuilt.get(&list.list_id), Some(&list.elements));
            }
        }
    }

    #[test]
    fn passes_required_matches_simulated_reader() {
        // replay the fact stream repeatedly; count passes until the register
        // reaches the head of the target list
        for n in [2usize, 3, 5] {
            let samples = generate_dataset(3, 4, n, n as u64).unwrap();
            for sample in &samples {
                let facts: Vec<(usize, u32, u32)> = sample
                    .fact_lines
                    .iter()
                    .map(|l| parse_fact_line(l).unwrap())
                    .collect();
                let heads: HashSet<u32> = sample.lists.iter().map(|l| l.elements[0]).collect();
                let mut sought = sample.query_element;
                let mut passes = 0;
                while !heads.contains(&sought) {
                    passes += 1;
                    assert!(passes <= n, "reader did not converge");
                    for &(_, a, b) in &facts {
                        if b == sought {
                            sought = a;
                        }
                    }
                }
                assert_eq!(passes, mock_passes_required(sample));
                assert_eq!(sought, sample.oracle_answer);
            }
        }
    }

    #[test]
    fn grouped_rendering_differs_but_same_multiset() {
        let sample = two_list_fixture();
        let grouped = render_fact_lines_with(&sample, FactOrder::GroupedByList);
        assert_eq!(
            grouped,
            vec![
                "In the list 0, 381 is positioned immediately before 512.",
                "In the list 0, 512 is positioned immediately before 1021.",
                "In the list 1, 7123 is positioned immediately before 34.",
                "In the list 1, 34 is positioned immediately before 6397.",
            ]
        );
        let mut a = sample.fact_lines.clone();
        let mut b = grouped;
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn header_wordings() {
        assert_eq!(
            header_line(2, 3, HeaderWording::DescribedBelow),
            "All the 2 lists described below contain exactly 3 elements."
        );
        assert_eq!(
            header_line(2, 3, HeaderWording::DescribedInTheBelow),
            "All the 2 lists described in the below contain exactly 3 elements."
        );
    }

    #[test]
    fn dataset_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("synth.jsonl");
        let params = DatasetParams::new(4, 3, 3, 5);
        let samples = generate_dataset(4, 3, 3, 5).unwrap();
        write_dataset_file(&path, &params, &samples).unwrap();
        assert!(is_synthetic_dataset(&path));
        let (read_params, read_samples) = read_dataset(&path).unwrap();
        assert_eq!(read_params, params);
        assert_eq!(read_samples, samples);
    }

    #[test]
    fn dataset_read_reports_bad_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let params = DatasetParams::new(1, 2, 2, 0);
        let samples = generate_dataset(1, 2, 2, 0).unwrap();
        write_dataset_file(&path, &params, &samples).unwrap();
        let mut content = std::fs::read_to_string(&path).unwrap();
        content.push_str("{not json}\n");
        std::fs::write(&path, content).unwrap();
        match read_dataset(&path) {
            Err(ChainError::Format { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}
