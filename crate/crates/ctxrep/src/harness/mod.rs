//! Experiment orchestration: dataset ingestion, condition expansion, model
//! calls, scoring, aggregation, and JSONL persistence.

pub mod ingest;
pub mod records;
pub mod report;
pub mod studies;

pub use records::{prompt_hash, read_records, Condition, RecordWriter, RunRecord};

use crate::context::{build_context, ContextError, ContextSpec, Document, OrderPermutation};
use crate::model::{Model, ModelError};
use crate::prompt::{
    render_cot_prompts, render_qa_prompt, render_synthetic_prompt, render_user_role_prompt,
    ChatMessage, PromptError, PromptPlan, RepetitionStyle, TemplateKind,
};
use crate::scoring::{score_qa, score_synthetic};
use crate::synthetic::{ChainError, SyntheticSample};
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("ingest error at line {line}: {reason}")]
    Ingest { line: usize, reason: String },
    #[error("invalid sample '{sample_id}': {reason}")]
    Validation { sample_id: String, reason: String },
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("records file line {line}: {reason}")]
    Records { line: usize, reason: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// A multi-hop QA sample: gold answer aliases plus hop-indexed supporting
/// documents and distractors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QaSample {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    pub supporting: Vec<Document>,
    pub noisy: Vec<Document>,
    pub hop_count: usize,
}

impl QaSample {
    pub fn new(
        id: String,
        question: String,
        answers: Vec<String>,
        supporting: Vec<Document>,
        noisy: Vec<Document>,
    ) -> Result<Self, HarnessError> {
        let fail = |reason: String| HarnessError::Validation {
            sample_id: id.clone(),
            reason,
        };
        if question.trim().is_empty() {
            return Err(fail("question is empty".into()));
        }
        if answers.is_empty() || answers.iter().all(|a| a.trim().is_empty()) {
            return Err(fail("no gold answers".into()));
        }
        if supporting.is_empty() {
            return Err(fail("no supporting documents".into()));
        }
        let mut hops: Vec<usize> = Vec::new();
        for doc in &supporting {
            match (doc.role, doc.hop_index) {
                (crate::context::Role::Supporting, Some(h)) => hops.push(h),
                _ => {
                    return Err(fail(format!(
                        "document '{}' is not a hop-indexed supporting document",
                        doc.id
                    )))
                }
            }
        }
        hops.sort_unstable();
        if hops.iter().enumerate().any(|(i, &h)| h != i + 1) {
            return Err(fail(format!(
                "hop indices must be exactly 1..={}, found {hops:?}",
                supporting.len()
            )));
        }
        if let Some(bad) = noisy.iter().find(|d| d.role != crate::context::Role::Noisy) {
            return Err(fail(format!(
                "document '{}' in the noisy set is not noisy",
                bad.id
            )));
        }
        let hop_count = supporting.len();
        Ok(QaSample {
            id,
            question,
            answers,
            supporting,
            noisy,
            hop_count,
        })
    }

    /// Derive a QA sample from a synthetic chain sample: each fact of the
    /// queried list becomes a supporting document, ordered so hop 1 holds the
    /// fact containing the queried element (the first backward step). Facts
    /// of the other lists become noisy documents.
    pub fn from_synthetic(sample: &SyntheticSample) -> Result<Self, HarnessError> {
        use crate::synthetic::fact_line;
        let target = &sample.lists[sample.target_list];
        let n = target.elements.len();
        let k = n - 1;
        let supporting: Vec<Document> = (1..=k)
            .map(|hop| {
                let j = n - 1 - hop;
                Document::supporting(
                    format!("{}-hop{hop}", sample.sample_id),
                    fact_line(target.list_id, target.elements[j], target.elements[j + 1]),
                    hop,
                )
            })
            .collect::<Result<_, _>>()?;
        let mut noisy = Vec::new();
        for (li, list) in sample.lists.iter().enumerate() {
            if li == sample.target_list {
                continue;
            }
            for j in 0..list.elements.len() - 1 {
                noisy.push(Document::noisy(
                    format!("{}-l{}f{}", sample.sample_id, list.list_id, j),
                    fact_line(list.list_id, list.elements[j], list.elements[j + 1]),
                )?);
            }
        }
        QaSample::new(
            sample.sample_id.clone(),
            sample.question_line.clone(),
            vec![sample.oracle_answer.to_string()],
            supporting,
            noisy,
        )
    }

    /// Supporting documents in gold order.
    pub fn gold_supporting(&self) -> Vec<Document> {
        let mut docs = self.supporting.clone();
        docs.sort_by_key(|d| d.hop_index);
        docs
    }

    /// Assemble this sample's context: supporting documents in gold order,
    /// noise interleaved under the given seed.
    pub fn build_context(&self, seed: u64) -> Result<ContextSpec, HarnessError> {
        let sigma = OrderPermutation::identity(self.hop_count)?;
        Ok(build_context(
            &self.gold_supporting(),
            &self.noisy,
            &sigma,
            seed,
        )?)
    }
}

/// A dataset accepted by the harness.
#[derive(Debug, Clone)]
pub enum EvalDataset {
    Synthetic(Vec<SyntheticSample>),
    Qa(Vec<QaSample>),
}

impl EvalDataset {
    pub fn len(&self) -> usize {
        match self {
            EvalDataset::Synthetic(s) => s.len(),
            EvalDataset::Qa(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// The gold answer a job is scored against.
#[derive(Debug, Clone)]
pub enum Gold {
    Aliases(Vec<String>),
    Int(u32),
}

/// How a job's prompt is produced.
#[derive(Debug, Clone)]
pub enum JobPrompt {
    /// A fixed message sequence, generated once.
    Single(Vec<ChatMessage>),
    /// Chain-of-thought: a reasoning call followed by an extraction call that
    /// embeds the reasoning. The prompt hash covers the reasoning prompt.
    CotTwoPhase {
        question: String,
        context: ContextSpec,
        k_hat: usize,
    },
}

/// One unit of model work.
#[derive(Debug, Clone)]
pub struct EvalJob {
    pub sample_id: String,
    pub condition: Condition,
    pub hop_count: Option<usize>,
    pub prompt: JobPrompt,
    pub gold: Gold,
    /// Also record the mean target log-probability for this string.
    pub logprob_target: Option<String>,
}

/// Execution knobs shared by every harness entry point.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub concurrency: usize,
    pub max_tokens: u32,
    pub temperature: f64,
    pub seed: u64,
    pub out_path: Option<PathBuf>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            concurrency: 4,
            max_tokens: 64,
            temperature: 0.0,
            seed: 0,
            out_path: None,
        }
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

fn run_job(job: &EvalJob, model: &dyn Model, opts: &RunOptions) -> RunRecord {
    let timestamp_ms = now_ms();
    let mut record = RunRecord {
        sample_id: job.sample_id.clone(),
        condition: job.condition.clone(),
        model_name: model.name().to_string(),
        prompt_hash: String::new(),
        raw_output: String::new(),
        extracted: String::new(),
        f1: None,
        exact_match: None,
        logprob_score: None,
        hop_count: job.hop_count,
        error: None,
        timestamp_ms,
        latency_ms: 0,
    };
    let outcome = (|| -> Result<(Vec<ChatMessage>, String, u64), HarnessError> {
        match &job.prompt {
            JobPrompt::Single(messages) => {
                let result = model.generate(messages, opts.max_tokens, opts.temperature)?;
                Ok((messages.clone(), result.text, result.latency_ms))
            }
            JobPrompt::CotTwoPhase {
                question,
                context,
                k_hat,
            } => {
                let phase1 = render_cot_prompts(question, context, *k_hat, None)?;
                let reasoning =
                    model.generate(&phase1, opts.max_tokens.max(256), opts.temperature)?;
                let phase2 = render_cot_prompts(question, context, *k_hat, Some(&reasoning.text))?;
                let extraction = model.generate(&phase2, opts.max_tokens, opts.temperature)?;
                Ok((
                    phase1,
                    extraction.text,
                    reasoning.latency_ms + extraction.latency_ms,
                ))
            }
        }
    })();
    match outcome {
        Ok((hash_messages, raw_output, latency_ms)) => {
            record.prompt_hash = prompt_hash(&hash_messages);
            record.latency_ms = latency_ms;
            match &job.gold {
                Gold::Aliases(golds) => {
                    let scored = score_qa(&raw_output, golds);
                    record.extracted = scored.extracted;
                    record.f1 = Some(scored.f1);
                    record.exact_match = Some(scored.exact_match);
                }
                Gold::Int(gold) => {
                    let scored = score_synthetic(&raw_output, *gold);
                    record.extracted = scored.extracted;
                    record.exact_match = Some(scored.exact_match);
                }
            }
            record.raw_output = raw_output;
            if let Some(target) = &job.logprob_target {
                match &job.prompt {
                    JobPrompt::Single(messages) => match model.score_target(messages, target) {
                        Ok(score) => record.logprob_score = Some(score),
                        Err(e) => log::debug!("score_target unavailable: {e}"),
                    },
                    JobPrompt::CotTwoPhase { .. } => {}
                }
            }
        }
        Err(e) => {
            if let JobPrompt::Single(messages) = &job.prompt {
                record.prompt_hash = prompt_hash(messages);
            }
            record.error = Some(e.to_string());
        }
    }
    record
}

/// Run a batch of jobs with sample-level parallelism. Results are appended to
/// `opts.out_path` (when set) in job order, skipping (sample, condition)
/// pairs already present from a previous partial run. Returns the full record
/// set for the batch, previously persisted records included.
pub fn execute_jobs(
    jobs: &[EvalJob],
    model: &dyn Model,
    opts: &RunOptions,
) -> Result<Vec<RunRecord>, HarnessError> {
    let (existing, mut writer) = match &opts.out_path {
        Some(path) => {
            let existing = if path.exists() {
                records::scan_for_resume(path)?.0
            } else {
                Default::default()
            };
            (existing, Some(RecordWriter::append_to(path)?))
        }
        None => (Default::default(), None),
    };

    let todo: Vec<&EvalJob> = jobs
        .iter()
        .filter(|job| !existing.contains(&(job.sample_id.clone(), job.condition.key())))
        .collect();

    let mut fresh: Vec<Option<RunRecord>> = vec![None; todo.len()];
    if !todo.is_empty() {
        let cursor = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel::<(usize, RunRecord)>();
        let workers = opts.concurrency.max(1).min(todo.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                let tx = tx.clone();
                let cursor = &cursor;
                let todo = &todo;
                scope.spawn(move || loop {
                    let index = cursor.fetch_add(1, Ordering::SeqCst);
                    if index >= todo.len() {
                        break;
                    }
                    let record = run_job(todo[index], model, opts);
                    if tx.send((index, record)).is_err() {
                        break;
                    }
                });
            }
            drop(tx);
            for (index, record) in rx {
                fresh[index] = Some(record);
            }
        });
    }

    let fresh: Vec<RunRecord> = fresh
        .into_iter()
        .map(|r| r.expect("job executed"))
        .collect();
    if let Some(writer) = writer.as_mut() {
        for (i, record) in fresh.iter().enumerate() {
            writer.push(i, record.clone())?;
        }
    }
    if let Some(writer) = writer {
        writer.finish()?;
    }

    match &opts.out_path {
        // the file may hold records from other conditions or datasets; hand
        // back only this batch's records (persisted and fresh alike)
        Some(path) => {
            let keys: std::collections::HashSet<(String, String)> = jobs
                .iter()
                .map(|job| (job.sample_id.clone(), job.condition.key()))
                .collect();
            Ok(read_records(path)?
                .into_iter()
                .filter(|r| keys.contains(&r.resume_key()))
                .collect())
        }
        None => Ok(fresh),
    }
}

/// Aggregate view over a record set.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunSummary {
    pub total: usize,
    pub errors: usize,
    pub mean_f1: Option<f64>,
    pub accuracy: Option<f64>,
    /// Mean primary score per hop count, with counts.
    pub by_hop: BTreeMap<usize, (usize, f64)>,
}

/// Mean F1 (QA) or exact-match accuracy (synthetic) with per-hop breakdown.
pub fn summarize_records(records: &[RunRecord]) -> RunSummary {
    let scored: Vec<&RunRecord> = records.iter().filter(|r| r.error.is_none()).collect();
    let errors = records.len() - scored.len();
    let f1_values: Vec<f64> = scored.iter().filter_map(|r| r.f1).collect();
    let em_values: Vec<f64> = scored
        .iter()
        .filter_map(|r| r.exact_match.map(|b| if b { 1.0 } else { 0.0 }))
        .collect();
    let mean = |values: &[f64]| {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let mut by_hop: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for record in &scored {
        let Some(hop) = record.hop_count else {
            continue;
        };
        let score = record
            .f1
            .or(record.exact_match.map(|b| if b { 1.0 } else { 0.0 }));
        if let Some(score) = score {
            let entry = by_hop.entry(hop).or_insert((0, 0.0));
            entry.0 += 1;
            entry.1 += score;
        }
    }
    for entry in by_hop.values_mut() {
        if entry.0 > 0 {
            entry.1 /= entry.0 as f64;
        }
    }
    RunSummary {
        total: records.len(),
        errors,
        mean_f1: mean(&f1_values),
        accuracy: mean(&em_values),
        by_hop,
    }
}

/// Build the evaluation jobs for a dataset under one prompting plan.
pub fn plan_jobs(
    dataset: &EvalDataset,
    plan: &PromptPlan,
    opts: &RunOptions,
) -> Result<Vec<EvalJob>, HarnessError> {
    let condition = Condition::new(plan.template, plan.k_hat, plan.repetition_style, opts.seed);
    let mut jobs = Vec::with_capacity(dataset.len());
    match dataset {
        EvalDataset::Synthetic(samples) => {
            if plan.template != TemplateKind::SyntheticBase {
                return Err(HarnessError::Config(format!(
                    "template {} cannot be used with a synthetic dataset; use synthetic-base",
                    plan.template
                )));
            }
            if plan.repetition_style != RepetitionStyle::Verbatim {
                return Err(HarnessError::Config(
                    "the synthetic template has no repetition-style knob; use verbatim".into(),
                ));
            }
            for sample in samples {
                jobs.push(EvalJob {
                    sample_id: sample.sample_id.clone(),
                    condition: condition.clone(),
                    hop_count: Some(sample.elements_per_list().saturating_sub(1)),
                    prompt: JobPrompt::Single(render_synthetic_prompt(sample, plan.k_hat)?),
                    gold: Gold::Int(sample.oracle_answer),
                    logprob_target: None,
                });
            }
        }
        EvalDataset::Qa(samples) => {
            if plan.repetition_style != RepetitionStyle::Verbatim
                && plan.template != TemplateKind::QaBase
            {
                return Err(HarnessError::Config(
                    "repetition styles apply only to the qa-base template".into(),
                ));
            }
            for (idx, sample) in samples.iter().enumerate() {
                let context = sample.build_context(opts.seed.wrapping_add(idx as u64))?;
                let prompt = match plan.template {
                    TemplateKind::QaBase => {
                        JobPrompt::Single(render_qa_prompt(&sample.question, &context, plan)?)
                    }
                    TemplateKind::QaUserRole => {
                        if plan.k_hat != 2 {
                            return Err(HarnessError::Config(
                                "the user-role template is fixed at k-hat 2".into(),
                            ));
                        }
                        JobPrompt::Single(render_user_role_prompt(&sample.question, &context)?)
                    }
                    TemplateKind::QaCot => JobPrompt::CotTwoPhase {
                        question: sample.question.clone(),
                        context,
                        k_hat: plan.k_hat,
                    },
                    other => {
                        return Err(HarnessError::Config(format!(
                            "template {other} is not an evaluation template for QA datasets"
                        )))
                    }
                };
                jobs.push(EvalJob {
                    sample_id: sample.id.clone(),
                    condition: condition.clone(),
                    hop_count: Some(sample.hop_count),
                    prompt,
                    gold: Gold::Aliases(sample.answers.clone()),
                    logprob_target: None,
                });
            }
        }
    }
    Ok(jobs)
}

/// Evaluate a dataset under one plan: one record per sample, appended to
/// `opts.out_path` when set (resumable), summarized over the whole record
/// set.
pub fn run_eval(
    dataset: &EvalDataset,
    model: &dyn Model,
    plan: &PromptPlan,
    opts: &RunOptions,
) -> Result<RunSummary, HarnessError> {
    let jobs = plan_jobs(dataset, plan, opts)?;
    let records = execute_jobs(&jobs, model, opts)?;
    Ok(summarize_records(&records))
}

/// Read a records file as written by [`execute_jobs`] and verify that each
/// record's prompt hash re-derives from its (sample, condition) pair.
pub fn replay_check(
    dataset: &EvalDataset,
    records_path: &Path,
    opts: &RunOptions,
) -> Result<usize, HarnessError> {
    let records = read_records(records_path)?;
    let mut checked = 0;
    for record in &records {
        if record.error.is_some() {
            continue;
        }
        let plan = PromptPlan {
            template: record.condition.template,
            k_hat: record.condition.k_hat,
            repetition_style: record.condition.repetition_style,
        };
        let sub_opts = RunOptions {
            seed: record.condition.seed,
            ..opts.clone()
        };
        let jobs = plan_jobs(dataset, &plan, &sub_opts)?;
        let job = jobs
            .iter()
            .find(|j| j.sample_id == record.sample_id)
            .ok_or_else(|| {
                HarnessError::Dataset(format!("record for unknown sample '{}'", record.sample_id))
            })?;
        let expected = match &job.prompt {
            JobPrompt::Single(messages) => prompt_hash(messages),
            JobPrompt::CotTwoPhase {
                question,
                context,
                k_hat,
            } => prompt_hash(&render_cot_prompts(question, context, *k_hat, None)?),
        };
        if expected != record.prompt_hash {
            return Err(HarnessError::Dataset(format!(
                "prompt hash mismatch for sample '{}': condition does not re-derive the prompt",
                record.sample_id
            )));
        }
        checked += 1;
    }
    Ok(checked)
}
