//! The experiment protocols: exhaustive order studies, position sweeps,
//! repetition sweeps, and the distractor-count grid.

use super::{
    execute_jobs, records::Condition, EvalDataset, EvalJob, Gold, HarnessError, JobPrompt,
    QaSample, RunOptions, RunRecord,
};
use crate::context::{
    build_context, enumerate_orders, reorder_supporting, Document, OrderPermutation,
};
use crate::model::{Capability, Model, OrderScorer};
use crate::prompt::{
    render_qa_prompt, render_synthetic_prompt, PromptPlan, RepetitionStyle, TemplateKind,
};
use crate::synthetic::generate_dataset;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use std::collections::BTreeMap;

/// Default cap on hop count for exhaustive order studies.
pub const DEFAULT_STUDY_MAX_K: usize = 5;

fn common_hop_count(samples: &[QaSample]) -> Result<usize, HarnessError> {
    let Some(first) = samples.first() else {
        return Err(HarnessError::Dataset("no samples".into()));
    };
    let k = first.hop_count;
    if let Some(bad) = samples.iter().find(|s| s.hop_count != k) {
        return Err(HarnessError::Dataset(format!(
            "mixed hop counts: sample '{}' has {} hops, expected {k}",
            bad.id, bad.hop_count
        )));
    }
    Ok(k)
}

fn mean_of(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

fn record_score(record: &RunRecord, scorer: OrderScorer) -> Option<f64> {
    if record.error.is_some() {
        return None;
    }
    match scorer {
        OrderScorer::LogProb => record.logprob_score,
        OrderScorer::F1 => record
            .f1
            .or(record.exact_match.map(|b| if b { 1.0 } else { 0.0 })),
    }
}

/// One (order, k-hat) cell of a permutation study.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SigmaGroup {
    pub sigma: Vec<usize>,
    pub k_hat: usize,
    pub count: usize,
    pub mean_f1: Option<f64>,
    pub mean_logprob: Option<f64>,
    /// The ranking score under the scorer the study actually used.
    pub score: f64,
}

/// Best/worst/mean over all orders at one repetition level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct OrderSpread {
    pub k_hat: usize,
    pub best_sigma: Vec<usize>,
    pub best: f64,
    pub worst_sigma: Vec<usize>,
    pub worst: f64,
    pub mean: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PermutationStudy {
    pub k: usize,
    /// Which scorer produced the ordering; log-probability falls back to F1
    /// when the backend cannot score targets.
    pub scorer_used: &'static str,
    pub groups: Vec<SigmaGroup>,
    pub spreads: Vec<OrderSpread>,
    pub errors: usize,
}

impl PermutationStudy {
    /// Groups of one repetition level, sorted worst to best.
    pub fn sorted_spectrum(&self, k_hat: usize) -> Vec<&SigmaGroup> {
        let mut rows: Vec<&SigmaGroup> = self.groups.iter().filter(|g| g.k_hat == k_hat).collect();
        rows.sort_by(|a, b| {
            a.score
                .total_cmp(&b.score)
                .then_with(|| a.sigma.cmp(&b.sigma))
        });
        rows
    }
}

/// Evaluate every order of the supporting documents. Each sample's noisy
/// documents are drawn once under the run seed and reused across all orders,
/// so relative order is the only varying factor. With several `k_hats` the
/// whole grid is evaluated per order.
pub fn permutation_study(
    samples: &[QaSample],
    model: &dyn Model,
    num_noisy: usize,
    scorer: OrderScorer,
    k_hats: &[usize],
    opts: &RunOptions,
) -> Result<PermutationStudy, HarnessError> {
    permutation_study_with_cap(
        samples,
        model,
        num_noisy,
        scorer,
        k_hats,
        DEFAULT_STUDY_MAX_K,
        opts,
    )
}

/// [`permutation_study`] with an explicit cap on the hop count. Enumeration
/// stays bounded by the context module's own limit regardless of the cap.
pub fn permutation_study_with_cap(
    samples: &[QaSample],
    model: &dyn Model,
    num_noisy: usize,
    scorer: OrderScorer,
    k_hats: &[usize],
    max_k: usize,
    opts: &RunOptions,
) -> Result<PermutationStudy, HarnessError> {
    let k = common_hop_count(samples)?;
    if k > max_k {
        return Err(HarnessError::Config(format!(
            "{k}-hop study would enumerate {k}! orders; the guard stops at {max_k}"
        )));
    }
    let k_hats = if k_hats.is_empty() {
        vec![1]
    } else {
        k_hats.to_vec()
    };
    let scorer_used = match scorer {
        OrderScorer::LogProb if !model.supports(Capability::ScoreTarget) => OrderScorer::F1,
        other => other,
    };
    let want_logprob = model.supports(Capability::ScoreTarget);
    let orders = enumerate_orders(k)?;

    let mut jobs = Vec::new();
    for (idx, sample) in samples.iter().enumerate() {
        let sample_seed = opts.seed.wrapping_add(idx as u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sample_seed);
        let chosen: Vec<Document> = {
            let mut pool: Vec<Document> = sample.noisy.clone();
            pool.shuffle(&mut rng);
            pool.truncate(num_noisy);
            pool
        };
        let identity = OrderPermutation::identity(k)?;
        let base = build_context(&sample.gold_supporting(), &chosen, &identity, sample_seed)?;
        for sigma in &orders {
            let context = reorder_supporting(&base, sigma)?;
            for &k_hat in &k_hats {
                let plan = PromptPlan::new(TemplateKind::QaBase, k_hat);
                let messages = render_qa_prompt(&sample.question, &context, &plan)?;
                let condition = Condition::new(
                    TemplateKind::QaBase,
                    k_hat,
                    RepetitionStyle::Verbatim,
                    opts.seed,
                )
                .with_sigma(sigma.mapping().to_vec());
                jobs.push(EvalJob {
                    sample_id: sample.id.clone(),
                    condition,
                    hop_count: Some(k),
                    prompt: JobPrompt::Single(messages),
                    gold: Gold::Aliases(sample.answers.clone()),
                    logprob_target: want_logprob.then(|| sample.answers[0].clone()),
                });
            }
        }
    }

    let records = execute_jobs(&jobs, model, opts)?;
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let mut cells: BTreeMap<(Vec<usize>, usize), Vec<&RunRecord>> = BTreeMap::new();
    for record in &records {
        if let Some(sigma) = &record.condition.sigma {
            cells
                .entry((sigma.clone(), record.condition.k_hat))
                .or_default()
                .push(record);
        }
    }
    let mut groups = Vec::new();
    for ((sigma, k_hat), rows) in &cells {
        let f1: Vec<f64> = rows
            .iter()
            .filter_map(|r| record_score(r, OrderScorer::F1))
            .collect();
        let lp: Vec<f64> = rows
            .iter()
            .filter_map(|r| record_score(r, OrderScorer::LogProb))
            .collect();
        let score = match scorer_used {
            OrderScorer::LogProb => mean_of(&lp),
            OrderScorer::F1 => mean_of(&f1),
        }
        .unwrap_or(f64::NEG_INFINITY);
        groups.push(SigmaGroup {
            sigma: sigma.clone(),
            k_hat: *k_hat,
            count: rows.len(),
            mean_f1: mean_of(&f1),
            mean_logprob: mean_of(&lp),
            score,
        });
    }
    let mut spreads = Vec::new();
    for &k_hat in &k_hats {
        let rows: Vec<&SigmaGroup> = groups.iter().filter(|g| g.k_hat == k_hat).collect();
        if rows.is_empty() {
            continue;
        }
        let best = rows
            .iter()
            .max_by(|a, b| a.score.total_cmp(&b.score))
            .unwrap();
        let worst = rows
            .iter()
            .min_by(|a, b| a.score.total_cmp(&b.score))
            .unwrap();
        let mean = rows.iter().map(|g| g.score).sum::<f64>() / rows.len() as f64;
        spreads.push(OrderSpread {
            k_hat,
            best_sigma: best.sigma.clone(),
            best: best.score,
            worst_sigma: worst.sigma.clone(),
            worst: worst.score,
            mean,
        });
    }
    Ok(PermutationStudy {
        k,
        scorer_used: match scorer_used {
            OrderScorer::LogProb => "logprob",
            OrderScorer::F1 => "f1",
        },
        groups,
        spreads,
        errors,
    })
}

/// One (offset, k-hat) cell of a position sweep.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PositionCell {
    pub offset: usize,
    pub k_hat: usize,
    pub count: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct PositionSweep {
    pub cells: Vec<PositionCell>,
    pub errors: usize,
}

/// The default sweep geometry: offsets 0, 2, ..., 18 with just enough slots
/// for the largest offset.
pub fn default_position_grid(k: usize) -> (usize, Vec<usize>) {
    let offsets: Vec<usize> = (0..=18).step_by(2).collect();
    (18 + k, offsets)
}

/// Place the supporting documents as one contiguous block (gold order, or
/// `block_sigma` when given) at each offset among noisy filler and score each
/// (offset, k-hat) cell. Samples with fewer distractors than filler slots
/// reuse them cyclically.
pub fn position_sweep(
    samples: &[QaSample],
    model: &dyn Model,
    total_slots: usize,
    offsets: &[usize],
    k_hats: &[usize],
    block_sigma: Option<&OrderPermutation>,
    opts: &RunOptions,
) -> Result<PositionSweep, HarnessError> {
    let k = common_hop_count(samples)?;
    if total_slots < k {
        return Err(HarnessError::Config(format!(
            "total_slots {total_slots} cannot hold {k} supporting documents"
        )));
    }
    let fill = total_slots - k;
    for &offset in offsets {
        if offset > fill {
            return Err(HarnessError::Config(format!(
                "offset {offset} out of range 0..={fill} for total_slots {total_slots}"
            )));
        }
    }
    let k_hats = if k_hats.is_empty() {
        vec![1, 2]
    } else {
        k_hats.to_vec()
    };

    let mut jobs = Vec::new();
    for (idx, sample) in samples.iter().enumerate() {
        let sample_seed = opts.seed.wrapping_add(idx as u64);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(sample_seed);
        if fill > 0 && sample.noisy.is_empty() {
            return Err(HarnessError::Config(format!(
                "sample '{}' has no noisy documents to fill {fill} slots",
                sample.id
            )));
        }
        let mut pool = sample.noisy.clone();
        pool.shuffle(&mut rng);
        let filler: Vec<Document> = (0..fill)
            .map(|slot| {
                let source = &pool[slot % pool.len()];
                if slot < pool.len() {
                    source.clone()
                } else {
                    let mut copy = source.clone();
                    copy.id = format!("{}#r{}", source.id, slot / pool.len());
                    copy
                }
            })
            .collect();
        let mut block = sample.gold_supporting();
        if let Some(sigma) = block_sigma {
            block = crate::context::apply_order(&block, sigma)?;
        }
        for &offset in offsets {
            let mut documents = Vec::with_capacity(total_slots);
            documents.extend(filler[..offset].iter().cloned());
            documents.extend(block.iter().cloned());
            documents.extend(filler[offset..].iter().cloned());
            let context = crate::context::ContextSpec::new(documents)?;
            for &k_hat in &k_hats {
                let plan = PromptPlan::new(TemplateKind::QaBase, k_hat);
                let messages = render_qa_prompt(&sample.question, &context, &plan)?;
                let condition = Condition::new(
                    TemplateKind::QaBase,
                    k_hat,
                    RepetitionStyle::Verbatim,
                    opts.seed,
                )
                .with_offset(offset);
                jobs.push(EvalJob {
                    sample_id: sample.id.clone(),
                    condition,
                    hop_count: Some(k),
                    prompt: JobPrompt::Single(messages),
                    gold: Gold::Aliases(sample.answers.clone()),
                    logprob_target: None,
                });
            }
        }
    }

    let records = execute_jobs(&jobs, model, opts)?;
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let mut cells: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for record in &records {
        if let Some(offset) = record.condition.offset {
            let key = (offset, record.condition.k_hat);
            *counts.entry(key).or_default() += 1;
            if let Some(score) = record_score(record, OrderScorer::F1) {
                cells.entry(key).or_default().push(score);
            }
        }
    }
    let cells = counts
        .iter()
        .map(|(&(offset, k_hat), &count)| PositionCell {
            offset,
            k_hat,
            count,
            score: cells.get(&(offset, k_hat)).and_then(|v| mean_of(v)),
        })
        .collect();
    Ok(PositionSweep { cells, errors })
}

/// One point on a repetition curve. `step` is the number of additional
/// repetitions, `k_hat - 1`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RepetitionPoint {
    pub step: usize,
    pub k_hat: usize,
    pub count: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct RepetitionCurve {
    pub points: Vec<RepetitionPoint>,
    pub errors: usize,
}

/// Evaluate k-hat from 1 to `max_repetitions + 1` and report the score curve
/// (exact-match accuracy for synthetic datasets, mean F1 for QA).
pub fn repetition_sweep(
    dataset: &EvalDataset,
    model: &dyn Model,
    max_repetitions: usize,
    opts: &RunOptions,
) -> Result<RepetitionCurve, HarnessError> {
    let mut jobs = Vec::new();
    for k_hat in 1..=max_repetitions + 1 {
        match dataset {
            EvalDataset::Synthetic(samples) => {
                let condition = Condition::new(
                    TemplateKind::SyntheticBase,
                    k_hat,
                    RepetitionStyle::Verbatim,
                    opts.seed,
                );
                for sample in samples {
                    jobs.push(EvalJob {
                        sample_id: sample.sample_id.clone(),
                        condition: condition.clone(),
                        hop_count: Some(sample.elements_per_list().saturating_sub(1)),
                        prompt: JobPrompt::Single(render_synthetic_prompt(sample, k_hat)?),
                        gold: Gold::Int(sample.oracle_answer),
                        logprob_target: None,
                    });
                }
            }
            EvalDataset::Qa(samples) => {
                let plan = PromptPlan::new(TemplateKind::QaBase, k_hat);
                let condition = Condition::new(
                    TemplateKind::QaBase,
                    k_hat,
                    RepetitionStyle::Verbatim,
                    opts.seed,
                );
                for (idx, sample) in samples.iter().enumerate() {
                    let context = sample.build_context(opts.seed.wrapping_add(idx as u64))?;
                    jobs.push(EvalJob {
                        sample_id: sample.id.clone(),
                        condition: condition.clone(),
                        hop_count: Some(sample.hop_count),
                        prompt: JobPrompt::Single(render_qa_prompt(
                            &sample.question,
                            &context,
                            &plan,
                        )?),
                        gold: Gold::Aliases(sample.answers.clone()),
                        logprob_target: None,
                    });
                }
            }
        }
    }

    let records = execute_jobs(&jobs, model, opts)?;
    let errors = records.iter().filter(|r| r.error.is_some()).count();
    let synthetic = matches!(dataset, EvalDataset::Synthetic(_));
    let mut points = Vec::new();
    for k_hat in 1..=max_repetitions + 1 {
        let rows: Vec<&RunRecord> = records
            .iter()
            .filter(|r| r.condition.k_hat == k_hat)
            .collect();
        let scores: Vec<f64> = rows
            .iter()
            .filter(|r| r.error.is_none())
            .filter_map(|r| {
                if synthetic {
                    r.exact_match.map(|b| if b { 1.0 } else { 0.0 })
                } else {
                    record_score(r, OrderScorer::F1)
                }
            })
            .collect();
        points.push(RepetitionPoint {
            step: k_hat - 1,
            k_hat,
            count: rows.len(),
            score: mean_of(&scores),
        });
    }
    Ok(RepetitionCurve { points, errors })
}

/// One cell of the distractor-count grid.
#[derive(Debug, Clone, serde::Serialize)]
pub struct NoiseCell {
    pub num_lists: usize,
    pub step: usize,
    pub k_hat: usize,
    pub count: usize,
    pub score: Option<f64>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct NoiseGrid {
    pub cells: Vec<NoiseCell>,
    pub errors: usize,
}

/// Generate a synthetic dataset per list count and run a repetition sweep on
/// each, yielding a (list count x repetition step) accuracy grid.
pub fn noise_sweep(
    model: &dyn Model,
    list_counts: &[usize],
    elements_per_list: usize,
    max_repetitions: usize,
    samples_per_cell: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<NoiseGrid, HarnessError> {
    if list_counts.is_empty() {
        return Err(HarnessError::Config("list_counts must be non-empty".into()));
    }
    let mut grid = NoiseGrid {
        cells: Vec::new(),
        errors: 0,
    };
    if samples_per_cell == 0 {
        return Ok(grid);
    }
    for (i, &num_lists) in list_counts.iter().enumerate() {
        let dataset = EvalDataset::Synthetic(generate_dataset(
            samples_per_cell,
            num_lists,
            elements_per_list,
            seed.wrapping_add(i as u64),
        )?);
        let cell_opts = RunOptions {
            seed: seed.wrapping_add(i as u64),
            ..opts.clone()
        };
        let curve = repetition_sweep(&dataset, model, max_repetitions, &cell_opts)?;
        grid.errors += curve.errors;
        for point in curve.points {
            grid.cells.push(NoiseCell {
                num_lists,
                step: point.step,
                k_hat: point.k_hat,
                count: point.count,
                score: point.score,
            });
        }
    }
    Ok(grid)
}
