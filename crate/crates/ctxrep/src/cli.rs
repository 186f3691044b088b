//! Command-line interface: dataset generation, evaluation runs, the order /
//! position / repetition / noise studies, and record aggregation.
//!
//! Exit codes: 0 on success, 1 on fatal configuration or ingest errors, 2
//! when the run completed but some records carry per-sample failures.

use clap::{Args, Parser, Subcommand};
use ctxrep::context::OrderPermutation;
use ctxrep::harness::report::{format_table, report as build_report, write_csv, GroupKey};
use ctxrep::harness::studies::{
    default_position_grid, noise_sweep, permutation_study_with_cap, position_sweep,
    repetition_sweep,
};
use ctxrep::harness::{
    ingest, read_records, run_eval, EvalDataset, QaSample, RunOptions, RunSummary,
};
use ctxrep::model::{HttpConfig, ModelHandle, OrderScorer, RetryPolicy};
use ctxrep::prompt::{PromptPlan, RepetitionStyle, TemplateKind};
use ctxrep::synthetic::{self, DatasetParams};
use serde::Deserialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ctxrep",
    version,
    about = "Context repetition experiments for misordered multi-hop contexts"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct GlobalArgs {
    /// Configuration file (TOML or JSON) supplying defaults for these flags
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Model id for HTTP backends, or "mock" for the chain reader
    #[arg(long, global = true)]
    model: Option<String>,
    /// OpenAI-compatible API root, e.g. https://host/v1; selects the HTTP backend
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Environment variable holding the bearer token for the endpoint
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    /// Base seed for noise placement and dataset generation
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of parallel model calls
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Records file (JSON Lines), appended to and resumable
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Audit file receiving every HTTP request and response as JSON Lines
    #[arg(long, global = true)]
    log_io: Option<PathBuf>,
}

#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    seed: Option<u64>,
    concurrency: Option<usize>,
    out: Option<PathBuf>,
    log_io: Option<PathBuf>,
    max_tokens: Option<u32>,
    temperature: Option<f64>,
    supports_logprobs: Option<bool>,
    timeout_secs: Option<u64>,
    retry_max_attempts: Option<u32>,
    retry_initial_backoff_ms: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic chained-list dataset (JSON Lines with a header line)
    GenSynthetic {
        #[arg(long, default_value_t = 1000)]
        num_samples: usize,
        #[arg(long, default_value_t = 10)]
        num_lists: usize,
        #[arg(long, default_value_t = 3)]
        elements_per_list: usize,
    },
    /// Evaluate a dataset under one prompting condition
    Run {
        /// Dataset path; synthetic datasets are recognized by their header line
        #[arg(long)]
        dataset: PathBuf,
        /// Prompt template; defaults to the dataset's base template
        #[arg(long)]
        template: Option<TemplateKind>,
        #[arg(long, default_value_t = 1)]
        k_hat: usize,
        /// verbatim, reverse, or shuffle:SEED (qa-base only)
        #[arg(long, default_value = "verbatim")]
        rep_style: RepetitionStyle,
        #[arg(long)]
        max_tokens: Option<u32>,
        #[arg(long)]
        temperature: Option<f64>,
    },
    /// Score every supporting-document order over a k-hop dataset
    PermuteStudy {
        #[arg(long)]
        dataset: PathBuf,
        /// Distractors drawn per sample (once, reused across orders)
        #[arg(long, default_value_t = 0)]
        num_noisy: usize,
        /// logprob or f1; logprob falls back to f1 without a scoring backend
        #[arg(long, default_value = "logprob")]
        scorer: String,
        /// Repetition levels to cross with every order
        #[arg(long, value_delimiter = ',', default_value = "1")]
        k_hats: Vec<usize>,
        /// Guard on the hop count (k! orders are enumerated per sample)
        #[arg(long, default_value_t = 5)]
        max_k: usize,
        /// Write the per-order table as CSV
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Shift the supporting block across positions in a padded context
    PositionSweep {
        #[arg(long)]
        dataset: PathBuf,
        /// Context size in documents; default fits the largest offset
        #[arg(long)]
        total_slots: Option<usize>,
        /// Offsets of the supporting block; default 0,2,...,18
        #[arg(long, value_delimiter = ',')]
        offsets: Option<Vec<usize>>,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        k_hats: Vec<usize>,
        /// Order of the supporting block itself, e.g. 2,1 (default gold order)
        #[arg(long, value_delimiter = ',')]
        block_sigma: Option<Vec<usize>>,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Evaluate k-hat = 1..max+1 and report the score curve
    RepetitionSweep {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value_t = 10)]
        max_repetitions: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Repetition curves across distractor-list counts
    NoiseSweep {
        #[arg(long, value_delimiter = ',', default_value = "6,3,1")]
        list_counts: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        elements_per_list: usize,
        #[arg(long, default_value_t = 10)]
        max_repetitions: usize,
        #[arg(long, default_value_t = 100)]
        samples_per_cell: usize,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Aggregate a records file into a table and CSV
    Report {
        #[arg(long)]
        records: PathBuf,
        /// k_hat, hop_count, template, sigma, offset, model, style, or seed
        #[arg(long)]
        group_by: String,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

struct Settings {
    model: String,
    endpoint: Option<String>,
    api_key_env: Option<String>,
    seed: u64,
    concurrency: usize,
    out: Option<PathBuf>,
    log_io: Option<PathBuf>,
    max_tokens: u32,
    temperature: f64,
    supports_logprobs: bool,
    timeout_secs: u64,
    retry: RetryPolicy,
}

fn load_file_config(path: &Path) -> anyhow::Result<FileConfig> {
    let text = std::fs::read_to_string(path)?;
    let by_ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let parsed = match by_ext {
        "json" => serde_json::from_str(&text)?,
        "toml" => toml::from_str(&text)?,
        _ => match toml::from_str(&text) {
            Ok(config) => config,
            Err(toml_err) => serde_json::from_str(&text).map_err(|json_err| {
                anyhow::anyhow!("config is neither TOML ({toml_err}) nor JSON ({json_err})")
            })?,
        },
    };
    Ok(parsed)
}

fn resolve_settings(global: &GlobalArgs) -> anyhow::Result<Settings> {
    let file = match &global.config {
        Some(path) => load_file_config(path)?,
        None => FileConfig::default(),
    };
    let mut retry = RetryPolicy::default();
    if let Some(attempts) = file.retry_max_attempts {
        retry.max_attempts = attempts;
    }
    if let Some(backoff) = file.retry_initial_backoff_ms {
        retry.initial_backoff_ms = backoff;
    }
    Ok(Settings {
        model: global
            .model
            .clone()
            .or(file.model)
            .unwrap_or_else(|| "mock".into()),
        endpoint: global.endpoint.clone().or(file.endpoint),
        api_key_env: global.api_key_env.clone().or(file.api_key_env),
        seed: global.seed.or(file.seed).unwrap_or(0),
        concurrency: global.concurrency.or(file.concurrency).unwrap_or(4),
        out: global.out.clone().or(file.out),
        log_io: global.log_io.clone().or(file.log_io),
        max_tokens: file.max_tokens.unwrap_or(64),
        temperature: file.temperature.unwrap_or(0.0),
        supports_logprobs: file.supports_logprobs.unwrap_or(false),
        timeout_secs: file.timeout_secs.unwrap_or(120),
        retry,
    })
}

fn build_model(settings: &Settings) -> anyhow::Result<ModelHandle> {
    match &settings.endpoint {
        Some(endpoint) => {
            if settings.model == "mock" {
                anyhow::bail!(
                    "--endpoint was given but --model names the mock backend; pass a model id"
                );
            }
            let config = HttpConfig {
                endpoint: endpoint.clone(),
                model_id: settings.model.clone(),
                api_key_env: settings.api_key_env.clone(),
                supports_logprobs: settings.supports_logprobs,
                retry: settings.retry.clone(),
                timeout_secs: settings.timeout_secs,
                log_io: settings.log_io.clone(),
            };
            Ok(ModelHandle::http(config)?)
        }
        None => {
            if settings.model != "mock" {
                anyhow::bail!(
                    "model '{}' needs an --endpoint; only the mock backend runs locally",
                    settings.model
                );
            }
            Ok(ModelHandle::mock())
        }
    }
}

fn run_options(
    settings: &Settings,
    max_tokens: Option<u32>,
    temperature: Option<f64>,
) -> RunOptions {
    RunOptions {
        concurrency: settings.concurrency,
        max_tokens: max_tokens.unwrap_or(settings.max_tokens),
        temperature: temperature.unwrap_or(settings.temperature),
        seed: settings.seed,
        out_path: settings.out.clone(),
    }
}

/// Read a dataset, recognizing synthetic files by their header line.
fn load_dataset(path: &Path) -> anyhow::Result<EvalDataset> {
    if synthetic::is_synthetic_dataset(path) {
        let (_, samples) = synthetic::read_dataset(path)?;
        Ok(EvalDataset::Synthetic(samples))
    } else {
        Ok(EvalDataset::Qa(ingest::ingest_qa_dataset(path)?))
    }
}

/// Load a dataset as QA samples, deriving them from synthetic chains when
/// needed (each fact of the queried list becomes a hop-indexed document).
fn load_qa_samples(path: &Path) -> anyhow::Result<Vec<QaSample>> {
    match load_dataset(path)? {
        EvalDataset::Qa(samples) => Ok(samples),
        EvalDataset::Synthetic(samples) => Ok(samples
            .iter()
            .map(QaSample::from_synthetic)
            .collect::<Result<_, _>>()?),
    }
}

fn print_summary(summary: &RunSummary) {
    println!("samples: {}  errors: {}", summary.total, summary.errors);
    if let Some(f1) = summary.mean_f1 {
        println!("mean F1: {f1:.4}");
    }
    if let Some(acc) = summary.accuracy {
        println!("accuracy: {acc:.4}");
    }
    if !summary.by_hop.is_empty() {
        println!("per hop count:");
        for (hop, (count, mean)) in &summary.by_hop {
            println!("  {hop}-hop  n={count}  score={mean:.4}");
        }
    }
}

fn write_csv_file(path: &Path, rows: &[impl serde::Serialize]) -> anyhow::Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

fn exit_for_errors(errors: usize) -> ExitCode {
    if errors > 0 {
        eprintln!("{errors} record(s) carry per-sample failures");
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let settings = resolve_settings(&cli.global)?;
    match cli.command {
        Command::GenSynthetic {
            num_samples,
            num_lists,
            elements_per_list,
        } => {
            let out = settings
                .out
                .clone()
                .ok_or_else(|| anyhow::anyhow!("gen-synthetic needs --out for the dataset file"))?;
            let samples = synthetic::generate_dataset(
                num_samples,
                num_lists,
                elements_per_list,
                settings.seed,
            )?;
            let params =
                DatasetParams::new(num_samples, num_lists, elements_per_list, settings.seed);
            synthetic::write_dataset_file(&out, &params, &samples)?;
            println!(
                "wrote {num_samples} samples ({num_lists} lists x {elements_per_list} elements, seed {}) to {}",
                settings.seed,
                out.display()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Run {
            dataset,
            template,
            k_hat,
            rep_style,
            max_tokens,
            temperature,
        } => {
            let model = build_model(&settings)?;
            let data = load_dataset(&dataset)?;
            let template = template.unwrap_or(match &data {
                EvalDataset::Synthetic(_) => TemplateKind::SyntheticBase,
                EvalDataset::Qa(_) => TemplateKind::QaBase,
            });
            let plan = PromptPlan {
                template,
                k_hat,
                repetition_style: rep_style,
            };
            let opts = run_options(&settings, max_tokens, temperature);
            let summary = run_eval(&data, &model, &plan, &opts)?;
            print_summary(&summary);
            Ok(exit_for_errors(summary.errors))
        }
        Command::PermuteStudy {
            dataset,
            num_noisy,
            scorer,
            k_hats,
            max_k,
            csv,
        } => {
            let model = build_model(&settings)?;
            let samples = load_qa_samples(&dataset)?;
            let scorer = match scorer.as_str() {
                "logprob" => OrderScorer::LogProb,
                "f1" => OrderScorer::F1,
                other => anyhow::bail!("unknown scorer '{other}'; expected logprob or f1"),
            };
            let opts = run_options(&settings, None, None);
            let study = permutation_study_with_cap(
                &samples, &model, num_noisy, scorer, &k_hats, max_k, &opts,
            )?;
            println!(
                "{}-hop study, {} order groups, scorer: {}",
                study.k,
                study.groups.len(),
                study.scorer_used
            );
            for spread in &study.spreads {
                println!(
                    "k_hat {}: worst {} = {:.4}  mean = {:.4}  best {} = {:.4}",
                    spread.k_hat,
                    OrderPermutation::new(spread.worst_sigma.clone())?.label(),
                    spread.worst,
                    spread.mean,
                    OrderPermutation::new(spread.best_sigma.clone())?.label(),
                    spread.best,
                );
                let spectrum = study.sorted_spectrum(spread.k_hat);
                if spectrum.len() <= 24 {
                    for group in spectrum {
                        println!(
                            "  {}  n={}  score={:.4}",
                            OrderPermutation::new(group.sigma.clone())?.label(),
                            group.count,
                            group.score,
                        );
                    }
                }
            }
            if let Some(path) = csv {
                let mut writer = csv::Writer::from_path(&path)?;
                writer.write_record([
                    "sigma",
                    "k_hat",
                    "count",
                    "mean_f1",
                    "mean_logprob",
                    "score",
                ])?;
                let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
                for group in &study.groups {
                    writer.write_record([
                        OrderPermutation::new(group.sigma.clone())?.label(),
                        group.k_hat.to_string(),
                        group.count.to_string(),
                        cell(group.mean_f1),
                        cell(group.mean_logprob),
                        format!("{:.6}", group.score),
                    ])?;
                }
                writer.flush()?;
                println!("per-order table written to {}", path.display());
            }
            Ok(exit_for_errors(study.errors))
        }
        Command::PositionSweep {
            dataset,
            total_slots,
            offsets,
            k_hats,
            block_sigma,
            csv,
        } => {
            let model = build_model(&settings)?;
            let samples = load_qa_samples(&dataset)?;
            let k = samples.first().map(|s| s.hop_count).unwrap_or(1);
            let (default_slots, default_offsets) = default_position_grid(k);
            let total_slots = total_slots.unwrap_or(default_slots);
            let offsets = offsets.unwrap_or(default_offsets);
            let block_sigma = block_sigma.map(OrderPermutation::new).transpose()?;
            let opts = run_options(&settings, None, None);
            let sweep = position_sweep(
                &samples,
                &model,
                total_slots,
                &offsets,
                &k_hats,
                block_sigma.as_ref(),
                &opts,
            )?;
            println!("offset  k_hat  n      score");
            for cell in &sweep.cells {
                let score = cell.score.map_or_else(|| "-".into(), |s| format!("{s:.4}"));
                println!(
                    "{:>6}  {:>5}  {:>5}  {score}",
                    cell.offset, cell.k_hat, cell.count
                );
            }
            if let Some(path) = csv {
                write_csv_file(&path, &sweep.cells)?;
                println!("sweep written to {}", path.display());
            }
            Ok(exit_for_errors(sweep.errors))
        }
        Command::RepetitionSweep {
            dataset,
            max_repetitions,
            csv,
        } => {
            let model = build_model(&settings)?;
            let data = load_dataset(&dataset)?;
            let opts = run_options(&settings, None, None);
            let curve = repetition_sweep(&data, &model, max_repetitions, &opts)?;
            println!("step  k_hat  n      score");
            for point in &curve.points {
                let score = point
                    .score
                    .map_or_else(|| "-".into(), |s| format!("{s:.4}"));
                println!(
                    "{:>4}  {:>5}  {:>5}  {score}",
                    point.step, point.k_hat, point.count
                );
            }
            if let Some(path) = csv {
                write_csv_file(&path, &curve.points)?;
                println!("curve written to {}", path.display());
            }
            Ok(exit_for_errors(curve.errors))
        }
        Command::NoiseSweep {
            list_counts,
            elements_per_list,
            max_repetitions,
            samples_per_cell,
            csv,
        } => {
            let model = build_model(&settings)?;
            let opts = run_options(&settings, None, None);
            let grid = noise_sweep(
                &model,
                &list_counts,
                elements_per_list,
                max_repetitions,
                samples_per_cell,
                settings.seed,
                &opts,
            )?;
            println!("lists  step  k_hat  n      score");
            for cell in &grid.cells {
                let score = cell.score.map_or_else(|| "-".into(), |s| format!("{s:.4}"));
                println!(
                    "{:>5}  {:>4}  {:>5}  {:>5}  {score}",
                    cell.num_lists, cell.step, cell.k_hat, cell.count
                );
            }
            if let Some(path) = csv {
                write_csv_file(&path, &grid.cells)?;
                println!("grid written to {}", path.display());
            }
            Ok(exit_for_errors(grid.errors))
        }
        Command::Report {
            records,
            group_by,
            csv,
        } => {
            let key: GroupKey = group_by.parse().map_err(|e: String| anyhow::anyhow!(e))?;
            let records = read_records(&records)?;
            let rows = build_report(&records, key);
            print!("{}", format_table(&rows, key));
            if let Some(path) = csv {
                let file = std::fs::File::create(&path)?;
                write_csv(&rows, key, file)?;
                println!("csv written to {}", path.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

pub fn run() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(error) => {
            eprintln!("error: {error:#}");
            ExitCode::from(1)
        }
    }
}
