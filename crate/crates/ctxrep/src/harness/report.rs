//! Grouped aggregation of record files into an aligned table and CSV.
//!
//! CSV columns, in order: `group_key, group, count, errors, mean_f1,
//! accuracy, mean_logprob`. Means are over non-error records; absent metrics
//! leave the cell empty.

use super::{HarnessError, RunRecord};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupKey {
    KHat,
    HopCount,
    Template,
    Sigma,
    Offset,
    Model,
    Style,
    Seed,
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            GroupKey::KHat => "k_hat",
            GroupKey::HopCount => "hop_count",
            GroupKey::Template => "template",
            GroupKey::Sigma => "sigma",
            GroupKey::Offset => "offset",
            GroupKey::Model => "model",
            GroupKey::Style => "style",
            GroupKey::Seed => "seed",
        };
        f.write_str(s)
    }
}

impl FromStr for GroupKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k_hat" => Ok(GroupKey::KHat),
            "hop_count" => Ok(GroupKey::HopCount),
            "template" => Ok(GroupKey::Template),
            "sigma" => Ok(GroupKey::Sigma),
            "offset" => Ok(GroupKey::Offset),
            "model" => Ok(GroupKey::Model),
            "style" => Ok(GroupKey::Style),
            "seed" => Ok(GroupKey::Seed),
            other => Err(format!(
                "unknown group key '{other}'; expected one of k_hat, hop_count, template, sigma, offset, model, style, seed"
            )),
        }
    }
}

fn group_label(record: &RunRecord, key: GroupKey) -> String {
    match key {
        GroupKey::KHat => record.condition.k_hat.to_string(),
        GroupKey::HopCount => record
            .hop_count
            .map_or_else(|| "unknown".into(), |h| h.to_string()),
        GroupKey::Template => record.condition.template.to_string(),
        GroupKey::Sigma => record.condition.sigma.as_ref().map_or_else(
            || "none".into(),
            |s| {
                let parts: Vec<String> = s.iter().map(|v| v.to_string()).collect();
                format!("({})", parts.join(","))
            },
        ),
        GroupKey::Offset => record
            .condition
            .offset
            .map_or_else(|| "none".into(), |o| o.to_string()),
        GroupKey::Model => record.model_name.clone(),
        GroupKey::Style => record.condition.repetition_style.to_string(),
        GroupKey::Seed => record.condition.seed.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReportRow {
    pub group: String,
    pub count: usize,
    pub errors: usize,
    pub mean_f1: Option<f64>,
    pub accuracy: Option<f64>,
    pub mean_logprob: Option<f64>,
}

/// Group records and compute per-group means. Rows come back sorted by group
/// label, numerically when every label parses as a number.
pub fn report(records: &[RunRecord], key: GroupKey) -> Vec<ReportRow> {
    let mut grouped: BTreeMap<String, Vec<&RunRecord>> = BTreeMap::new();
    for record in records {
        grouped
            .entry(group_label(record, key))
            .or_default()
            .push(record);
    }
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let mut rows: Vec<ReportRow> = grouped
        .into_iter()
        .map(|(group, rows)| {
            let ok: Vec<&&RunRecord> = rows.iter().filter(|r| r.error.is_none()).collect();
            ReportRow {
                group,
                count: rows.len(),
                errors: rows.len() - ok.len(),
                mean_f1: mean(ok.iter().filter_map(|r| r.f1).collect()),
                accuracy: mean(
                    ok.iter()
                        .filter_map(|r| r.exact_match.map(|b| if b { 1.0 } else { 0.0 }))
                        .collect(),
                ),
                mean_logprob: mean(ok.iter().filter_map(|r| r.logprob_score).collect()),
            }
        })
        .collect();
    let all_numeric = rows.iter().all(|r| r.group.parse::<f64>().is_ok());
    if all_numeric {
        rows.sort_by(|a, b| {
            a.group
                .parse::<f64>()
                .unwrap()
                .total_cmp(&b.group.parse::<f64>().unwrap())
        });
    }
    rows
}

/// Write rows as CSV with the documented stable columns.
pub fn write_csv<W: Write>(
    rows: &[ReportRow],
    key: GroupKey,
    writer: W,
) -> Result<(), HarnessError> {
    let mut csv = csv::Writer::from_writer(writer);
    csv.write_record([
        "group_key",
        "group",
        "count",
        "errors",
        "mean_f1",
        "accuracy",
        "mean_logprob",
    ])
    .map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    let cell = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
    for row in rows {
        csv.write_record([
            key.to_string(),
            row.group.clone(),
            row.count.to_string(),
            row.errors.to_string(),
            cell(row.mean_f1),
            cell(row.accuracy),
            cell(row.mean_logprob),
        ])
        .map_err(|e| HarnessError::Config(format!("csv: {e}")))?;
    }
    csv.flush()?;
    Ok(())
}

/// Render rows as an aligned text table.
pub fn format_table(rows: &[ReportRow], key: GroupKey) -> String {
    let headers = [
        key.to_string(),
        "count".into(),
        "errors".into(),
        "mean_f1".into(),
        "accuracy".into(),
        "mean_logprob".into(),
    ];
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
    let body: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.group.clone(),
                r.count.to_string(),
                r.errors.to_string(),
                cell(r.mean_f1),
                cell(r.accuracy),
                cell(r.mean_logprob),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in &body {
        for (i, value) in row.iter().enumerate() {
            widths[i] = widths[i].max(value.len());
        }
    }
    let render = |cells: &[String]| {
        cells
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:>width$}", width = widths[i]))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = render(&headers);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    for row in &body {
        out.push('\n');
        out.push_str(&render(row));
    }
    out.push('\n');
    out
}
