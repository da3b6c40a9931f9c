//! Report assembly: per-run rate table, per-metric means table and the
//! line-delimited report record.

use std::collections::BTreeMap;

use mars_core::domain::Condition;
use mars_core::evaluator::{fixed, metric_means, AblationReport, Metric, PriceTable, RunEntry};
use mars_core::kernel::TokenUsage;
use num_rational::Ratio;
use serde::Serialize;
use serde_json::json;

pub const REPORT_SCHEMA: &str = "mars-report";

pub const RATES_HEADER: [&str; 9] = [
    "condition",
    "run",
    "status",
    "rate_percent",
    "total_points",
    "failure_modes",
    "prompt_tokens",
    "completion_tokens",
    "cost",
];

/// A run as it appears in reports.
#[derive(Debug, Clone)]
pub struct NamedRun<'a> {
    pub id: &'a str,
    pub entry: &'a RunEntry,
}

fn status(entry: &RunEntry) -> String {
    match &entry.outcome {
        Ok(_) => "ok".to_string(),
        Err(reason) => format!("aborted: {reason}"),
    }
}

fn usage_cells(usage: Option<TokenUsage>, prices: Option<&PriceTable>) -> [String; 3] {
    match usage {
        Some(u) => [
            u.prompt_tokens.to_string(),
            u.completion_tokens.to_string(),
            prices.map(|p| fixed(p.cost(u), 6)).unwrap_or_default(),
        ],
        None => Default::default(),
    }
}

fn mean_total(report: &AblationReport, condition: Condition) -> Option<Ratio<u64>> {
    let totals: Vec<Ratio<u64>> = report.summaries(condition).map(|s| s.total_points).collect();
    (!totals.is_empty()).then(|| totals.iter().sum::<Ratio<u64>>() / Ratio::from_integer(totals.len() as u64))
}

fn condition_usage(runs: &[NamedRun<'_>], condition: Condition) -> Option<TokenUsage> {
    let mut total: Option<TokenUsage> = None;
    for usage in runs.iter().filter(|r| r.entry.condition == condition).filter_map(|r| r.entry.token_usage) {
        total.get_or_insert_with(TokenUsage::default).add(usage);
    }
    total
}

/// One row per run, then a `mean` row per condition carrying the mean
/// rate and total and the summed token usage.
pub fn rates_csv(report: &AblationReport, runs: &[NamedRun<'_>], prices: Option<&PriceTable>) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    out.write_record(RATES_HEADER).expect("in-memory write");
    for run in runs {
        let e = run.entry;
        let (rate, total, modes) = match e.summary() {
            Some(s) => (s.rate_display(), s.total_display(), s.modes_display()),
            None => Default::default(),
        };
        let [p, c, cost] = usage_cells(e.token_usage, prices);
        out.write_record([e.condition.name(), run.id, &status(e), &rate, &total, &modes, &p, &c, &cost])
            .expect("in-memory write");
    }
    for condition in report.conditions() {
        let rate = report.mean_rate(condition).map(|r| fixed(r, 2)).unwrap_or_default();
        let total = mean_total(report, condition).map(|t| fixed(t, 4)).unwrap_or_default();
        let [p, c, cost] = usage_cells(condition_usage(runs, condition), prices);
        out.write_record([condition.name(), "mean", "", &rate, &total, "", &p, &c, &cost]).expect("in-memory write");
    }
    String::from_utf8(out.into_inner().expect("flush")).expect("utf-8")
}

fn signed_delta(from: Ratio<u64>, to: Ratio<u64>, decimals: u32) -> String {
    if to >= from {
        format!("+{}", fixed(to - from, decimals))
    } else {
        format!("-{}", fixed(from - to, decimals))
    }
}

/// Metric rows with one column per condition, a delta column when both
/// conditions ran, and a closing success-rate row.
pub fn metrics_rows(report: &AblationReport) -> Vec<Vec<String>> {
    let conditions = report.conditions();
    let paired = conditions == Condition::BOTH;
    let mut header = vec!["metric".to_string()];
    header.extend(conditions.iter().map(|c| c.name().to_string()));
    if paired {
        header.push("delta".to_string());
    }
    let mut rows = vec![header];
    let mut push = |label: &str, values: BTreeMap<Condition, Ratio<u64>>, decimals: u32| {
        let mut row = vec![label.to_string()];
        row.extend(conditions.iter().map(|c| values.get(c).map(|v| fixed(*v, decimals)).unwrap_or_default()));
        if paired {
            let pair = (values.get(&Condition::Baseline), values.get(&Condition::WithKb));
            row.push(match pair {
                (Some(b), Some(k)) => signed_delta(*b, *k, decimals),
                _ => String::new(),
            });
        }
        rows.push(row);
    };
    for metric in Metric::ALL {
        push(metric.title(), metric_means(report, metric), 4);
    }
    let rates: BTreeMap<Condition, Ratio<u64>> =
        conditions.iter().filter_map(|c| report.mean_rate(*c).map(|r| (*c, r))).collect();
    push("Success Rate (%)", rates, 2);
    rows
}

pub fn metrics_csv(report: &AblationReport) -> String {
    let mut out = csv::Writer::from_writer(Vec::new());
    for row in metrics_rows(report) {
        out.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(out.into_inner().expect("flush")).expect("utf-8")
}

/// Fixed-width rendering of [`metrics_rows`] for the terminal.
pub fn metrics_text(report: &AblationReport) -> String {
    let rows = metrics_rows(report);
    let mut out = String::new();
    for row in rows {
        out.push_str(&format!("{:<22}", row[0]));
        for cell in &row[1..] {
            out.push_str(&format!(" {cell:>9}"));
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct RunRecord<'a> {
    run: &'a str,
    condition: Condition,
    seed: u64,
    status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    rate_percent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    total_points: Option<String>,
    failure_modes: Vec<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    token_usage: Option<TokenUsage>,
}

pub fn report_jsonl(report: &AblationReport, runs: &[NamedRun<'_>]) -> String {
    let mut lines = vec![json!({ "schema": REPORT_SCHEMA, "version": crate::jsonl::SCHEMA_VERSION }).to_string()];
    for run in runs {
        let e = run.entry;
        let summary = e.summary();
        let record = RunRecord {
            run: run.id,
            condition: e.condition,
            seed: e.seed,
            status: status(e),
            rate_percent: summary.map(|s| s.rate_display()),
            total_points: summary.map(|s| s.total_display()),
            failure_modes: summary.map(|s| s.failure_modes.iter().map(|m| m.name()).collect()).unwrap_or_default(),
            token_usage: e.token_usage,
        };
        lines.push(serde_json::to_string(&record).expect("record serializes"));
    }
    let named = |values: BTreeMap<Condition, Ratio<u64>>, decimals: u32| -> BTreeMap<String, String> {
        values.into_iter().map(|(c, v)| (c.name().to_string(), fixed(v, decimals))).collect()
    };
    for metric in Metric::ALL {
        lines.push(json!({ "metric": metric.name(), "means": named(metric_means(report, metric), 4) }).to_string());
    }
    let rates = report.conditions().into_iter().filter_map(|c| report.mean_rate(c).map(|r| (c, r))).collect();
    lines.push(json!({ "mean_rate_percent": named(rates, 2) }).to_string());
    let aborted = report.runs.iter().filter(|r| r.aborted()).count();
    lines.push(json!({ "end": { "runs": report.runs.len(), "aborted": aborted } }).to_string());
    let mut out = lines.join("\n");
    out.push('\n');
    out
}

/// The line printed per run.
pub fn summary_line(run: &NamedRun<'_>) -> String {
    match &run.entry.outcome {
        Ok(s) => format!(
            "{}  rate {}%  total {}/17  modes {}",
            run.id,
            s.rate_display(),
            s.total_display(),
            s.modes_display()
        ),
        Err(reason) => format!("{}  aborted: {reason}", run.id),
    }
}

pub fn mean_lines(report: &AblationReport) -> Vec<String> {
    report
        .conditions()
        .into_iter()
        .map(|c| {
            let n = report.summaries(c).count();
            match report.mean_rate(c) {
                Some(rate) => format!("{c} mean rate {}% over {n} runs", fixed(rate, 2)),
                None => format!("{c} mean rate n/a (no completed runs)"),
            }
        })
        .collect()
}
