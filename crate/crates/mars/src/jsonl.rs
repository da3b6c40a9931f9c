//! Line-delimited JSON files: traces and rubric check files.
//!
//! Both start with a header naming the schema and version, carry one record
//! per line and close with a footer line. A file without its footer was cut
//! short and is rejected as incomplete.

use std::fs;
use std::path::Path;

use mars_core::domain::{Condition, Enforcement};
use mars_core::evaluator::{aggregate, RubricCheck, RunSummary};
use mars_core::kernel::{EpisodeTrace, Termination, TokenUsage, TraceEvent};
use mars_core::policies::FailureMode;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{CliError, TraceError};

pub const TRACE_SCHEMA: &str = "mars-trace";
pub const CHECKS_SCHEMA: &str = "mars-checks";
pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Header {
    schema: String,
    version: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceHeader {
    schema: String,
    version: u64,
    condition: Condition,
    enforcement: Enforcement,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TraceEnd {
    events: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    termination: Option<Termination>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_usage: Option<TokenUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    abort: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Footer<T> {
    end: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ChecksHeader {
    schema: String,
    version: u64,
    run: String,
    condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ChecksEnd {
    total_points: String,
    rate_percent: String,
    #[serde(default)]
    failure_modes: Vec<FailureMode>,
}

/// A trace as stored on disk. `abort` is set for episodes that stopped early.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceFile {
    pub trace: EpisodeTrace,
    pub abort: Option<String>,
}

fn line<T: Serialize>(out: &mut String, value: &T) {
    out.push_str(&serde_json::to_string(value).expect("records serialize"));
    out.push('\n');
}

pub fn render_trace(trace: &EpisodeTrace, abort: Option<&str>) -> String {
    let mut out = String::new();
    line(
        &mut out,
        &TraceHeader {
            schema: TRACE_SCHEMA.to_string(),
            version: SCHEMA_VERSION,
            condition: trace.condition,
            enforcement: trace.enforcement,
            seed: trace.seed,
        },
    );
    for event in &trace.events {
        line(&mut out, event);
    }
    line(
        &mut out,
        &Footer {
            end: TraceEnd {
                events: trace.events.len(),
                termination: trace.termination,
                token_usage: trace.token_usage,
                abort: abort.map(str::to_string),
            },
        },
    );
    out
}

fn check_header(path: &str, first: Option<&str>, schema: &str) -> Result<Value, TraceError> {
    let first = first.ok_or_else(|| TraceError::Incomplete { path: path.to_string(), reason: "empty file".into() })?;
    let value: Value = serde_json::from_str(first).map_err(|e| TraceError::format(path, 1, e))?;
    let header: Header =
        serde_json::from_value(value.clone()).map_err(|e| TraceError::format(path, 1, format!("not a header: {e}")))?;
    if header.schema != schema || header.version != SCHEMA_VERSION {
        return Err(TraceError::Version { path: path.to_string(), schema: header.schema, version: header.version });
    }
    Ok(value)
}

type Body<'a> = Vec<(usize, &'a str)>;

/// Splits the body lines from the footer; `None` when the footer is missing.
fn body_and_footer<'a>(path: &str, lines: &[&'a str]) -> Result<(Body<'a>, Option<Value>), TraceError> {
    let mut body = Vec::new();
    for (i, text) in lines.iter().enumerate().skip(1) {
        if text.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(text).map_err(|e| TraceError::format(path, i + 1, e))?;
        if let Some(end) = value.get("end") {
            if lines[i + 1..].iter().any(|l| !l.trim().is_empty()) {
                return Err(TraceError::format(path, i + 2, "records after the end line"));
            }
            return Ok((body, Some(end.clone())));
        }
        body.push((i + 1, *text));
    }
    Ok((body, None))
}

pub fn parse_trace(text: &str, path: &str) -> Result<TraceFile, TraceError> {
    let lines: Vec<&str> = text.lines().collect();
    let header: TraceHeader = serde_json::from_value(check_header(path, lines.first().copied(), TRACE_SCHEMA)?)
        .map_err(|e| TraceError::format(path, 1, e))?;
    let (body, end) = body_and_footer(path, &lines)?;
    let end: TraceEnd = match end {
        Some(end) => serde_json::from_value(end).map_err(|e| TraceError::format(path, lines.len(), e))?,
        None => return Err(TraceError::Incomplete { path: path.to_string(), reason: "no end line".into() }),
    };
    let mut trace = EpisodeTrace::new(header.condition, header.enforcement, header.seed);
    for (n, text) in body {
        let event: TraceEvent = serde_json::from_str(text).map_err(|e| TraceError::format(path, n, e))?;
        if event.seq != trace.events.len() as u64 {
            return Err(TraceError::format(
                path,
                n,
                format!("expected seq {}, found {}", trace.events.len(), event.seq),
            ));
        }
        trace.events.push(event);
    }
    if end.events != trace.events.len() {
        return Err(TraceError::Incomplete {
            path: path.to_string(),
            reason: format!("end line counts {} events, file has {}", end.events, trace.events.len()),
        });
    }
    trace.termination = end.termination;
    trace.token_usage = end.token_usage;
    Ok(TraceFile { trace, abort: end.abort })
}

pub fn read_trace(path: &Path) -> Result<TraceFile, TraceError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: name.clone(), source })?;
    parse_trace(&text, &name)
}

pub fn render_checks(run: &str, condition: Condition, summary: &RunSummary) -> String {
    let mut out = String::new();
    line(
        &mut out,
        &ChecksHeader { schema: CHECKS_SCHEMA.to_string(), version: SCHEMA_VERSION, run: run.to_string(), condition },
    );
    for check in &summary.per_check {
        line(&mut out, check);
    }
    line(
        &mut out,
        &Footer {
            end: ChecksEnd {
                total_points: summary.total_display(),
                rate_percent: summary.rate_display(),
                failure_modes: summary.failure_modes.clone(),
            },
        },
    );
    out
}

/// A rubric check file, re-aggregated on load.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckFile {
    pub run: String,
    pub condition: Condition,
    pub summary: RunSummary,
}

pub fn parse_checks(text: &str, path: &str) -> Result<CheckFile, CliError> {
    let lines: Vec<&str> = text.lines().collect();
    let header: ChecksHeader = serde_json::from_value(check_header(path, lines.first().copied(), CHECKS_SCHEMA)?)
        .map_err(|e| TraceError::format(path, 1, e))?;
    let (body, end) = body_and_footer(path, &lines)?;
    let end: ChecksEnd = match end {
        Some(end) => serde_json::from_value(end).map_err(|e| TraceError::format(path, lines.len(), e))?,
        None => return Err(TraceError::Incomplete { path: path.to_string(), reason: "no end line".into() }.into()),
    };
    let mut checks = Vec::with_capacity(body.len());
    for (n, text) in body {
        let check: RubricCheck = serde_json::from_str(text).map_err(|e| TraceError::format(path, n, e))?;
        checks.push(check);
    }
    let mut summary = aggregate(&checks).map_err(|source| CliError::Rubric { path: path.to_string(), source })?;
    summary.condition = Some(header.condition);
    summary.failure_modes = end.failure_modes;
    if summary.total_display() != end.total_points || summary.rate_display() != end.rate_percent {
        return Err(TraceError::format(
            path,
            lines.len(),
            format!(
                "end line says {} points / {}%, checks sum to {} / {}%",
                end.total_points,
                end.rate_percent,
                summary.total_display(),
                summary.rate_display()
            ),
        )
        .into());
    }
    Ok(CheckFile { run: header.run, condition: header.condition, summary })
}

pub fn read_checks(path: &Path) -> Result<CheckFile, CliError> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io { path: name.clone(), source })?;
    parse_checks(&text, &name)
}

/// Schema named by a file's first line, if it has one.
pub fn sniff_schema(text: &str) -> Option<String> {
    let first = text.lines().next()?;
    let header: Header = serde_json::from_str(first).ok()?;
    Some(header.schema)
}
