//! Rubric scoring, failure-mode classification and aggregation.
//!
//! An episode is scored on seven metrics. Four concern the manager
//! (delegation accuracy, completion judgment, issue handling, reflection
//! quality) and three concern each robot (tool usage, local reasoning,
//! report compliance). Each check is worth 0, 0.5 or 1; issue handling only
//! applies to navigation, leaving 17 applicable checks per episode.

mod classify;
mod decimal;
mod index;
mod score;

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_rational::Ratio;
use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Condition, TaskId, UnknownName};
use crate::kernel::{EpisodeTrace, TokenUsage};
use crate::policies::FailureMode;

pub use classify::{classify_failures, detect_failures, Finding};
pub use decimal::{fixed, parse_decimal};
pub use score::score_episode;

/// Points available in one episode.
pub const MAX_POINTS: u64 = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    DelegationAccuracy,
    CompletionJudgment,
    IssueHandling,
    ReflectionQuality,
    ToolUsage,
    LocalReasoning,
    ReportCompliance,
}

impl Metric {
    pub const ALL: [Metric; 7] = [
        Metric::DelegationAccuracy,
        Metric::CompletionJudgment,
        Metric::IssueHandling,
        Metric::ReflectionQuality,
        Metric::ToolUsage,
        Metric::LocalReasoning,
        Metric::ReportCompliance,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::DelegationAccuracy => "delegation_accuracy",
            Metric::CompletionJudgment => "completion_judgment",
            Metric::IssueHandling => "issue_handling",
            Metric::ReflectionQuality => "reflection_quality",
            Metric::ToolUsage => "tool_usage",
            Metric::LocalReasoning => "local_reasoning",
            Metric::ReportCompliance => "report_compliance",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Metric::DelegationAccuracy => "Delegation Accuracy",
            Metric::CompletionJudgment => "Completion Judgment",
            Metric::IssueHandling => "Issue Handling",
            Metric::ReflectionQuality => "Reflection Quality",
            Metric::ToolUsage => "Tool Usage",
            Metric::LocalReasoning => "Local Reasoning",
            Metric::ReportCompliance => "Report Compliance",
        }
    }

    pub fn is_per_task(self) -> bool {
        self != Metric::ReflectionQuality
    }

    /// Whether the metric has a check for `task` in every episode.
    pub fn applies_to(self, task: Option<TaskId>) -> bool {
        match (self, task) {
            (Metric::ReflectionQuality, None) => true,
            (Metric::IssueHandling, Some(t)) => t == TaskId::NavigateHcw,
            (m, Some(t)) => m.is_per_task() && t.is_operational(),
            _ => false,
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        Metric::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.title().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName { kind: "metric", name: s.to_string() })
    }
}

/// Every rubric slot of an episode, applicable or not, in scoring order.
pub fn rubric_slots() -> Vec<(Metric, Option<TaskId>)> {
    let mut slots = Vec::with_capacity(19);
    for metric in Metric::ALL {
        if metric.is_per_task() {
            slots.extend(TaskId::OPERATIONAL.into_iter().map(|t| (metric, Some(t))));
        } else {
            slots.push((metric, None));
        }
    }
    slots
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Score {
    Zero,
    Half,
    One,
}

impl Score {
    pub fn half_units(self) -> u64 {
        match self {
            Score::Zero => 0,
            Score::Half => 1,
            Score::One => 2,
        }
    }

    pub fn from_half_units(units: u64) -> Option<Score> {
        match units {
            0 => Some(Score::Zero),
            1 => Some(Score::Half),
            2 => Some(Score::One),
            _ => None,
        }
    }

    pub fn value(self) -> Ratio<u64> {
        Ratio::new(self.half_units(), 2)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Score::Zero => "0",
            Score::Half => "0.5",
            Score::One => "1",
        }
    }
}

impl fmt::Display for Score {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub const NOT_APPLICABLE: &str = "n/a";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("`{0}` is not a rubric score (expected 0, 0.5, 1 or n/a)")]
pub struct BadScore(pub String);

/// Parses one score cell; `Ok(None)` is a non-applicable check.
pub fn parse_score(text: &str) -> Result<Option<Score>, BadScore> {
    let t = text.trim();
    if t.eq_ignore_ascii_case(NOT_APPLICABLE) {
        return Ok(None);
    }
    parse_decimal(t)
        .filter(|v| *v.denom() <= 2)
        .and_then(|v| Score::from_half_units((v * 2).to_integer()))
        .map(Some)
        .ok_or_else(|| BadScore(t.to_string()))
}

mod score_text {
    use super::*;
    use serde::de::Error as _;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(score: &Option<Score>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(score.map(Score::as_str).unwrap_or(NOT_APPLICABLE))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Score>, D::Error> {
        let text = String::deserialize(d)?;
        parse_score(&text).map_err(D::Error::custom)
    }
}

/// One (metric, task) slot with its score; `score: None` means not applicable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RubricCheck {
    pub metric: Metric,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    #[serde(with = "score_text")]
    pub score: Option<Score>,
    #[serde(default)]
    pub code: String,
}

impl RubricCheck {
    pub fn new(metric: Metric, task: Option<TaskId>, score: Option<Score>, code: impl Into<String>) -> RubricCheck {
        RubricCheck { metric, task, score, code: code.into() }
    }

    pub fn applicable(&self) -> bool {
        self.score.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RubricShapeError {
    #[error("expected {MAX_POINTS} applicable checks, found {0}")]
    Count(usize),
    #[error("duplicate {metric} check{}", task_suffix(*.task))]
    Duplicate { metric: Metric, task: Option<TaskId> },
    #[error("{metric} check{} is not part of the rubric", task_suffix(*.task))]
    Unexpected { metric: Metric, task: Option<TaskId> },
}

fn task_suffix(task: Option<TaskId>) -> String {
    task.map(|t| alloc::format!(" on {t}")).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("trace is incomplete: the episode never terminated")]
    TraceIncomplete,
    #[error(transparent)]
    RubricShape(#[from] RubricShapeError),
    #[error("an ablation needs at least one seed and one condition")]
    NoRuns,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    pub per_check: Vec<RubricCheck>,
    pub total_points: Ratio<u64>,
    pub rate_percent: Ratio<u64>,
    #[serde(default)]
    pub failure_modes: Vec<FailureMode>,
}

impl RunSummary {
    pub fn rate_display(&self) -> String {
        fixed(self.rate_percent, 2)
    }

    pub fn total_display(&self) -> String {
        fixed(self.total_points, 1)
    }

    pub fn modes_display(&self) -> String {
        if self.failure_modes.is_empty() {
            return "none".to_string();
        }
        let names: Vec<&str> = self.failure_modes.iter().map(|m| m.short()).collect();
        names.join(" ")
    }
}

/// Success rate for a point total: `100 * total / 17`.
pub fn rate_of(total_points: Ratio<u64>) -> Ratio<u64> {
    total_points * 100 / MAX_POINTS
}

/// Sums one episode's applicable checks. Non-applicable checks are ignored;
/// the applicable ones must fill the 17 rubric slots exactly once each.
pub fn aggregate(checks: &[RubricCheck]) -> Result<RunSummary, RubricShapeError> {
    let mut seen: Vec<(Metric, Option<TaskId>)> = Vec::with_capacity(MAX_POINTS as usize);
    let mut half_units = 0;
    for c in checks {
        let Some(score) = c.score else {
            continue;
        };
        if !c.metric.applies_to(c.task) {
            return Err(RubricShapeError::Unexpected { metric: c.metric, task: c.task });
        }
        if seen.contains(&(c.metric, c.task)) {
            return Err(RubricShapeError::Duplicate { metric: c.metric, task: c.task });
        }
        seen.push((c.metric, c.task));
        half_units += score.half_units();
    }
    if seen.len() as u64 != MAX_POINTS {
        return Err(RubricShapeError::Count(seen.len()));
    }
    let total_points = Ratio::new(half_units, 2);
    Ok(RunSummary {
        condition: None,
        per_check: checks.to_vec(),
        total_points,
        rate_percent: rate_of(total_points),
        failure_modes: Vec::new(),
    })
}

/// Scores, classifies and aggregates one finished episode.
pub fn summarize(trace: &EpisodeTrace) -> Result<RunSummary, EvalError> {
    let checks = score_episode(trace)?;
    let mut summary = aggregate(&checks)?;
    summary.condition = Some(trace.condition);
    summary.failure_modes = classify_failures(trace);
    Ok(summary)
}

/// One run of an ablation: its summary, or why it produced none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunEntry {
    pub condition: Condition,
    pub seed: u64,
    pub outcome: Result<RunSummary, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
}

impl RunEntry {
    pub fn summary(&self) -> Option<&RunSummary> {
        self.outcome.as_ref().ok()
    }

    pub fn aborted(&self) -> bool {
        self.outcome.is_err()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationReport {
    pub runs: Vec<RunEntry>,
}

impl AblationReport {
    pub fn new(runs: Vec<RunEntry>) -> AblationReport {
        AblationReport { runs }
    }

    pub fn conditions(&self) -> Vec<Condition> {
        let mut out: Vec<Condition> = self.runs.iter().map(|r| r.condition).collect();
        out.sort();
        out.dedup();
        out
    }

    pub fn summaries(&self, condition: Condition) -> impl Iterator<Item = &RunSummary> {
        self.runs.iter().filter(move |r| r.condition == condition).filter_map(RunEntry::summary)
    }

    pub fn any_aborted(&self) -> bool {
        self.runs.iter().any(RunEntry::aborted)
    }

    /// Mean success rate over the condition's scored runs.
    pub fn mean_rate(&self, condition: Condition) -> Option<Ratio<u64>> {
        mean(self.summaries(condition).map(|s| s.rate_percent))
    }

    pub fn token_usage(&self, condition: Condition) -> TokenUsage {
        let mut total = TokenUsage::default();
        for usage in self.runs.iter().filter(|r| r.condition == condition).filter_map(|r| r.token_usage) {
            total.add(usage);
        }
        total
    }
}

fn mean(values: impl Iterator<Item = Ratio<u64>>) -> Option<Ratio<u64>> {
    let (sum, n) = values.fold((Ratio::zero(), 0u64), |(sum, n), v| (sum + v, n + 1));
    (n > 0).then(|| sum / n)
}

/// Mean of the metric's applicable checks across each condition's scored runs.
pub fn metric_means(report: &AblationReport, metric: Metric) -> BTreeMap<Condition, Ratio<u64>> {
    let mut out = BTreeMap::new();
    for condition in report.conditions() {
        let scores = report
            .summaries(condition)
            .flat_map(|s| s.per_check.iter())
            .filter(|c| c.metric == metric)
            .filter_map(|c| c.score.map(Score::value));
        if let Some(m) = mean(scores) {
            out.insert(condition, m);
        }
    }
    out
}

/// Runs every seed under every condition, identical seeds across conditions.
/// A run whose episode fails is recorded as aborted and does not stop the rest.
pub fn ablate<F>(seeds: &[u64], conditions: &[Condition], mut run: F) -> Result<AblationReport, EvalError>
where
    F: FnMut(Condition, u64) -> Result<EpisodeTrace, String>,
{
    if seeds.is_empty() || conditions.is_empty() {
        return Err(EvalError::NoRuns);
    }
    let mut runs = Vec::with_capacity(seeds.len() * conditions.len());
    for &condition in conditions {
        for &seed in seeds {
            let (outcome, token_usage) = match run(condition, seed) {
                Ok(trace) => (summarize(&trace).map_err(|e| e.to_string()), trace.token_usage),
                Err(reason) => (Err(reason), None),
            };
            runs.push(RunEntry { condition, seed, outcome, token_usage });
        }
    }
    Ok(AblationReport::new(runs))
}

/// Per-million-token prices; the currency is whatever the table is written in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceTable {
    pub prompt_per_million: Ratio<u64>,
    pub completion_per_million: Ratio<u64>,
}

impl PriceTable {
    pub fn cost(&self, usage: TokenUsage) -> Ratio<u64> {
        (self.prompt_per_million * usage.prompt_tokens + self.completion_per_million * usage.completion_tokens)
            / 1_000_000
    }
}
