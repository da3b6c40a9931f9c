//! The coding rulebook that turns one episode trace into rubric checks.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::domain::{RoleId, Status, TaskId};
use crate::kernel::EpisodeTrace;

use super::index::Index;
use super::{EvalError, Metric, RubricCheck, Score};

/// Words that count as mentioning a task in the reflection's outcome section.
const OUTCOME_KEYWORDS: [(TaskId, &[&str]); 3] = [
    (TaskId::NavigateHcw, &["navigate_hcw", "navigat"]),
    (TaskId::CollectInfo, &["collect_info", "information collection", "info collection", "onboarding"]),
    (TaskId::DisplayInfo, &["display_info", "display"]),
];

/// Scores a finished episode: one check per rubric slot, in
/// [`super::rubric_slots`] order.
pub fn score_episode(trace: &EpisodeTrace) -> Result<Vec<RubricCheck>, EvalError> {
    if !trace.is_complete() {
        return Err(EvalError::TraceIncomplete);
    }
    let ix = Index::new(&trace.events);
    let checks = super::rubric_slots()
        .into_iter()
        .map(|(metric, task)| match (metric, task) {
            (Metric::DelegationAccuracy, Some(t)) => delegation_accuracy(&ix, t),
            (Metric::CompletionJudgment, Some(t)) => completion_judgment(&ix, t),
            (Metric::IssueHandling, Some(t)) => issue_handling(&ix, t),
            (Metric::ToolUsage, Some(t)) => tool_usage(&ix, t),
            (Metric::LocalReasoning, Some(t)) => local_reasoning(&ix, t),
            (Metric::ReportCompliance, Some(t)) => report_compliance(&ix, t),
            (Metric::ReflectionQuality, _) => reflection_quality(&ix),
            (metric, None) => unreachable!("{metric} is scored per task"),
        })
        .collect();
    Ok(checks)
}

fn check(metric: Metric, task: TaskId, score: Score, code: impl Into<String>) -> RubricCheck {
    RubricCheck::new(metric, Some(task), Some(score), code)
}

fn delegation_accuracy(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::DelegationAccuracy;
    let owner = task.correct_assignee();
    let issued: Vec<_> = ix.issued_delegations(task).collect();
    let correct = issued.iter().filter(|d| d.target == owner).count();
    let self_executed = ix.manager_executed(task);
    let prefetched = ix.tool_calls_by(RoleId::Manager, task).next().is_some();
    if correct == 1 && issued.len() == 1 && !self_executed && !prefetched {
        return check(m, task, Score::One, format!("delegated once to {owner}"));
    }
    if correct >= 1 {
        let code = if prefetched {
            "pre-fetched before delegating"
        } else if self_executed {
            "delegated and redid the work"
        } else if correct > 1 {
            "re-delegated a completed task"
        } else {
            "delegated alongside a wrong assignee"
        };
        return check(m, task, Score::Half, code);
    }
    let code = if self_executed {
        "manager executed the task".to_string()
    } else if let Some(wrong) = issued.first() {
        format!("delegated to {} instead of {owner}", wrong.target)
    } else if ix.delegations(task).next().is_some() {
        "only the kernel delegated".to_string()
    } else {
        "no delegation".to_string()
    };
    check(m, task, Score::Zero, code)
}

fn completion_judgment(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::CompletionJudgment;
    let judgments: Vec<_> = ix.judgments(task).collect();
    if judgments.is_empty() {
        return check(m, task, Score::Zero, "no judgment");
    }
    for j in &judgments {
        let expected = match j.report_seq {
            Some(seq) => match ix.report_with_seq(seq) {
                Some(report) if report.issue().is_some() => Status::Failure,
                Some(_) => Status::Success,
                None => return check(m, task, Score::Zero, format!("judgment cites missing report {seq}")),
            },
            None => Status::Failure,
        };
        if j.verdict != expected {
            return check(m, task, Score::Zero, format!("judged {} against a {expected} report", j.verdict));
        }
    }
    let first_success = judgments.iter().find(|j| j.verdict == Status::Success).map(|j| j.pos);
    let reattempted = first_success.is_some_and(|after| ix.issued_delegations(task).any(|d| d.pos > after));
    if reattempted {
        return check(m, task, Score::Half, "re-attempted after a success judgment");
    }
    check(m, task, Score::One, "judgments match reported issues")
}

fn issue_handling(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::IssueHandling;
    if task != TaskId::NavigateHcw {
        return RubricCheck::new(m, Some(task), None, "no issue designed for this stage");
    }
    if ix.judgments(task).all(|j| j.verdict == Status::Success) {
        return check(m, task, Score::One, "no failure to handle");
    }
    let unhandled = ix.unhandled_failures().into_iter().any(|(_, e)| e.is_about(task));
    if unhandled {
        check(m, task, Score::Zero, "failure left without recovery or escalation")
    } else {
        check(m, task, Score::One, "failure answered before the next task")
    }
}

fn reflection_quality(ix: &Index<'_>) -> RubricCheck {
    let m = Metric::ReflectionQuality;
    let verdict = |score, code: &str| RubricCheck::new(m, None, Some(score), code);
    if ix.placeholder_reflection().is_some() {
        return verdict(Score::Zero, "placeholder");
    }
    if ix.delegated_reflection().is_some() {
        return verdict(Score::Zero, "delegated");
    }
    let Some(own) = ix.reflections().filter(|r| r.actor == RoleId::Manager).last() else {
        return verdict(Score::Zero, "missing");
    };
    let outcomes = own.sections.task_outcomes.to_lowercase();
    let missing: Vec<&str> = OUTCOME_KEYWORDS
        .iter()
        .filter(|(_, words)| !words.iter().any(|w| outcomes.contains(w)))
        .map(|(task, _)| task.name())
        .collect();
    match missing.len() {
        0 => verdict(Score::One, "covers every task"),
        1 => verdict(Score::Half, &format!("outcome missing for {}", missing[0])),
        _ => verdict(Score::Zero, &format!("outcomes missing for {}", missing.join(", "))),
    }
}

fn tool_usage(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::ToolUsage;
    let tool = task.tool().expect("operational task has a tool");
    if let Some(misuse) = ix.foreign_tool_calls().find(|c| c.tool == tool) {
        return check(m, task, Score::Zero, format!("{} invoked {tool}", misuse.actor));
    }
    if ix.tool_calls().any(|c| c.tool == tool) {
        check(m, task, Score::One, "invoked by its owner only")
    } else {
        check(m, task, Score::One, "tool not invoked")
    }
}

fn local_reasoning(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::LocalReasoning;
    if ix.manager_executed(task) {
        return check(m, task, Score::Zero, "manager executed the task");
    }
    let owner = task.correct_assignee();
    let Some(report) = ix.reports_by(owner, task).last() else {
        return check(m, task, Score::Zero, format!("no report from {owner}"));
    };
    let own_results: Vec<_> = ix.tool_calls_by(owner, task).filter(|c| c.pos < report.pos).collect();
    for (field, value) in report.report.returned() {
        let grounded = own_results.iter().any(|c| c.result.payload.get(field) == Some(value));
        if !grounded {
            return check(m, task, Score::Zero, format!("`{field}` is not from the robot's own tool result"));
        }
    }
    let supplied = ix.delegations(task).any(|d| d.target == owner && d.has_context);
    if supplied {
        return check(m, task, Score::Half, "re-fetched data the delegation already supplied");
    }
    if own_results.len() > 1 {
        return check(m, task, Score::Half, "fetched the same data more than once");
    }
    check(m, task, Score::One, "grounded in its own tool result")
}

fn report_compliance(ix: &Index<'_>, task: TaskId) -> RubricCheck {
    let m = Metric::ReportCompliance;
    let owner = task.correct_assignee();
    let reports: Vec<_> = ix.reports_by(owner, task).collect();
    if reports.is_empty() {
        return check(m, task, Score::Zero, format!("no report from {owner}"));
    }
    if reports.iter().all(|r| r.explicit_status) {
        check(m, task, Score::One, "explicit status field")
    } else {
        check(m, task, Score::Half, "status only implicit in the payload")
    }
}
