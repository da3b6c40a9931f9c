use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::domain::{Record, RoleId, Status, TaskId, ISSUE_FIELD, STATUS_FIELD, TASK_FIELD};
use crate::kernel::{EventDetail, RecoveryAction, ReflectionSections, TraceEvent};
use crate::world::{ToolResult, NAVIGATION_RESOLUTION};

use super::{Action, Observation, Policy, PolicyError, Turn};

/// Follows the protocol: delegates each operational task to its owner,
/// answers failures at once and writes the reflection itself.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompliantManager;

impl CompliantManager {
    pub fn decide_for(obs: &Observation) -> Action {
        let Some(pending) = &obs.pending_task else {
            return Action::NoOp;
        };
        let task = pending.id();
        match obs.turn {
            Turn::Dispatch if task == TaskId::Reflection => {
                Action::Reflect { sections: compose_reflection(&obs.inbox), claim: None }
            }
            Turn::Dispatch => Action::Delegate { task, target: pending.spec.correct_assignee, context: None },
            Turn::Recovery => Action::Recover { recovery: recovery_for(task) },
            Turn::Execute => Action::NoOp,
        }
    }
}

/// The navigation failure is answered by reassignment; anything else goes
/// to a human supervisor.
pub fn recovery_for(task: TaskId) -> RecoveryAction {
    match task {
        TaskId::NavigateHcw => RecoveryAction::AlternativeSolution(format!("assign {NAVIGATION_RESOLUTION}")),
        _ => RecoveryAction::EscalateToHuman,
    }
}

impl Policy for CompliantManager {
    fn decide(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        Ok(CompliantManager::decide_for(obs))
    }
}

/// Calls its own tool once per delegation and reports the result with an
/// explicit status.
#[derive(Debug, Clone, Copy)]
pub struct CompliantRobot {
    role: RoleId,
}

impl CompliantRobot {
    pub fn new(role: RoleId) -> CompliantRobot {
        CompliantRobot { role }
    }

    pub fn decide_for(&self, obs: &Observation) -> Action {
        let Some(pending) = &obs.pending_task else {
            return Action::NoOp;
        };
        let task = pending.id();
        if obs.turn != Turn::Execute {
            return Action::NoOp;
        }
        if task == TaskId::Reflection {
            return Action::Reflect { sections: compose_reflection(&obs.inbox), claim: None };
        }
        let Some(own_tool) = self.role.designated_tool().filter(|t| Some(*t) == task.tool()) else {
            return Action::Report { record: refusal(self.role, task, pending.spec.payload_fields()) };
        };
        match latest_own_result(&obs.inbox, self.role, task) {
            Some(result) if result.tool == own_tool => Action::Report { record: result_record(task, result) },
            _ => Action::UseTool { tool: own_tool },
        }
    }
}

impl Policy for CompliantRobot {
    fn decide(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        Ok(self.decide_for(obs))
    }
}

/// The tool result this robot obtained since it was last handed `task`.
fn latest_own_result(inbox: &[TraceEvent], role: RoleId, task: TaskId) -> Option<&ToolResult> {
    let since = inbox
        .iter()
        .rposition(|e| e.is_about(task) && matches!(e.detail, EventDetail::Delegation { target, .. } if target == role))
        .unwrap_or(0);
    inbox[since..].iter().rev().find_map(|e| match &e.detail {
        EventDetail::ToolCall { result, .. } if e.actor == role && e.is_about(task) => Some(result),
        _ => None,
    })
}

/// A report that repeats the tool result field for field.
pub fn result_record(task: TaskId, result: &ToolResult) -> Record {
    let mut record = Record::new().with(TASK_FIELD, task.name());
    for (k, v) in &result.payload {
        record.push(k, v);
    }
    match &result.issue {
        Some(issue) => {
            record.push(STATUS_FIELD, Status::Failure.name());
            record.push(ISSUE_FIELD, issue);
        }
        None => {
            record.push(STATUS_FIELD, Status::Success.name());
            record.push(ISSUE_FIELD, "None");
        }
    }
    record
}

fn refusal<'a>(role: RoleId, task: TaskId, fields: impl Iterator<Item = &'a str>) -> Record {
    let mut record = Record::new().with(TASK_FIELD, task.name());
    for field in fields {
        record.push(field, "not available");
    }
    record.push(STATUS_FIELD, Status::Failure.name());
    record.push(
        ISSUE_FIELD,
        &format!("{task} is outside the assigned responsibility of the {}; escalating to the manager", role.title()),
    );
    record
}

fn task_label(task: TaskId) -> &'static str {
    match task {
        TaskId::NavigateHcw => "Navigation",
        TaskId::CollectInfo => "Information collection",
        TaskId::DisplayInfo => "Display",
        TaskId::Reflection => "Reflection",
    }
}

/// A three-section reflection assembled from the reports, judgments and
/// recovery events in view.
pub fn compose_reflection(inbox: &[TraceEvent]) -> ReflectionSections {
    let mut outcomes = Vec::new();
    for task in TaskId::OPERATIONAL {
        let verdict = inbox.iter().rev().find_map(|e| match &e.detail {
            EventDetail::Judgment { verdict, basis, .. } if e.is_about(task) => Some((*verdict, basis.clone())),
            _ => None,
        });
        let line = match verdict {
            Some((Status::Success, _)) => format!("{} ({task}): success, no issue reported.", task_label(task)),
            Some((Status::Failure, basis)) => format!(
                "{} ({task}): failure, issue reported: {}",
                task_label(task),
                basis.unwrap_or_else(|| "unspecified".to_string())
            ),
            None => format!("{} ({task}): no outcome was reported.", task_label(task)),
        };
        outcomes.push(line);
    }
    let mut recoveries = Vec::new();
    for event in inbox {
        match &event.detail {
            EventDetail::RecoveryAction { action: RecoveryAction::AlternativeSolution(text) } => {
                recoveries.push(format!("{}: alternative solution \"{text}\".", task_of(event)))
            }
            EventDetail::RecoveryAction { action: RecoveryAction::EscalateToHuman } => {
                recoveries.push(format!("{}: escalated to a human supervisor.", task_of(event)))
            }
            EventDetail::Escalation { reason, synthesized: true } => {
                recoveries.push(format!("{}: escalated to a human supervisor ({reason}).", task_of(event)))
            }
            _ => {}
        }
    }
    let lessons = if recoveries.is_empty() {
        "Every stage completed without a reported issue, so no recovery was needed.".to_string()
    } else {
        "Reported issues were answered before the next stage began, which kept the onboarding on track.".to_string()
    };
    if recoveries.is_empty() {
        recoveries.push("No recovery attempts were required.".to_string());
    }
    ReflectionSections {
        task_outcomes: outcomes.join("\n"),
        recovery_attempts: recoveries.join("\n"),
        lessons_learned: lessons,
    }
}

fn task_of(event: &TraceEvent) -> String {
    event.task.map(|t| t.name().to_string()).unwrap_or_else(|| "unknown task".to_string())
}

/// A report filled in without any tool, as a manager doing a robot's work
/// would produce it.
pub fn fabricated_record(task: TaskId, fields: &[String]) -> Record {
    let mut record = Record::new().with(TASK_FIELD, task.name());
    for field in fields.iter().filter(|f| *f != STATUS_FIELD && *f != ISSUE_FIELD) {
        record.push(field, "compiled by the manager");
    }
    record.push(STATUS_FIELD, Status::Success.name());
    record.push(ISSUE_FIELD, "None");
    record
}
