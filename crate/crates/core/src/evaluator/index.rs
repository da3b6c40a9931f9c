//! Trace queries shared by the scorer and the failure classifier, so that
//! a score and its matching classification always rest on the same facts.

use alloc::vec::Vec;

use crate::domain::{RoleId, Status, TaskId, TaskReport, ToolId};
use crate::kb::GrantMatrix;
use crate::kernel::{EventDetail, EventKind, ReflectionSections, TraceEvent};
use crate::world::ToolResult;

pub(crate) struct Delegation<'a> {
    pub pos: usize,
    pub target: RoleId,
    pub has_context: bool,
    pub synthesized: bool,
    pub event: &'a TraceEvent,
}

pub(crate) struct Judgment {
    pub pos: usize,
    pub verdict: Status,
    pub report_seq: Option<u64>,
}

pub(crate) struct ToolUse<'a> {
    pub pos: usize,
    pub actor: RoleId,
    pub tool: ToolId,
    pub result: &'a ToolResult,
    pub event: &'a TraceEvent,
}

pub(crate) struct ReportAt<'a> {
    pub pos: usize,
    pub report: &'a TaskReport,
    pub explicit_status: bool,
}

pub(crate) struct ReflectionAt<'a> {
    pub actor: RoleId,
    pub sections: &'a ReflectionSections,
    pub event: &'a TraceEvent,
}

pub(crate) struct Index<'a> {
    events: &'a [TraceEvent],
    grants: GrantMatrix,
}

impl<'a> Index<'a> {
    pub fn new(events: &'a [TraceEvent]) -> Index<'a> {
        Index { events, grants: GrantMatrix::builtin() }
    }

    fn positioned(&self) -> impl Iterator<Item = (usize, &'a TraceEvent)> {
        self.events.iter().enumerate()
    }

    pub fn delegations(&self, task: TaskId) -> impl Iterator<Item = Delegation<'a>> + '_ {
        self.positioned().filter(move |(_, e)| e.is_about(task)).filter_map(|(pos, e)| match &e.detail {
            EventDetail::Delegation { target, context, synthesized } => Some(Delegation {
                pos,
                target: *target,
                has_context: context.as_ref().is_some_and(|c| !c.is_empty()),
                synthesized: *synthesized,
                event: e,
            }),
            _ => None,
        })
    }

    /// Delegations the manager itself issued, as opposed to kernel fallbacks.
    pub fn issued_delegations(&self, task: TaskId) -> impl Iterator<Item = Delegation<'a>> + '_ {
        self.delegations(task).filter(|d| !d.synthesized)
    }

    pub fn judgments(&self, task: TaskId) -> impl Iterator<Item = Judgment> + '_ {
        self.positioned().filter(move |(_, e)| e.is_about(task)).filter_map(|(pos, e)| match &e.detail {
            EventDetail::Judgment { verdict, report_seq, .. } => {
                Some(Judgment { pos, verdict: *verdict, report_seq: *report_seq })
            }
            _ => None,
        })
    }

    pub fn reports_by(&self, actor: RoleId, task: TaskId) -> impl Iterator<Item = ReportAt<'a>> + '_ {
        self.positioned().filter(move |(_, e)| e.actor == actor && e.is_about(task)).filter_map(|(pos, e)| {
            match &e.detail {
                EventDetail::Report { report, explicit_status } => {
                    Some(ReportAt { pos, report, explicit_status: *explicit_status })
                }
                _ => None,
            }
        })
    }

    pub fn report_with_seq(&self, seq: u64) -> Option<&'a TaskReport> {
        self.events.iter().find(|e| e.seq == seq).and_then(|e| match &e.detail {
            EventDetail::Report { report, .. } => Some(report),
            _ => None,
        })
    }

    pub fn tool_calls(&self) -> impl Iterator<Item = ToolUse<'a>> + '_ {
        self.positioned().filter_map(|(pos, e)| match &e.detail {
            EventDetail::ToolCall { tool, result } => {
                Some(ToolUse { pos, actor: e.actor, tool: *tool, result, event: e })
            }
            _ => None,
        })
    }

    pub fn tool_calls_by(&self, actor: RoleId, task: TaskId) -> impl Iterator<Item = ToolUse<'a>> + '_ {
        self.tool_calls().filter(move |c| c.actor == actor && c.event.is_about(task))
    }

    /// Executed calls whose caller does not hold the tool's grant.
    pub fn foreign_tool_calls(&self) -> impl Iterator<Item = ToolUse<'a>> + '_ {
        self.tool_calls().filter(|c| !self.grants.permits(c.actor, c.tool))
    }

    pub fn manager_executed(&self, task: TaskId) -> bool {
        self.reports_by(RoleId::Manager, task).next().is_some()
    }

    /// Where the workflow moves past `task`: another task's delegation, the
    /// manager working on another task, or any reflection.
    fn next_task_start(&self, after: usize, task: TaskId) -> usize {
        self.positioned()
            .skip(after + 1)
            .find(|(_, e)| {
                let other = !e.is_about(task);
                match e.kind() {
                    EventKind::Delegation => other,
                    EventKind::ToolCall | EventKind::Report => other && e.actor == RoleId::Manager,
                    EventKind::Reflection => true,
                    _ => false,
                }
            })
            .map(|(pos, _)| pos)
            .unwrap_or(self.events.len())
    }

    /// Failure judgments the manager did not answer with a recovery action or
    /// an escalation before the workflow moved on.
    pub fn unhandled_failures(&self) -> Vec<(usize, &'a TraceEvent)> {
        let mut out = Vec::new();
        for (pos, e) in self.positioned() {
            let EventDetail::Judgment { verdict: Status::Failure, .. } = e.detail else {
                continue;
            };
            let Some(task) = e.task else {
                continue;
            };
            let start = self.next_task_start(pos, task);
            let handled = self.events[pos + 1..start].iter().any(|later| {
                later.actor == RoleId::Manager
                    && later.is_about(task)
                    && matches!(later.kind(), EventKind::RecoveryAction | EventKind::Escalation)
            });
            if !handled {
                out.push((pos, e));
            }
        }
        out
    }

    pub fn reflections(&self) -> impl Iterator<Item = ReflectionAt<'a>> + '_ {
        self.events.iter().filter_map(|e| match &e.detail {
            EventDetail::Reflection { sections, .. } => Some(ReflectionAt { actor: e.actor, sections, event: e }),
            _ => None,
        })
    }

    /// A manager reflection with at least one empty section.
    pub fn placeholder_reflection(&self) -> Option<&'a TraceEvent> {
        self.reflections().find(|r| r.actor == RoleId::Manager && r.sections.has_empty_section()).map(|r| r.event)
    }

    /// The first sign that the reflection left the manager's hands.
    pub fn delegated_reflection(&self) -> Option<&'a TraceEvent> {
        let handed_off = self.delegations(TaskId::Reflection).next().map(|d| d.event);
        handed_off.or_else(|| self.reflections().find(|r| r.actor != RoleId::Manager).map(|r| r.event))
    }

    /// First-occurrence order of the tasks deviates from the workflow.
    pub fn out_of_order(&self) -> Option<&'a TraceEvent> {
        let mut highest = 0;
        let mut seen: Vec<TaskId> = Vec::new();
        for e in self.events {
            let Some(task) = e.task else {
                continue;
            };
            if seen.contains(&task) {
                continue;
            }
            if task.position() < highest {
                return Some(e);
            }
            highest = task.position();
            seen.push(task);
        }
        None
    }
}
