//! The hierarchical episode loop: dispatch, robot execution, judgment,
//! recovery and reflection, recorded as a trace.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Enforcement, RoleId, RosterViolation, Status, TaskId, TaskReport, TaskSpec};
use crate::kb::KnowledgeBase;
use crate::policies::PolicyError;

mod episode;
mod trace;

pub use episode::{run_episode, EpisodeSetup, DISPATCH_BUDGET_PERMISSIVE, DISPATCH_BUDGET_STRICT, ROBOT_BUDGET};
pub use trace::{
    EpisodeTrace, EventDetail, EventKind, RecoveryAction, ReflectionSections, Rule, Termination, TokenUsage, TraceEvent,
};

/// A failure report paired with the manager's chosen response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryDirective {
    pub trigger: TaskReport,
    pub action: RecoveryAction,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EscalationRecord {
    pub task: TaskId,
    pub reason: String,
    pub synthesized: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RecoveryOutcome {
    Directive(RecoveryDirective),
    Escalation(EscalationRecord),
    /// Permissive mode: no response; left for the evaluator to score.
    Unhandled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelegationRuling {
    Accept,
    /// Permissive mode: the delegation stands but breaks the rule.
    AcceptWithViolation(Rule),
    /// Strict mode: blocked, the manager is asked again.
    Reject(Rule),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OpError {
    #[error("{task} could not be delegated to {target} after re-prompting")]
    DelegationDeadlock { task: TaskId, target: RoleId },
    #[error("invalid recovery action: {0}")]
    InvalidRecoveryAction(String),
    #[error("{0} did not fail; nothing to recover")]
    NotAFailure(TaskId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("invalid roster: {0:?}")]
    InvalidRoster(Vec<RosterViolation>),
    #[error("no task spec for {0}")]
    MissingTaskSpec(TaskId),
    #[error("policy protocol error from {actor} at seq {seq}: {reason}")]
    PolicyProtocol { actor: RoleId, seq: u64, reason: String },
    #[error("policy for {actor} failed at seq {seq}: {source}")]
    Policy { actor: RoleId, seq: u64, source: PolicyError },
}

/// An episode that stopped early, with what was recorded before the error.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{error}")]
pub struct EpisodeAbort {
    pub error: KernelError,
    pub partial: Box<EpisodeTrace>,
}

/// Completion rule: failure iff the report carries an issue.
pub fn judge(report: &TaskReport, kb: &KnowledgeBase) -> Status {
    kb.success_criteria().outcome(report)
}

/// Rules on a proposed delegation. `reprompts_left` is how many more times
/// the manager may be asked in strict mode.
pub fn delegate(
    target: RoleId,
    task: &TaskSpec,
    enforcement: Enforcement,
    reprompts_left: u32,
) -> Result<DelegationRuling, OpError> {
    if target == task.correct_assignee && task.id.is_operational() {
        return Ok(DelegationRuling::Accept);
    }
    let rule = if task.id.is_operational() { Rule::WrongAssignee } else { Rule::DelegatedReflection };
    match enforcement {
        Enforcement::Permissive => Ok(DelegationRuling::AcceptWithViolation(rule)),
        Enforcement::Strict if reprompts_left > 0 => Ok(DelegationRuling::Reject(rule)),
        Enforcement::Strict => Err(OpError::DelegationDeadlock { task: task.id, target }),
    }
}

/// Validates the manager's response to a failure report.
pub fn recover(
    report: &TaskReport,
    action: Option<RecoveryAction>,
    enforcement: Enforcement,
) -> Result<RecoveryOutcome, OpError> {
    if report.status() != Status::Failure {
        return Err(OpError::NotAFailure(report.task()));
    }
    match action {
        Some(RecoveryAction::AlternativeSolution(text)) if text.trim().is_empty() => {
            Err(OpError::InvalidRecoveryAction("alternative solution has no content".to_string()))
        }
        Some(action) => Ok(RecoveryOutcome::Directive(RecoveryDirective { trigger: report.clone(), action })),
        None if enforcement.is_strict() => Ok(RecoveryOutcome::Escalation(EscalationRecord {
            task: report.task(),
            reason: report.issue().unwrap_or_default().to_string(),
            synthesized: true,
        })),
        None => Ok(RecoveryOutcome::Unhandled),
    }
}
