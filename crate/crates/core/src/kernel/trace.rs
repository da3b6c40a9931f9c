use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::domain::{Condition, Enforcement, Payload, RoleId, Status, TaskId, TaskReport, ToolId};
use crate::world::ToolResult;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryAction {
    AlternativeSolution(String),
    EscalateToHuman,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflectionSections {
    pub task_outcomes: String,
    pub recovery_attempts: String,
    pub lessons_learned: String,
}

impl ReflectionSections {
    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &str)> {
        [
            ("task_outcomes", self.task_outcomes.as_str()),
            ("recovery_attempts", self.recovery_attempts.as_str()),
            ("lessons_learned", self.lessons_learned.as_str()),
        ]
        .into_iter()
    }

    pub fn has_empty_section(&self) -> bool {
        self.iter().any(|(_, text)| text.trim().is_empty())
    }
}

/// Protocol rules the kernel checks while running an episode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    WrongAssignee,
    DelegatedReflection,
    DelegationDeadlock,
    ManagerToolUse,
    ForeignToolUse,
    StageMismatch,
    SelfExecution,
    RetryCompleted,
    OutOfOrder,
    InvalidAction,
    InvalidRecovery,
    UnresolvedAlternative,
    NoReport,
    Idle,
}

impl Rule {
    pub fn name(self) -> &'static str {
        match self {
            Rule::WrongAssignee => "wrong_assignee",
            Rule::DelegatedReflection => "delegated_reflection",
            Rule::DelegationDeadlock => "delegation_deadlock",
            Rule::ManagerToolUse => "manager_tool_use",
            Rule::ForeignToolUse => "foreign_tool_use",
            Rule::StageMismatch => "stage_mismatch",
            Rule::SelfExecution => "self_execution",
            Rule::RetryCompleted => "retry_completed",
            Rule::OutOfOrder => "out_of_order",
            Rule::InvalidAction => "invalid_action",
            Rule::InvalidRecovery => "invalid_recovery",
            Rule::UnresolvedAlternative => "unresolved_alternative",
            Rule::NoReport => "no_report",
            Rule::Idle => "idle",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventDetail {
    Delegation {
        target: RoleId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        context: Option<Payload>,
        /// Issued by the kernel after the manager failed to delegate.
        #[serde(default)]
        synthesized: bool,
    },
    ToolCall {
        tool: ToolId,
        result: ToolResult,
    },
    Report {
        report: TaskReport,
        explicit_status: bool,
    },
    Judgment {
        verdict: Status,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        report_seq: Option<u64>,
        /// The issue text the verdict rests on.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        basis: Option<String>,
    },
    RecoveryAction {
        action: RecoveryAction,
    },
    Escalation {
        reason: String,
        #[serde(default)]
        synthesized: bool,
    },
    Reflection {
        sections: ReflectionSections,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claim: Option<String>,
    },
    Violation {
        rule: Rule,
        note: String,
        /// True when the kernel blocked the offending action.
        enforced: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Delegation,
    ToolCall,
    Report,
    Judgment,
    RecoveryAction,
    Escalation,
    Reflection,
    Violation,
}

impl EventDetail {
    pub fn kind(&self) -> EventKind {
        match self {
            EventDetail::Delegation { .. } => EventKind::Delegation,
            EventDetail::ToolCall { .. } => EventKind::ToolCall,
            EventDetail::Report { .. } => EventKind::Report,
            EventDetail::Judgment { .. } => EventKind::Judgment,
            EventDetail::RecoveryAction { .. } => EventKind::RecoveryAction,
            EventDetail::Escalation { .. } => EventKind::Escalation,
            EventDetail::Reflection { .. } => EventKind::Reflection,
            EventDetail::Violation { .. } => EventKind::Violation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub seq: u64,
    /// Logical time: the index of the decision turn that produced the event.
    pub tick: u64,
    pub actor: RoleId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<TaskId>,
    #[serde(flatten)]
    pub detail: EventDetail,
}

impl TraceEvent {
    pub fn kind(&self) -> EventKind {
        self.detail.kind()
    }

    pub fn is_about(&self, task: TaskId) -> bool {
        self.task == Some(task)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: TokenUsage) {
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Done,
    Escalated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub condition: Condition,
    pub enforcement: Enforcement,
    pub seed: u64,
    pub events: Vec<TraceEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_usage: Option<TokenUsage>,
    /// Absent while the episode is still running or was cut short.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub termination: Option<Termination>,
}

impl EpisodeTrace {
    pub fn new(condition: Condition, enforcement: Enforcement, seed: u64) -> EpisodeTrace {
        EpisodeTrace { condition, enforcement, seed, events: Vec::new(), token_usage: None, termination: None }
    }

    pub fn is_complete(&self) -> bool {
        self.termination.is_some()
    }

    pub fn violations(&self) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(|e| e.kind() == EventKind::Violation)
    }

    /// Tasks in order of their first event.
    pub fn first_occurrence_order(&self) -> Vec<TaskId> {
        let mut order = Vec::new();
        for task in self.events.iter().filter_map(|e| e.task) {
            if !order.contains(&task) {
                order.push(task);
            }
        }
        order
    }
}
