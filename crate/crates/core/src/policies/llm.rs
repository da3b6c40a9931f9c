//! Adapter from observations to a text-completion backend and back.
//!
//! The prompt is assembled from the agent's goal and backstory, the pending
//! task description, the visible part of the trace and, when the knowledge
//! base is enabled, the knowledge base directive followed by the document.
//! The reply must contain one line in the action grammar; a report's fields
//! are the task's expected JSON output keys, one `key=value` pair each.

use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use thiserror::Error;

use crate::domain::RoleId;
use crate::kb::KB_DIRECTIVE;
use crate::kernel::{EventDetail, RecoveryAction, TokenUsage, TraceEvent};

use super::grammar::{parse_action, PREFIX};
use super::{Action, Observation, Policy, PolicyError, Turn};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Prompt {
    pub system: String,
    pub user: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("backend failed: {0}")]
    Failed(String),
}

pub trait TextBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<Completion, BackendError>;
}

/// Whitespace-separated word count, used as a token estimate for offline backends.
pub fn word_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

const GRAMMAR_HELP: &str = "Answer with exactly one line in one of these forms:
ACTION: DELEGATE; task=<task id>; target=<role>
ACTION: USE_TOOL; tool=<tool name>
ACTION: REPORT; <field>=<value>; ...; status=<success|failure>; issue=<text or None>
ACTION: RECOVER; alternative=<proposal>
ACTION: RECOVER; escalate
ACTION: REFLECT; task_outcomes=<text>; recovery_attempts=<text>; lessons_learned=<text>
ACTION: NOOP";

fn describe_event(event: &TraceEvent) -> String {
    let task = event.task.map(|t| t.name()).unwrap_or("-");
    let what = match &event.detail {
        EventDetail::Delegation { target, context, .. } => match context {
            Some(ctx) => format!("delegated to {target} with context {ctx:?}"),
            None => format!("delegated to {target}"),
        },
        EventDetail::ToolCall { tool, result } => {
            format!("called {tool}: {:?}, issue: {}", result.payload, result.issue.as_deref().unwrap_or("None"))
        }
        EventDetail::Report { report, .. } => format!(
            "reported {}: {:?}, issue: {}",
            report.status(),
            report.returned(),
            report.issue().unwrap_or("None")
        ),
        EventDetail::Judgment { verdict, .. } => format!("judged {verdict}"),
        EventDetail::RecoveryAction { action: RecoveryAction::AlternativeSolution(text) } => {
            format!("proposed alternative: {text}")
        }
        EventDetail::RecoveryAction { action: RecoveryAction::EscalateToHuman } => "escalated to a human".to_string(),
        EventDetail::Escalation { reason, .. } => format!("escalation: {reason}"),
        EventDetail::Reflection { .. } => "wrote a reflection".to_string(),
        EventDetail::Violation { rule, note, .. } => format!("protocol violation {rule}: {note}"),
    };
    format!("[{}] {} on {task}: {what}", event.seq, event.actor)
}

pub fn build_prompt(obs: &Observation) -> Prompt {
    let mut system =
        format!("You are the {}.\nGoal: {}\nBackstory: {}", obs.spec.title, obs.spec.goal, obs.spec.backstory);
    if !obs.spec.allowed_tools.is_empty() {
        let tools: Vec<&str> = obs.spec.allowed_tools.iter().map(|t| t.name()).collect();
        let _ = write!(system, "\nTools: {}", tools.join(", "));
    }
    if let Some(kb) = &obs.kb_text {
        let _ = write!(system, "\n\n{KB_DIRECTIVE}\n\n{kb}");
    }
    let mut user = format!("TURN: {}\n", obs.turn.name());
    if let Some(pending) = &obs.pending_task {
        let _ = writeln!(user, "TASK: {}", pending.id());
        let _ = writeln!(user, "{}", pending.description);
        let _ = writeln!(user, "Expected output fields: {}", pending.spec.expected_fields.join(", "));
    }
    if obs.role == RoleId::Manager {
        let team: Vec<String> = RoleId::ROBOTS.iter().map(|r| format!("{} ({r})", r.title())).collect();
        let _ = writeln!(user, "Co-workers: {}", team.join(", "));
    }
    if matches!(obs.turn, Turn::Recovery) {
        user.push_str("The last report on this task was judged a failure.\n");
    }
    if !obs.inbox.is_empty() {
        user.push_str("History:\n");
        for event in &obs.inbox {
            let _ = writeln!(user, "{}", describe_event(event));
        }
    }
    user.push_str(GRAMMAR_HELP);
    Prompt { system, user }
}

/// First grammar line in a completion.
pub fn extract_action(text: &str) -> Result<Action, PolicyError> {
    let line = text
        .lines()
        .find(|l| l.trim_start().starts_with(PREFIX))
        .ok_or_else(|| PolicyError::Protocol("completion contains no ACTION line".to_string()))?;
    parse_action(line).map_err(|err| PolicyError::Protocol(err.to_string()))
}

pub struct LlmPolicy<B> {
    backend: B,
    usage: TokenUsage,
}

impl<B: TextBackend> LlmPolicy<B> {
    pub fn new(backend: B) -> LlmPolicy<B> {
        LlmPolicy { backend, usage: TokenUsage::default() }
    }
}

impl<B: TextBackend> Policy for LlmPolicy<B> {
    fn decide(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        let prompt = build_prompt(obs);
        let completion = self.backend.complete(&prompt).map_err(|err| match err {
            BackendError::Unavailable(msg) => PolicyError::BackendUnavailable(msg),
            BackendError::Failed(msg) => PolicyError::Backend(msg),
        })?;
        self.usage.add(TokenUsage {
            prompt_tokens: completion.prompt_tokens,
            completion_tokens: completion.completion_tokens,
        });
        extract_action(&completion.text)
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.usage = TokenUsage::default();
    }

    fn token_usage(&self) -> Option<TokenUsage> {
        Some(self.usage)
    }
}

type Responder = Box<dyn FnMut(&Prompt) -> Result<String, BackendError> + Send>;

/// Offline backend answering from a closure or a fixed list; tokens are
/// estimated by word count.
pub struct CannedBackend {
    responder: Responder,
}

impl CannedBackend {
    pub fn new(responder: impl FnMut(&Prompt) -> String + Send + 'static) -> CannedBackend {
        let mut responder = responder;
        CannedBackend { responder: Box::new(move |p| Ok(responder(p))) }
    }

    /// Replies in order; fails as unavailable once the list runs out.
    pub fn sequence(replies: Vec<String>) -> CannedBackend {
        let mut queue: VecDeque<String> = replies.into();
        CannedBackend {
            responder: Box::new(move |_| {
                queue.pop_front().ok_or_else(|| BackendError::Unavailable("canned replies exhausted".to_string()))
            }),
        }
    }
}

impl TextBackend for CannedBackend {
    fn complete(&mut self, prompt: &Prompt) -> Result<Completion, BackendError> {
        let text = (self.responder)(prompt)?;
        Ok(Completion {
            prompt_tokens: word_tokens(&prompt.system) + word_tokens(&prompt.user),
            completion_tokens: word_tokens(&text),
            text,
        })
    }
}
