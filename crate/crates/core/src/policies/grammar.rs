//! Line format for agent decisions:
//!
//! ```text
//! ACTION: DELEGATE; task=navigate_HCW; target=navigating_robot
//! ACTION: USE_TOOL; tool=get_navigation_results
//! ACTION: REPORT; location=located; path=planned; status=failure; issue=HCW #80 is unavailable
//! ACTION: RECOVER; alternative=assign HCW #90
//! ACTION: RECOVER; escalate
//! ACTION: REFLECT; task_outcomes=...; recovery_attempts=...; lessons_learned=...; claim=...
//! ACTION: NOOP
//! ```
//!
//! Values are trimmed. Inside a value `\;`, `\\` and `\n` stand for a
//! semicolon, a backslash and a newline. `DELEGATE` accepts `context.<field>=`
//! entries that travel with the delegation. `REPORT` fields map onto the task's
//! expected JSON output through the field alias table.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use thiserror::Error;

use crate::domain::{Payload, Record, RoleId, TaskId, ToolId};
use crate::kernel::{RecoveryAction, ReflectionSections};

use super::Action;

pub const PREFIX: &str = "ACTION:";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("line does not start with `{PREFIX}`")]
    MissingPrefix,
    #[error("unknown action `{0}`")]
    UnknownVerb(String),
    #[error("{verb} is missing `{field}`")]
    MissingField { verb: &'static str, field: &'static str },
    #[error("{verb} does not take `{field}`")]
    UnknownField { verb: &'static str, field: String },
    #[error("bad value `{value}` for `{field}`")]
    BadValue { field: String, value: String },
    #[error("segment `{0}` has no `=`")]
    MissingEquals(String),
    #[error("unknown escape `\\{0}`")]
    BadEscape(char),
    #[error("dangling escape at end of value")]
    DanglingEscape,
}

fn escape(value: &str) -> String {
    let mut out = String::with_capacity(value.len());
    for ch in value.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            ';' => out.push_str("\\;"),
            '\n' => out.push_str("\\n"),
            other => out.push(other),
        }
    }
    out
}

fn unescape(raw: &str) -> Result<String, GrammarError> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some(';') => out.push(';'),
            Some('n') => out.push('\n'),
            Some(other) => return Err(GrammarError::BadEscape(other)),
            None => return Err(GrammarError::DanglingEscape),
        }
    }
    Ok(out)
}

/// Splits on semicolons not preceded by an escaping backslash.
fn split_segments(body: &str) -> Vec<&str> {
    let mut segments = Vec::new();
    let mut start = 0;
    let mut escaped = false;
    for (i, ch) in body.char_indices() {
        match ch {
            _ if escaped => escaped = false,
            '\\' => escaped = true,
            ';' => {
                segments.push(&body[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    segments.push(&body[start..]);
    segments
}

enum Segment {
    Pair(String, String),
    Flag(String),
}

fn parse_segment(segment: &str) -> Result<Segment, GrammarError> {
    match segment.split_once('=') {
        Some((key, value)) => Ok(Segment::Pair(unescape(key.trim())?, unescape(value.trim())?)),
        None => Ok(Segment::Flag(unescape(segment.trim())?)),
    }
}

fn bad(field: &str, value: &str) -> GrammarError {
    GrammarError::BadValue { field: field.to_string(), value: value.to_string() }
}

pub fn parse_action(line: &str) -> Result<Action, GrammarError> {
    let body = line.trim_start().strip_prefix(PREFIX).ok_or(GrammarError::MissingPrefix)?;
    let body = body.trim_end_matches(['\r', '\n']);
    let mut segments = split_segments(body).into_iter();
    let verb = segments.next().unwrap_or_default().trim().to_ascii_uppercase();
    let mut fields = Vec::new();
    for segment in segments.filter(|s| !s.trim().is_empty()) {
        fields.push(parse_segment(segment)?);
    }
    match verb.as_str() {
        "DELEGATE" => parse_delegate(fields),
        "USE_TOOL" => {
            let mut tool = None;
            for field in fields {
                match field {
                    Segment::Pair(k, v) if k == "tool" => {
                        tool = Some(v.parse::<ToolId>().map_err(|_| bad("tool", &v))?)
                    }
                    Segment::Pair(k, _) | Segment::Flag(k) => {
                        return Err(GrammarError::UnknownField { verb: "USE_TOOL", field: k })
                    }
                }
            }
            let tool = tool.ok_or(GrammarError::MissingField { verb: "USE_TOOL", field: "tool" })?;
            Ok(Action::UseTool { tool })
        }
        "REPORT" => {
            let mut record = Record::new();
            for field in fields {
                match field {
                    Segment::Pair(k, v) => record.push(&k, &v),
                    Segment::Flag(k) => return Err(GrammarError::MissingEquals(k)),
                }
            }
            Ok(Action::Report { record })
        }
        "RECOVER" => {
            let mut recovery = None;
            for field in fields {
                let next = match field {
                    Segment::Pair(k, v) if k == "alternative" => RecoveryAction::AlternativeSolution(v),
                    Segment::Flag(k) if k == "escalate" => RecoveryAction::EscalateToHuman,
                    Segment::Pair(k, v) if k == "escalate" && matches!(v.as_str(), "true" | "yes" | "human") => {
                        RecoveryAction::EscalateToHuman
                    }
                    Segment::Pair(k, _) | Segment::Flag(k) => {
                        return Err(GrammarError::UnknownField { verb: "RECOVER", field: k })
                    }
                };
                if recovery.replace(next).is_some() {
                    return Err(GrammarError::UnknownField { verb: "RECOVER", field: "second recovery".to_string() });
                }
            }
            let recovery = recovery.ok_or(GrammarError::MissingField { verb: "RECOVER", field: "alternative" })?;
            Ok(Action::Recover { recovery })
        }
        "REFLECT" => {
            let mut sections = ReflectionSections::default();
            let mut claim = None;
            for field in fields {
                match field {
                    Segment::Pair(k, v) => match k.as_str() {
                        "task_outcomes" => sections.task_outcomes = v,
                        "recovery_attempts" => sections.recovery_attempts = v,
                        "lessons_learned" => sections.lessons_learned = v,
                        "claim" => claim = Some(v),
                        _ => return Err(GrammarError::UnknownField { verb: "REFLECT", field: k }),
                    },
                    Segment::Flag(k) => return Err(GrammarError::MissingEquals(k)),
                }
            }
            Ok(Action::Reflect { sections, claim })
        }
        "NOOP" => match fields.into_iter().next() {
            None => Ok(Action::NoOp),
            Some(Segment::Pair(k, _) | Segment::Flag(k)) => Err(GrammarError::UnknownField { verb: "NOOP", field: k }),
        },
        _ => Err(GrammarError::UnknownVerb(verb)),
    }
}

fn parse_delegate(fields: Vec<Segment>) -> Result<Action, GrammarError> {
    let mut task = None;
    let mut target = None;
    let mut context = Payload::new();
    for field in fields {
        match field {
            Segment::Pair(k, v) if k == "task" => task = Some(v.parse::<TaskId>().map_err(|_| bad("task", &v))?),
            Segment::Pair(k, v) if k == "target" => {
                target = Some(RoleId::from_label(&v).ok_or_else(|| bad("target", &v))?)
            }
            Segment::Pair(k, v) if k.starts_with("context.") => {
                context.insert(k["context.".len()..].to_string(), v);
            }
            Segment::Pair(k, _) | Segment::Flag(k) => {
                return Err(GrammarError::UnknownField { verb: "DELEGATE", field: k })
            }
        }
    }
    Ok(Action::Delegate {
        task: task.ok_or(GrammarError::MissingField { verb: "DELEGATE", field: "task" })?,
        target: target.ok_or(GrammarError::MissingField { verb: "DELEGATE", field: "target" })?,
        context: (!context.is_empty()).then_some(context),
    })
}

pub fn render_action(action: &Action) -> String {
    let mut parts: Vec<String> = Vec::new();
    let verb = match action {
        Action::Delegate { task, target, context } => {
            parts.push(format!("task={task}"));
            parts.push(format!("target={target}"));
            for (k, v) in context.iter().flatten() {
                parts.push(format!("context.{}={}", escape(k), escape(v)));
            }
            "DELEGATE"
        }
        Action::UseTool { tool } => {
            parts.push(format!("tool={tool}"));
            "USE_TOOL"
        }
        Action::Report { record } => {
            for (k, v) in record.iter() {
                parts.push(format!("{}={}", escape(k), escape(v)));
            }
            "REPORT"
        }
        Action::Recover { recovery } => {
            parts.push(match recovery {
                RecoveryAction::AlternativeSolution(text) => format!("alternative={}", escape(text)),
                RecoveryAction::EscalateToHuman => "escalate".to_string(),
            });
            "RECOVER"
        }
        Action::Reflect { sections, claim } => {
            for (name, text) in sections.iter() {
                parts.push(format!("{name}={}", escape(text)));
            }
            if let Some(claim) = claim {
                parts.push(format!("claim={}", escape(claim)));
            }
            "REFLECT"
        }
        Action::NoOp => "NOOP",
    };
    let mut line = format!("{PREFIX} {verb}");
    for part in parts {
        line.push_str("; ");
        line.push_str(&part);
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delegation_line_parses() {
        let a = parse_action("ACTION: DELEGATE; task=navigate_HCW; target=Staff Navigation Assistant").unwrap();
        assert_eq!(a, Action::Delegate { task: TaskId::NavigateHcw, target: RoleId::NavigationRobot, context: None });
    }

    #[test]
    fn escapes_round_trip() {
        let record = Record::new().with("Issue Reported", "a; b \\ c\nd").with("status", "failure");
        let a = Action::Report { record };
        let line = render_action(&a);
        assert!(!line.contains('\n'));
        assert_eq!(parse_action(&line).unwrap(), a);
    }

    #[test]
    fn placeholder_reflection() {
        let a = parse_action("ACTION: REFLECT; claim=Action: None (compiling the final report)").unwrap();
        match a {
            Action::Reflect { sections, claim } => {
                assert!(sections.has_empty_section());
                assert_eq!(claim.as_deref(), Some("Action: None (compiling the final report)"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_are_specific() {
        assert_eq!(parse_action("I think we should delegate"), Err(GrammarError::MissingPrefix));
        assert_eq!(parse_action("ACTION: DANCE"), Err(GrammarError::UnknownVerb("DANCE".into())));
        assert_eq!(
            parse_action("ACTION: USE_TOOL"),
            Err(GrammarError::MissingField { verb: "USE_TOOL", field: "tool" })
        );
        assert!(matches!(parse_action("ACTION: REPORT; status=ok\\q"), Err(GrammarError::BadEscape('q'))));
        assert!(matches!(
            parse_action("ACTION: DELEGATE; task=fly; target=manager"),
            Err(GrammarError::BadValue { .. })
        ));
    }

    #[test]
    fn recover_variants() {
        assert_eq!(
            parse_action("ACTION: RECOVER; escalate").unwrap(),
            Action::Recover { recovery: RecoveryAction::EscalateToHuman }
        );
        assert_eq!(
            parse_action("ACTION: RECOVER; alternative=assign HCW #90").unwrap(),
            Action::Recover { recovery: RecoveryAction::AlternativeSolution("assign HCW #90".into()) }
        );
    }
}
