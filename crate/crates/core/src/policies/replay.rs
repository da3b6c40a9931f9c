use alloc::vec::Vec;

use thiserror::Error;

use super::grammar::{parse_action, GrammarError, PREFIX};
use super::{Action, Observation, Policy, PolicyError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("transcript line {line}: {source}")]
pub struct TranscriptError {
    pub line: usize,
    pub source: GrammarError,
}

/// Reads the decision lines of a transcript. Lines that do not start with
/// `ACTION:` (agent thoughts, comments, blank lines) are skipped.
pub fn parse_transcript(text: &str) -> Result<Vec<Action>, TranscriptError> {
    text.lines()
        .enumerate()
        .filter(|(_, line)| line.trim_start().starts_with(PREFIX))
        .map(|(i, line)| parse_action(line).map_err(|source| TranscriptError { line: i + 1, source }))
        .collect()
}

/// Plays back recorded decisions in order, ignoring the observation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayPolicy {
    decisions: Vec<Action>,
    cursor: usize,
}

impl ReplayPolicy {
    pub fn new(decisions: Vec<Action>) -> ReplayPolicy {
        ReplayPolicy { decisions, cursor: 0 }
    }

    pub fn from_transcript(text: &str) -> Result<ReplayPolicy, TranscriptError> {
        parse_transcript(text).map(ReplayPolicy::new)
    }

    pub fn remaining(&self) -> usize {
        self.decisions.len() - self.cursor
    }
}

impl Policy for ReplayPolicy {
    fn decide(&mut self, _obs: &Observation) -> Result<Action, PolicyError> {
        let action = self.decisions.get(self.cursor).cloned().ok_or(PolicyError::TranscriptExhausted(self.cursor))?;
        self.cursor += 1;
        Ok(action)
    }

    fn begin_episode(&mut self, _seed: u64) {
        self.cursor = 0;
    }
}
