use alloc::collections::BTreeMap;
use alloc::string::ToString;
use core::fmt;
use core::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{RoleId, TaskId, UnknownName};
use crate::kernel::{EventDetail, ReflectionSections, TraceEvent};

use super::compliant::{fabricated_record, result_record, CompliantManager};
use super::{Action, Observation, Policy, PolicyError, Turn};

/// The five recurring breakdown patterns of the robot team.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureMode {
    RoleMisalignment,
    ToolAccessViolation,
    LateOrNoIssueHandling,
    WorkflowNoncompliance,
    BypassOrFalseReport,
}

impl FailureMode {
    pub const ALL: [FailureMode; 5] = [
        FailureMode::RoleMisalignment,
        FailureMode::ToolAccessViolation,
        FailureMode::LateOrNoIssueHandling,
        FailureMode::WorkflowNoncompliance,
        FailureMode::BypassOrFalseReport,
    ];

    /// Order in which per-turn draws are consulted; the first hit wins.
    pub const DRAW_ORDER: [FailureMode; 5] = [
        FailureMode::ToolAccessViolation,
        FailureMode::WorkflowNoncompliance,
        FailureMode::RoleMisalignment,
        FailureMode::LateOrNoIssueHandling,
        FailureMode::BypassOrFalseReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FailureMode::RoleMisalignment => "role_misalignment",
            FailureMode::ToolAccessViolation => "tool_access_violation",
            FailureMode::LateOrNoIssueHandling => "late_or_no_issue_handling",
            FailureMode::WorkflowNoncompliance => "workflow_noncompliance",
            FailureMode::BypassOrFalseReport => "bypass_or_false_report",
        }
    }

    pub fn short(self) -> &'static str {
        match self {
            FailureMode::RoleMisalignment => "RM",
            FailureMode::ToolAccessViolation => "TAV",
            FailureMode::LateOrNoIssueHandling => "LNH",
            FailureMode::WorkflowNoncompliance => "WN",
            FailureMode::BypassOrFalseReport => "BFR",
        }
    }
}

impl fmt::Display for FailureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FailureMode {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        FailureMode::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s) || m.short().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName { kind: "failure mode", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("probability {probability} for {mode} is outside [0, 1]")]
    OutOfRange { mode: FailureMode, probability: Ratio<u64> },
}

/// Per-mode trigger probabilities plus the generator seed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultProfile {
    modes: BTreeMap<FailureMode, Ratio<u64>>,
    pub seed: u64,
}

impl FaultProfile {
    pub fn new(modes: BTreeMap<FailureMode, Ratio<u64>>, seed: u64) -> Result<FaultProfile, ProfileError> {
        for (mode, p) in &modes {
            if *p > Ratio::one() {
                return Err(ProfileError::OutOfRange { mode: *mode, probability: *p });
            }
        }
        Ok(FaultProfile { modes, seed })
    }

    pub fn empty(seed: u64) -> FaultProfile {
        FaultProfile { modes: BTreeMap::new(), seed }
    }

    /// One mode that always triggers.
    pub fn single(mode: FailureMode, seed: u64) -> FaultProfile {
        FaultProfile { modes: [(mode, Ratio::one())].into_iter().collect(), seed }
    }

    pub fn modes(&self) -> impl Iterator<Item = (FailureMode, Ratio<u64>)> + '_ {
        self.modes.iter().map(|(m, p)| (*m, *p))
    }

    pub fn probability(&self, mode: FailureMode) -> Ratio<u64> {
        self.modes.get(&mode).copied().unwrap_or_else(Ratio::zero)
    }
}

const SEED_MIX: u64 = 0x9E37_79B9_7F4A_7C15;

/// A manager that deviates from the protocol with the profile's
/// probabilities and otherwise behaves compliantly.
#[derive(Debug, Clone)]
pub struct FaultyManager {
    profile: FaultProfile,
    rng: ChaCha8Rng,
    /// Task on which a two-step deviation is under way.
    in_progress: Option<(FailureMode, TaskId)>,
}

impl FaultyManager {
    pub fn new(profile: FaultProfile) -> FaultyManager {
        let rng = ChaCha8Rng::seed_from_u64(profile.seed);
        FaultyManager { profile, rng, in_progress: None }
    }

    pub fn profile(&self) -> &FaultProfile {
        &self.profile
    }

    fn applicable(turn: Turn, task: TaskId, mode: FailureMode) -> bool {
        match (turn, mode) {
            (Turn::Dispatch, FailureMode::ToolAccessViolation) => task.is_operational(),
            (Turn::Dispatch, FailureMode::WorkflowNoncompliance) => task == TaskId::DisplayInfo,
            (Turn::Dispatch, FailureMode::RoleMisalignment) => {
                matches!(task, TaskId::CollectInfo | TaskId::DisplayInfo | TaskId::Reflection)
            }
            (Turn::Dispatch, FailureMode::BypassOrFalseReport) => task == TaskId::Reflection,
            (Turn::Recovery, FailureMode::LateOrNoIssueHandling) => true,
            _ => false,
        }
    }

    /// Draws every configured mode independently, so the generator advances
    /// by the same amount whichever mode fires.
    fn draw(&mut self, turn: Turn, task: TaskId) -> Option<FailureMode> {
        let mut hit = None;
        for mode in FailureMode::DRAW_ORDER {
            let Some(p) = self.profile.modes.get(&mode).copied() else {
                continue;
            };
            let fires = *p.denom() != 0 && self.rng.gen_range(0..*p.denom()) < *p.numer();
            if fires && hit.is_none() && Self::applicable(turn, task, mode) {
                hit = Some(mode);
            }
        }
        hit
    }

    fn own_tool_call(inbox: &[TraceEvent], task: TaskId) -> Option<&crate::world::ToolResult> {
        inbox.iter().rev().find_map(|e| match &e.detail {
            EventDetail::ToolCall { result, .. } if e.actor == RoleId::Manager && e.is_about(task) => Some(result),
            _ => None,
        })
    }

    fn deviate(&mut self, mode: FailureMode, obs: &Observation, task: TaskId) -> Action {
        let spec = &obs.pending_task.as_ref().expect("dispatch has a pending task").spec;
        match mode {
            FailureMode::ToolAccessViolation | FailureMode::WorkflowNoncompliance => {
                self.in_progress = Some((mode, task));
                Action::UseTool { tool: task.tool().expect("operational task") }
            }
            FailureMode::RoleMisalignment if task == TaskId::Reflection => {
                Action::Delegate { task, target: RoleId::InfoDisplayRobot, context: None }
            }
            FailureMode::RoleMisalignment => Action::Report { record: fabricated_record(task, &spec.expected_fields) },
            FailureMode::LateOrNoIssueHandling => Action::NoOp,
            FailureMode::BypassOrFalseReport => Action::Reflect {
                sections: ReflectionSections::default(),
                claim: Some("Action: None (compiling the final report)".to_string()),
            },
        }
    }

    /// Second step of a tool-first deviation, once the tool result is in view.
    fn follow_up(&mut self, obs: &Observation, task: TaskId) -> Option<Action> {
        let (mode, on) = self.in_progress?;
        if on != task || obs.turn != Turn::Dispatch {
            self.in_progress = None;
            return None;
        }
        let result = Self::own_tool_call(&obs.inbox, task)?;
        self.in_progress = None;
        Some(match mode {
            FailureMode::WorkflowNoncompliance => {
                let target = task.correct_assignee();
                Action::Delegate { task, target, context: Some(result.payload.clone()) }
            }
            _ => Action::Report { record: result_record(task, result) },
        })
    }
}

impl Policy for FaultyManager {
    fn decide(&mut self, obs: &Observation) -> Result<Action, PolicyError> {
        let Some(task) = obs.pending() else {
            return Ok(Action::NoOp);
        };
        if let Some(action) = self.follow_up(obs, task) {
            return Ok(action);
        }
        self.in_progress = None;
        Ok(match self.draw(obs.turn, task) {
            Some(mode) => self.deviate(mode, obs, task),
            None => CompliantManager::decide_for(obs),
        })
    }

    fn begin_episode(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(self.profile.seed ^ seed.wrapping_mul(SEED_MIX));
        self.in_progress = None;
    }
}
