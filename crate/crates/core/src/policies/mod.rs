//! Agent behaviours plugged into the kernel: compliant, fault-injecting,
//! transcript replay and language-model backed.

use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{AgentSpec, Payload, Record, RoleId, TaskId, TaskSpec, ToolId};
use crate::kernel::{RecoveryAction, ReflectionSections, TokenUsage, TraceEvent};

pub mod compliant;
pub mod faulty;
pub mod grammar;
pub mod llm;
pub mod replay;

pub use compliant::{CompliantManager, CompliantRobot};
pub use faulty::{FailureMode, FaultProfile, FaultyManager, ProfileError};
pub use grammar::{parse_action, render_action, GrammarError};
pub use llm::{BackendError, CannedBackend, Completion, LlmPolicy, Prompt, TextBackend};
pub use replay::{parse_transcript, ReplayPolicy};

/// Which kind of decision the kernel is asking for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Turn {
    /// Manager: start the pending task.
    Dispatch,
    /// Manager: respond to a failure judgment on the pending task.
    Recovery,
    /// Robot: carry out the delegated task.
    Execute,
}

impl Turn {
    pub fn name(self) -> &'static str {
        match self {
            Turn::Dispatch => "dispatch",
            Turn::Recovery => "recovery",
            Turn::Execute => "execute",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingTask {
    pub spec: TaskSpec,
    /// Description with the scenario cue substituted.
    pub description: String,
}

impl PendingTask {
    pub fn id(&self) -> TaskId {
        self.spec.id
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Observation {
    pub role: RoleId,
    pub spec: AgentSpec,
    pub turn: Turn,
    pub pending_task: Option<PendingTask>,
    /// Events visible to this role so far, in trace order.
    pub inbox: Vec<TraceEvent>,
    /// Knowledge base text; present only when the knowledge base is enabled.
    pub kb_text: Option<String>,
}

impl Observation {
    pub fn pending(&self) -> Option<TaskId> {
        self.pending_task.as_ref().map(PendingTask::id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Delegate {
        task: TaskId,
        target: RoleId,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        context: Option<Payload>,
    },
    UseTool {
        tool: ToolId,
    },
    /// Structured task report; the kernel parses it against the task spec.
    Report {
        record: Record,
    },
    Recover {
        recovery: RecoveryAction,
    },
    Reflect {
        sections: ReflectionSections,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        claim: Option<String>,
    },
    NoOp,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transcript exhausted after {0} decisions")]
    TranscriptExhausted(usize),
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("backend failed: {0}")]
    Backend(String),
}

pub trait Policy {
    fn decide(&mut self, obs: &Observation) -> Result<Action, PolicyError>;

    /// Called once before each episode with the episode seed.
    fn begin_episode(&mut self, _seed: u64) {}

    /// Tokens consumed so far; `None` for policies that use no model.
    fn token_usage(&self) -> Option<TokenUsage> {
        None
    }
}

pub type BoxedPolicy = Box<dyn Policy + Send>;

/// One policy per role.
pub struct PolicySet {
    slots: [BoxedPolicy; 4],
}

impl PolicySet {
    pub fn new(
        manager: BoxedPolicy,
        navigation: BoxedPolicy,
        collection: BoxedPolicy,
        display: BoxedPolicy,
    ) -> PolicySet {
        PolicySet { slots: [manager, navigation, collection, display] }
    }

    pub fn compliant() -> PolicySet {
        PolicySet::with_manager(Box::new(CompliantManager))
    }

    /// Compliant robots under the given manager policy.
    pub fn with_manager(manager: BoxedPolicy) -> PolicySet {
        PolicySet::new(
            manager,
            Box::new(CompliantRobot::new(RoleId::NavigationRobot)),
            Box::new(CompliantRobot::new(RoleId::InfoCollectionRobot)),
            Box::new(CompliantRobot::new(RoleId::InfoDisplayRobot)),
        )
    }

    pub fn set(&mut self, role: RoleId, policy: BoxedPolicy) {
        self.slots[role.index()] = policy;
    }

    pub fn get_mut(&mut self, role: RoleId) -> &mut BoxedPolicy {
        &mut self.slots[role.index()]
    }

    pub fn begin_episode(&mut self, seed: u64) {
        for slot in &mut self.slots {
            slot.begin_episode(seed);
        }
    }

    /// Summed usage across model-backed policies, if any.
    pub fn token_usage(&self) -> Option<TokenUsage> {
        let mut total: Option<TokenUsage> = None;
        for usage in self.slots.iter().filter_map(|p| p.token_usage()) {
            total.get_or_insert_with(TokenUsage::default).add(usage);
        }
        total
    }
}
