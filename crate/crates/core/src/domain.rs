//! Shared domain vocabulary: roles, tools, tasks, agent and task specs, and
//! the task report contract returned by robots.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Team member identity. The manager supervises the three robots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RoleId {
    #[serde(rename = "manager")]
    Manager,
    #[serde(rename = "navigating_robot")]
    NavigationRobot,
    #[serde(rename = "info_collection_robot")]
    InfoCollectionRobot,
    #[serde(rename = "info_display_robot")]
    InfoDisplayRobot,
}

impl RoleId {
    pub const ALL: [RoleId; 4] =
        [RoleId::Manager, RoleId::NavigationRobot, RoleId::InfoCollectionRobot, RoleId::InfoDisplayRobot];

    pub const ROBOTS: [RoleId; 3] = [RoleId::NavigationRobot, RoleId::InfoCollectionRobot, RoleId::InfoDisplayRobot];

    /// Configuration key used in roster files and traces.
    pub fn key(self) -> &'static str {
        match self {
            RoleId::Manager => "manager",
            RoleId::NavigationRobot => "navigating_robot",
            RoleId::InfoCollectionRobot => "info_collection_robot",
            RoleId::InfoDisplayRobot => "info_display_robot",
        }
    }

    /// Human-facing role title, as the knowledge base refers to it.
    pub fn title(self) -> &'static str {
        match self {
            RoleId::Manager => "Leader of the Robot Team",
            RoleId::NavigationRobot => "Staff Navigation Assistant",
            RoleId::InfoCollectionRobot => "Information Collection Assistant",
            RoleId::InfoDisplayRobot => "Critical Information Display Robot",
        }
    }

    /// Resolves either a configuration key or a title (case-insensitive).
    /// `manager` is accepted as the manager's title alias.
    pub fn from_label(label: &str) -> Option<RoleId> {
        let label = label.trim();
        RoleId::ALL.iter().copied().find(|r| {
            r.key() == label
                || r.title().eq_ignore_ascii_case(label)
                || (*r == RoleId::Manager && label.eq_ignore_ascii_case("manager"))
        })
    }

    pub fn is_manager(self) -> bool {
        self == RoleId::Manager
    }

    pub fn supervisor(self) -> Option<RoleId> {
        match self {
            RoleId::Manager => None,
            _ => Some(RoleId::Manager),
        }
    }

    /// The one tool a robot embodies; the manager has none.
    pub fn designated_tool(self) -> Option<ToolId> {
        match self {
            RoleId::Manager => None,
            RoleId::NavigationRobot => Some(ToolId::GetNavigationResults),
            RoleId::InfoCollectionRobot => Some(ToolId::GetOnboardingInformation),
            RoleId::InfoDisplayRobot => Some(ToolId::GetDisplayInformation),
        }
    }

    pub(crate) fn index(self) -> usize {
        match self {
            RoleId::Manager => 0,
            RoleId::NavigationRobot => 1,
            RoleId::InfoCollectionRobot => 2,
            RoleId::InfoDisplayRobot => 3,
        }
    }
}

impl fmt::Display for RoleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for RoleId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleId::from_label(s).ok_or_else(|| UnknownName::new("role", s))
    }
}

/// Robot-local systems exposed as tools.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ToolId {
    #[serde(rename = "get_navigation_results")]
    GetNavigationResults,
    #[serde(rename = "get_onboarding_information")]
    GetOnboardingInformation,
    #[serde(rename = "get_display_information")]
    GetDisplayInformation,
}

impl ToolId {
    pub const ALL: [ToolId; 3] =
        [ToolId::GetNavigationResults, ToolId::GetOnboardingInformation, ToolId::GetDisplayInformation];

    pub fn name(self) -> &'static str {
        match self {
            ToolId::GetNavigationResults => "get_navigation_results",
            ToolId::GetOnboardingInformation => "get_onboarding_information",
            ToolId::GetDisplayInformation => "get_display_information",
        }
    }

    pub fn owner(self) -> RoleId {
        match self {
            ToolId::GetNavigationResults => RoleId::NavigationRobot,
            ToolId::GetOnboardingInformation => RoleId::InfoCollectionRobot,
            ToolId::GetDisplayInformation => RoleId::InfoDisplayRobot,
        }
    }

    /// The workflow stage whose scenario this tool serves.
    pub fn stage(self) -> TaskId {
        match self {
            ToolId::GetNavigationResults => TaskId::NavigateHcw,
            ToolId::GetOnboardingInformation => TaskId::CollectInfo,
            ToolId::GetDisplayInformation => TaskId::DisplayInfo,
        }
    }
}

impl fmt::Display for ToolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ToolId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        ToolId::ALL.iter().copied().find(|t| t.name() == s).ok_or_else(|| UnknownName::new("tool", s))
    }
}

/// The four workflow tasks, declared in workflow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    #[serde(rename = "navigate_HCW")]
    NavigateHcw,
    #[serde(rename = "collect_info")]
    CollectInfo,
    #[serde(rename = "display_info")]
    DisplayInfo,
    #[serde(rename = "reflection_task")]
    Reflection,
}

impl TaskId {
    pub const WORKFLOW: [TaskId; 4] =
        [TaskId::NavigateHcw, TaskId::CollectInfo, TaskId::DisplayInfo, TaskId::Reflection];

    pub const OPERATIONAL: [TaskId; 3] = [TaskId::NavigateHcw, TaskId::CollectInfo, TaskId::DisplayInfo];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::NavigateHcw => "navigate_HCW",
            TaskId::CollectInfo => "collect_info",
            TaskId::DisplayInfo => "display_info",
            TaskId::Reflection => "reflection_task",
        }
    }

    pub fn is_operational(self) -> bool {
        self != TaskId::Reflection
    }

    pub fn tool(self) -> Option<ToolId> {
        match self {
            TaskId::NavigateHcw => Some(ToolId::GetNavigationResults),
            TaskId::CollectInfo => Some(ToolId::GetOnboardingInformation),
            TaskId::DisplayInfo => Some(ToolId::GetDisplayInformation),
            TaskId::Reflection => None,
        }
    }

    pub fn correct_assignee(self) -> RoleId {
        match self.tool() {
            Some(tool) => tool.owner(),
            None => RoleId::Manager,
        }
    }

    pub fn next(self) -> Option<TaskId> {
        let pos = self.position();
        TaskId::WORKFLOW.get(pos + 1).copied()
    }

    pub fn position(self) -> usize {
        match self {
            TaskId::NavigateHcw => 0,
            TaskId::CollectInfo => 1,
            TaskId::DisplayInfo => 2,
            TaskId::Reflection => 3,
        }
    }

    /// Task-description placeholder that receives the scenario cue.
    pub fn placeholder(self) -> Option<&'static str> {
        match self {
            TaskId::NavigateHcw => Some("{scenario_navigate}"),
            TaskId::CollectInfo => Some("{scenario_collect}"),
            TaskId::DisplayInfo => Some("{scenario_display}"),
            TaskId::Reflection => None,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        TaskId::WORKFLOW
            .iter()
            .copied()
            .find(|t| t.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownName::new("task", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown {kind} `{name}`")]
pub struct UnknownName {
    pub kind: &'static str,
    pub name: String,
}

impl UnknownName {
    fn new(kind: &'static str, name: &str) -> Self {
        Self { kind, name: name.to_string() }
    }
}

/// Experiment condition: with or without the knowledge base in agent context.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    WithKb,
}

impl Condition {
    pub const BOTH: [Condition; 2] = [Condition::Baseline, Condition::WithKb];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::WithKb => "with_kb",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "baseline" => Ok(Condition::Baseline),
            "with_kb" | "kb" => Ok(Condition::WithKb),
            other => Err(UnknownName::new("condition", other)),
        }
    }
}

/// Whether the kernel prevents protocol violations or merely records them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Enforcement {
    Strict,
    Permissive,
}

impl Enforcement {
    pub fn name(self) -> &'static str {
        match self {
            Enforcement::Strict => "strict",
            Enforcement::Permissive => "permissive",
        }
    }

    pub fn is_strict(self) -> bool {
        self == Enforcement::Strict
    }
}

impl fmt::Display for Enforcement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Enforcement {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "strict" => Ok(Enforcement::Strict),
            "permissive" => Ok(Enforcement::Permissive),
            other => Err(UnknownName::new("enforcement", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub role: RoleId,
    pub title: String,
    pub goal: String,
    pub backstory: String,
    pub allowed_tools: BTreeSet<ToolId>,
    pub supervisor: Option<RoleId>,
}

const ESCALATE_CLAUSE: &str = "If task completion is blocked, you must escalate the issue to your manager (the leader of the robot team) with a clear situation report. You must not attempt to resolve the issue independently if it is outside your assigned responsibility.";

impl AgentSpec {
    /// The stock configuration of one team member.
    pub fn canonical(role: RoleId) -> AgentSpec {
        let (goal, backstory): (&str, String) = match role {
            RoleId::Manager => (
                "Oversee and coordinate a team of robotic agents to ensure successful task execution across navigation, information collection, and display operations.",
                "You are the leader of the robot team. Your primary responsibilities include delegating tasks to the appropriate co-worker agents, monitoring progress, responding to reported issues, and generating a final report that reflects task outcomes and collaboration processes.".to_string(),
            ),
            RoleId::NavigationRobot => (
                "Guide human care workers efficiently to designated locations within the Emergency Department.",
                format!("You are a specialized navigation robot responsible for facilitating staff movement. You use your own navigation system via the assigned tool to retrieve routes, perform navigation, and access availability information. {ESCALATE_CLAUSE}"),
            ),
            RoleId::InfoCollectionRobot => (
                "Retrieve and structure relevant information about human care workers during onboarding.",
                format!("You are an information collection robot responsible for prompting staff to provide identity and specialty data after scanning their ID via your assigned tool. {ESCALATE_CLAUSE}"),
            ),
            RoleId::InfoDisplayRobot => (
                "Fetch updated information and generate a layout plan for displaying it to support care coordination and team role awareness.",
                format!("You operate a large shared display that presents real-time updates such as staff role assignments and patient care status. You use your assigned tool to retrieve updated information and create a layout plan for how it should be presented. {ESCALATE_CLAUSE}"),
            ),
        };
        AgentSpec {
            role,
            title: role.title().to_string(),
            goal: goal.to_string(),
            backstory,
            allowed_tools: role.designated_tool().into_iter().collect(),
            supervisor: role.supervisor(),
        }
    }
}

/// The four stock agents in role order.
pub fn canonical_roster() -> Vec<AgentSpec> {
    RoleId::ALL.iter().map(|r| AgentSpec::canonical(*r)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RosterViolation {
    #[error("roster is empty")]
    EmptyRoster,
    #[error("role {0} appears more than once")]
    DuplicateRole(RoleId),
    #[error("role {0} is missing from the roster")]
    MissingRole(RoleId),
    #[error("manager must not be granted {0}")]
    ManagerToolGrant(ToolId),
    #[error("{role} is missing its designated tool {tool}")]
    MissingGrant { role: RoleId, tool: ToolId },
    #[error("{role} is granted {tool}, which belongs to another robot")]
    ForeignGrant { role: RoleId, tool: ToolId },
    #[error("{role} must report to {expected:?}, found {found:?}")]
    WrongSupervisor { role: RoleId, expected: Option<RoleId>, found: Option<RoleId> },
}

impl RosterViolation {
    pub fn role(&self) -> Option<RoleId> {
        match self {
            RosterViolation::EmptyRoster => None,
            RosterViolation::DuplicateRole(r) | RosterViolation::MissingRole(r) => Some(*r),
            RosterViolation::ManagerToolGrant(_) => Some(RoleId::Manager),
            RosterViolation::MissingGrant { role, .. }
            | RosterViolation::ForeignGrant { role, .. }
            | RosterViolation::WrongSupervisor { role, .. } => Some(*role),
        }
    }
}

/// Checks the one-manager, one-tool-per-robot roster rules. Every violation
/// found is returned, not just the first.
pub fn validate_agent_roster(specs: &[AgentSpec]) -> Result<(), Vec<RosterViolation>> {
    let mut violations = Vec::new();
    if specs.is_empty() {
        return Err(alloc::vec![RosterViolation::EmptyRoster]);
    }
    let mut seen = BTreeSet::new();
    for spec in specs {
        if !seen.insert(spec.role) {
            violations.push(RosterViolation::DuplicateRole(spec.role));
            continue;
        }
        if spec.supervisor != spec.role.supervisor() {
            violations.push(RosterViolation::WrongSupervisor {
                role: spec.role,
                expected: spec.role.supervisor(),
                found: spec.supervisor,
            });
        }
        match spec.role.designated_tool() {
            None => {
                for tool in &spec.allowed_tools {
                    violations.push(RosterViolation::ManagerToolGrant(*tool));
                }
            }
            Some(own) => {
                if !spec.allowed_tools.contains(&own) {
                    violations.push(RosterViolation::MissingGrant { role: spec.role, tool: own });
                }
                for tool in spec.allowed_tools.iter().filter(|t| **t != own) {
                    violations.push(RosterViolation::ForeignGrant { role: spec.role, tool: *tool });
                }
            }
        }
    }
    for role in RoleId::ALL {
        if !seen.contains(&role) {
            violations.push(RosterViolation::MissingRole(role));
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: TaskId,
    pub description_template: String,
    pub expected_fields: Vec<String>,
    pub correct_assignee: RoleId,
}

impl TaskSpec {
    pub fn canonical(id: TaskId) -> TaskSpec {
        let (description, fields): (&str, &[&str]) = match id {
            TaskId::NavigateHcw => (
                "The scenario observed: {scenario_navigate}\nNow the task is to guide the human care worker to the designated location.",
                &["location", "path"],
            ),
            TaskId::CollectInfo => (
                "The scenario observed: {scenario_collect}\nNow the task is to collect information from the human care worker.",
                &["id", "name", "specialty"],
            ),
            TaskId::DisplayInfo => (
                "The scenario observed: {scenario_display}\nNow the task is to get the information to display and develop a plan to lay out the information on the information sharing display.",
                &["display_info", "layout_plan"],
            ),
            TaskId::Reflection => (
                "Reflect on the entire process of crew collaboration and generate a reflection report highlighting Task Outcomes, Recovery Attempts, and Lessons Learned from the process.",
                &["task_outcomes", "recovery_attempts", "lessons_learned"],
            ),
        };
        let mut expected_fields: Vec<String> = fields.iter().map(|f| f.to_string()).collect();
        expected_fields.push(STATUS_FIELD.to_string());
        TaskSpec {
            id,
            description_template: description.to_string(),
            expected_fields,
            correct_assignee: id.correct_assignee(),
        }
    }

    /// Expected fields other than the status/issue pair.
    pub fn payload_fields(&self) -> impl Iterator<Item = &str> {
        self.expected_fields.iter().map(String::as_str).filter(|f| *f != STATUS_FIELD && *f != ISSUE_FIELD)
    }

    /// Literal substitution of the scenario cue into the template.
    pub fn render_description(&self, cue: &str) -> String {
        match self.id.placeholder() {
            Some(placeholder) => self.description_template.replace(placeholder, cue),
            None => self.description_template.clone(),
        }
    }
}

pub fn canonical_task_specs() -> Vec<TaskSpec> {
    TaskId::WORKFLOW.iter().map(|t| TaskSpec::canonical(*t)).collect()
}

pub const STATUS_FIELD: &str = "status";
pub const ISSUE_FIELD: &str = "issue";
pub const TASK_FIELD: &str = "task";

/// Prose labels seen in task configurations and agent output, mapped to
/// canonical field names. Matching is case-insensitive.
pub const FIELD_ALIASES: &[(&str, &str)] = &[
    ("Task Status", STATUS_FIELD),
    ("Status", STATUS_FIELD),
    ("Issue Reported", ISSUE_FIELD),
    ("Issue", ISSUE_FIELD),
    ("Issues", ISSUE_FIELD),
    ("Location information", "location"),
    ("Location", "location"),
    ("Path planned", "path"),
    ("Path", "path"),
    ("ID", "id"),
    ("HCW ID", "id"),
    ("Name", "name"),
    ("Specialty", "specialty"),
    ("The information to be displayed on the information sharing display", "display_info"),
    ("Display information", "display_info"),
    ("A brief plan of how to lay out the information on the information sharing display", "layout_plan"),
    ("Layout plan", "layout_plan"),
    ("Task Outcomes", "task_outcomes"),
    ("Recovery Attempts", "recovery_attempts"),
    ("Lessons Learned from the Process", "lessons_learned"),
    ("Lessons Learned", "lessons_learned"),
];

/// Status phrasings accepted for the status field. Anything else is a
/// malformed report rather than a guess.
pub const STATUS_ALIASES: &[(&str, Status)] = &[
    ("success", Status::Success),
    ("failure", Status::Failure),
    ("no issue reported", Status::Success),
    ("issue reported", Status::Failure),
];

/// Issue values meaning "no issue".
pub const EMPTY_ISSUE_VALUES: &[&str] = &["", "none", "null", "n/a", "no issue", "no issue reported"];

/// Canonical field name for a label: alias lookup first, then lower_snake.
pub fn canonical_field(label: &str) -> String {
    let trimmed = label.trim();
    for (alias, canonical) in FIELD_ALIASES {
        if alias.eq_ignore_ascii_case(trimmed) {
            return (*canonical).to_string();
        }
    }
    let mut out = String::with_capacity(trimmed.len());
    let mut gap = false;
    for ch in trimmed.chars() {
        if ch.is_alphanumeric() {
            if gap && !out.is_empty() {
                out.push('_');
            }
            gap = false;
            out.extend(ch.to_lowercase());
        } else {
            gap = true;
        }
    }
    out
}

pub fn parse_status(value: &str) -> Option<Status> {
    let v = value.trim().trim_matches('"');
    STATUS_ALIASES.iter().find(|(phrase, _)| phrase.eq_ignore_ascii_case(v)).map(|(_, s)| *s)
}

fn normalize_issue(value: &str) -> Option<String> {
    let v = value.trim();
    if EMPTY_ISSUE_VALUES.iter().any(|e| e.eq_ignore_ascii_case(v)) {
        None
    } else {
        Some(v.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Success,
    Failure,
}

impl Status {
    pub fn name(self) -> &'static str {
        match self {
            Status::Success => "success",
            Status::Failure => "failure",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Field name to value. Ordered so traces serialize deterministically.
pub type Payload = BTreeMap<String, String>;

/// An ordered list of raw key/value pairs as an agent produced them, before
/// alias normalization.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record(pub Vec<(String, String)>);

impl Record {
    pub fn new() -> Self {
        Self(Vec::new())
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: &str, value: &str) {
        self.0.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl<K: ToString, V: ToString> FromIterator<(K, V)> for Record {
    fn from_iter<I: IntoIterator<Item = (K, V)>>(iter: I) -> Self {
        Self(iter.into_iter().map(|(k, v)| (k.to_string(), v.to_string())).collect())
    }
}

/// A task's return payload plus its status. Construction enforces that a
/// failure carries a non-empty issue and a success carries none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawTaskReport", into = "RawTaskReport")]
pub struct TaskReport {
    task: TaskId,
    returned: Payload,
    status: Status,
    issue: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTaskReport {
    task: TaskId,
    returned: Payload,
    status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    issue: Option<String>,
}

impl TryFrom<RawTaskReport> for TaskReport {
    type Error = ReportError;

    fn try_from(raw: RawTaskReport) -> Result<Self, Self::Error> {
        match raw.status {
            Status::Success => match raw.issue {
                None => Ok(TaskReport::success(raw.task, raw.returned)),
                Some(_) => Err(ReportError::InconsistentReport("success report carries an issue".to_string())),
            },
            Status::Failure => TaskReport::failure(raw.task, raw.returned, raw.issue.unwrap_or_default()),
        }
    }
}

impl From<TaskReport> for RawTaskReport {
    fn from(r: TaskReport) -> Self {
        RawTaskReport { task: r.task, returned: r.returned, status: r.status, issue: r.issue }
    }
}

impl TaskReport {
    pub fn success(task: TaskId, returned: Payload) -> TaskReport {
        TaskReport { task, returned, status: Status::Success, issue: None }
    }

    pub fn failure(task: TaskId, returned: Payload, issue: impl Into<String>) -> Result<TaskReport, ReportError> {
        let issue = issue.into();
        if issue.trim().is_empty() {
            return Err(ReportError::InconsistentReport(format!("{task} reported failure without an issue")));
        }
        Ok(TaskReport { task, returned, status: Status::Failure, issue: Some(issue) })
    }

    pub fn task(&self) -> TaskId {
        self.task
    }

    pub fn returned(&self) -> &Payload {
        &self.returned
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn issue(&self) -> Option<&str> {
        self.issue.as_deref()
    }

    /// Canonical record form; parses back to an equal report.
    pub fn to_record(&self) -> Record {
        let mut record = Record::new().with(TASK_FIELD, self.task.name());
        for (k, v) in &self.returned {
            record.push(k, v);
        }
        record.push(STATUS_FIELD, self.status.name());
        if let Some(issue) = &self.issue {
            record.push(ISSUE_FIELD, issue);
        }
        record
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ReportError {
    #[error("malformed report: {0}")]
    MalformedReport(String),
    #[error("inconsistent report: {0}")]
    InconsistentReport(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
}

/// How a report stated its status.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatusForm {
    Explicit,
    /// No status field; inferred from an issue field in the payload.
    Implicit,
}

pub fn parse_task_report(raw: &Record, spec: &TaskSpec) -> Result<TaskReport, ReportError> {
    let (report, form) = parse_report_inner(raw, spec, false)?;
    debug_assert_eq!(form, StatusForm::Explicit);
    Ok(report)
}

/// Like [`parse_task_report`], but a record with no status field and an
/// explicit issue field is accepted, its status inferred from the issue.
pub fn parse_task_report_lenient(raw: &Record, spec: &TaskSpec) -> Result<(TaskReport, StatusForm), ReportError> {
    parse_report_inner(raw, spec, true)
}

fn parse_report_inner(raw: &Record, spec: &TaskSpec, lenient: bool) -> Result<(TaskReport, StatusForm), ReportError> {
    let mut status_value: Option<String> = None;
    let mut issue_value: Option<String> = None;
    let mut returned = Payload::new();
    for (key, value) in raw.iter() {
        let field = canonical_field(key);
        match field.as_str() {
            TASK_FIELD => {
                let task: TaskId = value.parse().map_err(|_| ReportError::UnknownTask(value.to_string()))?;
                if task != spec.id {
                    return Err(ReportError::MalformedReport(format!(
                        "record names task {task} but {} was expected",
                        spec.id
                    )));
                }
            }
            STATUS_FIELD => {
                if status_value.replace(value.to_string()).is_some() {
                    return Err(ReportError::MalformedReport("duplicate status field".to_string()));
                }
            }
            ISSUE_FIELD => {
                if issue_value.replace(value.to_string()).is_some() {
                    return Err(ReportError::MalformedReport("duplicate issue field".to_string()));
                }
            }
            "" => return Err(ReportError::MalformedReport(format!("unusable field label `{key}`"))),
            _ => {
                if returned.insert(field.clone(), value.to_string()).is_some() {
                    return Err(ReportError::MalformedReport(format!("duplicate field `{field}`")));
                }
            }
        }
    }
    for field in spec.payload_fields() {
        if !returned.contains_key(field) {
            return Err(ReportError::MalformedReport(format!("missing expected field `{field}`")));
        }
    }
    let issue = issue_value.as_deref().and_then(normalize_issue);
    let (status, form) = match status_value {
        Some(v) => {
            let status = parse_status(&v)
                .ok_or_else(|| ReportError::MalformedReport(format!("unrecognized status phrasing `{v}`")))?;
            (status, StatusForm::Explicit)
        }
        None if lenient && issue_value.is_some() => {
            let status = if issue.is_some() { Status::Failure } else { Status::Success };
            (status, StatusForm::Implicit)
        }
        None => return Err(ReportError::MalformedReport("missing status field".to_string())),
    };
    let report = match (status, issue) {
        (Status::Success, None) => TaskReport::success(spec.id, returned),
        (Status::Success, Some(issue)) => {
            return Err(ReportError::InconsistentReport(format!("status success but issue reported: {issue}")))
        }
        (Status::Failure, Some(issue)) => TaskReport::failure(spec.id, returned, issue)?,
        (Status::Failure, None) => {
            return Err(ReportError::InconsistentReport("status failure without an issue".to_string()))
        }
    };
    Ok((report, form))
}
