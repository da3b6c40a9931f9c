//! The five-section operational knowledge base: parsing, validation and the
//! rule artifacts derived from it.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{RoleId, Status, TaskId, TaskReport, ToolId};

/// The stock knowledge base document.
pub const CANONICAL_KB: &str = include_str!("../assets/knowledge_base.md");

/// The sentence added to agent context when the knowledge base is enabled.
pub const KB_DIRECTIVE: &str =
    "All actions must adhere to the operational protocols defined in the shared Knowledge Base.";

/// Section titles in document order, normalized.
pub const SECTION_TITLES: [&str; 5] = [
    "tool access and real-world mapping",
    "role-specific responsibilities and task boundaries",
    "task success and failure criteria",
    "environmental cue grounding and scenario interpretation",
    "task execution and recovery workflow",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KbError {
    #[error("malformed knowledge base: {0}")]
    MalformedKb(String),
    #[error("inconsistent knowledge base: {0}")]
    InconsistentKb(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionKind {
    GrantMatrix,
    RoleBoundaries,
    SuccessCriteria,
    CueMap,
    Workflow,
}

impl SectionKind {
    pub fn for_number(number: u8) -> Option<SectionKind> {
        match number {
            1 => Some(SectionKind::GrantMatrix),
            2 => Some(SectionKind::RoleBoundaries),
            3 => Some(SectionKind::SuccessCriteria),
            4 => Some(SectionKind::CueMap),
            5 => Some(SectionKind::Workflow),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KbSection {
    pub number: u8,
    pub title: String,
    pub body: String,
    pub derived: SectionKind,
}

/// Tool to its single permitted role.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantMatrix {
    grants: BTreeMap<ToolId, RoleId>,
}

impl GrantMatrix {
    /// The matrix implied by the designated tools of each robot.
    pub fn builtin() -> GrantMatrix {
        GrantMatrix { grants: ToolId::ALL.iter().map(|t| (*t, t.owner())).collect() }
    }

    pub fn permits(&self, role: RoleId, tool: ToolId) -> bool {
        !role.is_manager() && self.grants.get(&tool) == Some(&role)
    }

    pub fn grantee(&self, tool: ToolId) -> Option<RoleId> {
        self.grants.get(&tool).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (ToolId, RoleId)> + '_ {
        self.grants.iter().map(|(t, r)| (*t, *r))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoleBoundaries {
    /// Tasks the manager must hand off.
    pub delegated: BTreeSet<TaskId>,
    /// Tasks the manager performs itself.
    pub manager_owned: BTreeSet<TaskId>,
}

impl RoleBoundaries {
    pub fn builtin() -> RoleBoundaries {
        RoleBoundaries {
            delegated: TaskId::OPERATIONAL.into_iter().collect(),
            manager_owned: [TaskId::Reflection].into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SuccessCriteria {
    /// Tasks judged by the "no issue reported" rule.
    pub tasks: BTreeSet<TaskId>,
}

impl SuccessCriteria {
    pub fn builtin() -> SuccessCriteria {
        SuccessCriteria { tasks: TaskId::OPERATIONAL.into_iter().collect() }
    }

    pub fn outcome(&self, report: &TaskReport) -> Status {
        if report.issue().is_some() {
            Status::Failure
        } else {
            Status::Success
        }
    }
}

/// Classes of environmental cue the team reacts to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CueKind {
    PatientArrival,
    IdScan,
    InfoCollected,
}

/// Phrase lexicon per cue class, matched against lowercased text.
pub const CUE_LEXICON: &[(CueKind, &[&str])] = &[
    (CueKind::PatientArrival, &["patient arrives", "patient has arrived", "patient arrival", "new patient"]),
    (CueKind::IdScan, &["scans their id", "scanned their id", "scan their id", "id scan"]),
    (
        CueKind::InfoCollected,
        &[
            "information collected",
            "info collected",
            "information has been collected",
            "information has been successfully collected",
        ],
    ),
];

fn cue_kinds(text: &str) -> BTreeSet<CueKind> {
    let lowered = collapse_whitespace(&text.to_lowercase());
    CUE_LEXICON
        .iter()
        .filter(|(_, phrases)| phrases.iter().any(|p| lowered.contains(p)))
        .map(|(kind, _)| *kind)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueMap {
    rules: BTreeMap<CueKind, TaskId>,
}

impl CueMap {
    pub fn builtin() -> CueMap {
        CueMap {
            rules: [
                (CueKind::PatientArrival, TaskId::NavigateHcw),
                (CueKind::IdScan, TaskId::CollectInfo),
                (CueKind::InfoCollected, TaskId::DisplayInfo),
            ]
            .into_iter()
            .collect(),
        }
    }

    /// When several cue classes match, the one mapped to the latest stage wins.
    pub fn task_for(&self, text: &str) -> Option<TaskId> {
        cue_kinds(text).iter().filter_map(|k| self.rules.get(k).copied()).max()
    }

    pub fn iter(&self) -> impl Iterator<Item = (CueKind, TaskId)> + '_ {
        self.rules.iter().map(|(k, t)| (*k, *t))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Workflow {
    pub order: Vec<TaskId>,
    /// Delegation target named for each delegated step.
    pub delegate_to: BTreeMap<TaskId, RoleId>,
}

impl Workflow {
    pub fn builtin() -> Workflow {
        Workflow {
            order: TaskId::WORKFLOW.to_vec(),
            delegate_to: TaskId::OPERATIONAL.iter().map(|t| (*t, t.correct_assignee())).collect(),
        }
    }

    pub fn successor(&self, task: TaskId) -> Option<TaskId> {
        let pos = self.order.iter().position(|t| *t == task)?;
        self.order.get(pos + 1).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "directive", content = "task")]
pub enum Directive {
    Proceed(TaskId),
    Recover,
    Done,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    pub sections: Vec<KbSection>,
    pub enabled: bool,
    document: String,
    grants: GrantMatrix,
    boundaries: RoleBoundaries,
    success: SuccessCriteria,
    cues: CueMap,
    workflow: Workflow,
}

impl KnowledgeBase {
    /// The embedded stock document, enabled.
    pub fn canonical() -> KnowledgeBase {
        load_kb(CANONICAL_KB).expect("embedded knowledge base is valid")
    }

    pub fn with_enabled(mut self, enabled: bool) -> KnowledgeBase {
        self.enabled = enabled;
        self
    }

    pub fn document(&self) -> &str {
        &self.document
    }

    /// Document text for agent context; absent when disabled.
    pub fn guidance(&self) -> Option<&str> {
        self.enabled.then_some(self.document.as_str())
    }

    pub fn tool_permitted(&self, role: RoleId, tool: ToolId) -> bool {
        self.grants.permits(role, tool)
    }

    pub fn next_step(&self, completed: TaskId, outcome: Status) -> Directive {
        match outcome {
            Status::Failure => Directive::Recover,
            Status::Success => match self.workflow.successor(completed) {
                Some(next) => Directive::Proceed(next),
                None => Directive::Done,
            },
        }
    }

    pub fn cue_to_task(&self, scenario_text: &str) -> Option<TaskId> {
        self.cues.task_for(scenario_text)
    }

    pub fn grants(&self) -> &GrantMatrix {
        &self.grants
    }

    pub fn boundaries(&self) -> &RoleBoundaries {
        &self.boundaries
    }

    pub fn success_criteria(&self) -> &SuccessCriteria {
        &self.success
    }

    pub fn cue_map(&self) -> &CueMap {
        &self.cues
    }

    pub fn workflow(&self) -> &Workflow {
        &self.workflow
    }

    pub fn section(&self, kind: SectionKind) -> &KbSection {
        self.sections.iter().find(|s| s.derived == kind).expect("all five sections present")
    }
}

pub fn load_kb(document: &str) -> Result<KnowledgeBase, KbError> {
    let sections = split_sections(document)?;
    let grants = derive_grants(&sections[0].body)?;
    let boundaries = derive_boundaries(&sections[1].body)?;
    let success = derive_success(&sections[2].body)?;
    let cues = derive_cues(&sections[3].body)?;
    let workflow = derive_workflow(&sections[4].body, &grants)?;
    Ok(KnowledgeBase {
        sections,
        enabled: true,
        document: document.to_string(),
        grants,
        boundaries,
        success,
        cues,
        workflow,
    })
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn normalize_title(title: &str) -> String {
    collapse_whitespace(&title.to_lowercase().replace('/', " and "))
}

fn split_sections(document: &str) -> Result<Vec<KbSection>, KbError> {
    let mut sections: Vec<KbSection> = Vec::new();
    for line in document.lines() {
        if let Some(header) = line.trim_end().strip_prefix("### ") {
            let (number, title) = header
                .split_once(". ")
                .ok_or_else(|| KbError::MalformedKb(format!("unnumbered section header `{header}`")))?;
            let number: u8 =
                number.trim().parse().map_err(|_| KbError::MalformedKb(format!("bad section number in `{header}`")))?;
            let expected = sections.len() + 1;
            if usize::from(number) != expected {
                return Err(KbError::MalformedKb(format!("expected section {expected}, found section {number}")));
            }
            let derived = SectionKind::for_number(number)
                .ok_or_else(|| KbError::MalformedKb(format!("extra section {number}")))?;
            let normalized = normalize_title(title);
            if normalized != SECTION_TITLES[usize::from(number) - 1] {
                return Err(KbError::MalformedKb(format!("section {number} has unexpected title `{}`", title.trim())));
            }
            sections.push(KbSection { number, title: title.trim().to_string(), body: String::new(), derived });
        } else if let Some(current) = sections.last_mut() {
            current.body.push_str(line);
            current.body.push('\n');
        }
    }
    if sections.len() != 5 {
        return Err(KbError::MalformedKb(format!("expected 5 sections, found {}", sections.len())));
    }
    Ok(sections)
}

/// Backtick-quoted spans in a line.
fn quoted(line: &str) -> Vec<&str> {
    line.split('`').skip(1).step_by(2).collect()
}

fn derive_grants(body: &str) -> Result<GrantMatrix, KbError> {
    let mut grants = BTreeMap::new();
    for line in body.lines() {
        let line = line.trim().trim_start_matches("- ");
        if !line.starts_with("ONLY the `") || !line.contains("may access") {
            continue;
        }
        let spans = quoted(line);
        let [role, tool] = spans[..] else {
            return Err(KbError::MalformedKb(format!("unreadable grant line `{line}`")));
        };
        let role = RoleId::from_label(role)
            .ok_or_else(|| KbError::InconsistentKb(format!("grant names unknown role `{role}`")))?;
        let tool: ToolId =
            tool.parse().map_err(|_| KbError::InconsistentKb(format!("grant names unknown tool `{tool}`")))?;
        if role.is_manager() {
            return Err(KbError::InconsistentKb(format!("manager granted {tool}")));
        }
        if let Some(previous) = grants.insert(tool, role) {
            return Err(KbError::InconsistentKb(format!("{tool} granted to both {previous} and {role}")));
        }
        if role.designated_tool() != Some(tool) {
            return Err(KbError::InconsistentKb(format!("{role} granted {tool}, which it does not embody")));
        }
    }
    for tool in ToolId::ALL {
        if !grants.contains_key(&tool) {
            return Err(KbError::InconsistentKb(format!("no grant for {tool}")));
        }
    }
    Ok(GrantMatrix { grants })
}

fn derive_boundaries(body: &str) -> Result<RoleBoundaries, KbError> {
    let lowered = body.to_lowercase();
    let delegates_ops = lowered.contains("delegate all operational tasks");
    let owns_reflection = lowered.lines().any(|l| l.contains("without any delegation") && l.contains("reflection"));
    if !delegates_ops || !owns_reflection {
        return Err(KbError::InconsistentKb(
            "role boundaries must assign operational tasks to robots and reflection to the manager".to_string(),
        ));
    }
    Ok(RoleBoundaries::builtin())
}

fn derive_success(body: &str) -> Result<SuccessCriteria, KbError> {
    let mut tasks = BTreeSet::new();
    for line in body.lines().filter(|l| l.contains("successful if")) {
        for span in quoted(line) {
            let task: TaskId = span
                .parse()
                .map_err(|_| KbError::InconsistentKb(format!("success criterion names unknown task `{span}`")))?;
            tasks.insert(task);
        }
    }
    if tasks != SuccessCriteria::builtin().tasks {
        return Err(KbError::InconsistentKb("success criteria must cover exactly the operational tasks".to_string()));
    }
    Ok(SuccessCriteria { tasks })
}

fn derive_cues(body: &str) -> Result<CueMap, KbError> {
    let mut rules = BTreeMap::new();
    for line in body.lines() {
        let line = line.trim().trim_start_matches("- ");
        let Some(rest) = line.strip_prefix("If the scenario mentions ") else {
            continue;
        };
        let (phrase, _) =
            rest.split_once(',').ok_or_else(|| KbError::MalformedKb(format!("unreadable cue line `{line}`")))?;
        let kinds = cue_kinds(phrase);
        let kind = match kinds.len() {
            1 => *kinds.iter().next().expect("one element"),
            _ => return Err(KbError::InconsistentKb(format!("cue `{phrase}` does not name exactly one cue class"))),
        };
        let task = quoted(rest)
            .into_iter()
            .find_map(|s| s.parse::<TaskId>().ok())
            .ok_or_else(|| KbError::InconsistentKb(format!("cue line names no task: `{line}`")))?;
        if rules.insert(kind, task).is_some() {
            return Err(KbError::InconsistentKb(format!("cue class {kind:?} mapped twice")));
        }
    }
    let map = CueMap { rules };
    if map != CueMap::builtin() {
        return Err(KbError::InconsistentKb("cue map must cover the three operational stages".to_string()));
    }
    Ok(map)
}

fn derive_workflow(body: &str, grants: &GrantMatrix) -> Result<Workflow, KbError> {
    let mut order = Vec::new();
    let mut delegate_to = BTreeMap::new();
    for line in body.lines() {
        let line = line.trim();
        if line.starts_with("**") && line.ends_with("**") {
            let task = quoted(line)
                .into_iter()
                .find_map(|s| s.parse::<TaskId>().ok())
                .ok_or_else(|| KbError::MalformedKb(format!("workflow step names no task: `{line}`")))?;
            order.push(task);
        } else if line.contains("delegates this task to") {
            let current = *order
                .last()
                .ok_or_else(|| KbError::MalformedKb("delegation line before any workflow step".to_string()))?;
            let target = quoted(line)
                .into_iter()
                .filter_map(RoleId::from_label)
                .find(|r| !r.is_manager())
                .ok_or_else(|| KbError::InconsistentKb(format!("delegation names no robot: `{line}`")))?;
            delegate_to.insert(current, target);
        }
    }
    if order != TaskId::WORKFLOW {
        return Err(KbError::InconsistentKb(format!("workflow order {order:?} is not the onboarding chain")));
    }
    for (task, target) in &delegate_to {
        let tool = task.tool().ok_or_else(|| KbError::InconsistentKb(format!("{task} must not be delegated")))?;
        if grants.grantee(tool) != Some(*target) {
            return Err(KbError::InconsistentKb(format!("{task} delegated to {target}, who lacks {tool}")));
        }
    }
    if delegate_to.len() != TaskId::OPERATIONAL.len() {
        return Err(KbError::InconsistentKb("every operational step needs a delegation target".to_string()));
    }
    Ok(Workflow { order, delegate_to })
}
