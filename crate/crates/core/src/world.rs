//! Scripted emergency-department scenarios and the robot-local tools that
//! answer them.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Enforcement, Payload, RoleId, TaskId, ToolId, UnknownName};
use crate::kb::KnowledgeBase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "scenario_navigate")]
    Navigate,
    #[serde(rename = "scenario_collect")]
    Collect,
    #[serde(rename = "scenario_display")]
    Display,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Navigate, ScenarioId::Collect, ScenarioId::Display];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Navigate => "scenario_navigate",
            ScenarioId::Collect => "scenario_collect",
            ScenarioId::Display => "scenario_display",
        }
    }

    pub fn stage(self) -> TaskId {
        match self {
            ScenarioId::Navigate => TaskId::NavigateHcw,
            ScenarioId::Collect => TaskId::CollectInfo,
            ScenarioId::Display => TaskId::DisplayInfo,
        }
    }

    pub fn for_task(task: TaskId) -> Option<ScenarioId> {
        ScenarioId::ALL.into_iter().find(|s| s.stage() == task)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = UnknownName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioId::ALL
            .into_iter()
            .find(|id| id.name() == s.trim())
            .ok_or_else(|| UnknownName { kind: "scenario", name: s.to_string() })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool: ToolId,
    pub payload: Payload,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub issue: Option<String>,
}

/// One care-team entry shown on the shared display.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Member {
    pub id: String,
    pub name: String,
    pub role: String,
}

impl Member {
    pub fn new(id: &str, name: &str, role: &str) -> Member {
        Member { id: id.to_string(), name: name.to_string(), role: role.to_string() }
    }

    fn entry(&self) -> String {
        alloc::format!("{}:{}:{}", self.id, self.name, self.role)
    }
}

/// Renders the member list in the `id:name:role; ...` display encoding.
pub fn encode_members(members: &[Member]) -> String {
    members.iter().map(Member::entry).collect::<Vec<_>>().join("; ")
}

/// Inverse of [`encode_members`]; entries that do not have three parts are skipped.
pub fn decode_members(text: &str) -> Vec<Member> {
    text.split(';')
        .filter_map(|entry| {
            let mut parts = entry.trim().splitn(3, ':');
            let (id, name, role) = (parts.next()?, parts.next()?, parts.next()?);
            Some(Member::new(id.trim(), name.trim(), role.trim()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioScript {
    pub id: ScenarioId,
    pub cue_text: String,
    pub tool_result: ToolResult,
    /// Text a recovery proposal must mention to resolve this scenario's issue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub members: Vec<Member>,
    /// Fixtures not scripted by the reference scenario.
    #[serde(default)]
    pub synthetic: bool,
}

pub const NAVIGATE_CUE: &str = "A new patient arrives in the emergency department with signs of confusion and distress. HCW #80 is assigned to treat the patient and must be guided to the patient's room ER-12.";
pub const COLLECT_CUE: &str =
    "The system resolves the issue by assigning HCW #90, who arrives at ER-12 and scans their ID.";
pub const DISPLAY_CUE: &str = "With HCW #90's information collected, the display robot updates the team specialty information (e.g. \"Physician\", \"Technician\") and generates a layout plan.";
pub const NAVIGATION_ISSUE: &str =
    "HCW #80 is currently unavailable due to an urgent call. Attempted contact, but no response.";
pub const NAVIGATION_RESOLUTION: &str = "HCW #90";

/// Name values are synthetic; only field presence matters for scoring.
pub fn stock_members() -> Vec<Member> {
    alloc::vec![
        Member::new("90", "Synthetic HCW 90", "Physician"),
        Member::new("41", "Synthetic HCW 41", "Technician"),
        Member::new("57", "Synthetic HCW 57", "Nurse"),
        Member::new("63", "Synthetic HCW 63", "Respiratory Therapist"),
    ]
}

pub const LAYOUT_PLAN: &str = "Grid with one row per team member showing ID, name and role; newest assignment pinned to the top row and highlighted";

fn payload(pairs: &[(&str, &str)]) -> Payload {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

impl ScenarioScript {
    pub fn navigate() -> ScenarioScript {
        ScenarioScript {
            id: ScenarioId::Navigate,
            cue_text: NAVIGATE_CUE.to_string(),
            tool_result: ToolResult {
                tool: ToolId::GetNavigationResults,
                payload: payload(&[("location", "located"), ("path", "planned")]),
                issue: Some(NAVIGATION_ISSUE.to_string()),
            },
            resolution: Some(NAVIGATION_RESOLUTION.to_string()),
            members: Vec::new(),
            synthetic: false,
        }
    }

    pub fn collect() -> ScenarioScript {
        ScenarioScript {
            id: ScenarioId::Collect,
            cue_text: COLLECT_CUE.to_string(),
            tool_result: ToolResult {
                tool: ToolId::GetOnboardingInformation,
                payload: payload(&[("id", "90"), ("name", "Synthetic HCW 90"), ("specialty", "Physician")]),
                issue: None,
            },
            resolution: None,
            members: Vec::new(),
            synthetic: false,
        }
    }

    pub fn display() -> ScenarioScript {
        ScenarioScript::display_with(stock_members())
    }

    pub fn display_with(members: Vec<Member>) -> ScenarioScript {
        ScenarioScript {
            id: ScenarioId::Display,
            cue_text: DISPLAY_CUE.to_string(),
            tool_result: ToolResult {
                tool: ToolId::GetDisplayInformation,
                payload: payload(&[("display_info", &encode_members(&members)), ("layout_plan", LAYOUT_PLAN)]),
                issue: None,
            },
            resolution: None,
            members,
            synthetic: false,
        }
    }

    /// Non-reference fixture: HCW #80 answers and navigation succeeds.
    pub fn navigate_available() -> ScenarioScript {
        let mut script = ScenarioScript::navigate();
        script.tool_result.issue = None;
        script.resolution = None;
        script.synthetic = true;
        script
    }

    /// Non-reference fixture: the ID scan fails to return a record.
    pub fn collect_failure() -> ScenarioScript {
        let mut script = ScenarioScript::collect();
        script.tool_result.issue = Some("ID badge could not be read; no onboarding record returned.".to_string());
        script.resolution = Some("re-scan".to_string());
        script.synthetic = true;
        script
    }

    pub fn emit_cue(&self) -> &str {
        &self.cue_text
    }

    /// Whether a proposed alternative resolves this scenario's issue.
    pub fn resolved_by(&self, proposal: &str) -> bool {
        match &self.resolution {
            Some(token) => squash(proposal).contains(&squash(token)),
            None => false,
        }
    }
}

fn squash(s: &str) -> String {
    s.chars().filter(|c| !c.is_whitespace()).flat_map(char::to_lowercase).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum WorldError {
    #[error("{caller} is not permitted to use {tool}")]
    ToolAccessDenied { caller: RoleId, tool: ToolId },
    #[error("{tool} cannot serve {scenario}")]
    StageMismatch { tool: ToolId, scenario: ScenarioId },
}

/// Runs a robot-local tool against a scenario. Permissive mode returns the
/// scripted result whoever calls; strict mode enforces the grant matrix.
pub fn invoke_tool(
    tool: ToolId,
    caller: RoleId,
    scenario: &ScenarioScript,
    enforcement: Enforcement,
    kb: &KnowledgeBase,
) -> Result<ToolResult, WorldError> {
    if tool.stage() != scenario.id.stage() || scenario.tool_result.tool != tool {
        return Err(WorldError::StageMismatch { tool, scenario: scenario.id });
    }
    if enforcement.is_strict() && !kb.tool_permitted(caller, tool) {
        return Err(WorldError::ToolAccessDenied { caller, tool });
    }
    Ok(scenario.tool_result.clone())
}

pub fn display_payload(scenario: &ScenarioScript) -> Result<ToolResult, WorldError> {
    if scenario.id != ScenarioId::Display {
        return Err(WorldError::StageMismatch { tool: ToolId::GetDisplayInformation, scenario: scenario.id });
    }
    Ok(scenario.tool_result.clone())
}

/// The three scripts of one episode.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenarios {
    pub navigate: ScenarioScript,
    pub collect: ScenarioScript,
    pub display: ScenarioScript,
}

impl Scenarios {
    pub fn stock() -> Scenarios {
        Scenarios {
            navigate: ScenarioScript::navigate(),
            collect: ScenarioScript::collect(),
            display: ScenarioScript::display(),
        }
    }

    pub fn get(&self, id: ScenarioId) -> &ScenarioScript {
        match id {
            ScenarioId::Navigate => &self.navigate,
            ScenarioId::Collect => &self.collect,
            ScenarioId::Display => &self.display,
        }
    }

    pub fn for_task(&self, task: TaskId) -> Option<&ScenarioScript> {
        ScenarioId::for_task(task).map(|id| self.get(id))
    }

    pub fn iter(&self) -> impl Iterator<Item = &ScenarioScript> {
        [&self.navigate, &self.collect, &self.display].into_iter()
    }

    /// Builds a set from loose scripts; each id must appear exactly once.
    pub fn from_scripts(scripts: Vec<ScenarioScript>) -> Result<Scenarios, ScenarioSetError> {
        let mut slots: [Option<ScenarioScript>; 3] = [None, None, None];
        for script in scripts {
            let idx = script.id.stage().position();
            if slots[idx].is_some() {
                return Err(ScenarioSetError::Duplicate(script.id));
            }
            if script.tool_result.tool.stage() != script.id.stage() {
                return Err(ScenarioSetError::WrongTool(script.id));
            }
            slots[idx] = Some(script);
        }
        let [navigate, collect, display] = slots;
        Ok(Scenarios {
            navigate: navigate.ok_or(ScenarioSetError::Missing(ScenarioId::Navigate))?,
            collect: collect.ok_or(ScenarioSetError::Missing(ScenarioId::Collect))?,
            display: display.ok_or(ScenarioSetError::Missing(ScenarioId::Display))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioSetError {
    #[error("scenario {0} given twice")]
    Duplicate(ScenarioId),
    #[error("scenario {0} missing")]
    Missing(ScenarioId),
    #[error("scenario {0} scripts a tool from another stage")]
    WrongTool(ScenarioId),
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::TaskSpec;
    use alloc::collections::BTreeSet;

    fn kb() -> KnowledgeBase {
        KnowledgeBase::canonical()
    }

    #[test]
    fn navigation_tool_returns_scripted_failure() {
        let r = invoke_tool(
            ToolId::GetNavigationResults,
            RoleId::NavigationRobot,
            &ScenarioScript::navigate(),
            Enforcement::Permissive,
            &kb(),
        )
        .unwrap();
        assert_eq!(r.payload.get("location").map(String::as_str), Some("located"));
        assert_eq!(r.payload.get("path").map(String::as_str), Some("planned"));
        assert_eq!(
            r.issue.as_deref(),
            Some("HCW #80 is currently unavailable due to an urgent call. Attempted contact, but no response.")
        );
    }

    #[test]
    fn collect_tool_returns_hcw_90() {
        let r = invoke_tool(
            ToolId::GetOnboardingInformation,
            RoleId::InfoCollectionRobot,
            &ScenarioScript::collect(),
            Enforcement::Permissive,
            &kb(),
        )
        .unwrap();
        assert_eq!(r.payload.get("id").map(String::as_str), Some("90"));
        assert!(r.payload.contains_key("name") && r.payload.contains_key("specialty"));
        assert_eq!(r.issue, None);
    }

    #[test]
    fn strict_mode_denies_manager() {
        let r = invoke_tool(
            ToolId::GetDisplayInformation,
            RoleId::Manager,
            &ScenarioScript::display(),
            Enforcement::Strict,
            &kb(),
        );
        assert_eq!(
            r,
            Err(WorldError::ToolAccessDenied { caller: RoleId::Manager, tool: ToolId::GetDisplayInformation })
        );
    }

    #[test]
    fn permissive_mode_never_blocks_on_grants() {
        let scenarios = Scenarios::stock();
        for script in scenarios.iter() {
            for role in RoleId::ALL {
                let r = invoke_tool(script.tool_result.tool, role, script, Enforcement::Permissive, &kb());
                assert_eq!(r.as_ref(), Ok(&script.tool_result));
            }
        }
    }

    #[test]
    fn stage_mismatch() {
        let r = invoke_tool(
            ToolId::GetNavigationResults,
            RoleId::NavigationRobot,
            &ScenarioScript::collect(),
            Enforcement::Permissive,
            &kb(),
        );
        assert!(matches!(r, Err(WorldError::StageMismatch { .. })));
        assert!(matches!(display_payload(&ScenarioScript::navigate()), Err(WorldError::StageMismatch { .. })));
    }

    #[test]
    fn cues_carry_reference_phrases() {
        assert!(ScenarioScript::navigate().emit_cue().contains("signs of confusion and distress"));
        assert!(ScenarioScript::collect().emit_cue().contains("scans their ID"));
        assert!(ScenarioScript::display().emit_cue().contains("updates the team specialty information"));
    }

    #[test]
    fn display_lists_physician_and_technician() {
        let r = display_payload(&ScenarioScript::display()).unwrap();
        let members = decode_members(&r.payload["display_info"]);
        let roles: BTreeSet<&str> = members.iter().map(|m| m.role.as_str()).collect();
        assert!(roles.contains("Physician") && roles.contains("Technician"));
        assert!(members.iter().any(|m| m.id == "90"));
        assert_eq!(r.issue, None);
    }

    #[test]
    fn exactly_one_scripted_failure_on_navigation() {
        let failing: Vec<ScenarioId> =
            Scenarios::stock().iter().filter(|s| s.tool_result.issue.is_some()).map(|s| s.id).collect();
        assert_eq!(failing, [ScenarioId::Navigate]);
    }

    #[test]
    fn payload_fields_match_task_specs() {
        for script in Scenarios::stock().iter() {
            let spec = TaskSpec::canonical(script.id.stage());
            let expected: BTreeSet<&str> = spec.payload_fields().collect();
            let got: BTreeSet<&str> = script.tool_result.payload.keys().map(String::as_str).collect();
            assert_eq!(expected, got, "{}", script.id);
        }
    }

    #[test]
    fn resolution_matching_ignores_case_and_spacing() {
        let nav = ScenarioScript::navigate();
        assert!(nav.resolved_by("assign HCW #90"));
        assert!(nav.resolved_by("Reassign to hcw#90 immediately"));
        assert!(!nav.resolved_by("wait for HCW #80"));
        assert!(!ScenarioScript::collect().resolved_by("HCW #90"));
    }

    #[test]
    fn member_encoding_round_trips() {
        let members = stock_members();
        assert_eq!(decode_members(&encode_members(&members)), members);
    }

    #[test]
    fn scenario_set_assembly() {
        let s = Scenarios::from_scripts(alloc::vec![
            ScenarioScript::display(),
            ScenarioScript::navigate(),
            ScenarioScript::collect()
        ])
        .unwrap();
        assert_eq!(s, Scenarios::stock());
        assert_eq!(
            Scenarios::from_scripts(alloc::vec![ScenarioScript::navigate()]),
            Err(ScenarioSetError::Missing(ScenarioId::Collect))
        );
    }
}
