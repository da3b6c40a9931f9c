//! Roster, task and scenario files.
//!
//! All three are TOML. Rosters hold `[[agent]]` tables, task files hold
//! `[[task]]` tables and each scenario file describes one script.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use mars_core::domain::{
    canonical_field, validate_agent_roster, AgentSpec, RoleId, TaskId, TaskSpec, ToolId, STATUS_FIELD,
};
use mars_core::world::{decode_members, encode_members, Member, ScenarioId, ScenarioScript, ToolResult};
use serde::{Deserialize, Serialize};

use crate::error::FileError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RosterFile {
    agent: Vec<AgentEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AgentEntry {
    role: String,
    title: String,
    goal: String,
    backstory: String,
    #[serde(default)]
    tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    supervisor: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskFile {
    task: Vec<TaskEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TaskEntry {
    id: String,
    agent: String,
    description: String,
    /// Labels as written in the task configuration; mapped through the alias table.
    expected_output: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    id: String,
    cue: String,
    tool: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    issue: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    resolution: Option<String>,
    #[serde(default)]
    synthetic: bool,
    #[serde(default)]
    payload: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    member: Vec<Member>,
}

pub(crate) fn read_text(path: &Path) -> Result<String, FileError> {
    fs::read_to_string(path).map_err(|e| FileError::io(path, e))
}

fn parse_toml<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T, FileError> {
    toml::from_str(text).map_err(|e| FileError::invalid(origin, e.message().trim()))
}

pub fn parse_roster(text: &str, origin: &str) -> Result<Vec<AgentSpec>, FileError> {
    let file: RosterFile = parse_toml(text, origin)?;
    let mut specs = Vec::with_capacity(file.agent.len());
    for (i, entry) in file.agent.into_iter().enumerate() {
        let at = |field: &str| format!("{origin}: agent[{i}].{field}");
        let role: RoleId = entry.role.parse().map_err(|e| FileError::invalid(at("role"), e))?;
        let mut allowed_tools = std::collections::BTreeSet::new();
        for (j, tool) in entry.tools.iter().enumerate() {
            let tool: ToolId = tool.parse().map_err(|e| FileError::invalid(at(&format!("tools[{j}]")), e))?;
            allowed_tools.insert(tool);
        }
        let supervisor = match entry.supervisor {
            Some(s) => Some(s.parse::<RoleId>().map_err(|e| FileError::invalid(at("supervisor"), e))?),
            None => None,
        };
        specs.push(AgentSpec {
            role,
            title: entry.title,
            goal: entry.goal,
            backstory: entry.backstory,
            allowed_tools,
            supervisor,
        });
    }
    validate_agent_roster(&specs).map_err(|violations| {
        let list: Vec<String> = violations.iter().map(ToString::to_string).collect();
        FileError::invalid(format!("{origin}: agent"), list.join("; "))
    })?;
    Ok(specs)
}

pub fn render_roster(specs: &[AgentSpec]) -> String {
    let file = RosterFile {
        agent: specs
            .iter()
            .map(|s| AgentEntry {
                role: s.role.key().to_string(),
                title: s.title.clone(),
                goal: s.goal.clone(),
                backstory: s.backstory.clone(),
                tools: s.allowed_tools.iter().map(|t| t.name().to_string()).collect(),
                supervisor: s.supervisor.map(|r| r.key().to_string()),
            })
            .collect(),
    };
    toml::to_string(&file).expect("roster serializes")
}

pub fn parse_tasks(text: &str, origin: &str) -> Result<Vec<TaskSpec>, FileError> {
    let file: TaskFile = parse_toml(text, origin)?;
    let mut specs: Vec<TaskSpec> = Vec::with_capacity(file.task.len());
    for (i, entry) in file.task.into_iter().enumerate() {
        let at = |field: &str| format!("{origin}: task[{i}].{field}");
        let id: TaskId = entry.id.parse().map_err(|e| FileError::invalid(at("id"), e))?;
        if specs.iter().any(|s| s.id == id) {
            return Err(FileError::invalid(at("id"), format!("{id} defined twice")));
        }
        let correct_assignee: RoleId = entry.agent.parse().map_err(|e| FileError::invalid(at("agent"), e))?;
        if correct_assignee != id.correct_assignee() {
            return Err(FileError::invalid(
                at("agent"),
                format!("{id} belongs to {}, not {correct_assignee}", id.correct_assignee()),
            ));
        }
        if let Some(placeholder) = id.placeholder() {
            if !entry.description.contains(placeholder) {
                return Err(FileError::invalid(at("description"), format!("missing {placeholder}")));
            }
        }
        let expected_fields: Vec<String> = entry.expected_output.iter().map(|l| canonical_field(l)).collect();
        if !expected_fields.iter().any(|f| f == STATUS_FIELD) {
            return Err(FileError::invalid(at("expected_output"), "no status field"));
        }
        specs.push(TaskSpec { id, description_template: entry.description, expected_fields, correct_assignee });
    }
    for task in TaskId::WORKFLOW {
        if !specs.iter().any(|s| s.id == task) {
            return Err(FileError::invalid(format!("{origin}: task"), format!("{task} missing")));
        }
    }
    specs.sort_by_key(|s| s.id.position());
    Ok(specs)
}

fn field_label(field: &str) -> String {
    mars_core::domain::FIELD_ALIASES
        .iter()
        .find(|(_, canonical)| *canonical == field)
        .map(|(alias, _)| alias.to_string())
        .unwrap_or_else(|| field.to_string())
}

pub fn render_tasks(specs: &[TaskSpec]) -> String {
    let file = TaskFile {
        task: specs
            .iter()
            .map(|s| TaskEntry {
                id: s.id.name().to_string(),
                agent: s.correct_assignee.key().to_string(),
                description: s.description_template.clone(),
                expected_output: s.expected_fields.iter().map(|f| field_label(f)).collect(),
            })
            .collect(),
    };
    toml::to_string(&file).expect("task specs serialize")
}

/// Parses one scenario script. When `[[member]]` entries are given, the
/// display payload's `display_info` is derived from them.
pub fn parse_scenario(text: &str, origin: &str) -> Result<ScenarioScript, FileError> {
    let file: ScenarioFile = parse_toml(text, origin)?;
    let at = |field: &str| format!("{origin}: {field}");
    let id: ScenarioId = file.id.parse().map_err(|e| FileError::invalid(at("id"), e))?;
    let tool: ToolId = file.tool.parse().map_err(|e| FileError::invalid(at("tool"), e))?;
    if tool.stage() != id.stage() {
        return Err(FileError::invalid(at("tool"), format!("{tool} does not serve {id}")));
    }
    let mut payload = file.payload;
    if !file.member.is_empty() {
        let encoded = encode_members(&file.member);
        match payload.get("display_info") {
            Some(given) if decode_members(given) != file.member => {
                return Err(FileError::invalid(at("payload.display_info"), "disagrees with [[member]] entries"));
            }
            Some(_) => {}
            None => {
                payload.insert("display_info".to_string(), encoded);
            }
        }
    }
    let issue = file.issue.filter(|i| !i.trim().is_empty());
    Ok(ScenarioScript {
        id,
        cue_text: file.cue,
        tool_result: ToolResult { tool, payload, issue },
        resolution: file.resolution,
        members: file.member,
        synthetic: file.synthetic,
    })
}

pub fn render_scenario(script: &ScenarioScript) -> String {
    let mut payload = script.tool_result.payload.clone();
    if !script.members.is_empty() {
        payload.remove("display_info");
    }
    let file = ScenarioFile {
        id: script.id.name().to_string(),
        cue: script.cue_text.clone(),
        tool: script.tool_result.tool.name().to_string(),
        issue: script.tool_result.issue.clone(),
        resolution: script.resolution.clone(),
        synthetic: script.synthetic,
        payload,
        member: script.members.clone(),
    };
    toml::to_string(&file).expect("scenario serializes")
}

/// Every payload field must be one the owning task expects.
pub fn check_scenario_against(script: &ScenarioScript, spec: &TaskSpec, origin: &str) -> Result<(), FileError> {
    let expected: Vec<&str> = spec.payload_fields().collect();
    let mut given: Vec<&str> = script.tool_result.payload.keys().map(String::as_str).collect();
    given.sort_unstable();
    let mut want = expected.clone();
    want.sort_unstable();
    if given != want {
        return Err(FileError::invalid(
            format!("{origin}: payload"),
            format!("fields {given:?} do not match {} expected fields {want:?}", spec.id),
        ));
    }
    Ok(())
}

pub fn load_roster(path: &Path) -> Result<Vec<AgentSpec>, FileError> {
    parse_roster(&read_text(path)?, &path.display().to_string())
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskSpec>, FileError> {
    parse_tasks(&read_text(path)?, &path.display().to_string())
}

pub fn load_scenario(path: &Path) -> Result<ScenarioScript, FileError> {
    parse_scenario(&read_text(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use mars_core::domain::{canonical_roster, canonical_task_specs};
    use mars_core::world::Scenarios;

    #[test]
    fn canonical_files_round_trip() {
        let roster = canonical_roster();
        assert_eq!(parse_roster(&render_roster(&roster), "r").unwrap(), roster);
        let tasks = canonical_task_specs();
        assert_eq!(parse_tasks(&render_tasks(&tasks), "t").unwrap(), tasks);
        for script in Scenarios::stock().iter() {
            assert_eq!(&parse_scenario(&render_scenario(script), "s").unwrap(), script);
        }
    }

    #[test]
    fn bad_tool_name_reports_its_field() {
        let text = render_roster(&canonical_roster()).replacen("get_navigation_results", "teleport", 1);
        let err = parse_roster(&text, "roster.toml").unwrap_err();
        assert!(err.to_string().starts_with("roster.toml: agent[1].tools[0]"), "{err}");
    }

    #[test]
    fn foreign_grant_is_rejected() {
        let mut roster = canonical_roster();
        roster[1].allowed_tools.insert(ToolId::GetDisplayInformation);
        let err = parse_roster(&render_roster(&roster), "roster.toml").unwrap_err();
        assert!(err.to_string().contains("belongs to another robot"), "{err}");
    }

    #[test]
    fn members_fill_display_info() {
        let text = "id = \"scenario_display\"\ncue = \"c\"\ntool = \"get_display_information\"\n\
[payload]\nlayout_plan = \"grid\"\n\n[[member]]\nid = \"1\"\nname = \"A\"\nrole = \"Nurse\"\n\n\
[[member]]\nid = \"2\"\nname = \"B\"\nrole = \"Physician\"\n";
        let script = parse_scenario(text, "s").unwrap();
        assert_eq!(decode_members(&script.tool_result.payload["display_info"]).len(), 2);
    }
}
