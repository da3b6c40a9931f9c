//! Run configuration: a TOML file plus command-line and environment
//! overrides. Precedence is flag, then environment, then file.
//!
//! ```toml
//! kb = "knowledge_base.md"
//! condition = "baseline"
//! enforcement = "permissive"
//! seeds = [1, 2, 3, 4, 5]
//! output = "out"
//!
//! [policies.manager]
//! kind = "fault"
//! seed = 7
//! modes = { tool_access_violation = "1/2", role_misalignment = "1/4" }
//!
//! [policies.navigating_robot]
//! kind = "compliant"
//! ```
//!
//! Paths are resolved against the directory holding the config file.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mars_core::domain::{canonical_roster, canonical_task_specs, AgentSpec, Condition, Enforcement, RoleId, TaskSpec};
use mars_core::evaluator::{parse_decimal, PriceTable};
use mars_core::kb::{load_kb, KnowledgeBase};
use mars_core::policies::{parse_transcript, Action, FailureMode, FaultProfile};
use mars_core::world::Scenarios;
use serde::Deserialize;

use crate::backend::BackendDescriptor;
use crate::error::ConfigError;
use crate::files;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    roster: Option<PathBuf>,
    tasks: Option<PathBuf>,
    #[serde(default)]
    scenarios: Vec<PathBuf>,
    kb: Option<PathBuf>,
    condition: Option<String>,
    enforcement: Option<String>,
    seeds: Option<Vec<u64>>,
    output: Option<PathBuf>,
    jobs: Option<usize>,
    #[serde(default)]
    policies: BTreeMap<String, RawBinding>,
    #[serde(default)]
    with_kb_policies: BTreeMap<String, RawBinding>,
    prices: Option<RawPrices>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawBinding {
    Compliant,
    Fault {
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        modes: BTreeMap<String, String>,
    },
    Replay {
        path: PathBuf,
    },
    Llm {
        endpoint: Option<String>,
        model: Option<String>,
        api_key_var: Option<String>,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrices {
    prompt_per_million: String,
    completion_per_million: String,
}

/// Values given on the command line or through the environment.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Overrides {
    pub condition: Option<Condition>,
    pub enforcement: Option<Enforcement>,
    pub seeds: Option<Vec<u64>>,
    pub output: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub llm_endpoint: Option<String>,
    pub llm_model: Option<String>,
    pub llm_api_key_var: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Binding {
    Compliant,
    Fault(FaultProfile),
    Replay { path: PathBuf, decisions: Vec<Action> },
    Llm(BackendDescriptor),
}

impl Binding {
    pub fn kind(&self) -> &'static str {
        match self {
            Binding::Compliant => "compliant",
            Binding::Fault(_) => "fault",
            Binding::Replay { .. } => "replay",
            Binding::Llm(_) => "llm",
        }
    }
}

/// One binding per role, in role order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bindings(pub [Binding; 4]);

impl Bindings {
    pub fn get(&self, role: RoleId) -> &Binding {
        &self.0[RoleId::ALL.iter().position(|r| *r == role).expect("known role")]
    }

    pub fn compliant() -> Bindings {
        Bindings([Binding::Compliant, Binding::Compliant, Binding::Compliant, Binding::Compliant])
    }
}

/// A validated configuration, ready to run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub roster: Vec<AgentSpec>,
    pub task_specs: Vec<TaskSpec>,
    pub scenarios: Scenarios,
    /// Rules of the episode; agents see the document only under `with_kb`.
    pub kb: KnowledgeBase,
    /// Whether `kb` came from a file rather than the built-in document.
    pub kb_from_file: bool,
    pub condition: Condition,
    pub enforcement: Enforcement,
    pub seeds: Vec<u64>,
    pub output: PathBuf,
    pub jobs: usize,
    pub policies: Bindings,
    pub with_kb_policies: Bindings,
    pub prices: Option<PriceTable>,
}

impl RunConfig {
    pub fn bindings(&self, condition: Condition) -> &Bindings {
        match condition {
            Condition::Baseline => &self.policies,
            Condition::WithKb => &self.with_kb_policies,
        }
    }

    pub fn kb_for(&self, condition: Condition) -> KnowledgeBase {
        self.kb.clone().with_enabled(condition == Condition::WithKb)
    }

    /// Fails unless the knowledge base was given; needed before a `with_kb` run.
    pub fn require_kb(&self) -> Result<(), ConfigError> {
        if self.kb_from_file {
            Ok(())
        } else {
            Err(ConfigError::new("kb", "required when the with_kb condition runs"))
        }
    }
}

fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

fn parse_named<T: std::str::FromStr>(field: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::new(field, e))
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
}

pub fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let text =
        std::fs::read_to_string(path).map_err(|e| ConfigError::new("<file>", format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base, overrides)
}

pub fn parse_config(text: &str, base: &Path, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let at = e.span().map(|s| format!("byte {}", s.start)).unwrap_or_else(|| "<file>".to_string());
        ConfigError::new(at, e.message().trim())
    })?;

    let roster = match &raw.roster {
        Some(p) => files::load_roster(&resolve(base, p)).map_err(|e| ConfigError::new("roster", e))?,
        None => canonical_roster(),
    };
    let task_specs = match &raw.tasks {
        Some(p) => files::load_tasks(&resolve(base, p)).map_err(|e| ConfigError::new("tasks", e))?,
        None => canonical_task_specs(),
    };
    let scenarios = if raw.scenarios.is_empty() {
        Scenarios::stock()
    } else {
        let mut scripts = Vec::new();
        for (i, p) in raw.scenarios.iter().enumerate() {
            let field = format!("scenarios[{i}]");
            let script = files::load_scenario(&resolve(base, p)).map_err(|e| ConfigError::new(&field, e))?;
            let spec = task_specs.iter().find(|s| s.id == script.id.stage()).expect("task specs are complete");
            files::check_scenario_against(&script, spec, &p.display().to_string())
                .map_err(|e| ConfigError::new(&field, e))?;
            scripts.push(script);
        }
        Scenarios::from_scripts(scripts).map_err(|e| ConfigError::new("scenarios", e))?
    };

    let condition = match (overrides.condition, &raw.condition) {
        (Some(c), _) => c,
        (None, Some(c)) => parse_named("condition", c)?,
        (None, None) => Condition::Baseline,
    };
    let enforcement = match (overrides.enforcement, &raw.enforcement) {
        (Some(e), _) => e,
        (None, Some(e)) => parse_named("enforcement", e)?,
        (None, None) => Enforcement::Strict,
    };

    let (kb, kb_from_file) = match &raw.kb {
        Some(p) => {
            let p = resolve(base, p);
            let text =
                std::fs::read_to_string(&p).map_err(|e| ConfigError::new("kb", format!("{}: {e}", p.display())))?;
            (load_kb(&text).map_err(|e| ConfigError::new("kb", e))?, true)
        }
        None if condition == Condition::WithKb => {
            return Err(ConfigError::new("kb", "required when condition is with_kb"));
        }
        None => (KnowledgeBase::canonical(), false),
    };

    let seeds = overrides.seeds.clone().or(raw.seeds).unwrap_or_default();
    if seeds.is_empty() {
        return Err(ConfigError::new("seeds", "at least one seed is required"));
    }
    let jobs = overrides.jobs.or(raw.jobs).unwrap_or_else(default_jobs);
    if jobs == 0 {
        return Err(ConfigError::new("jobs", "must be at least 1"));
    }
    let output = match (&overrides.output, &raw.output) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => resolve(base, o),
        (None, None) => base.join("out"),
    };

    let policies = bindings("policies", &raw.policies, None, base, overrides)?;
    let with_kb_policies = if raw.with_kb_policies.is_empty() {
        policies.clone()
    } else {
        bindings("with_kb_policies", &raw.with_kb_policies, Some(&raw.policies), base, overrides)?
    };

    let prices = match raw.prices {
        Some(p) => Some(PriceTable {
            prompt_per_million: parse_decimal(&p.prompt_per_million)
                .ok_or_else(|| ConfigError::new("prices.prompt_per_million", "not a non-negative number"))?,
            completion_per_million: parse_decimal(&p.completion_per_million)
                .ok_or_else(|| ConfigError::new("prices.completion_per_million", "not a non-negative number"))?,
        }),
        None => None,
    };

    Ok(RunConfig {
        roster,
        task_specs,
        scenarios,
        kb,
        kb_from_file,
        condition,
        enforcement,
        seeds,
        output,
        jobs,
        policies,
        with_kb_policies,
        prices,
    })
}

/// Builds the per-role table. `fallback` supplies roles missing from an
/// override table.
fn bindings(
    table: &str,
    raw: &BTreeMap<String, RawBinding>,
    fallback: Option<&BTreeMap<String, RawBinding>>,
    base: &Path,
    overrides: &Overrides,
) -> Result<Bindings, ConfigError> {
    let mut by_role: BTreeMap<RoleId, (String, &RawBinding)> = BTreeMap::new();
    for (key, binding) in raw {
        let role = RoleId::from_label(key).ok_or_else(|| ConfigError::new(format!("{table}.{key}"), "unknown role"))?;
        if by_role.insert(role, (format!("{table}.{key}"), binding)).is_some() {
            return Err(ConfigError::new(format!("{table}.{key}"), format!("second binding for {role}")));
        }
    }
    let mut out = Vec::with_capacity(4);
    for role in RoleId::ALL {
        let entry = by_role
            .get(&role)
            .cloned()
            .or_else(|| fallback.and_then(|f| f.get(role.key()).map(|b| (format!("policies.{}", role.key()), b))));
        let (field, binding) =
            entry.ok_or_else(|| ConfigError::new(format!("{table}.{}", role.key()), "no policy bound"))?;
        out.push(build_binding(&field, role, binding, base, overrides)?);
    }
    Ok(Bindings(out.try_into().expect("four roles")))
}

fn build_binding(
    field: &str,
    role: RoleId,
    raw: &RawBinding,
    base: &Path,
    overrides: &Overrides,
) -> Result<Binding, ConfigError> {
    Ok(match raw {
        RawBinding::Compliant => Binding::Compliant,
        RawBinding::Fault { seed, modes } => {
            if !role.is_manager() {
                return Err(ConfigError::new(format!("{field}.kind"), "fault profiles drive the manager only"));
            }
            let mut parsed: BTreeMap<FailureMode, _> = BTreeMap::new();
            for (name, prob) in modes {
                let at = format!("{field}.modes.{name}");
                let mode: FailureMode = parse_named(&at, name)?;
                let p =
                    parse_decimal(prob).ok_or_else(|| ConfigError::new(&at, format!("bad probability {prob:?}")))?;
                parsed.insert(mode, p);
            }
            Binding::Fault(FaultProfile::new(parsed, *seed).map_err(|e| ConfigError::new(format!("{field}.modes"), e))?)
        }
        RawBinding::Replay { path } => {
            let path = resolve(base, path);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ConfigError::new(format!("{field}.path"), format!("{}: {e}", path.display())))?;
            let decisions = parse_transcript(&text).map_err(|e| ConfigError::new(format!("{field}.path"), e))?;
            Binding::Replay { path, decisions }
        }
        RawBinding::Llm { endpoint, model, api_key_var } => {
            let endpoint = overrides
                .llm_endpoint
                .clone()
                .or_else(|| endpoint.clone())
                .ok_or_else(|| ConfigError::new(format!("{field}.endpoint"), "not set (MARS_LLM_ENDPOINT)"))?;
            let model = overrides
                .llm_model
                .clone()
                .or_else(|| model.clone())
                .ok_or_else(|| ConfigError::new(format!("{field}.model"), "not set (MARS_LLM_MODEL)"))?;
            let api_key_var = overrides.llm_api_key_var.clone().or_else(|| api_key_var.clone());
            Binding::Llm(BackendDescriptor { endpoint, model, api_key_var })
        }
    })
}
