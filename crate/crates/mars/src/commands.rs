//! Subcommand implementations. Each returns the lines to print and the
//! report it assembled; the binary only maps results to exit codes.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};

use mars_core::domain::{Condition, RoleId};
use mars_core::evaluator::{summarize, AblationReport, RunEntry};
use mars_core::kb::{load_kb, Directive, KnowledgeBase};
use mars_core::kernel::{run_episode, EpisodeSetup, EpisodeTrace};
use mars_core::policies::{
    BoxedPolicy, CompliantManager, CompliantRobot, FaultyManager, LlmPolicy, PolicySet, ReplayPolicy,
};
use serde_json::json;

use crate::backend::HttpBackend;
use crate::config::{Binding, Bindings, RunConfig};
use crate::error::{CliError, FileError};
use crate::jsonl::{self, CHECKS_SCHEMA};
use crate::report::{self, NamedRun};

pub fn run_id(condition: Condition, seed: u64) -> String {
    format!("{condition}-seed{seed:04}")
}

pub fn instantiate(binding: &Binding, role: RoleId) -> BoxedPolicy {
    match binding {
        Binding::Compliant if role.is_manager() => Box::new(CompliantManager),
        Binding::Compliant => Box::new(CompliantRobot::new(role)),
        Binding::Fault(profile) => Box::new(FaultyManager::new(profile.clone())),
        Binding::Replay { decisions, .. } => Box::new(ReplayPolicy::new(decisions.clone())),
        Binding::Llm(descriptor) => Box::new(LlmPolicy::new(HttpBackend::new(descriptor.clone()))),
    }
}

/// Fresh policies for one episode.
pub fn policy_set(bindings: &Bindings) -> PolicySet {
    let [m, n, c, d] = RoleId::ALL.map(|role| instantiate(bindings.get(role), role));
    PolicySet::new(m, n, c, d)
}

/// One finished (or aborted) episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub id: String,
    pub trace: EpisodeTrace,
    pub abort: Option<String>,
    pub entry: RunEntry,
}

fn run_one(cfg: &RunConfig, kb: &KnowledgeBase, condition: Condition, seed: u64) -> Episode {
    let setup = EpisodeSetup {
        roster: &cfg.roster,
        task_specs: &cfg.task_specs,
        scenarios: &cfg.scenarios,
        kb,
        enforcement: cfg.enforcement,
        seed,
    };
    let mut policies = policy_set(cfg.bindings(condition));
    let (trace, abort) = match run_episode(&setup, &mut policies) {
        Ok(trace) => (trace, None),
        Err(abort) => (*abort.partial, Some(abort.error.to_string())),
    };
    let outcome = match &abort {
        Some(reason) => Err(reason.clone()),
        None => summarize(&trace).map_err(|e| e.to_string()),
    };
    Episode {
        id: run_id(condition, seed),
        entry: RunEntry { condition, seed, outcome, token_usage: trace.token_usage },
        trace,
        abort,
    }
}

/// Runs the given episodes on up to `cfg.jobs` threads. Results come back
/// in input order whatever the scheduling.
pub fn execute(cfg: &RunConfig, plan: &[(Condition, u64)]) -> Vec<Episode> {
    let kbs = [cfg.kb_for(Condition::Baseline), cfg.kb_for(Condition::WithKb)];
    let kb = |c: Condition| &kbs[usize::from(c == Condition::WithKb)];
    let next = AtomicUsize::new(0);
    let workers = cfg.jobs.clamp(1, plan.len().max(1));
    let mut done: Vec<(usize, Episode)> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                scope.spawn(|| {
                    let mut local = Vec::new();
                    loop {
                        let i = next.fetch_add(1, Ordering::Relaxed);
                        let Some(&(condition, seed)) = plan.get(i) else { break };
                        local.push((i, run_one(cfg, kb(condition), condition, seed)));
                    }
                    local
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("episode worker panicked")).collect()
    });
    done.sort_by_key(|(i, _)| *i);
    done.into_iter().map(|(_, e)| e).collect()
}

fn write(path: &Path, contents: &str) -> Result<(), FileError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| FileError::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| FileError::io(path, e))
}

pub fn trace_path(output: &Path, id: &str) -> PathBuf {
    output.join("traces").join(id).join("trace.jsonl")
}

pub fn checks_path(output: &Path, id: &str) -> PathBuf {
    output.join("checks").join(id).join("checks.jsonl")
}

fn write_episode(output: &Path, episode: &Episode) -> Result<(), FileError> {
    write(&trace_path(output, &episode.id), &jsonl::render_trace(&episode.trace, episode.abort.as_deref()))?;
    if let Some(summary) = episode.entry.summary() {
        write(&checks_path(output, &episode.id), &jsonl::render_checks(&episode.id, episode.entry.condition, summary))?;
    }
    Ok(())
}

fn write_reports(
    output: &Path,
    report: &AblationReport,
    runs: &[NamedRun<'_>],
    cfg: Option<&RunConfig>,
) -> Result<(), FileError> {
    let dir = output.join("reports");
    write(&dir.join("rates.csv"), &report::rates_csv(report, runs, cfg.and_then(|c| c.prices.as_ref())))?;
    write(&dir.join("metrics.csv"), &report::metrics_csv(report))?;
    write(&dir.join("report.jsonl"), &report::report_jsonl(report, runs))
}

/// What a command did: printable lines, the assembled report and run ids
/// parallel to `report.runs`.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub lines: Vec<String>,
    pub report: AblationReport,
    pub ids: Vec<String>,
}

impl Outcome {
    pub fn aborted(&self) -> usize {
        self.report.runs.iter().filter(|r| r.aborted()).count()
    }

    pub fn named(&self) -> Vec<NamedRun<'_>> {
        self.ids.iter().zip(&self.report.runs).map(|(id, entry)| NamedRun { id, entry }).collect()
    }
}

fn finish(
    output: &Path,
    report: AblationReport,
    ids: Vec<String>,
    cfg: Option<&RunConfig>,
    table: bool,
) -> Result<Outcome, CliError> {
    let mut outcome = Outcome { lines: Vec::new(), report, ids };
    let named = outcome.named();
    write_reports(output, &outcome.report, &named, cfg)?;
    let mut lines: Vec<String> = named.iter().map(report::summary_line).collect();
    lines.extend(report::mean_lines(&outcome.report));
    if table {
        lines.extend(report::metrics_text(&outcome.report).lines().map(str::to_string));
    }
    drop(named);
    outcome.lines = lines;
    Ok(outcome)
}

fn run_plan(cfg: &RunConfig, plan: &[(Condition, u64)], table: bool) -> Result<Outcome, CliError> {
    let episodes = execute(cfg, plan);
    for episode in &episodes {
        write_episode(&cfg.output, episode)?;
    }
    let ids = episodes.iter().map(|e| e.id.clone()).collect();
    let report = AblationReport::new(episodes.into_iter().map(|e| e.entry).collect());
    finish(&cfg.output, report, ids, Some(cfg), table)
}

/// Runs every configured seed under the configured condition.
pub fn cmd_run(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let plan: Vec<_> = cfg.seeds.iter().map(|s| (cfg.condition, *s)).collect();
    run_plan(cfg, &plan, false)
}

/// Paired baseline and with-KB runs on the first `n_runs` seeds.
pub fn cmd_ablate(cfg: &RunConfig, n_runs: Option<usize>) -> Result<Outcome, CliError> {
    cfg.require_kb()?;
    let n = n_runs.unwrap_or(cfg.seeds.len());
    if n == 0 || n > cfg.seeds.len() {
        return Err(CliError::Usage(format!("--runs {n}: the config lists {} seeds", cfg.seeds.len())));
    }
    let plan: Vec<_> = Condition::BOTH.iter().flat_map(|c| cfg.seeds[..n].iter().map(move |s| (*c, *s))).collect();
    run_plan(cfg, &plan, true)
}

fn unique(ids: &mut Vec<String>, id: String) -> String {
    let mut candidate = id.clone();
    let mut n = 2;
    while ids.contains(&candidate) {
        candidate = format!("{id}-{n}");
        n += 1;
    }
    ids.push(candidate.clone());
    candidate
}

/// Scores trace files, or re-aggregates check files, into one table.
pub fn cmd_score(paths: &[PathBuf], output: &Path) -> Result<Outcome, CliError> {
    if paths.is_empty() {
        return Err(CliError::Usage("no input files".to_string()));
    }
    let mut ids = Vec::new();
    let mut runs = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
        let name = path.display().to_string();
        if jsonl::sniff_schema(&text).as_deref() == Some(CHECKS_SCHEMA) {
            let file = jsonl::parse_checks(&text, &name)?;
            unique(&mut ids, file.run);
            runs.push(RunEntry {
                condition: file.condition,
                seed: i as u64,
                outcome: Ok(file.summary),
                token_usage: None,
            });
            continue;
        }
        let file = jsonl::parse_trace(&text, &name)?;
        let trace = file.trace;
        let id = unique(&mut ids, run_id(trace.condition, trace.seed));
        let outcome = match file.abort {
            Some(reason) => Err(reason),
            None => summarize(&trace).map_err(|e| e.to_string()),
        };
        if let Ok(summary) = &outcome {
            write(&checks_path(output, &id), &jsonl::render_checks(&id, trace.condition, summary))?;
        }
        runs.push(RunEntry { condition: trace.condition, seed: trace.seed, outcome, token_usage: trace.token_usage });
    }
    finish(output, AblationReport::new(runs), ids, None, true)
}

/// Ablation report from already-coded check files, such as the installed
/// reference fixtures.
pub fn cmd_ablate_checks(paths: &[PathBuf], output: &Path) -> Result<Outcome, CliError> {
    let mut ids = Vec::new();
    let mut runs = Vec::new();
    for (i, path) in paths.iter().enumerate() {
        let file = jsonl::read_checks(path)?;
        unique(&mut ids, file.run);
        runs.push(RunEntry { condition: file.condition, seed: i as u64, outcome: Ok(file.summary), token_usage: None });
    }
    if runs.is_empty() {
        return Err(CliError::Usage("no check files".to_string()));
    }
    finish(output, AblationReport::new(runs), ids, None, true)
}

fn directive(d: &Directive) -> String {
    match d {
        Directive::Proceed(task) => format!("proceed {task}"),
        Directive::Recover => "recover".to_string(),
        Directive::Done => "done".to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DumpFormat {
    Text,
    Json,
}

pub fn cmd_dump_kb(kb_path: Option<&Path>, format: DumpFormat) -> Result<String, CliError> {
    let kb = match kb_path {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| FileError::io(path, e))?;
            load_kb(&text).map_err(|e| FileError::invalid(path.display().to_string(), e))?
        }
        None => KnowledgeBase::canonical(),
    };
    let edges: Vec<_> = kb
        .workflow()
        .order
        .iter()
        .map(|t| {
            let success = kb.next_step(*t, mars_core::domain::Status::Success);
            let failure = kb.next_step(*t, mars_core::domain::Status::Failure);
            (*t, success, failure)
        })
        .collect();
    Ok(match format {
        DumpFormat::Json => {
            let value = json!({
                "grants": kb.grants().iter().map(|(tool, role)| json!({ "tool": tool, "role": role })).collect::<Vec<_>>(),
                "delegated": kb.boundaries().delegated,
                "manager_owned": kb.boundaries().manager_owned,
                "success_criteria": kb.success_criteria().tasks,
                "cues": kb.cue_map().iter().map(|(cue, task)| json!({ "cue": cue, "task": task })).collect::<Vec<_>>(),
                "workflow": kb.workflow(),
                "edges": edges.iter().map(|(t, s, f)| json!({ "task": t, "success": s, "failure": f })).collect::<Vec<_>>(),
            });
            serde_json::to_string_pretty(&value).expect("kb dump serializes") + "\n"
        }
        DumpFormat::Text => {
            let mut out = String::from("grant matrix\n");
            for (tool, role) in kb.grants().iter() {
                out.push_str(&format!("  {:<28} {role}\n", tool.name()));
            }
            let names = |set: &std::collections::BTreeSet<mars_core::domain::TaskId>| {
                set.iter().map(|t| t.name()).collect::<Vec<_>>().join(", ")
            };
            out.push_str("role boundaries\n");
            out.push_str(&format!("  delegated      {}\n", names(&kb.boundaries().delegated)));
            out.push_str(&format!("  manager-owned  {}\n", names(&kb.boundaries().manager_owned)));
            out.push_str(&format!("success criteria\n  issue is None  {}\n", names(&kb.success_criteria().tasks)));
            out.push_str("cue map\n");
            for (cue, task) in kb.cue_map().iter() {
                let cue = serde_json::to_value(cue).expect("cue serializes");
                out.push_str(&format!("  {:<28} {task}\n", cue.as_str().unwrap_or_default()));
            }
            out.push_str("workflow\n");
            for (task, success, failure) in &edges {
                let target = kb.workflow().delegate_to.get(task).map(|r| r.key()).unwrap_or("manager");
                out.push_str(&format!(
                    "  {:<16} {:<22} success: {:<22} failure: {}\n",
                    task.name(),
                    target,
                    directive(success),
                    directive(failure)
                ));
            }
            out
        }
    })
}
