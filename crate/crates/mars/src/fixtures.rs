//! Bundled fixtures: the stock roster, tasks, scenarios and knowledge base,
//! the hand-coded check vectors, transcript replays and sample configs.

use std::fs;
use std::path::{Path, PathBuf};

use mars_core::domain::{canonical_roster, canonical_task_specs};
use mars_core::kb::CANONICAL_KB;
use mars_core::world::Scenarios;

use crate::error::FileError;
use crate::files;

macro_rules! bundled {
    ($($path:literal),* $(,)?) => {
        &[$(($path, include_str!(concat!("../fixtures/", $path)))),*]
    };
}

/// Static fixture files by their path below the install directory.
pub const BUNDLED: &[(&str, &str)] = bundled![
    "reference/checks/baseline-run1.jsonl",
    "reference/checks/baseline-run2.jsonl",
    "reference/checks/baseline-run3.jsonl",
    "reference/checks/baseline-run4.jsonl",
    "reference/checks/baseline-run5.jsonl",
    "reference/checks/with_kb-run1.jsonl",
    "reference/checks/with_kb-run2.jsonl",
    "reference/checks/with_kb-run3.jsonl",
    "reference/checks/with_kb-run4.jsonl",
    "reference/checks/with_kb-run5.jsonl",
    "reference/transcripts/echo_manager.txt",
    "reference/transcripts/placeholder_reflection.txt",
    "reference/transcripts/compile_report_reflection.txt",
    "reference/transcripts/display_prefetch.txt",
    "reference/transcripts/delegated_reflection.txt",
    "reference/transcripts/collect_retry.txt",
    "reference/transcripts/compliant_manager.txt",
    "configs/compliant.toml",
    "configs/observed-faults.toml",
    "configs/echo-replay.toml",
    "configs/tool-access.toml",
    "configs/llm.toml",
];

pub fn bundled(path: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(p, _)| *p == path).map(|(_, text)| *text)
}

/// Hand-coded check vectors, baseline runs first.
pub fn reference_checks() -> impl Iterator<Item = (&'static str, &'static str)> {
    BUNDLED.iter().copied().filter(|(p, _)| p.starts_with("reference/checks/"))
}

/// Every fixture file, generated ones included.
pub fn all() -> Vec<(String, String)> {
    let scenarios = Scenarios::stock();
    let mut out = vec![
        ("roster.toml".to_string(), files::render_roster(&canonical_roster())),
        ("tasks.toml".to_string(), files::render_tasks(&canonical_task_specs())),
        ("knowledge_base.md".to_string(), CANONICAL_KB.to_string()),
        ("scenarios/navigate.toml".to_string(), files::render_scenario(&scenarios.navigate)),
        ("scenarios/collect.toml".to_string(), files::render_scenario(&scenarios.collect)),
        ("scenarios/display.toml".to_string(), files::render_scenario(&scenarios.display)),
    ];
    out.extend(BUNDLED.iter().map(|(p, t)| (p.to_string(), t.to_string())));
    out
}

/// Writes every fixture below `dir`, returning the paths written.
pub fn install(dir: &Path) -> Result<Vec<PathBuf>, FileError> {
    let mut written = Vec::new();
    for (rel, text) in all() {
        let path = dir.join(&rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| FileError::io(parent, e))?;
        }
        fs::write(&path, text).map_err(|e| FileError::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
