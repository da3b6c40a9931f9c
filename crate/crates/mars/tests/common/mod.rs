#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mars::{fixtures, load_config, Overrides, RunConfig};
use mars_core::domain::{canonical_roster, canonical_task_specs, Enforcement};
use mars_core::kb::KnowledgeBase;
use mars_core::kernel::{run_episode, EpisodeAbort, EpisodeSetup, EpisodeTrace};
use mars_core::policies::{FailureMode, FaultProfile, FaultyManager, PolicySet, ReplayPolicy};
use mars_core::world::Scenarios;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

pub fn installed() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fixtures::install(dir.path()).unwrap();
    dir
}

pub fn config(dir: &Path, name: &str, overrides: Overrides) -> RunConfig {
    load_config(&dir.join("configs").join(name), &overrides).unwrap()
}

pub fn episode(
    policies: &mut PolicySet,
    enforcement: Enforcement,
    with_kb: bool,
    seed: u64,
) -> Result<EpisodeTrace, EpisodeAbort> {
    let (roster, specs, scenarios) = (canonical_roster(), canonical_task_specs(), Scenarios::stock());
    let kb = KnowledgeBase::canonical().with_enabled(with_kb);
    let setup = EpisodeSetup { roster: &roster, task_specs: &specs, scenarios: &scenarios, kb: &kb, enforcement, seed };
    run_episode(&setup, policies)
}

pub fn faulty(profile: FaultProfile, enforcement: Enforcement, seed: u64) -> EpisodeTrace {
    let mut policies = PolicySet::with_manager(Box::new(FaultyManager::new(profile)));
    episode(&mut policies, enforcement, false, seed).expect("fault policies never abort")
}

pub fn replayed(transcript: &str, enforcement: Enforcement) -> EpisodeTrace {
    let manager = ReplayPolicy::from_transcript(transcript).unwrap();
    episode(&mut PolicySet::with_manager(Box::new(manager)), enforcement, false, 0).unwrap()
}

/// A random profile: each mode present with probability one half, at a
/// probability n/d with d in 1..=4.
pub fn random_profile(rng: &mut ChaCha8Rng) -> FaultProfile {
    let mut modes = BTreeMap::new();
    for mode in FailureMode::ALL {
        if rng.gen_bool(0.5) {
            let d = rng.gen_range(1..=4u64);
            modes.insert(mode, Ratio::new(rng.gen_range(0..=d), d));
        }
    }
    FaultProfile::new(modes, rng.gen()).unwrap()
}

pub fn profiles(n: usize, seed: u64) -> Vec<(FaultProfile, u64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| (random_profile(&mut rng), rng.gen())).collect()
}

/// Relative path to contents for every file below `root`.
pub fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Sums the score strings of a serialized check file in half-units,
/// without going through the crate's readers.
pub fn oracle_half_units(text: &str) -> u64 {
    text.lines()
        .filter_map(|l| serde_json::from_str::<serde_json::Value>(l).ok())
        .filter_map(|v| v.get("score").and_then(|s| s.as_str()).map(str::to_string))
        .map(|s| match s.as_str() {
            "1" => 2,
            "0.5" => 1,
            "0" | "n/a" => 0,
            other => panic!("unexpected score {other}"),
        })
        .sum()
}
