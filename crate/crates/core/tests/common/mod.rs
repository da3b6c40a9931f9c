#![allow(dead_code)]

use mars_core::domain::{canonical_roster, canonical_task_specs, Enforcement};
use mars_core::kb::KnowledgeBase;
use mars_core::kernel::{run_episode, EpisodeAbort, EpisodeSetup, EpisodeTrace};
use mars_core::policies::{FaultProfile, FaultyManager, PolicySet, ReplayPolicy};
use mars_core::world::Scenarios;

pub fn try_run(
    policies: &mut PolicySet,
    enforcement: Enforcement,
    with_kb: bool,
    seed: u64,
) -> Result<EpisodeTrace, EpisodeAbort> {
    let roster = canonical_roster();
    let specs = canonical_task_specs();
    let scenarios = Scenarios::stock();
    let kb = KnowledgeBase::canonical().with_enabled(with_kb);
    let setup = EpisodeSetup { roster: &roster, task_specs: &specs, scenarios: &scenarios, kb: &kb, enforcement, seed };
    run_episode(&setup, policies)
}

pub fn run(policies: &mut PolicySet, enforcement: Enforcement, with_kb: bool, seed: u64) -> EpisodeTrace {
    try_run(policies, enforcement, with_kb, seed).unwrap_or_else(|abort| panic!("episode aborted: {}", abort.error))
}

pub fn compliant(enforcement: Enforcement, with_kb: bool, seed: u64) -> EpisodeTrace {
    run(&mut PolicySet::compliant(), enforcement, with_kb, seed)
}

pub fn faulty(profile: FaultProfile, enforcement: Enforcement, seed: u64) -> EpisodeTrace {
    run(&mut PolicySet::with_manager(Box::new(FaultyManager::new(profile))), enforcement, false, seed)
}

pub fn replay_manager(transcript: &str, enforcement: Enforcement) -> Result<EpisodeTrace, EpisodeAbort> {
    let manager = ReplayPolicy::from_transcript(transcript).expect("transcript parses");
    try_run(&mut PolicySet::with_manager(Box::new(manager)), enforcement, false, 0)
}
