mod common;

use mars_core::domain::{AgentSpec, Enforcement, RoleId, TaskId, TaskSpec};
use mars_core::evaluator::summarize;
use mars_core::kb::{KnowledgeBase, KB_DIRECTIVE};
use mars_core::kernel::KernelError;
use mars_core::policies::llm::{build_prompt, extract_action};
use mars_core::policies::{
    Action, CannedBackend, LlmPolicy, Observation, PendingTask, Policy, PolicyError, PolicySet, Prompt, Turn,
};
use num_rational::Ratio;

fn manager_obs(task: TaskId, turn: Turn, kb: bool) -> Observation {
    let spec = TaskSpec::canonical(task);
    let description = spec.render_description("A new patient arrives.");
    Observation {
        role: RoleId::Manager,
        spec: AgentSpec::canonical(RoleId::Manager),
        turn,
        pending_task: Some(PendingTask { spec, description }),
        inbox: Vec::new(),
        kb_text: kb.then(|| KnowledgeBase::canonical().document().to_string()),
    }
}

/// Answers like a protocol-following manager, reading only the prompt.
fn scripted_manager(prompt: &Prompt) -> String {
    let line = |prefix: &str| {
        prompt.user.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim).unwrap_or_default().to_string()
    };
    let task: TaskId = line("TASK:").parse().expect("prompt names the task");
    match (line("TURN:").as_str(), task) {
        ("recovery", _) => "Thought: the HCW is unavailable.\nACTION: RECOVER; alternative=assign HCW #90".into(),
        ("dispatch", TaskId::Reflection) => "ACTION: REFLECT; task_outcomes=navigate_HCW failed and was recovered, \
collect_info and display_info succeeded; recovery_attempts=assigned HCW #90; lessons_learned=reassign early"
            .into(),
        (_, task) => format!("I will delegate.\nACTION: DELEGATE; task={task}; target={}", task.correct_assignee()),
    }
}

#[test]
fn well_formed_delegation_is_parsed() {
    let mut policy = LlmPolicy::new(CannedBackend::new(|_| {
        "Delegating now.\nACTION: DELEGATE; task=navigate_HCW; target=Staff Navigation Assistant".to_string()
    }));
    let action = policy.decide(&manager_obs(TaskId::NavigateHcw, Turn::Dispatch, false)).unwrap();
    assert_eq!(action, Action::Delegate { task: TaskId::NavigateHcw, target: RoleId::NavigationRobot, context: None });
    assert!(policy.token_usage().unwrap().total() > 0);
}

#[test]
fn prose_without_an_action_line_is_a_protocol_error() {
    let mut policy = LlmPolicy::new(CannedBackend::new(|_| "The navigation went fine, I think.".to_string()));
    let err = policy.decide(&manager_obs(TaskId::NavigateHcw, Turn::Dispatch, false)).unwrap_err();
    assert!(matches!(err, PolicyError::Protocol(_)));
    assert!(matches!(extract_action("ACTION: REPORT; location=ER-12; stat"), Err(PolicyError::Protocol(_))));
}

#[test]
fn protocol_error_surfaces_from_the_kernel() {
    let manager = LlmPolicy::new(CannedBackend::new(|_| "Sure, here is my plan.".to_string()));
    let abort =
        common::try_run(&mut PolicySet::with_manager(Box::new(manager)), Enforcement::Strict, true, 0).unwrap_err();
    assert!(matches!(abort.error, KernelError::PolicyProtocol { actor: RoleId::Manager, seq: 0, .. }));
}

#[test]
fn exhausted_backend_is_unavailable() {
    let mut policy = LlmPolicy::new(CannedBackend::sequence(vec![]));
    let err = policy.decide(&manager_obs(TaskId::NavigateHcw, Turn::Dispatch, false)).unwrap_err();
    assert!(matches!(err, PolicyError::BackendUnavailable(_)));
}

#[test]
fn prompt_carries_the_kb_only_when_enabled() {
    let with = build_prompt(&manager_obs(TaskId::CollectInfo, Turn::Dispatch, true));
    let without = build_prompt(&manager_obs(TaskId::CollectInfo, Turn::Dispatch, false));
    assert!(with.system.contains(KB_DIRECTIVE));
    assert!(with.system.contains("TOOL ACCESS AND REAL-WORLD MAPPING"));
    assert!(!without.system.contains(KB_DIRECTIVE));
    for prompt in [&with, &without] {
        assert!(prompt.system.contains(&AgentSpec::canonical(RoleId::Manager).backstory));
        assert!(prompt.user.contains("TASK: collect_info"));
        assert!(prompt.user.contains("A new patient arrives."));
    }
}

#[test]
fn scripted_backend_runs_full_episodes_and_kb_costs_more_tokens() {
    let mut totals = [0u64; 2];
    for seed in 0..5 {
        for (slot, with_kb) in [false, true].into_iter().enumerate() {
            let manager = LlmPolicy::new(CannedBackend::new(scripted_manager));
            let mut policies = PolicySet::with_manager(Box::new(manager));
            let trace = common::run(&mut policies, Enforcement::Strict, with_kb, seed);
            let summary = summarize(&trace).unwrap();
            assert_eq!(summary.total_points, Ratio::from_integer(17));
            totals[slot] += trace.token_usage.expect("model-backed policy reports usage").total();
        }
    }
    assert!(totals[1] > totals[0], "with kb {} vs baseline {}", totals[1], totals[0]);
}
