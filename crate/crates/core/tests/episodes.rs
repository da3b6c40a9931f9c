mod common;

use mars_core::domain::{Enforcement, RoleId, Status, TaskId, ToolId};
use mars_core::kb::KnowledgeBase;
use mars_core::kernel::{
    EpisodeTrace, EventDetail, EventKind, KernelError, RecoveryAction, Rule, Termination, TraceEvent,
};
use mars_core::policies::{FailureMode, FaultProfile, PolicyError};
use mars_core::world::NAVIGATION_ISSUE;

const MODES: [Enforcement; 2] = [Enforcement::Strict, Enforcement::Permissive];

const OUTCOMES: &str = "task_outcomes=navigate_HCW failed, collect_info and display_info succeeded; \
recovery_attempts=assigned HCW #90; lessons_learned=reassign early";

fn of_kind(trace: &EpisodeTrace, kind: EventKind) -> Vec<&TraceEvent> {
    trace.events.iter().filter(|e| e.kind() == kind).collect()
}

fn violations(trace: &EpisodeTrace, rule: Rule) -> usize {
    trace.violations().filter(|e| matches!(e.detail, EventDetail::Violation { rule: r, .. } if r == rule)).count()
}

#[test]
fn compliant_runs_are_clean_in_every_mode() {
    for enforcement in MODES {
        for with_kb in [false, true] {
            let trace = common::compliant(enforcement, with_kb, 3);
            assert_eq!(trace.termination, Some(Termination::Done));
            assert_eq!(trace.violations().count(), 0);
            for task in TaskId::OPERATIONAL {
                let delegations: Vec<_> =
                    of_kind(&trace, EventKind::Delegation).into_iter().filter(|e| e.is_about(task)).collect();
                assert_eq!(delegations.len(), 1, "{task}");
                assert!(matches!(
                    delegations[0].detail,
                    EventDetail::Delegation { target, synthesized: false, .. } if target == task.correct_assignee()
                ));
            }
            let recoveries = of_kind(&trace, EventKind::RecoveryAction);
            assert_eq!(recoveries.len(), 1);
            assert!(recoveries[0].is_about(TaskId::NavigateHcw));
            assert!(matches!(
                &recoveries[0].detail,
                EventDetail::RecoveryAction { action: RecoveryAction::AlternativeSolution(text) } if text.contains("HCW #90")
            ));
            let reflections = of_kind(&trace, EventKind::Reflection);
            assert_eq!(reflections.len(), 1);
            assert_eq!(reflections[0].actor, RoleId::Manager);
            match &reflections[0].detail {
                EventDetail::Reflection { sections, .. } => assert!(!sections.has_empty_section()),
                _ => unreachable!(),
            }
            assert_eq!(trace.first_occurrence_order(), TaskId::WORKFLOW.to_vec());
        }
    }
}

#[test]
fn trace_structure_invariants() {
    let trace = common::compliant(Enforcement::Permissive, true, 9);
    for pair in trace.events.windows(2) {
        assert!(pair[0].seq < pair[1].seq);
        assert!(pair[0].tick <= pair[1].tick);
    }
    for e in &trace.events {
        if let EventDetail::Delegation { target, .. } = e.detail {
            assert_ne!(target, e.actor);
        }
    }
    let judgments = of_kind(&trace, EventKind::Judgment);
    assert_eq!(judgments.len(), 3);
    match &judgments[0].detail {
        EventDetail::Judgment { verdict, report_seq: Some(seq), basis } => {
            assert_eq!(*verdict, Status::Failure);
            assert_eq!(basis.as_deref(), Some(NAVIGATION_ISSUE));
            assert!(matches!(trace.events[*seq as usize].detail, EventDetail::Report { .. }));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn kb_condition_is_recorded_and_does_not_change_compliant_events() {
    let baseline = common::compliant(Enforcement::Strict, false, 1);
    let with_kb = common::compliant(Enforcement::Strict, true, 1);
    assert_ne!(baseline.condition, with_kb.condition);
    assert_eq!(baseline.events, with_kb.events);
}

#[test]
fn usurping_manager_is_recorded_in_permissive_mode() {
    let trace = common::faulty(FaultProfile::single(FailureMode::ToolAccessViolation, 0), Enforcement::Permissive, 4);
    let collect: Vec<_> = trace.events.iter().filter(|e| e.is_about(TaskId::CollectInfo)).collect();
    assert!(collect.iter().all(|e| e.kind() != EventKind::Delegation));
    assert!(collect.iter().any(|e| e.actor == RoleId::Manager
        && matches!(e.detail, EventDetail::ToolCall { tool: ToolId::GetOnboardingInformation, .. })));
    assert!(collect
        .iter()
        .any(|e| matches!(e.detail, EventDetail::Violation { rule: Rule::ManagerToolUse, enforced: false, .. })));
}

#[test]
fn usurping_manager_is_blocked_in_strict_mode() {
    let trace = common::faulty(FaultProfile::single(FailureMode::ToolAccessViolation, 0), Enforcement::Strict, 4);
    assert!(of_kind(&trace, EventKind::ToolCall).iter().all(|e| e.actor != RoleId::Manager));
    for task in TaskId::OPERATIONAL {
        assert!(trace
            .events
            .iter()
            .any(|e| e.is_about(task) && matches!(e.detail, EventDetail::Delegation { synthesized: true, .. })));
    }
}

fn transcript(lines: &[&str]) -> String {
    lines.iter().map(|l| format!("{l}\n")).collect()
}

const NAV: &str = "ACTION: DELEGATE; task=navigate_HCW; target=navigating_robot";
const RECOVER: &str = "ACTION: RECOVER; alternative=assign HCW #90";
const COLLECT: &str = "ACTION: DELEGATE; task=collect_info; target=info_collection_robot";
const DISPLAY: &str = "ACTION: DELEGATE; task=display_info; target=info_display_robot";

fn reflect() -> String {
    format!("ACTION: REFLECT; {OUTCOMES}")
}

#[test]
fn echo_manager_leaves_the_failure_unanswered() {
    let text = transcript(&[NAV, "ACTION: NOOP", COLLECT, DISPLAY, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    assert!(of_kind(&trace, EventKind::RecoveryAction).is_empty());
    assert!(of_kind(&trace, EventKind::Escalation).is_empty());
    let judgment = of_kind(&trace, EventKind::Judgment)[0];
    assert!(matches!(&judgment.detail, EventDetail::Judgment { basis: Some(b), .. } if b == NAVIGATION_ISSUE));
    assert_eq!(trace.termination, Some(Termination::Done));
}

#[test]
fn strict_mode_escalates_an_unanswered_failure() {
    let text = transcript(&[NAV, "ACTION: NOOP"]);
    let trace = common::replay_manager(&text, Enforcement::Strict).unwrap();
    let escalations = of_kind(&trace, EventKind::Escalation);
    assert_eq!(escalations.len(), 1);
    assert!(matches!(escalations[0].detail, EventDetail::Escalation { synthesized: true, .. }));
    assert_eq!(trace.termination, Some(Termination::Escalated));
}

#[test]
fn strict_mode_reprompts_once_then_deadlocks() {
    let wrong = "ACTION: DELEGATE; task=navigate_HCW; target=info_display_robot";
    let text = transcript(&[wrong, wrong, RECOVER, COLLECT, DISPLAY, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Strict).unwrap();
    assert_eq!(violations(&trace, Rule::WrongAssignee), 1);
    assert_eq!(violations(&trace, Rule::DelegationDeadlock), 1);
    let nav = of_kind(&trace, EventKind::Delegation)[0];
    assert!(matches!(nav.detail, EventDetail::Delegation { target: RoleId::NavigationRobot, synthesized: true, .. }));
    assert_eq!(trace.termination, Some(Termination::Done));
}

#[test]
fn permissive_mode_honours_a_wrong_target() {
    let wrong = "ACTION: DELEGATE; task=collect_info; target=info_display_robot";
    let text = transcript(&[NAV, RECOVER, wrong, "ACTION: RECOVER; escalate"]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    assert_eq!(violations(&trace, Rule::WrongAssignee), 1);
    let report = trace
        .events
        .iter()
        .find(|e| e.is_about(TaskId::CollectInfo) && e.kind() == EventKind::Report)
        .expect("the display robot answers");
    assert_eq!(report.actor, RoleId::InfoDisplayRobot);
    assert_eq!(trace.termination, Some(Termination::Escalated));
}

#[test]
fn delegated_reflection_is_recorded_in_permissive_mode() {
    let text = transcript(&[
        NAV,
        RECOVER,
        COLLECT,
        DISPLAY,
        "ACTION: DELEGATE; task=reflection_task; target=info_display_robot",
    ]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    assert!(trace.events.iter().any(|e| e.is_about(TaskId::Reflection) && e.kind() == EventKind::Delegation));
    assert_eq!(violations(&trace, Rule::DelegatedReflection), 1);
    let reflection = of_kind(&trace, EventKind::Reflection)[0];
    assert_eq!(reflection.actor, RoleId::InfoDisplayRobot);
}

#[test]
fn delegated_reflection_is_refused_in_strict_mode() {
    let handoff = "ACTION: DELEGATE; task=reflection_task; target=info_display_robot";
    let text = transcript(&[NAV, RECOVER, COLLECT, DISPLAY, handoff, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Strict).unwrap();
    assert!(!trace.events.iter().any(|e| e.is_about(TaskId::Reflection) && e.kind() == EventKind::Delegation));
    let reflection = of_kind(&trace, EventKind::Reflection)[0];
    assert_eq!(reflection.actor, RoleId::Manager);
}

#[test]
fn display_prefetch_travels_with_the_delegation() {
    let text =
        transcript(&[NAV, RECOVER, COLLECT, "ACTION: USE_TOOL; tool=get_display_information", DISPLAY, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    let display: Vec<_> = trace.events.iter().filter(|e| e.is_about(TaskId::DisplayInfo)).collect();
    assert!(matches!(display[0].detail, EventDetail::ToolCall { .. }) && display[0].actor == RoleId::Manager);
    assert!(matches!(display[1].detail, EventDetail::Violation { rule: Rule::ManagerToolUse, .. }));
    match &display[2].detail {
        EventDetail::Delegation { context: Some(ctx), .. } => assert!(ctx.contains_key("display_info")),
        other => panic!("expected a delegation with context, got {other:?}"),
    }
}

#[test]
fn completed_task_can_be_retried_only_in_permissive_mode() {
    let text = transcript(&[NAV, RECOVER, COLLECT, COLLECT, DISPLAY, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    let collects =
        trace.events.iter().filter(|e| e.is_about(TaskId::CollectInfo) && e.kind() == EventKind::Delegation).count();
    assert_eq!(collects, 2);
    assert_eq!(violations(&trace, Rule::RetryCompleted), 1);

    let strict = common::replay_manager(&text, Enforcement::Strict).unwrap();
    let collects =
        strict.events.iter().filter(|e| e.is_about(TaskId::CollectInfo) && e.kind() == EventKind::Delegation).count();
    assert_eq!(collects, 1);
    assert_eq!(violations(&strict, Rule::RetryCompleted), 1);
}

#[test]
fn exhausted_transcript_aborts_with_partial_trace() {
    let abort = common::replay_manager("", Enforcement::Permissive).unwrap_err();
    assert!(matches!(
        abort.error,
        KernelError::Policy { actor: RoleId::Manager, source: PolicyError::TranscriptExhausted(0), .. }
    ));
    assert!(!abort.partial.is_complete());

    let abort = common::replay_manager(&transcript(&[NAV]), Enforcement::Permissive).unwrap_err();
    assert!(matches!(abort.error, KernelError::Policy { source: PolicyError::TranscriptExhausted(1), .. }));
    assert!(abort.partial.events.iter().any(|e| e.kind() == EventKind::Judgment));
}

#[test]
fn unrecognized_alternative_is_escalated_in_strict_mode() {
    let text = transcript(&[NAV, "ACTION: RECOVER; alternative=wait for HCW #80", COLLECT]);
    let trace = common::replay_manager(&text, Enforcement::Strict).unwrap();
    assert_eq!(violations(&trace, Rule::UnresolvedAlternative), 1);
    assert_eq!(trace.termination, Some(Termination::Escalated));
}

#[test]
fn late_recovery_counts_in_permissive_mode() {
    let text = transcript(&[NAV, "ACTION: NOOP", RECOVER, COLLECT, DISPLAY, &reflect()]);
    let trace = common::replay_manager(&text, Enforcement::Permissive).unwrap();
    let recovery = of_kind(&trace, EventKind::RecoveryAction);
    assert_eq!(recovery.len(), 1);
    assert!(recovery[0].is_about(TaskId::NavigateHcw));
}

#[test]
fn invalid_roster_is_rejected_before_running() {
    let mut roster = mars_core::domain::canonical_roster();
    roster[0].allowed_tools.insert(ToolId::GetNavigationResults);
    let specs = mars_core::domain::canonical_task_specs();
    let scenarios = mars_core::world::Scenarios::stock();
    let kb = KnowledgeBase::canonical();
    let setup = mars_core::kernel::EpisodeSetup {
        roster: &roster,
        task_specs: &specs,
        scenarios: &scenarios,
        kb: &kb,
        enforcement: Enforcement::Strict,
        seed: 0,
    };
    let err = mars_core::kernel::run_episode(&setup, &mut mars_core::policies::PolicySet::compliant()).unwrap_err();
    assert!(matches!(err.error, KernelError::InvalidRoster(_)));
    assert!(err.partial.events.is_empty());
}

#[test]
fn malformed_policy_output_is_a_protocol_error() {
    let text = transcript(&[NAV, RECOVER, "ACTION: REPORT; location=ER-12"]);
    let abort = common::replay_manager(&text, Enforcement::Permissive).unwrap_err();
    assert!(matches!(abort.error, KernelError::PolicyProtocol { actor: RoleId::Manager, .. }));
}
