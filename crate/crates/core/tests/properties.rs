mod common;

use std::collections::BTreeMap;

use mars_core::domain::{
    canonical_roster, parse_task_report, parse_task_report_lenient, Enforcement, Payload, Record, RoleId, Status,
    StatusForm, TaskId, TaskReport, TaskSpec, ToolId, EMPTY_ISSUE_VALUES,
};
use mars_core::kb::{load_kb, KnowledgeBase, CANONICAL_KB};
use mars_core::kernel::{EventDetail, RecoveryAction, ReflectionSections, TraceEvent};
use mars_core::policies::{parse_action, render_action, Action, FailureMode, FaultProfile};
use num_rational::Ratio;
use proptest::prelude::*;

fn text() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9#;=\\\\.,:]([a-zA-Z0-9 #;=\\\\.,:\n]{0,24}[a-zA-Z0-9#;=\\\\.,:])?"
}

fn issue_text() -> impl Strategy<Value = String> {
    text().prop_filter("not an empty-issue marker", |s| {
        !EMPTY_ISSUE_VALUES.iter().any(|e| e.eq_ignore_ascii_case(s.trim()))
    })
}

fn operational_task() -> impl Strategy<Value = TaskId> {
    proptest::sample::select(TaskId::OPERATIONAL.to_vec())
}

fn report_strategy() -> impl Strategy<Value = TaskReport> {
    (operational_task(), proptest::collection::vec(text(), 3), proptest::option::of(issue_text())).prop_map(
        |(task, values, issue)| {
            let spec = TaskSpec::canonical(task);
            let payload: Payload = spec.payload_fields().map(str::to_string).zip(values).collect();
            match issue {
                Some(issue) => TaskReport::failure(task, payload, issue).unwrap(),
                None => TaskReport::success(task, payload),
            }
        },
    )
}

fn payload_strategy() -> impl Strategy<Value = Payload> {
    proptest::collection::btree_map("[a-z_]{1,8}", text(), 0..3)
}

fn action_strategy() -> impl Strategy<Value = Action> {
    let role = proptest::sample::select(RoleId::ALL.to_vec());
    let task = proptest::sample::select(TaskId::WORKFLOW.to_vec());
    let tool = proptest::sample::select(ToolId::ALL.to_vec());
    prop_oneof![
        (task, role, payload_strategy()).prop_map(|(task, target, ctx)| Action::Delegate {
            task,
            target,
            context: (!ctx.is_empty()).then_some(ctx),
        }),
        tool.prop_map(|tool| Action::UseTool { tool }),
        proptest::collection::vec(("[a-z_]{1,8}", text()), 0..5)
            .prop_map(|pairs| Action::Report { record: pairs.into_iter().collect::<Record>() }),
        text().prop_map(|t| Action::Recover { recovery: RecoveryAction::AlternativeSolution(t) }),
        Just(Action::Recover { recovery: RecoveryAction::EscalateToHuman }),
        (proptest::collection::vec(proptest::option::of(text()), 3), proptest::option::of(text())).prop_map(
            |(s, claim)| Action::Reflect {
                sections: ReflectionSections {
                    task_outcomes: s[0].clone().unwrap_or_default(),
                    recovery_attempts: s[1].clone().unwrap_or_default(),
                    lessons_learned: s[2].clone().unwrap_or_default(),
                },
                claim,
            }
        ),
        Just(Action::NoOp),
    ]
}

fn profile_strategy() -> impl Strategy<Value = FaultProfile> {
    let prob = (1u64..=4).prop_flat_map(|d| (0..=d, Just(d)));
    (proptest::collection::vec(prob, 5), proptest::bits::u8::masked(0b11111), any::<u64>()).prop_map(
        |(probs, mask, seed)| {
            let modes: BTreeMap<_, _> = FailureMode::ALL
                .into_iter()
                .zip(probs)
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, (mode, (n, d)))| (mode, Ratio::new(n, d)))
                .collect();
            FaultProfile::new(modes, seed).unwrap()
        },
    )
}

fn followed_by_recovery(events: &[TraceEvent], judgment: usize) -> bool {
    let task = events[judgment].task;
    for e in &events[judgment + 1..] {
        match e.detail {
            EventDetail::RecoveryAction { .. } | EventDetail::Escalation { .. } if e.task == task => return true,
            EventDetail::Delegation { .. } => return false,
            _ => {}
        }
    }
    false
}

proptest! {
    #[test]
    fn report_record_round_trip(report in report_strategy()) {
        let spec = TaskSpec::canonical(report.task());
        let record = report.to_record();
        prop_assert_eq!(parse_task_report(&record, &spec).unwrap(), report.clone());
        let (lenient, form) = parse_task_report_lenient(&record, &spec).unwrap();
        prop_assert_eq!(lenient, report);
        prop_assert_eq!(form, StatusForm::Explicit);
    }

    #[test]
    fn status_follows_issue_presence(report in report_strategy()) {
        prop_assert_eq!(report.status() == Status::Failure, report.issue().is_some());
        let kb = KnowledgeBase::canonical();
        prop_assert_eq!(mars_core::kernel::judge(&report, &kb), report.status());
        prop_assert_eq!(kb.success_criteria().outcome(&report), report.status());
    }

    #[test]
    fn implicit_status_is_inferred_from_issue(report in report_strategy()) {
        let spec = TaskSpec::canonical(report.task());
        let mut record: Record = report.to_record().iter().filter(|(k, _)| *k != "status").collect();
        if report.issue().is_none() {
            record.push("issue", "None");
        }
        let (parsed, form) = parse_task_report_lenient(&record, &spec).unwrap();
        prop_assert_eq!(form, StatusForm::Implicit);
        prop_assert_eq!(parsed.status(), report.status());
        prop_assert!(parse_task_report(&record, &spec).is_err());
    }

    #[test]
    fn action_grammar_round_trip(action in action_strategy()) {
        let line = render_action(&action);
        prop_assert!(!line.contains('\n'));
        prop_assert_eq!(parse_action(&line).unwrap(), action);
    }

    #[test]
    fn faulty_manager_is_seed_reproducible(profile in profile_strategy(), seed in any::<u64>()) {
        let a = common::faulty(profile.clone(), Enforcement::Permissive, seed);
        let b = common::faulty(profile, Enforcement::Permissive, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn empty_profile_degenerates_to_compliance(profile_seed in any::<u64>(), seed in any::<u64>(), strict in any::<bool>()) {
        let enforcement = if strict { Enforcement::Strict } else { Enforcement::Permissive };
        let faulty = common::faulty(FaultProfile::empty(profile_seed), enforcement, seed);
        let compliant = common::compliant(enforcement, false, seed);
        prop_assert_eq!(faulty.events, compliant.events);
    }

    #[test]
    fn zero_probabilities_degenerate_to_compliance(seed in any::<u64>()) {
        let modes = FailureMode::ALL.into_iter().map(|m| (m, Ratio::new(0, 1))).collect();
        let faulty = common::faulty(FaultProfile::new(modes, seed).unwrap(), Enforcement::Permissive, seed);
        prop_assert_eq!(faulty.events, common::compliant(Enforcement::Permissive, false, seed).events);
    }

    #[test]
    fn strict_mode_guarantees_hold(profile in profile_strategy(), seed in any::<u64>()) {
        let trace = common::faulty(profile, Enforcement::Strict, seed);
        let kb = KnowledgeBase::canonical();
        for (i, e) in trace.events.iter().enumerate() {
            match &e.detail {
                EventDetail::ToolCall { tool, .. } => prop_assert!(kb.tool_permitted(e.actor, *tool)),
                EventDetail::Judgment { verdict: Status::Failure, .. } => {
                    prop_assert!(followed_by_recovery(&trace.events, i), "judgment at seq {}", e.seq)
                }
                _ => {}
            }
        }
    }

    #[test]
    fn first_occurrences_follow_the_workflow(profile in profile_strategy(), seed in any::<u64>(), strict in any::<bool>()) {
        let enforcement = if strict { Enforcement::Strict } else { Enforcement::Permissive };
        let trace = common::faulty(profile, enforcement, seed);
        prop_assert!(trace.is_complete());
        let order: Vec<usize> = trace.first_occurrence_order().iter().map(|t| t.position()).collect();
        prop_assert!(order.windows(2).all(|w| w[0] < w[1]), "{:?}", order);
    }
}

#[test]
fn every_tool_has_exactly_one_owner() {
    let kb = KnowledgeBase::canonical();
    for tool in ToolId::ALL {
        let holders: Vec<RoleId> = RoleId::ALL.into_iter().filter(|r| kb.tool_permitted(*r, tool)).collect();
        assert_eq!(holders, vec![tool.owner()]);
        assert_eq!(tool.owner().designated_tool(), Some(tool));
        assert_eq!(tool.stage().tool(), Some(tool));
        assert_eq!(kb.grants().grantee(tool), Some(tool.owner()));
    }
    assert_eq!(RoleId::Manager.designated_tool(), None);
    for agent in canonical_roster() {
        let expected: Vec<ToolId> = agent.role.designated_tool().into_iter().collect();
        assert_eq!(agent.allowed_tools.into_iter().collect::<Vec<_>>(), expected);
    }
}

#[test]
fn canonical_kb_loads_and_matches_builtins() {
    let kb = load_kb(CANONICAL_KB).unwrap();
    assert_eq!(kb.grants(), KnowledgeBase::canonical().grants());
    assert_eq!(kb.workflow().order, TaskId::WORKFLOW.to_vec());
}
