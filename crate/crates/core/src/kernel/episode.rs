use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};

use crate::domain::{
    parse_task_report_lenient, validate_agent_roster, AgentSpec, Condition, Enforcement, Payload, RoleId, Status,
    StatusForm, TaskId, TaskReport, TaskSpec,
};
use crate::kb::{Directive, KnowledgeBase};
use crate::policies::{Action, Observation, PendingTask, PolicyError, PolicySet, Turn};
use crate::world::{invoke_tool, Scenarios, WorldError};

use super::{
    delegate, judge, recover, DelegationRuling, EpisodeAbort, EpisodeTrace, EventDetail, EventKind, KernelError,
    OpError, RecoveryAction, RecoveryOutcome, Rule, Termination, TraceEvent,
};

/// Manager consultations per dispatch decision in strict mode (one re-prompt).
pub const DISPATCH_BUDGET_STRICT: u32 = 2;
/// Manager consultations per dispatch decision in permissive mode.
pub const DISPATCH_BUDGET_PERMISSIVE: u32 = 4;
/// Robot consultations per delegated task.
pub const ROBOT_BUDGET: u32 = 3;

pub struct EpisodeSetup<'a> {
    pub roster: &'a [AgentSpec],
    pub task_specs: &'a [TaskSpec],
    pub scenarios: &'a Scenarios,
    pub kb: &'a KnowledgeBase,
    pub enforcement: Enforcement,
    pub seed: u64,
}

enum Flow {
    Continue,
    Terminate,
}

enum TaskOutcome {
    Judged { verdict: Status, report: TaskReport },
    Terminated,
}

enum RobotOutcome {
    Reported { seq: u64, report: TaskReport },
    Reflected,
    Silent,
}

struct Run<'a> {
    setup: &'a EpisodeSetup<'a>,
    specs: [&'a TaskSpec; 4],
    agents: [&'a AgentSpec; 4],
    trace: EpisodeTrace,
    tick: u64,
    /// Permissive mode: the latest failure the manager left unanswered.
    unhandled: Option<TaskReport>,
}

/// Runs one episode of the onboarding workflow.
pub fn run_episode(setup: &EpisodeSetup<'_>, policies: &mut PolicySet) -> Result<EpisodeTrace, EpisodeAbort> {
    let condition = if setup.kb.enabled { Condition::WithKb } else { Condition::Baseline };
    let empty = EpisodeTrace::new(condition, setup.enforcement, setup.seed);
    let abort = |error: KernelError, partial: EpisodeTrace| EpisodeAbort { error, partial: Box::new(partial) };
    if let Err(violations) = validate_agent_roster(setup.roster) {
        return Err(abort(KernelError::InvalidRoster(violations), empty));
    }
    let spec_for = |task: TaskId| setup.task_specs.iter().find(|s| s.id == task);
    let mut specs = [setup.task_specs.first(); 4];
    for task in TaskId::WORKFLOW {
        match spec_for(task) {
            Some(spec) => specs[task.position()] = Some(spec),
            None => return Err(abort(KernelError::MissingTaskSpec(task), empty)),
        }
    }
    let agent_for =
        |role: RoleId| setup.roster.iter().find(|a| a.role == role).expect("validated roster has every role");
    let mut run = Run {
        setup,
        specs: specs.map(|s| s.expect("filled above")),
        agents: RoleId::ALL.map(agent_for),
        trace: empty,
        tick: 0,
        unhandled: None,
    };
    policies.begin_episode(setup.seed);
    let result = run.drive(policies);
    run.trace.token_usage = policies.token_usage();
    match result {
        Ok(termination) => {
            run.trace.termination = Some(termination);
            Ok(run.trace)
        }
        Err(error) => Err(abort(error, run.trace)),
    }
}

impl<'a> Run<'a> {
    fn strict(&self) -> bool {
        self.setup.enforcement.is_strict()
    }

    fn kb(&self) -> &'a KnowledgeBase {
        self.setup.kb
    }

    fn spec(&self, task: TaskId) -> &'a TaskSpec {
        self.specs[task.position()]
    }

    fn next_seq(&self) -> u64 {
        self.trace.events.len() as u64
    }

    fn push(&mut self, actor: RoleId, task: Option<TaskId>, detail: EventDetail) -> u64 {
        let seq = self.next_seq();
        self.trace.events.push(TraceEvent { seq, tick: self.tick, actor, task, detail });
        seq
    }

    fn violation(&mut self, actor: RoleId, task: TaskId, rule: Rule, note: String, enforced: bool) {
        self.push(actor, Some(task), EventDetail::Violation { rule, note, enforced });
    }

    fn visible(role: RoleId, event: &TraceEvent) -> bool {
        if event.actor == role {
            return true;
        }
        match (&event.detail, role) {
            (_, RoleId::Manager) => matches!(
                event.kind(),
                EventKind::Report
                    | EventKind::Judgment
                    | EventKind::RecoveryAction
                    | EventKind::Escalation
                    | EventKind::Reflection
            ),
            (EventDetail::Delegation { target, .. }, _) => *target == role,
            _ => false,
        }
    }

    fn observation(&self, role: RoleId, turn: Turn, task: TaskId) -> Observation {
        let spec = self.spec(task);
        let description = match self.setup.scenarios.for_task(task) {
            Some(script) => spec.render_description(script.emit_cue()),
            None => spec.render_description(""),
        };
        Observation {
            role,
            spec: self.agents[role.index()].clone(),
            turn,
            pending_task: Some(PendingTask { spec: spec.clone(), description }),
            inbox: self.trace.events.iter().filter(|e| Self::visible(role, e)).cloned().collect(),
            kb_text: self.kb().guidance().map(ToString::to_string),
        }
    }

    fn consult(
        &mut self,
        policies: &mut PolicySet,
        role: RoleId,
        turn: Turn,
        task: TaskId,
    ) -> Result<Action, KernelError> {
        self.tick += 1;
        let obs = self.observation(role, turn, task);
        let seq = self.next_seq();
        policies.get_mut(role).decide(&obs).map_err(|err| match err {
            PolicyError::Protocol(reason) => KernelError::PolicyProtocol { actor: role, seq, reason },
            source => KernelError::Policy { actor: role, seq, source },
        })
    }

    fn drive(&mut self, policies: &mut PolicySet) -> Result<Termination, KernelError> {
        let mut carry: Option<Action> = None;
        let mut task = self.kb().workflow().order[0];
        loop {
            if task == TaskId::Reflection {
                return match self.reflection_phase(policies, carry.take())? {
                    Flow::Continue => Ok(Termination::Done),
                    Flow::Terminate => Ok(Termination::Escalated),
                };
            }
            let (verdict, report) = match self.operational_task(policies, task, &mut carry)? {
                TaskOutcome::Judged { verdict, report } => (verdict, report),
                TaskOutcome::Terminated => return Ok(Termination::Escalated),
            };
            let next = match self.kb().next_step(task, verdict) {
                Directive::Proceed(next) => next,
                Directive::Done => return Ok(Termination::Done),
                Directive::Recover => {
                    if let Flow::Terminate = self.recovery_turn(policies, task, report, &mut carry)? {
                        return Ok(Termination::Escalated);
                    }
                    match self.kb().workflow().successor(task) {
                        Some(next) => next,
                        None => return Ok(Termination::Done),
                    }
                }
            };
            task = next;
        }
    }

    fn budget(&self) -> u32 {
        if self.strict() {
            DISPATCH_BUDGET_STRICT
        } else {
            DISPATCH_BUDGET_PERMISSIVE
        }
    }

    fn operational_task(
        &mut self,
        policies: &mut PolicySet,
        task: TaskId,
        carry: &mut Option<Action>,
    ) -> Result<TaskOutcome, KernelError> {
        let spec = self.spec(task);
        let budget = self.budget();
        let strict = self.strict();
        let mut consults = 0;
        let mut prefetched: Option<Payload> = None;
        loop {
            if consults >= budget && carry.is_none() {
                self.violation(
                    RoleId::Manager,
                    task,
                    Rule::Idle,
                    format!("no valid delegation after {consults} turns; delegating to {}", spec.correct_assignee),
                    true,
                );
                return self.synthesized_delegation(policies, task, prefetched);
            }
            let action = match carry.take() {
                Some(action) => action,
                None => {
                    consults += 1;
                    self.consult(policies, RoleId::Manager, Turn::Dispatch, task)?
                }
            };
            match action {
                Action::Delegate { target: RoleId::Manager, task: named, .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::InvalidAction,
                        format!("{named} delegated to the manager itself"),
                        strict,
                    );
                }
                Action::Delegate { task: named, target, context } if named == task => {
                    match delegate(target, spec, self.setup.enforcement, budget.saturating_sub(consults)) {
                        Ok(DelegationRuling::Accept) => {
                            let context = merge_context(context, prefetched);
                            self.push(
                                RoleId::Manager,
                                Some(task),
                                EventDetail::Delegation { target, context, synthesized: false },
                            );
                            return self.execute_and_judge(policies, task, target);
                        }
                        Ok(DelegationRuling::AcceptWithViolation(rule)) => {
                            let context = merge_context(context, prefetched);
                            self.push(
                                RoleId::Manager,
                                Some(task),
                                EventDetail::Delegation { target, context, synthesized: false },
                            );
                            self.violation(
                                RoleId::Manager,
                                task,
                                rule,
                                format!("{task} belongs to {}, not {target}", spec.correct_assignee),
                                false,
                            );
                            return self.execute_and_judge(policies, task, target);
                        }
                        Ok(DelegationRuling::Reject(rule)) => {
                            self.violation(
                                RoleId::Manager,
                                task,
                                rule,
                                format!("{task} belongs to {}, not {target}", spec.correct_assignee),
                                true,
                            );
                        }
                        Err(err) => {
                            self.violation(RoleId::Manager, task, Rule::DelegationDeadlock, err.to_string(), true);
                            return self.synthesized_delegation(policies, task, prefetched);
                        }
                    }
                }
                Action::Delegate { task: named, target, context } if named.position() < task.position() => {
                    if let Flow::Terminate = self.retry(policies, task, named, target, context)? {
                        return Ok(TaskOutcome::Terminated);
                    }
                }
                Action::Delegate { task: named, .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::OutOfOrder,
                        format!("{named} started while {task} is pending"),
                        strict,
                    );
                }
                Action::UseTool { tool } => {
                    let script = self.setup.scenarios.for_task(task).expect("operational task has a scenario");
                    match invoke_tool(tool, RoleId::Manager, script, self.setup.enforcement, self.kb()) {
                        Ok(result) => {
                            self.push(
                                RoleId::Manager,
                                Some(task),
                                EventDetail::ToolCall { tool, result: result.clone() },
                            );
                            self.violation(
                                RoleId::Manager,
                                task,
                                Rule::ManagerToolUse,
                                format!("manager used {tool}"),
                                false,
                            );
                            prefetched = Some(result.payload);
                        }
                        Err(WorldError::ToolAccessDenied { .. }) => {
                            self.violation(
                                RoleId::Manager,
                                task,
                                Rule::ManagerToolUse,
                                format!("manager denied {tool}"),
                                true,
                            );
                        }
                        Err(err @ WorldError::StageMismatch { .. }) => {
                            self.violation(RoleId::Manager, task, Rule::StageMismatch, err.to_string(), true);
                        }
                    }
                }
                Action::Report { record } => {
                    if strict {
                        self.violation(
                            RoleId::Manager,
                            task,
                            Rule::SelfExecution,
                            format!("manager may not perform {task}"),
                            true,
                        );
                        continue;
                    }
                    let seq = self.next_seq();
                    let (report, form) = parse_task_report_lenient(&record, spec).map_err(|err| {
                        KernelError::PolicyProtocol { actor: RoleId::Manager, seq, reason: err.to_string() }
                    })?;
                    let seq = self.push(
                        RoleId::Manager,
                        Some(task),
                        EventDetail::Report { report: report.clone(), explicit_status: form == StatusForm::Explicit },
                    );
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::SelfExecution,
                        format!("manager performed {task}"),
                        false,
                    );
                    let verdict = self.record_judgment(task, Some(seq), &report);
                    return Ok(TaskOutcome::Judged { verdict, report });
                }
                Action::Recover { recovery } => {
                    if let Some(Flow::Terminate) = self.late_recovery(task, recovery) {
                        return Ok(TaskOutcome::Terminated);
                    }
                }
                Action::Reflect { .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::OutOfOrder,
                        format!("reflection attempted while {task} is pending"),
                        strict,
                    );
                }
                Action::NoOp => {
                    if strict {
                        self.violation(RoleId::Manager, task, Rule::Idle, format!("no decision for {task}"), true);
                    }
                }
            }
        }
    }

    fn synthesized_delegation(
        &mut self,
        policies: &mut PolicySet,
        task: TaskId,
        prefetched: Option<Payload>,
    ) -> Result<TaskOutcome, KernelError> {
        let target = self.spec(task).correct_assignee;
        self.push(
            RoleId::Manager,
            Some(task),
            EventDetail::Delegation { target, context: prefetched, synthesized: true },
        );
        self.execute_and_judge(policies, task, target)
    }

    fn execute_and_judge(
        &mut self,
        policies: &mut PolicySet,
        task: TaskId,
        robot: RoleId,
    ) -> Result<TaskOutcome, KernelError> {
        let (seq, report) = match self.robot_phase(policies, task, robot)? {
            RobotOutcome::Reported { seq, report } => (Some(seq), report),
            RobotOutcome::Silent | RobotOutcome::Reflected => {
                let issue = format!("no report received from {robot}");
                (None, TaskReport::failure(task, Payload::new(), issue).expect("issue is non-empty"))
            }
        };
        let verdict = self.record_judgment(task, seq, &report);
        Ok(TaskOutcome::Judged { verdict, report })
    }

    fn record_judgment(&mut self, task: TaskId, report_seq: Option<u64>, report: &TaskReport) -> Status {
        let verdict = judge(report, self.kb());
        let basis = report.issue().map(ToString::to_string);
        self.push(RoleId::Manager, Some(task), EventDetail::Judgment { verdict, report_seq, basis });
        verdict
    }

    fn robot_phase(
        &mut self,
        policies: &mut PolicySet,
        task: TaskId,
        robot: RoleId,
    ) -> Result<RobotOutcome, KernelError> {
        let strict = self.strict();
        for _ in 0..ROBOT_BUDGET {
            match self.consult(policies, robot, Turn::Execute, task)? {
                Action::UseTool { tool } => {
                    let Some(script) = self.setup.scenarios.for_task(task) else {
                        self.violation(robot, task, Rule::StageMismatch, format!("{tool} has no use in {task}"), true);
                        continue;
                    };
                    match invoke_tool(tool, robot, script, self.setup.enforcement, self.kb()) {
                        Ok(result) => {
                            self.push(robot, Some(task), EventDetail::ToolCall { tool, result });
                            if !self.kb().tool_permitted(robot, tool) {
                                self.violation(
                                    robot,
                                    task,
                                    Rule::ForeignToolUse,
                                    format!("{robot} used {tool}"),
                                    false,
                                );
                            }
                        }
                        Err(WorldError::ToolAccessDenied { .. }) => {
                            self.violation(robot, task, Rule::ForeignToolUse, format!("{robot} denied {tool}"), true);
                        }
                        Err(err @ WorldError::StageMismatch { .. }) => {
                            self.violation(robot, task, Rule::StageMismatch, err.to_string(), true);
                        }
                    }
                }
                Action::Report { record } if task.is_operational() => {
                    let seq = self.next_seq();
                    let (report, form) = parse_task_report_lenient(&record, self.spec(task))
                        .map_err(|err| KernelError::PolicyProtocol { actor: robot, seq, reason: err.to_string() })?;
                    let explicit_status = form == StatusForm::Explicit;
                    let seq =
                        self.push(robot, Some(task), EventDetail::Report { report: report.clone(), explicit_status });
                    return Ok(RobotOutcome::Reported { seq, report });
                }
                Action::Reflect { sections, claim } if task == TaskId::Reflection => {
                    self.push(robot, Some(task), EventDetail::Reflection { sections, claim });
                    return Ok(RobotOutcome::Reflected);
                }
                Action::NoOp => {}
                other => {
                    let note = format!("{robot} cannot {} while executing {task}", action_name(&other));
                    self.violation(robot, task, Rule::InvalidAction, note, strict);
                }
            }
        }
        self.violation(robot, task, Rule::NoReport, format!("{robot} did not report on {task}"), true);
        Ok(RobotOutcome::Silent)
    }

    fn recovery_turn(
        &mut self,
        policies: &mut PolicySet,
        task: TaskId,
        report: TaskReport,
        carry: &mut Option<Action>,
    ) -> Result<Flow, KernelError> {
        match self.consult(policies, RoleId::Manager, Turn::Recovery, task)? {
            Action::Recover { recovery } => Ok(self.apply_recovery(task, report, Some(recovery))),
            other => {
                if !self.strict() && other != Action::NoOp {
                    *carry = Some(other);
                }
                Ok(self.apply_recovery(task, report, None))
            }
        }
    }

    fn apply_recovery(&mut self, task: TaskId, report: TaskReport, action: Option<RecoveryAction>) -> Flow {
        let strict = self.strict();
        let outcome = match recover(&report, action, self.setup.enforcement) {
            Ok(outcome) => outcome,
            Err(err @ OpError::InvalidRecoveryAction(_)) => {
                self.violation(RoleId::Manager, task, Rule::InvalidRecovery, err.to_string(), strict);
                recover(&report, None, self.setup.enforcement).expect("report is a failure")
            }
            Err(err) => unreachable!("recovery only follows failure judgments: {err}"),
        };
        match outcome {
            RecoveryOutcome::Directive(directive) => {
                self.unhandled = None;
                self.push(
                    RoleId::Manager,
                    Some(task),
                    EventDetail::RecoveryAction { action: directive.action.clone() },
                );
                match directive.action {
                    RecoveryAction::EscalateToHuman => {
                        let reason = report.issue().unwrap_or_default().to_string();
                        self.push(RoleId::Manager, Some(task), EventDetail::Escalation { reason, synthesized: false });
                        Flow::Terminate
                    }
                    RecoveryAction::AlternativeSolution(text) => {
                        let resolved = self.setup.scenarios.for_task(task).is_some_and(|s| s.resolved_by(&text));
                        if resolved {
                            Flow::Continue
                        } else {
                            let note = format!("`{text}` does not resolve the {task} issue");
                            self.violation(RoleId::Manager, task, Rule::UnresolvedAlternative, note, strict);
                            if strict {
                                let reason = report.issue().unwrap_or_default().to_string();
                                self.push(
                                    RoleId::Manager,
                                    Some(task),
                                    EventDetail::Escalation { reason, synthesized: true },
                                );
                                Flow::Terminate
                            } else {
                                Flow::Continue
                            }
                        }
                    }
                }
            }
            RecoveryOutcome::Escalation(record) => {
                self.unhandled = None;
                self.push(
                    RoleId::Manager,
                    Some(task),
                    EventDetail::Escalation { reason: record.reason, synthesized: record.synthesized },
                );
                Flow::Terminate
            }
            RecoveryOutcome::Unhandled => {
                self.unhandled = Some(report);
                Flow::Continue
            }
        }
    }

    /// A recovery offered outside the recovery turn. Permissive mode applies
    /// it to the last unanswered failure, if any.
    fn late_recovery(&mut self, pending: TaskId, recovery: RecoveryAction) -> Option<Flow> {
        match self.unhandled.take() {
            Some(report) if !self.strict() => Some(self.apply_recovery(report.task(), report, Some(recovery))),
            other => {
                self.unhandled = other;
                let strict = self.strict();
                self.violation(
                    RoleId::Manager,
                    pending,
                    Rule::InvalidAction,
                    "no failure awaits recovery".to_string(),
                    strict,
                );
                None
            }
        }
    }

    fn retry(
        &mut self,
        policies: &mut PolicySet,
        pending: TaskId,
        earlier: TaskId,
        target: RoleId,
        context: Option<Payload>,
    ) -> Result<Flow, KernelError> {
        if self.strict() {
            self.violation(
                RoleId::Manager,
                pending,
                Rule::RetryCompleted,
                format!("{earlier} was already attempted"),
                true,
            );
            return Ok(Flow::Continue);
        }
        self.push(RoleId::Manager, Some(earlier), EventDetail::Delegation { target, context, synthesized: false });
        self.violation(
            RoleId::Manager,
            earlier,
            Rule::RetryCompleted,
            format!("{earlier} was already attempted"),
            false,
        );
        let correct = self.spec(earlier).correct_assignee;
        if target != correct {
            self.violation(
                RoleId::Manager,
                earlier,
                Rule::WrongAssignee,
                format!("{earlier} belongs to {correct}, not {target}"),
                false,
            );
        }
        match self.execute_and_judge(policies, earlier, target)? {
            TaskOutcome::Judged { verdict: Status::Failure, report } => {
                let mut carry = None;
                let flow = self.recovery_turn(policies, earlier, report, &mut carry)?;
                // Anything but a recovery during this nested turn is dropped.
                Ok(flow)
            }
            _ => Ok(Flow::Continue),
        }
    }

    fn reflection_phase(&mut self, policies: &mut PolicySet, mut carry: Option<Action>) -> Result<Flow, KernelError> {
        let task = TaskId::Reflection;
        let spec = self.spec(task);
        let budget = self.budget();
        let strict = self.strict();
        let mut consults = 0;
        loop {
            if consults >= budget && carry.is_none() {
                self.violation(RoleId::Manager, task, Rule::Idle, "no reflection produced".to_string(), true);
                return Ok(Flow::Continue);
            }
            let action = match carry.take() {
                Some(action) => action,
                None => {
                    consults += 1;
                    self.consult(policies, RoleId::Manager, Turn::Dispatch, task)?
                }
            };
            match action {
                Action::Reflect { sections, claim } => {
                    self.push(RoleId::Manager, Some(task), EventDetail::Reflection { sections, claim });
                    return Ok(Flow::Continue);
                }
                Action::Delegate { task: TaskId::Reflection, target: RoleId::Manager, .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::InvalidAction,
                        "reflection delegated to the manager itself".to_string(),
                        strict,
                    );
                }
                Action::Delegate { task: TaskId::Reflection, target, context } => {
                    match delegate(target, spec, self.setup.enforcement, budget.saturating_sub(consults)) {
                        Ok(DelegationRuling::Accept) => unreachable!("reflection is never a legitimate delegation"),
                        Ok(DelegationRuling::AcceptWithViolation(rule)) => {
                            self.push(
                                RoleId::Manager,
                                Some(task),
                                EventDetail::Delegation { target, context, synthesized: false },
                            );
                            self.violation(
                                RoleId::Manager,
                                task,
                                rule,
                                format!("reflection delegated to {target}"),
                                false,
                            );
                            self.robot_phase(policies, task, target)?;
                            return Ok(Flow::Continue);
                        }
                        Ok(DelegationRuling::Reject(rule)) => {
                            self.violation(
                                RoleId::Manager,
                                task,
                                rule,
                                format!("reflection delegated to {target}"),
                                true,
                            );
                        }
                        Err(err) => {
                            self.violation(RoleId::Manager, task, Rule::DelegationDeadlock, err.to_string(), true);
                            return Ok(Flow::Continue);
                        }
                    }
                }
                Action::Delegate { task: earlier, target: RoleId::Manager, .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::InvalidAction,
                        format!("{earlier} delegated to the manager itself"),
                        strict,
                    );
                }
                Action::Delegate { task: earlier, target, context } => {
                    if let Flow::Terminate = self.retry(policies, task, earlier, target, context)? {
                        return Ok(Flow::Terminate);
                    }
                }
                Action::UseTool { tool } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::StageMismatch,
                        format!("{tool} has no use in {task}"),
                        true,
                    );
                }
                Action::Report { .. } => {
                    self.violation(
                        RoleId::Manager,
                        task,
                        Rule::InvalidAction,
                        "reflection requires a reflection report".to_string(),
                        strict,
                    );
                }
                Action::Recover { recovery } => {
                    if let Some(Flow::Terminate) = self.late_recovery(task, recovery) {
                        return Ok(Flow::Terminate);
                    }
                }
                Action::NoOp => {
                    if strict {
                        self.violation(RoleId::Manager, task, Rule::Idle, "no reflection decision".to_string(), true);
                    }
                }
            }
        }
    }
}

fn merge_context(explicit: Option<Payload>, prefetched: Option<Payload>) -> Option<Payload> {
    match (prefetched, explicit) {
        (None, explicit) => explicit,
        (Some(pre), None) => Some(pre),
        (Some(mut pre), Some(explicit)) => {
            pre.extend(explicit);
            Some(pre)
        }
    }
}

fn action_name(action: &Action) -> &'static str {
    match action {
        Action::Delegate { .. } => "delegate",
        Action::UseTool { .. } => "use a tool",
        Action::Report { .. } => "report",
        Action::Recover { .. } => "recover",
        Action::Reflect { .. } => "reflect",
        Action::NoOp => "wait",
    }
}
