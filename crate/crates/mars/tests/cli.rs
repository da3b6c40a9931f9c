mod common;

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::thread;

use mars::commands::{checks_path, trace_path};
use mars::jsonl::{parse_trace, read_checks, read_trace};
use mars::{
    cmd_ablate, cmd_ablate_checks, cmd_dump_kb, cmd_run, cmd_score, fixtures, load_config, parse_config, CliError,
    DumpFormat, Overrides, TraceError,
};
use mars_core::domain::{Condition, Enforcement, TaskId};
use mars_core::evaluator::fixed;
use mars_core::policies::FailureMode;
use mars_core::world::Scenarios;
use num_rational::Ratio;
use serde_json::Value;

fn into(out: &Path) -> Overrides {
    Overrides { output: Some(out.to_path_buf()), ..Overrides::default() }
}

fn rates(outcome: &mars::Outcome) -> Vec<String> {
    outcome.report.runs.iter().map(|r| r.summary().expect("run completed").rate_display()).collect()
}

fn mars_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mars"))
}

#[test]
fn compliant_config_scores_every_seed_in_full() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let outcome = cmd_run(&common::config(fx.path(), "compliant.toml", into(out.path()))).unwrap();
    assert_eq!(rates(&outcome), vec!["100.00"; 5]);
    for id in &outcome.ids {
        assert!(trace_path(out.path(), id).is_file());
        assert!(checks_path(out.path(), id).is_file());
    }
    let csv = fs::read_to_string(out.path().join("reports/rates.csv")).unwrap();
    assert!(csv.lines().any(|l| l.starts_with("with_kb,mean,,100.00,17.0000")), "{csv}");
}

#[test]
fn printed_means_equal_an_independent_sum_of_the_check_files() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let outcome = cmd_ablate(&common::config(fx.path(), "observed-faults.toml", into(out.path())), None).unwrap();
    for condition in Condition::BOTH {
        let rates: Vec<Ratio<u64>> = outcome
            .ids
            .iter()
            .filter(|id| id.starts_with(&format!("{}-", condition.name())))
            .map(|id| {
                let text = fs::read_to_string(checks_path(out.path(), id)).unwrap();
                Ratio::new(common::oracle_half_units(&text) * 100, 34)
            })
            .collect();
        assert_eq!(rates.len(), 5);
        let mean = rates.iter().sum::<Ratio<u64>>() / Ratio::from_integer(rates.len() as u64);
        let line = format!("{condition} mean rate {}% over 5 runs", fixed(mean, 2));
        assert!(outcome.lines.contains(&line), "{line} not in {:?}", outcome.lines);
    }
}

#[test]
fn with_kb_condition_requires_a_kb_file() {
    let text = "condition = \"with_kb\"\nseeds = [1]\n\n[policies.manager]\nkind = \"compliant\"\n\
[policies.navigating_robot]\nkind = \"compliant\"\n[policies.info_collection_robot]\nkind = \"compliant\"\n\
[policies.info_display_robot]\nkind = \"compliant\"\n";
    let err = parse_config(text, Path::new("."), &Overrides::default()).unwrap_err();
    assert_eq!(err.field, "kb");
    let baseline = text.replace("with_kb", "baseline");
    let cfg = parse_config(&baseline, Path::new("."), &Overrides::default()).unwrap();
    assert_eq!(cmd_ablate(&cfg, None).unwrap_err().to_string(), "config kb: required when the with_kb condition runs");
}

#[test]
fn missing_role_binding_and_empty_seeds_are_rejected() {
    let text = "seeds = [1]\n[policies.manager]\nkind = \"compliant\"\n";
    let err = parse_config(text, Path::new("."), &Overrides::default()).unwrap_err();
    assert!(err.field.starts_with("policies."), "{err}");
    let empty =
        "seeds = []\n[policies.manager]\nkind = \"compliant\"\n[policies.navigating_robot]\nkind = \"compliant\"\n\
[policies.info_collection_robot]\nkind = \"compliant\"\n[policies.info_display_robot]\nkind = \"compliant\"\n";
    assert_eq!(parse_config(empty, Path::new("."), &Overrides::default()).unwrap_err().field, "seeds");
}

#[test]
fn scoring_written_traces_reproduces_the_run() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let run = cmd_run(&common::config(fx.path(), "observed-faults.toml", into(out.path()))).unwrap();
    let traces: Vec<PathBuf> = run.ids.iter().map(|id| trace_path(out.path(), id)).collect();
    let rescored = tempfile::tempdir().unwrap();
    let score = cmd_score(&traces, rescored.path()).unwrap();
    assert_eq!(rates(&score), rates(&run));
    for id in &run.ids {
        let a = fs::read(checks_path(out.path(), id)).unwrap();
        let b = fs::read(checks_path(rescored.path(), id)).unwrap();
        assert_eq!(a, b, "{id}");
    }
}

#[test]
fn score_accepts_coded_check_files() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let outcome = cmd_score(&[fx.path().join("reference/checks/baseline-run1.jsonl")], out.path()).unwrap();
    assert_eq!(rates(&outcome), vec!["55.88"]);
}

#[test]
fn truncated_and_future_traces_are_refused() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let run = cmd_run(&common::config(fx.path(), "compliant.toml", into(out.path()))).unwrap();
    let text = fs::read_to_string(trace_path(out.path(), &run.ids[0])).unwrap();
    assert!(parse_trace(&text, "t").unwrap().abort.is_none());

    let truncated: String = text.lines().take(text.lines().count() - 1).map(|l| format!("{l}\n")).collect();
    let path = out.path().join("truncated.jsonl");
    fs::write(&path, truncated).unwrap();
    match cmd_score(&[path], out.path()) {
        Err(CliError::Trace(TraceError::Incomplete { .. })) => {}
        other => panic!("expected an incomplete trace, got {other:?}"),
    }

    let bumped = text.replacen("\"version\":1", "\"version\":2", 1);
    let path = out.path().join("bumped.jsonl");
    fs::write(&path, bumped).unwrap();
    match cmd_score(&[path], out.path()) {
        Err(CliError::Trace(TraceError::Version { version: 2, .. })) => {}
        other => panic!("expected a version error, got {other:?}"),
    }
}

#[test]
fn compliant_ablation_has_zero_delta() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    cmd_ablate(&common::config(fx.path(), "compliant.toml", into(out.path())), Some(3)).unwrap();
    let csv = fs::read_to_string(out.path().join("reports/metrics.csv")).unwrap();
    let mut rows = csv.lines();
    assert_eq!(rows.next(), Some("metric,baseline,with_kb,delta"));
    let rows: Vec<&str> = rows.collect();
    assert_eq!(rows.len(), 8);
    for row in rows {
        let delta = row.rsplit(',').next().unwrap();
        assert!(delta == "+0.0000" || delta == "+0.00", "{row}");
    }
}

#[test]
fn reference_check_fixtures_reproduce_the_published_means() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let paths: Vec<PathBuf> = fixtures::reference_checks().map(|(p, _)| fx.path().join(p)).collect();
    let outcome = cmd_ablate_checks(&paths, out.path()).unwrap();
    assert!(outcome.lines.contains(&"baseline mean rate 45.29% over 5 runs".to_string()));
    assert!(outcome.lines.contains(&"with_kb mean rate 72.94% over 5 runs".to_string()));
    let csv = fs::read_to_string(out.path().join("reports/metrics.csv")).unwrap();
    assert!(csv.contains("Delegation Accuracy,0.3333,0.7333,+0.4000"), "{csv}");
    assert!(csv.contains("Success Rate (%),45.29,72.94,+27.65"), "{csv}");
}

fn footer_modes(path: &Path) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    let end: Value = serde_json::from_str(text.lines().last().unwrap()).unwrap();
    end["end"]["failure_modes"].as_array().unwrap().iter().map(|m| m.as_str().unwrap().to_string()).collect()
}

#[test]
fn strict_enforcement_blocks_tool_access_violations() {
    let fx = common::installed();
    let mut counts = Vec::new();
    for enforcement in [Enforcement::Strict, Enforcement::Permissive] {
        let out = tempfile::tempdir().unwrap();
        let overrides = Overrides { enforcement: Some(enforcement), ..into(out.path()) };
        let outcome = cmd_run(&common::config(fx.path(), "tool-access.toml", overrides)).unwrap();
        let tav = FailureMode::ToolAccessViolation.name();
        counts.push(
            outcome.ids.iter().filter(|id| footer_modes(&checks_path(out.path(), id)).iter().any(|m| m == tav)).count(),
        );
    }
    assert_eq!(counts[0], 0);
    assert!(counts[1] > 0);
}

#[test]
fn aborted_replay_exits_nonzero_and_keeps_the_partial_trace() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("short.txt"), "ACTION: DELEGATE; task=navigate_HCW; target=navigating_robot\n").unwrap();
    let config = "seeds = [3]\noutput = \"out\"\nenforcement = \"permissive\"\n\
[policies.manager]\nkind = \"replay\"\npath = \"short.txt\"\n\
[policies.navigating_robot]\nkind = \"compliant\"\n[policies.info_collection_robot]\nkind = \"compliant\"\n\
[policies.info_display_robot]\nkind = \"compliant\"\n";
    fs::write(dir.path().join("short.toml"), config).unwrap();
    let status = mars_bin()
        .arg("run")
        .arg("--config")
        .arg(dir.path().join("short.toml"))
        .env_remove("MARS_OUTPUT")
        .env_remove("MARS_SEEDS")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("baseline-seed0003  aborted:"), "{stdout}");
    let trace = read_trace(&trace_path(&dir.path().join("out"), "baseline-seed0003")).unwrap();
    assert!(trace.abort.is_some());
    assert!(!trace.trace.events.is_empty());
    assert!(!checks_path(&dir.path().join("out"), "baseline-seed0003").exists());
}

#[test]
fn flags_override_environment() {
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let run = |extra: &[&str]| {
        mars_bin()
            .args(["run", "--config"])
            .arg(fx.path().join("configs/tool-access.toml"))
            .arg("--output")
            .arg(out.path())
            .args(extra)
            .env("MARS_ENFORCEMENT", "strict")
            .env("MARS_SEEDS", "1,2")
            .output()
            .unwrap()
    };
    let env_only = String::from_utf8(run(&[]).stdout).unwrap();
    assert_eq!(env_only.lines().filter(|l| l.contains("-seed")).count(), 2);
    assert!(!env_only.contains("TAV"), "{env_only}");
    let flagged = String::from_utf8(run(&["--enforcement", "permissive", "--seeds", "7"]).stdout).unwrap();
    assert!(flagged.contains("-seed0007") && flagged.contains("TAV"), "{flagged}");
}

#[test]
fn dump_kb_lists_grants_and_workflow() {
    let fx = common::installed();
    let text = cmd_dump_kb(Some(&fx.path().join("knowledge_base.md")), DumpFormat::Text).unwrap();
    assert!(text.contains("navigating_robot"));
    assert_eq!(text, cmd_dump_kb(None, DumpFormat::Text).unwrap());
    let json: Value = serde_json::from_str(&cmd_dump_kb(None, DumpFormat::Json).unwrap()).unwrap();
    assert_eq!(json["grants"].as_array().unwrap().len(), 3);
    assert_eq!(json["edges"].as_array().unwrap().len(), TaskId::WORKFLOW.len());
    let cli = mars_bin().args(["dump-kb", "--format", "json"]).env_remove("MARS_KB").output().unwrap();
    assert!(cli.status.success());
    assert_eq!(serde_json::from_slice::<Value>(&cli.stdout).unwrap(), json);
}

#[test]
fn installed_fixtures_match_the_bundle_and_load() {
    let fx = common::installed();
    for (rel, text) in fixtures::all() {
        assert_eq!(fs::read_to_string(fx.path().join(&rel)).unwrap(), text, "{rel}");
    }
    let overrides = Overrides {
        llm_endpoint: Some("http://127.0.0.1:9/v1/chat/completions".into()),
        llm_model: Some("test-model".into()),
        ..Overrides::default()
    };
    for entry in fs::read_dir(fx.path().join("configs")).unwrap() {
        let path = entry.unwrap().path();
        load_config(&path, &overrides).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    }
    let bin = mars_bin().arg("fixtures").arg("--output").arg(fx.path().join("again")).output().unwrap();
    assert!(bin.status.success());
    assert_eq!(common::tree(&fx.path().join("again")).len(), fixtures::all().len());
}

#[test]
fn scenario_files_round_trip_their_members() {
    let fx = common::installed();
    let text = fs::read_to_string(fx.path().join("scenarios/display.toml")).unwrap();
    let raw: toml::Value = toml::from_str(&text).unwrap();
    let members = raw.get("member").and_then(|m| m.as_array()).map(Vec::len).unwrap_or(0);
    assert_eq!(members, Scenarios::stock().display.members.len());
    assert!(members > 0);
    let cfg = common::config(fx.path(), "compliant.toml", Overrides::default());
    assert_eq!(cfg.scenarios, Scenarios::stock());
}

/// Answers chat-completion requests like a protocol-following manager.
fn scripted_reply(user: &str) -> String {
    let line = |prefix: &str| user.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim).unwrap_or_default();
    let task: TaskId = line("TASK:").parse().expect("prompt names the task");
    match (line("TURN:"), task) {
        ("recovery", _) => "ACTION: RECOVER; alternative=assign HCW #90".to_string(),
        ("dispatch", TaskId::Reflection) => "ACTION: REFLECT; task_outcomes=navigate_HCW failed and was recovered, \
collect_info and display_info succeeded; recovery_attempts=assigned HCW #90; lessons_learned=reassign early"
            .to_string(),
        (_, task) => format!("ACTION: DELEGATE; task={task}; target={}", task.correct_assignee()),
    }
}

fn serve(listener: TcpListener, requests: Arc<AtomicU64>) {
    for stream in listener.incoming() {
        let mut stream = stream.unwrap();
        let mut reader = BufReader::new(stream.try_clone().unwrap());
        let mut length = 0;
        loop {
            let mut header = String::new();
            reader.read_line(&mut header).unwrap();
            if header.trim().is_empty() {
                break;
            }
            if let Some((name, value)) = header.split_once(':') {
                if name.eq_ignore_ascii_case("content-length") {
                    length = value.trim().parse().unwrap();
                }
            }
        }
        let mut body = vec![0; length];
        reader.read_exact(&mut body).unwrap();
        let request: Value = serde_json::from_slice(&body).unwrap();
        let user = request["messages"][1]["content"].as_str().unwrap();
        requests.fetch_add(1, Ordering::SeqCst);
        let reply = serde_json::json!({
            "choices": [{ "message": { "role": "assistant", "content": scripted_reply(user) } }],
            "usage": { "prompt_tokens": 100, "completion_tokens": 10 },
        })
        .to_string();
        let response = format!(
            "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{reply}",
            reply.len()
        );
        stream.write_all(response.as_bytes()).unwrap();
    }
}

#[test]
fn http_backend_drives_a_full_episode() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let endpoint = format!("http://{}/v1/chat/completions", listener.local_addr().unwrap());
    let requests = Arc::new(AtomicU64::new(0));
    let counter = requests.clone();
    thread::spawn(move || serve(listener, counter));

    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let overrides =
        Overrides { llm_endpoint: Some(endpoint), llm_model: Some("test-model".into()), ..into(out.path()) };
    let outcome = cmd_run(&common::config(fx.path(), "llm.toml", overrides)).unwrap();
    assert_eq!(rates(&outcome), vec!["100.00"]);
    let usage = outcome.report.runs[0].token_usage.expect("usage recorded");
    let calls = requests.load(Ordering::SeqCst);
    assert!(calls >= 5);
    assert_eq!((usage.prompt_tokens, usage.completion_tokens), (100 * calls, 10 * calls));
    let checks = read_checks(&checks_path(out.path(), &outcome.ids[0])).unwrap();
    assert_eq!(checks.summary.rate_display(), "100.00");
}

#[test]
fn unreachable_backend_aborts_the_run() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let fx = common::installed();
    let out = tempfile::tempdir().unwrap();
    let overrides = Overrides {
        llm_endpoint: Some(format!("http://127.0.0.1:{port}/v1/chat/completions")),
        llm_model: Some("test-model".into()),
        ..into(out.path())
    };
    let outcome = cmd_run(&common::config(fx.path(), "llm.toml", overrides)).unwrap();
    assert_eq!(outcome.aborted(), 1);
    assert!(read_trace(&trace_path(out.path(), &outcome.ids[0])).unwrap().abort.is_some());
}
