//! End-to-end tests against the real binary: exit codes, golden output,
//! and streaming behavior.

use std::io::{BufRead, BufReader, Read, Write};
use std::process::{Command, Output, Stdio};

use rmtl::scenarios;

fn rmtl_bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rmtl"))
}

/// Materializes a bundled scenario into a temp dir and returns the
/// (policy, trace, expected) paths.
fn scenario_files(
    dir: &tempfile::TempDir,
    name: &str,
) -> (std::path::PathBuf, std::path::PathBuf, String) {
    let s = scenarios::load_scenario(name).unwrap();
    let policy = dir.path().join("policy.rmtl");
    let trace = dir.path().join("trace.jsonl");
    std::fs::write(&policy, s.policy_text).unwrap();
    std::fs::write(&trace, s.trace_text).unwrap();
    (policy, trace, s.expected_text.to_string())
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

#[test]
fn check_and_oracle_agree_with_goldens_and_each_other() {
    for name in scenarios::scenario_names() {
        let dir = tempfile::tempdir().unwrap();
        let (policy, trace, expected) = scenario_files(&dir, name);
        let check = run(rmtl_bin().arg("check").arg(&policy).arg(&trace));
        let oracle = run(rmtl_bin().arg("oracle").arg(&policy).arg(&trace));
        let check_out = String::from_utf8(check.stdout).unwrap();
        let oracle_out = String::from_utf8(oracle.stdout).unwrap();
        assert_eq!(check_out, expected, "scenario {name} (check)");
        assert_eq!(oracle_out, expected, "scenario {name} (oracle)");
        let has_violation = expected.contains("VIOLATION");
        let want_code = i32::from(has_violation);
        assert_eq!(check.status.code(), Some(want_code), "scenario {name}");
        assert_eq!(oracle.status.code(), Some(want_code), "scenario {name}");
        // One line per world per policy.
        let worlds = scenarios::load_scenario(name)
            .unwrap()
            .trace_text
            .lines()
            .count();
        assert_eq!(check_out.lines().count(), worlds);
    }
}

#[test]
fn compile_dump_table_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, _, _) = scenario_files(&dir, "policy2-chain");
    let a = run(rmtl_bin().arg("compile").arg(&policy).arg("--dump-table"));
    let b = run(rmtl_bin().arg("compile").arg(&policy).arg("--dump-table"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.is_empty());
}

#[test]
fn unguarded_definition_exits_2_and_names_occurrence() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("bad.rmtl");
    std::fs::write(
        &policy,
        "sort app\nconst a : app\nevent call(app, app)\n\
         def loop(x:app) := call(x,x) or loop(x)\npolicy p := loop(a)\n",
    )
    .unwrap();
    let out = run(rmtl_bin().arg("compile").arg(&policy));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("unguarded recursion"), "{stderr}");
    assert!(stderr.contains("loop(x)"), "{stderr}");
}

#[test]
fn syntax_error_exits_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let policy = dir.path().join("syn.rmtl");
    std::fs::write(&policy, "sort app\npolicy p :=\n").unwrap();
    let out = run(rmtl_bin().arg("compile").arg(&policy));
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("syntax error"), "{stderr}");
}

#[test]
fn monitor_empty_stdin_is_clean() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, _, _) = scenario_files(&dir, "policy1-direct-call");
    let mut child = rmtl_bin()
        .arg("monitor")
        .arg(&policy)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    drop(child.stdin.take());
    let mut stdout = String::new();
    child
        .stdout
        .take()
        .unwrap()
        .read_to_string(&mut stdout)
        .unwrap();
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(stdout.is_empty());
}

#[test]
fn monitor_non_monotone_exits_3_with_line() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, _, _) = scenario_files(&dir, "policy1-direct-call");
    let mut child = rmtl_bin()
        .arg("monitor")
        .arg(&policy)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"{\"ts\":9,\"events\":[]}\n{\"ts\":1,\"events\":[]}\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("line 2"), "{stderr}");
}

/// Feeds events one at a time and requires each verdict line to come
/// back before the next event is sent (and before stdin closes).
#[test]
fn monitor_streams_verdicts_before_stdin_closes() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, _, _) = scenario_files(&dir, "policy1-direct-call");
    let mut child = rmtl_bin()
        .arg("monitor")
        .arg(&policy)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut stdin = child.stdin.take().unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();

    stdin
        .write_all(b"{\"ts\":0,\"events\":[{\"pred\":\"call\",\"args\":[\"b\",\"sink\"]}]}\n")
        .unwrap();
    stdin.flush().unwrap();
    assert_eq!(lines.next().unwrap().unwrap(), "1 0 policy1 ok");

    stdin
        .write_all(b"{\"ts\":7,\"events\":[{\"pred\":\"call\",\"args\":[\"a\",\"sink\"]}]}\n")
        .unwrap();
    stdin.flush().unwrap();
    assert_eq!(lines.next().unwrap().unwrap(), "2 7 policy1 VIOLATION");

    drop(stdin);
    assert_eq!(child.wait().unwrap().code(), Some(1));
}

#[test]
fn monitor_json_output() {
    let dir = tempfile::tempdir().unwrap();
    let (policy, trace, _) = scenario_files(&dir, "policy1-direct-call");
    let out = run(rmtl_bin()
        .arg("check")
        .arg(&policy)
        .arg(&trace)
        .arg("--json"));
    let first = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .next()
        .unwrap()
        .to_string();
    let v: serde_json::Value = serde_json::from_str(&first).unwrap();
    assert_eq!(v["world"], 1);
    assert_eq!(v["policy"], "policy1");
    assert_eq!(v["violated"], false);
}

#[test]
fn fuzz_is_deterministic_per_seed() {
    let a = run(rmtl_bin().args(["fuzz", "--trials", "60", "--seed", "42"]));
    let b = run(rmtl_bin().args(["fuzz", "--trials", "60", "--seed", "42"]));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn bench_reports_identical_state_cells_across_lengths() {
    let out = run(rmtl_bin().args([
        "bench",
        "--policy",
        "policy2-chain",
        "--lengths",
        "300",
        "600",
        "--seed",
        "7",
    ]));
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let cells: Vec<&str> = rows
        .iter()
        .map(|r| r.split_whitespace().last().unwrap())
        .collect();
    assert_eq!(cells[0], cells[1]);
}
