use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn resilchk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_resilchk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .map(|l| serde_json::from_str(l).expect("each stdout line is a JSON report"))
        .collect()
}

fn generate(dir: &Path, file: &str, args: &[&str]) -> String {
    let path = dir.join(file).to_string_lossy().into_owned();
    let mut full = vec!["gen"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["-o", &path]);
    assert_eq!(resilchk(&full).status.code(), Some(0));
    path
}

#[test]
fn replicated_server_is_resilient_to_one_crash() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.rck", &["repserver", "--clients", "2", "--replicas", "2", "--maxfail", "1"]);
    let out = resilchk(&["resilience", &m, "--core", "OTP", "--context", "Crep", "--adversary", "FS", "--engine", "explicit"]);
    assert_eq!(out.status.code(), Some(0));
    let reports = lines(&out);
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["verdict"], "pass");
    assert_eq!(reports[0]["engine"], "explicit");
}

#[test]
fn too_many_crashes_fail_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.rck", &["repserver", "--replicas", "2", "--maxfail", "2"]);
    let out = resilchk(&[
        "resilience", &m, "--core", "OTP", "--context", "Crep", "--env", "Clients", "--reference", "Sys2",
        "--adversary", "FS",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(lines(&out)[0]["verdict"], "fail");
}

#[test]
fn a_system_is_bisimilar_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.rck", &["repserver"]);
    let out = resilchk(&["bisim", &m, "--left", "Sys3", "--right", "Sys3", "--left-adversary", "FS"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["holds"], true);
}

#[test]
fn distinguishing_evidence_replays() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.rck", &["repserver"]);
    let out = resilchk(&["bisim", &m, "--left", "Sys2", "--left-adversary", "FS", "--right", "Sys2"]);
    assert_eq!(out.status.code(), Some(1));
    let r = &lines(&out)[0];
    assert_eq!(r["evidence"]["replayed"], true);
    assert!(r["evidence"]["distinguished"]["left_trace"].is_array());
}

#[test]
fn broken_model_reports_position_and_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.rck");
    std::fs::write(&path, "domain {v}\nchannel a\nsystem S = a!v |\n").unwrap();
    let out = resilchk(&["parse", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("4:1"), "{err}");
}

#[test]
fn usage_errors_exit_three() {
    assert_eq!(resilchk(&["frobnicate"]).status.code(), Some(3));
    assert_eq!(resilchk(&["bisim"]).status.code(), Some(3));
    assert_eq!(resilchk(&["--help"]).status.code(), Some(0));
}

#[test]
fn declared_sidechannel_checks_all_pass() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "s.rck", &["sidechannel", "--n", "2", "--n1", "4"]);
    let out = resilchk(&["check", &m]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let reports = lines(&out);
    assert!(reports.len() >= 5);
    for r in &reports {
        assert_eq!(r["verdict"], "pass", "{r}");
        if r["holds"] == false {
            assert_eq!(r["evidence"]["replayed"], true, "{r}");
        }
    }
}

#[test]
fn budget_exhaustion_is_inconclusive() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "m.rck", &["repserver"]);
    let out = resilchk(&["--cap", "2", "bisim", &m, "--left", "Sys3", "--right", "Sys2"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(lines(&out)[0]["verdict"], "inconclusive");
}

#[test]
fn reports_are_reproducible_and_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "s.rck", &["sidechannel"]);
    let a = resilchk(&["--seed", "7", "check", &m]);
    let b = resilchk(&["--seed", "7", "check", &m]);
    assert_eq!(a.stdout, b.stdout);
    for line in String::from_utf8_lossy(&a.stdout).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        let again: Value = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(again, v);
        for key in ["check", "verdict", "stats"] {
            assert!(v.get(key).is_some(), "{key} missing in {line}");
        }
    }
}

#[test]
fn transmission_coverability_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate(dir.path(), "t.rck", &["transmission", "--k", "2", "--p-max", "2"]);
    let stale = resilchk(&["cover", &m, "--instance", "transmission", "--target", "err", "--client", "persistent"]);
    let r = &lines(&stale)[0];
    assert_eq!(r["holds"], true);
    assert_eq!(r["evidence"]["replayed"], true);
    let fifo = resilchk(&[
        "cover", &m, "--instance", "transmission", "--target", "err", "--client", "persistent", "--channel", "fifo",
    ]);
    assert_eq!(lines(&fifo)[0]["holds"], false);
}

#[test]
fn selftest_agrees_with_oracles() {
    let out = resilchk(&["--seed", "3", "selftest", "--systems", "40", "--samples", "200"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(lines(&out).len(), 2);
}
