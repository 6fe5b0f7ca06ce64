use std::path::Path;
use std::process::{Command, Output};

fn bddmp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bddmp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run bddmp")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const SIMPLEX: &str = "Minimize\n obj: x1 + 2 x3 + 3 x7\nSubject To\n s: x1 + x3 + x7 = 1\nBinary\n x1 x3 x7\nEnd\n";

#[test]
fn solves_simplex() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.lp", SIMPLEX);
    let out = bddmp(&["solve", "-i", "s.lp", "--trace", "t.jsonl"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["lower_bound"], 1.0);
    assert_eq!(report["upper_bound"], 1.0);
    assert_eq!(report["solution"]["x1"], 1);
    assert_eq!(report["termination"], "solved");
    let trace = std::fs::read_to_string(dir.path().join("t.jsonl")).unwrap();
    let mut last = f64::NEG_INFINITY;
    for line in trace.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let lb = v["lb"].as_f64().unwrap();
        assert!(lb >= last);
        last = lb;
        assert!(v["direction"] == "fw" || v["direction"] == "bw");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "bad.lp",
        "Minimize\n x1 + x2\nSubject To\n a: x1 + x2 >= 1\n b: x1 + x2 <= 0\nBinary\n x1 x2\nEnd\n",
    );
    assert_eq!(bddmp(&["solve", "-i", "bad.lp"], dir.path()).status.code(), Some(2));

    write(dir.path(), "broken.lp", "Minimize\n x +\nEnd\n");
    let out = bddmp(&["solve", "-i", "broken.lp"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("broken.lp:"));

    assert_eq!(bddmp(&["solve", "-i", "missing.lp"], dir.path()).status.code(), Some(1));
    assert_eq!(bddmp(&["solve", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(
        bddmp(&["solve", "-i", "bad.lp", "--tol", "0"], dir.path()).status.code(),
        Some(1)
    );

    write(dir.path(), "s.lp", SIMPLEX);
    let out = bddmp(&["solve", "-i", "s.lp", "--max-passes", "0"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["passes"], 0);
    assert_eq!(report["lower_bound"], 1.0);
}

#[test]
fn node_budget_exhaustion_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let gen = bddmp(
        &["generate", "mrf", "--rows", "3", "--cols", "3", "--labels", "3", "--seed", "2", "-o", "g.lp"],
        dir.path(),
    );
    assert!(gen.status.success());
    let out = bddmp(&["solve", "-i", "g.lp", "--node-budget", "0"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["upper_bound"].is_null());
    assert_eq!(report["termination"], "no_primal");
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.lp", "b.lp"] {
        let out = bddmp(
            &["generate", "mrf", "--nodes", "3", "--labels", "2", "--seed", "0", "-o", name],
            dir.path(),
        );
        assert!(out.status.success());
    }
    let a = std::fs::read(dir.path().join("a.lp")).unwrap();
    assert_eq!(a, std::fs::read(dir.path().join("b.lp")).unwrap());
    let inst = bddmp::model::parse_lp(std::str::from_utf8(&a).unwrap()).unwrap();
    assert_eq!(inst.num_vars(), 14);

    let out = bddmp(&["generate", "random_ilp", "--vars", "6", "--cons", "3", "--seed", "1"], dir.path());
    let inst = bddmp::model::parse_lp(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
    assert_eq!(inst.num_vars(), 6);

    let out = bddmp(&["generate", "graph_matching", "--density", "2"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dump_bdd_writes_dot_to_stderr() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "s.lp", SIMPLEX);
    let out = bddmp(&["solve", "-i", "s.lp", "--dump-bdd", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("digraph"));
    let out = bddmp(&["solve", "-i", "s.lp", "--dump-bdd", "nope"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
