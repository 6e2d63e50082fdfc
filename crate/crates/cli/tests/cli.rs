use std::path::Path;
use std::process::{Command, Output};

fn ctspav(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctspav")).current_dir(dir).args(args).env("CTSPAV_BACKEND", "highs").output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = ctspav(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn generate_solve_validate_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--seed", "4", "--n", "5", "--inner-radius", "2000", "--outer-radius", "6000", "-o", "i.json"]);
    ok(d, &["solve", "i.json", "--budget", "60", "-o", "p.json", "--trace", "t.jsonl"]);
    assert!(ok(d, &["validate", "i.json", "p.json"]).starts_with("ok"));

    let plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("p.json")).unwrap()).unwrap();
    assert_eq!(plan["procedure"], "ctspav");
    assert_eq!(plan["trace"], "t.jsonl");
    assert!(plan["metrics"]["occupancy_fractions"].is_array());
    let trace = std::fs::read_to_string(d.join("t.jsonl")).unwrap();
    assert!(trace.lines().all(|l| serde_json::from_str::<serde_json::Value>(l).is_ok()));

    std::fs::write(d.join("c.toml"), "procedure = \"darp\"\nobjective = \"dist\"\nbudget = 60.0\n").unwrap();
    ok(d, &["solve", "i.json", "--config", "c.toml", "-o", "d.json"]);
    let darp: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("d.json")).unwrap()).unwrap();
    assert_eq!(darp["procedure"], "darp");
    assert_eq!(darp["objective"], "dist");

    let csv = ok(d, &["report", "p.json", "d.json", "--years", "2", "--long", "long.csv"]);
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("plan,instance,n,procedure"));
    let long = std::fs::read_to_string(d.join("long.csv")).unwrap();
    assert!(long.lines().any(|l| l.starts_with("p.json,ctspav,lex,vehicle_count,")));
}

#[test]
fn tampered_plan_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--seed", "2", "--n", "3", "-o", "i.json"]);
    ok(d, &["solve", "i.json", "--budget", "60", "-o", "p.json"]);
    let mut plan: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("p.json")).unwrap()).unwrap();
    let first = plan["routes"][0]["nodes"].as_array_mut().unwrap();
    first.swap(0, 1);
    std::fs::write(d.join("bad.json"), plan.to_string()).unwrap();
    let out = ctspav(d, &["validate", "i.json", "bad.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("invalid"));
}

#[test]
fn clustered_solve_writes_one_plan_per_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--seed", "9", "--n", "7", "-o", "i.json"]);
    ok(d, &["solve", "i.json", "--cluster-size", "3", "--depot", "local", "--budget", "30", "-o", "out"]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("out/clusters.json")).unwrap()).unwrap();
    let clusters = summary.as_array().unwrap();
    assert!(clusters.len() >= 3);
    let mut n = 0;
    for c in clusters {
        n += c["n"].as_u64().unwrap();
        let inst = format!("out/{}", c["instance"].as_str().unwrap());
        let plan = format!("out/{}", c["plan"].as_str().unwrap());
        ok(d, &["validate", &inst, &plan]);
    }
    assert_eq!(n, 7);
}

#[test]
fn sweep_marks_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--seed", "5", "--n", "4", "--inner-radius", "2000", "--outer-radius", "6000", "-o", "i.json"]);
    let csv = ok(d, &["sweep", "i.json", "--param", "detour", "--values", "0.25,0.5,0.75", "--budget", "30"]);
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.starts_with("detour,") && r.contains(",ok,")));
}

#[test]
fn bad_arguments_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(d, &["generate", "--n", "2", "-o", "i.json"]);
    let out = ctspav(d, &["solve", "i.json", "--procedure", "tsp"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown procedure"));
    let out = ctspav(d, &["solve", "missing.json"]);
    assert!(!out.status.success());
}
