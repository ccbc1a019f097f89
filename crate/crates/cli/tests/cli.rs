use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stagebound"))
}

fn protocol(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "protocols", &format!("{name}.pp")]
        .iter()
        .collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> (i32, String, String) {
    let Output { status, stdout, stderr } = bin().args(args).output().unwrap();
    (
        status.code().unwrap(),
        String::from_utf8(stdout).unwrap(),
        String::from_utf8(stderr).unwrap(),
    )
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stagebound-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn analyze_reports_bound_and_exit_status() {
    let (code, out, _) = run(&["analyze", &protocol("majority_ex2")]);
    assert_eq!(code, 0);
    assert!(out.contains("bound: O(n^2·log n); stages: 13; certified"), "{out}");
    assert!(out.contains("note: parallel time O(n·log n)"), "{out}");
    let (code, out, _) = run(&["analyze", &protocol("majority_ex1")]);
    assert_eq!(code, 0);
    assert!(out.contains("bound: exp(n); stages: 11; certified"), "{out}");
    let (code, out, _) = run(&["analyze", &protocol("flock_sum_c5")]);
    assert_eq!(code, 0);
    assert!(out.contains("bound: O(n^3); stages: 26"), "{out}");
}

#[test]
fn analyze_flags_uncertified_and_limits() {
    let (code, out, _) = run(&["analyze", &protocol("remainder_m3")]);
    assert_eq!(code, 2, "{out}");
    assert!(out.contains("dead-terminal-present"));
    let (code, out, _) = run(&["analyze", &protocol("flock_levels_c7"), "--max-stages", "10"]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("stage limit exceeded"));
    let (code, _, _) = run(&["analyze", &protocol("flock_levels_c7"), "--max-stages", "0"]);
    assert_ne!(code, 0);
}

#[test]
fn parse_errors_exit_one_with_location() {
    let path = tmp("bad.pp");
    std::fs::write(&path, "states: A B\ninputs: x -> A\noutput1: B\ntransitions:\n  A C -> B B\n").unwrap();
    let (code, _, err) = run(&["analyze", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("line 5"), "{err}");
    let (code, _, _) = run(&["analyze", "no-such-protocol"]);
    assert_eq!(code, 1);
}

#[test]
fn dot_and_json_are_written_deterministically() {
    let (d1, d2, j1, j2) = (tmp("a.dot"), tmp("b.dot"), tmp("a.json"), tmp("b.json"));
    for (d, j) in [(&d1, &j1), (&d2, &j2)] {
        let (code, _, _) = run(&[
            "analyze",
            &protocol("avc_m3_d1"),
            "--dot",
            d.to_str().unwrap(),
            "--json",
            j.to_str().unwrap(),
        ]);
        assert_eq!(code, 2);
    }
    assert_eq!(std::fs::read(&d1).unwrap(), std::fs::read(&d2).unwrap());
    assert_eq!(std::fs::read(&j1).unwrap(), std::fs::read(&j2).unwrap());
    let dot = std::fs::read_to_string(&d1).unwrap();
    assert_eq!(dot.matches(" -> s").count(), 40);
}

#[test]
fn simulate_three_agents() {
    let args = [
        "simulate",
        &protocol("majority_ex2"),
        "--config",
        "A=2,B=1",
        "--trials",
        "1000",
        "--seed",
        "7",
    ];
    let (code, out, _) = run(&args);
    assert_eq!(code, 0);
    assert!(out.contains("output 0: 1000/1000"), "{out}");
    assert_eq!(run(&args).1, out);
}

#[test]
fn simulate_zero_trials_prints_header_only() {
    let csv = tmp("zero.csv");
    let (code, out, _) = run(&[
        "simulate",
        &protocol("majority_ex2"),
        "--config",
        "A=2,B=1",
        "--trials",
        "0",
        "--csv",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 3, "{out}");
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), "n,value,stderr\n");
}

#[test]
fn simulate_rejects_bad_configs() {
    for spec in ["Z=3", "A=1", "A=x"] {
        let (code, _, err) = run(&["simulate", &protocol("majority_ex2"), "--config", spec]);
        assert_eq!(code, 1, "{spec}: {err}");
    }
}

#[test]
fn check_reports_zero_violations() {
    let (code, out, _) = run(&["check", &protocol("majority_ex2"), "--max-n", "6"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "0 violations (sizes 2..6)");
    let (code, out, _) = run(&["check", &protocol("majority_ex2"), "--max-n", "1"]);
    assert_eq!(code, 0);
    assert_eq!(out.trim(), "0 violations (vacuous)");
}

#[test]
fn check_catches_a_corrupted_tree() {
    let json = tmp("tree.json");
    run(&["analyze", &protocol("majority_ex2"), "--json", json.to_str().unwrap()]);
    let (code, out, _) = run(&["check", &protocol("majority_ex2"), "--tree", json.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    doc["stages"][1]["phi"] = serde_json::Value::String("False".into());
    let bad = tmp("bad-tree.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let (code, out, _) = run(&["check", &protocol("majority_ex2"), "--tree", bad.to_str().unwrap(), "--max-n", "4"]);
    assert_ne!(code, 0);
    assert!(out.contains("stage 0: (b)"), "{out}");
}

#[test]
fn check_node_cap_gives_partial_report() {
    let (code, out, _) = run(&["check", &protocol("remainder_m5"), "--max-n", "6", "--node-cap", "50"]);
    assert_eq!(code, 3, "{out}");
    assert!(out.contains("node cap"), "{out}");
}

#[test]
fn bench_rows_and_diff() {
    let (code, out, err) = run(&["bench", "--diff", "--only", "remainder_m3", "--only", "avc_m3_d1", "--only", "threshold_2v_lt0"]);
    assert_eq!(code, 0, "{err}");
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("remainder_m3,") && rows[1].contains(",5,12,27,n^2 log n,"));
    assert!(rows[2].starts_with("avc_m3_d1,") && rows[2].contains(",6,21,41,n^2 log n,"));
    assert!(rows[3].starts_with("threshold_2v_lt0,") && rows[3].contains(",12,57,21,n^3,"));
    assert!(err.contains("3 of 3 rows match"));
}

#[test]
fn bench_timeouts_are_rows() {
    let (code, out, err) = run(&["bench", "--diff", "--only", "flock_levels_c7", "--max-stages", "5"]);
    assert_eq!(code, 2, "{err}");
    assert!(out.lines().nth(1).unwrap().contains(",T/O,"), "{out}");
}

#[test]
fn thread_variable_is_validated() {
    let out = bin().args(["analyze", &protocol("broadcast")]).env("STAGEBOUND_THREADS", "0").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["analyze", &protocol("broadcast")]).env("STAGEBOUND_THREADS", "2").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn shipped_protocol_files_match_the_builders() {
    let all = stagebound::corpus::benchmarks()
        .into_iter()
        .chain(stagebound::corpus::extended_benchmarks());
    for b in all {
        let text = std::fs::read_to_string(protocol(b.name)).unwrap();
        let parsed = stagebound::parse_protocol(&text).unwrap();
        assert_eq!(parsed, (b.build)(), "{}", b.name);
    }
}
