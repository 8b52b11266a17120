mod common;

use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn cslow(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cslow"))
        .args(args)
        .current_dir(dir)
        .env_remove("CSLOW_SEED")
        .output()
        .unwrap()
}

fn fx(name: &str) -> String {
    common::fixture_dir().join(format!("{name}.v")).display().to_string()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn counter_depth_is_the_adder() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["report-timing", &fx("counter")], t.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout_json(&o)["t_2ild"], 8);
}

#[test]
fn out_of_subset_is_a_user_error_with_location() {
    let t = tempfile::tempdir().unwrap();
    let f = t.path().join("bad.v");
    std::fs::write(&f, "module bad(input clk, output reg q);\n  initial q = 0;\nendmodule\n").unwrap();
    let o = cslow(&["report-timing", f.to_str().unwrap()], t.path());
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.v:2:"), "{err}");
}

#[test]
fn dump_graph_writes_schema() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["report-timing", &fx("alu"), "--dump-graph", "g.json"], t.path());
    assert_eq!(o.status.code(), Some(0));
    let g: Value = serde_json::from_str(&std::fs::read_to_string(t.path().join("g.json")).unwrap()).unwrap();
    assert_eq!(g["schema"], "cslow.graph/1");
    assert!(g["comb_nodes"].as_array().unwrap().iter().all(|n| n["weight"].is_u64()));
}

#[test]
fn csr_writes_reparsable_artifacts() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["csr", &fx("counter"), "--cmf", "2", "--out-dir", "out"], t.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v = std::fs::read_to_string(t.path().join("out/counter_csr2.v")).unwrap();
    let u = cslow::frontend::parse_source(&v).unwrap();
    assert!(cslow::frontend::subset_check(&u).is_empty());
    let s: Value =
        serde_json::from_str(&std::fs::read_to_string(t.path().join("out/counter_csr2.schedule.json")).unwrap()).unwrap();
    assert_eq!(s["schema"], "cslow.schedule/1");
    assert_eq!(s["outputs"][0]["slot"], 0);
    assert_eq!(s["outputs"][0]["delay_cycles"], 1);
    assert!(t.path().join("out/counter_csr2.cut.json").exists());
}

#[test]
fn csr_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let a = cslow(&["csr", &fx("mac"), "--cmf", "3", "--out-dir", "a"], t.path());
    let b = cslow(&["csr", &fx("mac"), "--cmf", "3", "--out-dir", "b"], t.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let ra = std::fs::read(t.path().join("a/mac_csr3.v")).unwrap();
    let rb = std::fs::read(t.path().join("b/mac_csr3.v")).unwrap();
    assert_eq!(ra, rb);
}

#[test]
fn cmf_one_is_the_pretty_printed_original() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["csr", &fx("fsm"), "--cmf", "1"], t.path());
    assert_eq!(o.status.code(), Some(0));
    let v = std::fs::read_to_string(t.path().join("fsm_csr1.v")).unwrap();
    let orig = cslow::frontend::parse_source(&common::fixture("fsm")).unwrap();
    assert_eq!(v, cslow::frontend::pretty_print(&orig));
    let s: Value = serde_json::from_str(&std::fs::read_to_string(t.path().join("fsm_csr1.schedule.json")).unwrap()).unwrap();
    assert!(s["outputs"].as_array().unwrap().iter().all(|o| o["latency"] == 0));
}

#[test]
fn sta_annotation_is_noted() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(
        t.path().join("back.json"),
        r#"{"segments": {"1": 9000.0, "2": 1000.0}, "source": "synthetic"}"#,
    )
    .unwrap();
    let o = cslow(&["csr", &fx("alu"), "--cmf", "2", "--sta", "back.json"], t.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["reoptimized"]["source"], "synthetic");
}

#[test]
fn check_passes_and_repeats() {
    let t = tempfile::tempdir().unwrap();
    let a = cslow(&["check", &fx("counter"), "--cmf", "3", "--seed", "5"], t.path());
    let b = cslow(&["check", &fx("counter"), "--cmf", "3", "--seed", "5"], t.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a)["pass"], true);
}

#[test]
fn injected_fault_fails_with_witness() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["check", &fx("counter"), "--cmf", "2", "--inject-fault", "q_sp1"], t.path());
    assert_eq!(o.status.code(), Some(1));
    let r = stdout_json(&o);
    assert_eq!(r["pass"], false);
    assert!(r["witness"]["output"].is_string());
}

#[test]
fn seed_falls_back_to_environment() {
    let t = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_cslow"))
        .args(["check", &fx("counter"), "--cmf", "2", "--cycles", "50"])
        .env("CSLOW_SEED", "42")
        .current_dir(t.path())
        .output()
        .unwrap();
    assert_eq!(stdout_json(&o)["seed"], 42);
}

#[test]
fn flags_override_config() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(
        t.path().join("run.json"),
        format!(r#"{{"files": ["{}"], "cmf": 4, "seed": 9, "cycles": 60}}"#, fx("fsm")),
    )
    .unwrap();
    let o = cslow(&["--config", "run.json", "check", "--cmf", "2"], t.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = stdout_json(&o);
    assert_eq!(r["cmf"], 2);
    assert_eq!(r["seed"], 9);
    assert_eq!(r["cycles"], 60);
}

#[test]
fn config_rejects_unknown_keys() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(t.path().join("run.json"), r#"{"cmff": 2}"#).unwrap();
    let o = cslow(&["--config", "run.json", "csr", &fx("counter")], t.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_cost_table_is_a_user_error() {
    let t = tempfile::tempdir().unwrap();
    std::fs::write(t.path().join("ct.json"), r#"{"mu_lut_ps": "fast"}"#).unwrap();
    let o = cslow(&["report-timing", &fx("counter"), "--cost-table", "ct.json"], t.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn metrics_reproduce_theoretical_timing() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["metrics", "--t-orig", "13.853", "--cmf", "1,2,3,4"], t.path());
    assert_eq!(o.status.code(), Some(0));
    let r = stdout_json(&o);
    let rows = r["rows"].as_array().unwrap();
    assert!((rows[0]["t_theory_ns"].as_f64().unwrap() - 13.853).abs() < 1e-12);
    for (row, want) in rows[1..].iter().zip([7.126, 4.884, 3.763]) {
        assert!((row["t_theory_ns"].as_f64().unwrap() - want).abs() <= 0.001, "{row}");
    }
}

#[test]
fn metrics_reject_mismatched_lists() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["metrics", "--t-orig", "13.853", "--cmf", "2,3", "--t-achieved", "7.3"], t.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_flag_is_a_user_error() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["csr", "--frobnicate"], t.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn parse_pretty_round_trips() {
    let t = tempfile::tempdir().unwrap();
    let o = cslow(&["parse", &fx("ramloop"), "--pretty"], t.path());
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    let a = cslow::frontend::parse_source(&text).unwrap();
    let b = cslow::frontend::parse_source(&common::fixture("ramloop")).unwrap();
    assert_eq!(a.modules, b.modules);
}
