use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bayeslin"))
}

fn example() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems/affine_example.json")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("bad json ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

const BAD: &str = r#"{"X": [[1,0],[0,1],[0,0]], "Omega": [[1,0,0],[0,1,0],[0,0,-1]], "K1": [[1,0],[0,1]], "K2": [[1,0],[0,1]]}"#;

#[test]
fn check_equal_on_example() {
    let p = example();
    let out = run(&["check-equal", p.to_str().unwrap(), "--a", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["verdict"], true);
    assert_eq!(v["theorem"], "estimator-equality");
    assert_eq!(v["meta"]["subcommand"], "check-equal");
    assert_eq!(v["grid"][0]["a"], 9.0);
}

#[test]
fn estimate_on_example() {
    let p = example();
    let out = run(&["estimate", p.to_str().unwrap(), "--phi", "identity", "--k", "K2", "--y", "[1,1,0]", "--a", "9"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let b = v["grid"][0]["values"]["beta_hat"].as_array().unwrap();
    assert_eq!(b.len(), 2);
    for x in b {
        assert!((x.as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
}

#[test]
fn bad_omega_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("bad.json");
    fs::write(&f, BAD).unwrap();
    let out = run(&["validate", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let v = json_of(&out);
    assert_eq!(v["error"]["kind"], "omega-not-spd");
    assert_eq!(v["error"]["field"], "Omega");
}

#[test]
fn affine_problem_needs_grid() {
    let p = example();
    let out = run(&["check-equal", p.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["field"], "a");
}

#[test]
fn grid_outside_spd_range_fails() {
    let p = example();
    let out = run(&["check-equal", p.to_str().unwrap(), "--a", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "omega-not-spd");
}

#[test]
fn grid_verdict_is_conjunction() {
    let p = example();
    let out = run(&["check-joint", p.to_str().unwrap(), "--a", "9", "--a", "50"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    let points = v["grid"].as_array().unwrap();
    assert_eq!(points.len(), 2);
    let all = points.iter().all(|g| g["verdict"] == true);
    assert_eq!(v["verdict"], all);
    for (label, worst) in v["residuals"].as_object().unwrap() {
        let m = points.iter().map(|g| g["residuals"][label].as_f64().unwrap()).fold(f64::MIN, f64::max);
        assert_eq!(worst.as_f64().unwrap(), m);
    }
}

#[test]
fn output_is_byte_identical() {
    let p = example();
    let args = ["risk", p.to_str().unwrap(), "--a", "9", "--draws", "2000", "--seed", "7"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn too_few_draws_rejected() {
    let p = example();
    let out = run(&["risk", p.to_str().unwrap(), "--a", "9", "--draws", "10"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["field"], "draws");
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("r.json");
    let p = example();
    let out = run(&["decompose", p.to_str().unwrap(), "--a", "9", "--out", f.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let v: Value = serde_json::from_str(&fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(v["grid"][0]["values"]["rao_structure"], false);
}

#[test]
fn batch_is_ordered_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(example(), dir.path().join("b_example.json")).unwrap();
    fs::write(dir.path().join("a_bad.json"), BAD).unwrap();
    fs::write(dir.path().join("notes.txt"), "skip me").unwrap();
    let d = dir.path().to_str().unwrap();
    let first = run(&["validate", "--batch", d, "--a", "9"]);
    let second = run(&["validate", "--batch", d, "--a", "9"]);
    assert_eq!(first.stdout, second.stdout);
    assert_eq!(first.status.code(), Some(2));
    let v = json_of(&first);
    let items = v["batch"].as_array().unwrap();
    assert_eq!(items.len(), 2);
    assert_eq!(items[0]["file"], "a_bad.json");
    assert_eq!(items[0]["status"], 2);
    assert_eq!(items[1]["file"], "b_example.json");
    assert_eq!(items[1]["status"], 0);
}

#[test]
fn unknown_subcommand_is_usage_error() {
    let out = run(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json_of(&out)["error"]["kind"], "usage");
}

#[test]
fn simulated_problems_read_back() {
    let dir = tempfile::tempdir().unwrap();
    for (kind, expect) in [("rao", true), ("mixed-effects", true), ("spatial", true), ("random", false)] {
        let f = dir.path().join(format!("{kind}.json"));
        let gen = run(&["simulate", "--kind", kind, "--seed", "3", "--out", f.to_str().unwrap()]);
        assert_eq!(gen.status.code(), Some(0), "{kind}");
        let out = run(&["check-equal", f.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{kind}");
        assert_eq!(json_of(&out)["verdict"], expect, "{kind}");
        let val = run(&["validate", f.to_str().unwrap()]);
        assert_eq!(val.status.code(), Some(0), "{kind}");
    }
}

#[test]
fn example_simulation_matches_shipped_file() {
    let out = run(&["simulate", "--kind", "example"]);
    assert_eq!(out.status.code(), Some(0));
    let shipped: Value = serde_json::from_str(&fs::read_to_string(example()).unwrap()).unwrap();
    assert_eq!(json_of(&out), shipped);
}

#[test]
fn sufficiency_of_rank_one_prior() {
    let p = example();
    let out = run(&["sufficiency", p.to_str().unwrap(), "--a", "9"]);
    let v = json_of(&out);
    assert_eq!(v["grid"][0]["values"]["sufficient"], false);
    assert_eq!(v["grid"][0]["values"]["complete"], true);
    let out = run(&["sufficiency", p.to_str().unwrap(), "--a", "9", "--k", "identity"]);
    let v = json_of(&out);
    assert_eq!(v["grid"][0]["values"]["sufficient"], true);
    assert!(v["grid"][0]["values"]["blue_recovery"].is_array());
}
