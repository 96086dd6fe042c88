use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_plunnecke")).args(args).output().expect("spawn plunnecke")
}

fn lines(out: &Output) -> Vec<Value> {
    String::from_utf8_lossy(&out.stdout).lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

#[test]
fn fractal_formulas() {
    let dir = tempfile::tempdir().unwrap();
    let pat = write(dir.path(), "p.json", r#"{"n":1,"points":[[0,0],[1,1]]}"#);
    let out = run(&["fractal", "--pattern", &pat, "--depth", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let v = &lines(&out)[0];
    assert_eq!(v["rect_density"], "1/2");
    assert_eq!(v["tab_density"], "1/3");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(run(&["magnify", "--instance", "/nonexistent.json"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn search_resumes_from_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "s.json", r#"{"n":1,"m":1,"k":2,"k_prime":1,"mode":"exhaustive","seed":0}"#);
    let report = dir.path().join("r.jsonl");
    let report = report.to_str().unwrap();
    let first = run(&["search", "schnirelmann", "--config", &cfg, "--budget", "50", "--report", report, "--no-timing"]);
    assert_eq!(first.status.code(), Some(3));
    let second = run(&["search", "schnirelmann", "--config", &cfg, "--report", report, "--no-timing"]);
    assert_eq!(second.status.code(), Some(0));
    let recs: Vec<Value> =
        fs::read_to_string(report).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0]["cursor_end"], 50);
    assert_eq!(recs[1]["cursor_start"], 50);
    assert_eq!(recs[1]["cursor_end"], 128);
    assert_eq!(recs[1]["verdict"], "clean");
}

#[test]
fn heavy_and_magnify_on_a_small_instance() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(
        dir.path(),
        "i.json",
        r#"{"a":{"w":8,"h":8,"points":[[0,0],[1,0],[3,2]]},"b":{"w":8,"h":8,"points":[[0,0],[0,1],[1,1]]}}"#,
    );
    let out = run(&["magnify", "--instance", &inst, "--n-max", "3"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["violations"].as_array().unwrap().len(), 0);
    let out = run(&["heavy", "--instance", &inst, "--k", "2", "--k-prime", "1", "--delta", "isqrt:4", "--mode", "brute-force"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["delta"], "1/2");
}

#[test]
fn tile_writes_svg_overlays() {
    let dir = tempfile::tempdir().unwrap();
    let pts: Vec<[u64; 2]> = (0..32).flat_map(|x| (0..32).map(move |y| [x, y])).filter(|p| (p[0] + p[1]) % 3 != 0).collect();
    let set = write(dir.path(), "a.json", &serde_json::json!({"w": 32, "h": 32, "points": pts}).to_string());
    let svg = dir.path().join("t.svg");
    let out = run(&["tile", "--corners", "32,16;16,32", "--q", "4", "--points", &set, "--svg", svg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = &lines(&out)[0];
    assert!(v["trimmed"].as_u64().unwrap() >= v["after_bad_removal"].as_u64().unwrap());
    assert!(fs::read_to_string(svg).unwrap().starts_with("<svg"));
}

#[test]
fn pipeline_basis_case_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "p.json",
        r#"{"window":[64,64],"a":"full","b":{"family":{"kind":"axes"}},"k":2,"k_prime":1,"l":2,"q":8,"term":[[64,64]]}"#,
    );
    let out = run(&["pipeline", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    let v = &lines(&out)[0];
    assert_eq!(v["basis_case"], true);
}

#[test]
fn campaign_runs_from_a_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"seed":7,"schnirelmann":{"count":20,"len":8,"k_max":3}}"#);
    let out = run(&["verify", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(lines(&out)[0]["families"][0]["passed"], 20);
}
