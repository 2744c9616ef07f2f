use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TWO_BOXES: &str = r#"{
    "schema": "domstab.scenario/1",
    "seed": 4,
    "space": {"dim": 2, "bounds": {"lo": [-1, -1], "hi": [2, 2]}},
    "coverage_declared": true,
    "sets": [
        {"id": "D", "label": "in", "kind": "box_union", "boxes": [{"lo": [0, 0], "hi": [1, 1]}]},
        {"id": "E", "label": "out", "kind": "complement", "of": "D"}
    ],
    "probes": {"kind": "random", "count": 40},
    "resolutions": [0.1],
    "analyses": ["axioms", "density", "stability", "series", "cross-check"]
}"#;

fn domstab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_domstab")).args(args).output().expect("binary runs")
}

fn scenario_file(dir: &TempDir, text: &str) -> PathBuf {
    let p = dir.path().join("scenario.json");
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn epsilon_needs_no_scenario() {
    let o = domstab(&["epsilon"]);
    assert_eq!(o.status.code(), Some(0));
    let v = json(&o);
    assert_eq!(v["halving"]["epsilon_prev"].as_f64(), Some(f64::EPSILON));
    assert_eq!(v["halving"]["iterations"].as_u64(), Some(53));
}

#[test]
fn run_writes_json_and_csv() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, TWO_BOXES);
    let out = dir.path().join("r.json");
    let o = domstab(&["--scenario", s(&sc), "--out", s(&out), "run"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(v["records"].as_array().unwrap().len(), 40);
    assert_eq!(v["aggregates"]["agreement"]["cross_check"].as_f64(), Some(1.0));

    let o = domstab(&["--scenario", s(&sc), "--format", "csv-summary", "stability"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 41);
    assert!(text.starts_with("index,x0,x1,set,mode,outcome,certified_delta,clause"));
}

#[test]
fn seed_and_workers_flags() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, TWO_BOXES);
    let strip = |mut v: serde_json::Value| {
        v.as_object_mut().unwrap().remove("timestamp");
        v
    };
    let a = strip(json(&domstab(&["--scenario", s(&sc), "--workers", "1", "run"])));
    let b = strip(json(&domstab(&["--scenario", s(&sc), "--workers", "3", "run"])));
    assert_eq!(a, b);
    let c = strip(json(&domstab(&["--scenario", s(&sc), "--seed", "99", "run"])));
    assert_eq!(c["seed"].as_u64(), Some(99));
    assert_ne!(a["records"], c["records"]);
    let m = json(&domstab(&["--scenario", s(&sc), "--mode", "resolution", "stability"]));
    assert_eq!(m["mode"], serde_json::json!({"resolution": {"rho": null}}));
}

#[test]
fn invalid_scenario_exits_2() {
    let dir = TempDir::new().unwrap();
    let sc = scenario_file(&dir, &TWO_BOXES.replace(r#""label": "out""#, r#""label": "in""#));
    let o = domstab(&["--scenario", s(&sc), "run"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("sets[1].label") && err.contains("clause iv"), "{err}");
    assert_eq!(domstab(&["stability"]).status.code(), Some(2));
}

#[test]
fn overlapping_sets_exit_1() {
    let dir = TempDir::new().unwrap();
    let text = TWO_BOXES.replace(
        r#"{"id": "E", "label": "out", "kind": "complement", "of": "D"}"#,
        r#"{"id": "E", "label": "out", "kind": "ball", "center": [1, 1], "radius": 0.5}"#,
    );
    let o = domstab(&["--scenario", s(&scenario_file(&dir, &text)), "run"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json(&o)["failed"], serde_json::Value::Bool(true));
}

#[test]
fn io_errors_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(domstab(&["--scenario", s(&missing), "run"]).status.code(), Some(3));
    let sc = scenario_file(&dir, TWO_BOXES);
    let bad_out = dir.path().join("no/such/dir/r.json");
    assert_eq!(domstab(&["--scenario", s(&sc), "--out", s(&bad_out), "run"]).status.code(), Some(3));
}

#[test]
fn bundled_scenarios_run() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    for name in ["alternating_lattice.json", "open_box.json", "disk.json"] {
        let p = root.join(name);
        let o = domstab(&["--scenario", s(&p), "run"]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(json(&o)["failed"], serde_json::Value::Bool(false));
    }
}
