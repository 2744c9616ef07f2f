//! Whole-scenario runs through the report layer.

use std::path::Path;

use domstab::report::{render_report, run_scenario, Report, ReportFormat, RunOptions};
use domstab::scenario::{parse_scenario_str, Scenario};
use domstab::Clause;

const LATTICE: &str = r#"{
    "schema": "domstab.scenario/1",
    "seed": 5,
    "space": {"dim": 1, "support": {"lattice": {"origin": [0], "spacing": 0.01, "count": [101]}}},
    "coverage_declared": true,
    "sets": [
        {"id": "even", "label": 0, "kind": "lattice", "origin": [0], "spacing": 0.01, "predicate": {"parity": {"even": true}}},
        {"id": "odd", "label": 1, "kind": "lattice", "origin": [0], "spacing": 0.01, "predicate": {"parity": {"even": false}}}
    ],
    "probes": {"kind": "support"},
    "resolutions": [0.02],
    "analyses": ["axioms", "epsilon", "density", "stability", "series", "oracle"]
}"#;

const OPEN_BOX: &str = r#"{
    "schema": "domstab.scenario/1",
    "seed": 17,
    "space": {"dim": 2, "bounds": {"lo": [-0.5, -0.5], "hi": [1.5, 1.5]}},
    "coverage_declared": true,
    "sets": [
        {"id": "D", "label": "inside", "kind": "box_union", "boxes": [{"lo": [0, 0], "hi": [1, 1]}]},
        {"id": "Dc", "label": "outside", "kind": "complement", "of": "D"}
    ],
    "probes": {"kind": "grid", "spacing": 0.125},
    "resolutions": [0.05],
    "analyses": ["stability", "accumulation", "series", "cross-check", "density"]
}"#;

fn build(text: &str) -> Scenario {
    parse_scenario_str(text, Path::new(".")).unwrap()
}

fn run(s: &Scenario, workers: Option<usize>) -> Report {
    run_scenario(s, &RunOptions { workers }).unwrap()
}

#[test]
fn lattice_report_has_no_stable_points() {
    for mode in ["", r#""mode": "resolution", "rho": 0.005,"#] {
        let s = build(&LATTICE.replace(r#""probes""#, &format!(r#"{mode} "probes""#)));
        let r = run(&s, None);
        let a = r.aggregates.as_ref().unwrap();
        assert!(a.stability.values().all(|c| c.stable == 0));
        assert_eq!(a.stability.values().map(|c| c.probes).sum::<usize>(), 101);
        assert!(r.oracle.as_ref().unwrap().stable.values().all(|n| *n == 0));
        assert_eq!(a.agreement.stability_oracle, Some(1.0));
        assert_eq!(a.agreement.stability_series, Some(1.0));
        let density = r.density.as_ref().unwrap();
        assert_eq!(density.len(), 2);
        assert!(density.iter().all(|d| d.verdict.dense && d.verdict.resolution == 0.02));
        assert!(a.blocker_consistent && !r.failed);
    }
}

#[test]
fn open_box_cross_check_is_recorded() {
    let r = run(&build(OPEN_BOX), None);
    let cc = r.cross_check.as_ref().unwrap();
    assert!(cc.eligible, "{:?}", cc.reason);
    let a = r.aggregates.as_ref().unwrap();
    assert_eq!(a.agreement.cross_check, Some(1.0));
    assert_eq!(a.stability["D"].stable, 49);
    // the generator family has no diagonal ray, so box corners can escape it
    for rec in r.records.as_ref().unwrap() {
        let (v, sv) = (rec.stability.as_ref().unwrap(), rec.series.as_ref().unwrap());
        if v.kind() != sv.verdict.kind() {
            assert!(rec.point.coords().iter().all(|c| *c == 0.0 || *c == 1.0), "{}", rec.point);
        }
    }
}

#[test]
fn json_round_trips() {
    for text in [LATTICE, OPEN_BOX] {
        let r = run(&build(text), None);
        let bytes = render_report(&r, ReportFormat::Json).unwrap();
        let back: Report = serde_json::from_slice(&bytes).unwrap();
        assert_eq!(back, r);
    }
}

#[test]
fn csv_rows_match_probes() {
    let s = build(OPEN_BOX);
    let r = run(&s, None);
    let text = String::from_utf8(render_report(&r, ReportFormat::CsvSummary).unwrap()).unwrap();
    assert_eq!(text.lines().count() - 1, s.probes.len());
}

#[test]
fn same_seed_same_content() {
    for text in [LATTICE, OPEN_BOX] {
        let a = run(&build(text), Some(1));
        let b = run(&build(text), Some(4));
        let c = run(&build(text), None);
        assert_eq!(a.content_digest(), b.content_digest());
        assert_eq!(a.content_digest(), c.content_digest());
        let other = run(&build(&text.replace(r#""seed": "#, r#""seed": 1"#)), None);
        assert_ne!(a.scenario_digest, other.scenario_digest);
    }
}

#[test]
fn external_model_disagreement_marks_verdicts_untrusted() {
    // the model calls everything right of 0.5 "out", contradicting the box
    let program =
        r#"while read -r l; do echo "$l" | awk '{ if ($1 < 0.5 && $1 > 0) print "in"; else print "out" }'; done"#;
    let text = format!(
        r#"{{
        "schema": "domstab.scenario/1",
        "space": {{"dim": 1}},
        "sets": [
            {{"id": "D", "label": "in", "kind": "box_union", "boxes": [{{"lo": [0], "hi": [1]}}]}},
            {{"id": "Dc", "label": "out", "kind": "complement", "of": "D"}}
        ],
        "external": {{"command": ["sh", "-c", {}], "timeout_ms": 5000}},
        "probes": {{"kind": "explicit", "points": [[0.25], [0.75], [0.5]]}},
        "analyses": ["stability"]
    }}"#,
        serde_json::to_string(program).unwrap()
    );
    let r = run(&build(&text), None);
    assert!(!r.failed);
    let axioms = r.axioms.as_ref().unwrap();
    assert!(!axioms.passed && !r.induced_axiom_violation());
    let records = r.records.as_ref().unwrap();
    assert!(records.iter().all(|rec| !rec.stability.as_ref().unwrap().trusted));
    // at 0.5 the model flips label in every ball while set membership holds
    let v = records[2].stability.as_ref().unwrap();
    assert_eq!(v.outcome.clause(), Some(Clause::Label), "{:?}", v.outcome);
}
