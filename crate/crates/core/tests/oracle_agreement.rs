//! Enumerating testers against the brute-force oracle on randomized finite scenarios.

use domstab::oracle::{oracle_dense, oracle_verdicts, random_suite, FiniteScenario};
use domstab::series::{default_family, test_stability_via_series};
use domstab::stability::{reverify_witness, test_stable_point};
use domstab::{derive_rng_stream, Mode, OutcomeKind, ProbeConfig};

fn configs(s: &FiniteScenario) -> [ProbeConfig; 2] {
    let base = ProbeConfig::with_start(0.25 * s.diameter());
    [base.clone(), base.with_mode(Mode::Resolution { rho: Some(s.rho) })]
}

#[test]
fn ball_and_series_match_oracle() {
    let mut stable_seen = 0;
    for s in random_suite(11, 24) {
        let c = s.classifier().unwrap();
        let dim = s.support[0].dim();
        for cfg in configs(&s) {
            let truth = oracle_verdicts(&s, &cfg);
            for (i, o) in truth.iter().enumerate() {
                let x = &s.support[i];
                let v = test_stable_point(&c, x, &cfg, &s.metric).unwrap();
                assert_eq!(v.kind(), o.kind, "point {x} mode {:?}", cfg.mode);
                assert_eq!(v.outcome.certified_delta(), o.certified_delta, "point {x}");
                assert_eq!(v.outcome.clause(), o.clause, "point {x}");
                assert!(reverify_witness(&c, x, &v, &s.metric));
                let sv = test_stability_via_series(
                    &c,
                    x,
                    &default_family(dim),
                    &cfg,
                    &s.metric,
                    derive_rng_stream(0, i as u64),
                )
                .unwrap();
                assert_eq!(sv.verdict.kind(), o.kind);
                assert_eq!(sv.verdict.outcome.certified_delta(), o.certified_delta);
                if o.kind == OutcomeKind::Stable {
                    stable_seen += 1;
                }
            }
            if cfg.mode == Mode::Strict {
                assert!(truth.iter().all(|o| o.kind != OutcomeKind::Stable));
            }
        }
    }
    assert!(stable_seen > 0, "suite never exercises a stable point");
}

#[test]
fn oracle_blocker_holds() {
    for s in random_suite(5, 12) {
        let cfg = configs(&s)[1].clone();
        let truth = oracle_verdicts(&s, &cfg);
        for k in 0..s.labels.len() {
            for o in truth.iter().filter(|o| o.set != k) {
                if let Some(d) = o.certified_delta {
                    assert!(!oracle_dense(&s, k, d), "stable with a dense rival");
                }
            }
        }
    }
}
