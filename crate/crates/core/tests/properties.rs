use proptest::prelude::*;

use domstab::oracle::{oracle_dense, random_scenario};
use domstab::stability::test_stable_point_seeded;
use domstab::{
    derive_rng_stream, is_dense_at_resolution, sample_ball, AxisBox, Classifier, DomainSet, Label, Metric, Point,
    ProbeConfig, Space,
};

fn metrics() -> [Metric; 3] {
    [Metric::L1, Metric::L2, Metric::Linf]
}

fn coords(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3..1e3f64, dim)
}

fn triple() -> impl Strategy<Value = (Vec<f64>, Vec<f64>, Vec<f64>)> {
    (1usize..6).prop_flat_map(|d| (coords(d), coords(d), coords(d)))
}

proptest! {
    #[test]
    fn metric_axioms((a, b, c) in triple()) {
        for m in metrics() {
            let ab = m.eval(&a, &b);
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(m.eval(&a, &a), 0.0);
            prop_assert_eq!(ab, m.eval(&b, &a));
            let slack = 1e-12 * (1.0 + ab + m.eval(&b, &c));
            prop_assert!(m.eval(&a, &c) <= ab + m.eval(&b, &c) + slack);
        }
    }

    #[test]
    fn ball_samples_stay_inside(c in coords(3), r in 1e-6..10.0f64, seed in any::<u64>()) {
        let center = Point::new(c).unwrap();
        for m in metrics() {
            let pts = sample_ball(&center, r, 16, &m, &derive_rng_stream(seed, 0)).unwrap();
            for p in pts {
                let d = m.eval(center.coords(), p.coords());
                prop_assert!(d < r && p != center);
            }
        }
    }

    #[test]
    fn density_is_monotone_in_the_radius(seed in 0u64..200, k in 0usize..2, d1 in 1e-3..0.5f64, f in 1.0..4.0f64) {
        let s = random_scenario(seed, 0);
        let d2 = d1 * f;
        if oracle_dense(&s, k, d1) {
            prop_assert!(oracle_dense(&s, k, d2));
        }
        let c = s.classifier().unwrap();
        let cfg = ProbeConfig::default();
        let set = &c.sets()[k];
        let v1 = is_dense_at_resolution(set, &s.support, d1, &s.metric, &cfg).unwrap();
        let v2 = is_dense_at_resolution(set, &s.support, d2, &s.metric, &cfg).unwrap();
        prop_assert_eq!(v1.dense, oracle_dense(&s, k, d1));
        prop_assert!(!v1.dense || v2.dense);
    }

    #[test]
    fn stability_is_deterministic(x in 0.001..0.999f64, y in 0.001..0.999f64, seed in any::<u64>(), idx in any::<u64>()) {
        let d = DomainSet::box_union("D", vec![AxisBox::open(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()]).unwrap();
        let e = DomainSet::complement("E", d.clone());
        let c = Classifier::new(Space::euclidean(2).unwrap(), vec![d, e], vec![Label::Int(1), Label::Int(0)]).unwrap();
        let cfg = ProbeConfig::with_start(0.2).with_seed(seed);
        let p = Point::from_slice(&[x, y]);
        let a = test_stable_point_seeded(&c, &p, &cfg, &Metric::L2, derive_rng_stream(seed, idx)).unwrap();
        let b = test_stable_point_seeded(&c, &p, &cfg, &Metric::L2, derive_rng_stream(seed, idx)).unwrap();
        prop_assert_eq!(&a, &b);
        if let Some(delta) = a.outcome.certified_delta() {
            let margin = x.min(y).min(1.0 - x).min(1.0 - y);
            prop_assert!(delta <= margin);
        }
    }
}
