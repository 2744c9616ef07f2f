use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, sample_ball, Metric, Point, RngStream};
use crate::sets::DomainSet;

use super::ProbeConfig;

/// One radius of the accumulation test and the member found inside it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainLink {
    pub radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccumulationVerdict {
    pub accumulation: bool,
    /// Decided by sampling; a `false` may be a miss.
    pub approximate: bool,
    /// Member found at the smallest radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Point>,
    /// Distance to the nearest other member, when known exactly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest_distance: Option<f64>,
    pub probes_used: u64,
    pub chain: Vec<ChainLink>,
}

/// Whether every scheduled ball around `x` holds a member of `set` other than `x`.
pub fn test_accumulation_point(
    set: &DomainSet,
    x: &Point,
    cfg: &ProbeConfig,
    metric: &Metric,
) -> Result<AccumulationVerdict> {
    test_accumulation_point_seeded(set, x, cfg, metric, derive_rng_stream(cfg.seed, 0))
}

/// [`test_accumulation_point`] with sampling drawn from `stream`.
///
/// In resolution mode the schedule stops above the threshold, and the
/// threshold ball itself (the limit of the schedule) must hold a member.
pub fn test_accumulation_point_seeded(
    set: &DomainSet,
    x: &Point,
    cfg: &ProbeConfig,
    metric: &Metric,
    stream: RngStream,
) -> Result<AccumulationVerdict> {
    cfg.validate()?;
    x.check_dim(set.dim())?;
    let mut radii = cfg.radii_at(x);
    if let Some(t) = cfg.threshold_at(x) {
        // a member at distance <= t lies in every ball of radius > t
        radii.push(t.next_up());
    }

    match set.nearest_other_member(x, metric) {
        Ok((m, d)) => {
            let chain: Vec<ChainLink> =
                radii.iter().map(|&r| ChainLink { radius: r, witness: (d < r).then(|| m.clone()) }).collect();
            Ok(finish(chain, false, Some(d), radii.len() as u64))
        }
        Err(Error::EmptySet(_)) => {
            let chain = radii.iter().map(|&r| ChainLink { radius: r, witness: None }).collect();
            Ok(finish(chain, false, None, 0))
        }
        Err(Error::NotSupported(_)) => {
            let mut chain = Vec::with_capacity(radii.len());
            let mut used = 0u64;
            for &r in &radii {
                let sub = stream.substream(r.to_bits());
                let found = match sample_ball(x, r, cfg.samples_per_radius, metric, &sub) {
                    Ok(pts) => {
                        used += pts.len() as u64;
                        pts.into_iter().find(|p| p != x && set.contains_unchecked(p))
                    }
                    Err(Error::DegenerateRadius { .. }) => None,
                    Err(e) => return Err(e),
                };
                chain.push(ChainLink { radius: r, witness: found });
            }
            Ok(finish(chain, true, None, used))
        }
        Err(e) => Err(e),
    }
}

fn finish(chain: Vec<ChainLink>, approximate: bool, nearest: Option<f64>, used: u64) -> AccumulationVerdict {
    let accumulation = !chain.is_empty() && chain.iter().all(|l| l.witness.is_some());
    let witness = chain.last().and_then(|l| l.witness.clone());
    AccumulationVerdict { accumulation, approximate, witness, nearest_distance: nearest, probes_used: used, chain }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sets::AxisBox;
    use crate::stability::Mode;

    fn pt(c: &[f64]) -> Point {
        Point::from_slice(c)
    }

    fn reciprocals(n: usize) -> DomainSet {
        DomainSet::finite("recip", (1..=n).map(|k| pt(&[1.0 / k as f64])).collect()).unwrap()
    }

    fn schedule_down_to(start: f64, min: f64) -> ProbeConfig {
        let mut cfg = ProbeConfig::with_start(start);
        cfg.delta_min = min;
        cfg
    }

    #[test]
    fn zero_accumulates_reciprocals() {
        let set = reciprocals(1_000_000);
        let cfg = schedule_down_to(0.5, 1e-6);
        let v = test_accumulation_point(&set, &pt(&[0.0]), &cfg, &Metric::L2).unwrap();
        assert!(v.accumulation);
        for link in &v.chain {
            let w = link.witness.as_ref().unwrap().coords()[0];
            assert!(w < link.radius);
        }
        assert_eq!(v.nearest_distance, Some(1e-6));
    }

    #[test]
    fn point_between_reciprocals_is_not() {
        let set = reciprocals(1_000_000);
        let cfg = schedule_down_to(0.32, 0.01);
        let v = test_accumulation_point(&set, &pt(&[0.3]), &cfg, &Metric::L2).unwrap();
        assert!(!v.accumulation);
        let d = v.nearest_distance.unwrap();
        // linear-scan oracle
        let scan = (1..=1_000_000).map(|k| (1.0 / k as f64 - 0.3).abs()).fold(f64::INFINITY, f64::min);
        assert_eq!(d, scan);
        assert!(d > 0.033 && d < 0.034);
    }

    #[test]
    fn open_box_interior() {
        let set = DomainSet::box_union("D", vec![AxisBox::open(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()]).unwrap();
        let v = test_accumulation_point(&set, &pt(&[0.3, 0.7]), &ProbeConfig::default(), &Metric::L2).unwrap();
        assert!(v.accumulation && !v.approximate);
    }

    #[test]
    fn resolution_mode_needs_member_at_threshold() {
        let set = reciprocals(1000);
        let cfg = schedule_down_to(0.5, 1e-9).with_mode(Mode::Resolution { rho: Some(1e-4) });
        let v = test_accumulation_point(&set, &pt(&[0.0]), &cfg, &Metric::L2).unwrap();
        assert!(!v.accumulation, "nearest member 1e-3 is above rho");
        let cfg = cfg.with_mode(Mode::Resolution { rho: Some(1e-3) });
        assert!(test_accumulation_point(&set, &pt(&[0.0]), &cfg, &Metric::L2).unwrap().accumulation);
    }

    #[test]
    fn predicate_set_falls_back_to_sampling() {
        let set = DomainSet::predicate("half", 1, |p: &Point| p.coords()[0] > 0.0);
        let v = test_accumulation_point(&set, &pt(&[0.5]), &ProbeConfig::default(), &Metric::L2).unwrap();
        assert!(v.accumulation && v.approximate);
    }
}
