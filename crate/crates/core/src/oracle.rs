//! Brute-force ground truth on finite metric spaces.
//!
//! Every ball around a support point is one of finitely many, so stability,
//! accumulation and density are decided by enumerating candidate radii:
//! the pairwise distances, the midpoints between consecutive ones, and the
//! configured thresholds.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, Label};
use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, Metric, Point, Space};
use crate::sets::DomainSet;
use crate::stability::{Clause, Mode, OutcomeKind, ProbeConfig};

pub const MAX_SUPPORT: usize = 2000;

/// A finite space partitioned into labeled sets.
#[derive(Debug, Clone)]
pub struct FiniteScenario {
    pub support: Vec<Point>,
    pub metric: Metric,
    /// Set index of each support point.
    pub assignment: Vec<usize>,
    pub set_ids: Vec<String>,
    pub labels: Vec<Label>,
    /// Resolution used when the scenario is run in resolution mode.
    pub rho: f64,
}

impl FiniteScenario {
    pub fn new(
        support: Vec<Point>,
        metric: Metric,
        assignment: Vec<usize>,
        labels: Vec<Label>,
        rho: f64,
    ) -> Result<Self> {
        if support.is_empty() || support.len() > MAX_SUPPORT {
            return Err(Error::InvalidInput(format!("support size must be in 1..={MAX_SUPPORT}")));
        }
        if assignment.len() != support.len() {
            return Err(Error::InvalidInput("one set index per support point".into()));
        }
        if labels.len() < 2 {
            return Err(Error::InvalidInput("a classifier needs at least two sets".into()));
        }
        for (k, lab) in labels.iter().enumerate() {
            if !assignment.contains(&k) {
                return Err(Error::EmptySet(format!("set {k} ({lab})")));
            }
        }
        if let Some(bad) = assignment.iter().find(|a| **a >= labels.len()) {
            return Err(Error::InvalidInput(format!("set index {bad} out of range")));
        }
        let set_ids = (0..labels.len()).map(|k| format!("D{k}")).collect();
        Ok(Self { support, metric, assignment, set_ids, labels, rho })
    }

    /// Reads the partition off a classifier with a finite support.
    pub fn from_classifier(c: &Classifier, metric: Metric, rho: f64) -> Result<Self> {
        let support =
            c.space().support().ok_or_else(|| Error::InvalidInput("classifier has no finite support".into()))?.to_vec();
        let assignment = support.iter().map(|p| c.locate(p)).collect::<Result<Vec<_>>>()?;
        let mut s = Self::new(support, metric, assignment, c.labels().to_vec(), rho)?;
        s.set_ids = c.sets().iter().map(|d| d.id().to_string()).collect();
        Ok(s)
    }

    pub fn members(&self, k: usize) -> Vec<Point> {
        self.support.iter().zip(&self.assignment).filter(|(_, a)| **a == k).map(|(p, _)| p.clone()).collect()
    }

    pub fn classifier(&self) -> Result<Classifier> {
        let sets = (0..self.labels.len())
            .map(|k| DomainSet::finite(self.set_ids[k].clone(), self.members(k)))
            .collect::<Result<Vec<_>>>()?;
        let space = Space::finite(self.support.clone(), None)?.with_coverage(true);
        Classifier::new(space, sets, self.labels.clone())
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for (i, p) in self.support.iter().enumerate() {
            for q in &self.support[i + 1..] {
                d = d.max(self.metric.eval(p.coords(), q.coords()));
            }
        }
        d
    }

    fn index_of(&self, p: &Point) -> Result<usize> {
        self.support
            .iter()
            .position(|s| s == p)
            .ok_or_else(|| Error::InvalidProbe(format!("{p} is not a support point")))
    }

    fn dist(&self, i: usize, j: usize) -> f64 {
        self.metric.eval(self.support[i].coords(), self.support[j].coords())
    }
}

/// Support points at distance strictly below `radius` from `center`.
pub fn enumerate_ball(s: &FiniteScenario, center: &Point, radius: f64) -> Result<Vec<Point>> {
    let i = s.index_of(center)?;
    if radius.is_nan() || radius <= 0.0 {
        return Err(Error::InvalidProbe(format!("radius must be positive, got {radius}")));
    }
    Ok((0..s.support.len()).filter(|&j| s.dist(i, j) < radius).map(|j| s.support[j].clone()).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub point: Point,
    pub set: usize,
    pub kind: OutcomeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certified_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause: Option<Clause>,
}

/// Sorted candidate radii for balls around support point `i`: distances,
/// midpoints between consecutive distinct distances, one radius beyond the
/// farthest point and the extra values in `extra`.
fn candidates(dists: &[f64], extra: &[f64]) -> Vec<f64> {
    let mut d: Vec<f64> = dists.to_vec();
    d.push(0.0);
    d.sort_by(f64::total_cmp);
    d.dedup();
    let mut c = d.clone();
    c.extend(d.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    c.push(2.0 * d.last().copied().unwrap_or(0.0) + 1.0);
    c.extend_from_slice(extra);
    c.retain(|r| *r > 0.0 && r.is_finite());
    c.sort_by(f64::total_cmp);
    c.dedup();
    c
}

/// Exact verdict for every support point under the tester's configuration.
///
/// A point is stable when some radius `delta` in `[delta_min, delta_start]`
/// (and above the threshold in resolution mode) has a ball free of other
/// labels, and every admissible smaller radius still holds another point.
/// The certified radius is the largest such `delta`.
pub fn oracle_verdicts(s: &FiniteScenario, cfg: &ProbeConfig) -> Vec<OracleVerdict> {
    (0..s.support.len()).into_par_iter().map(|i| verdict_at(s, cfg, i)).collect()
}

fn verdict_at(s: &FiniteScenario, cfg: &ProbeConfig, i: usize) -> OracleVerdict {
    let x = &s.support[i];
    let n = s.support.len();
    let dists: Vec<f64> = (0..n).map(|j| s.dist(i, j)).collect();
    let lower = cfg.delta_min.max(cfg.floor_at(x));
    let threshold = cfg.threshold_at(x);
    let mut extra = vec![cfg.delta_start, cfg.delta_min, lower];
    if let Some(t) = threshold {
        extra.push(t);
        extra.push(t.next_up());
    }
    let cands = candidates(&dists, &extra);

    // other points ordered by distance, for prefix scans over growing radii
    let mut others: Vec<(f64, bool)> = (0..n)
        .filter(|&j| j != i)
        .map(|j| (dists[j], s.labels[s.assignment[j]] == s.labels[s.assignment[i]]))
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0));

    let clause_iii_floor = |r: f64| match cfg.mode {
        Mode::Strict => r >= lower,
        Mode::Resolution { .. } => r > threshold.expect("resolution threshold"),
    };

    let mut best: Option<f64> = None;
    let mut any_admissible = false;
    let mut any_clean_admissible = false;
    let mut isolated_below = false; // some admissible sub-radius seen so far is empty
    let mut ptr = 0;
    let mut clean = true;
    for &r in &cands {
        while ptr < others.len() && others[ptr].0 < r {
            clean &= others[ptr].1;
            ptr += 1;
        }
        let has_other = ptr > 0;
        if clause_iii_floor(r) && !has_other {
            isolated_below = true;
        }
        if r > cfg.delta_start {
            break;
        }
        let admissible = r >= cfg.delta_min && threshold.is_none_or(|t| r > t);
        if !admissible {
            continue;
        }
        any_admissible = true;
        if clean {
            any_clean_admissible = true;
            if !isolated_below {
                best = Some(r);
            }
        }
    }

    let (kind, clause) = match best {
        Some(_) => (OutcomeKind::Stable, None),
        None if any_clean_admissible => (OutcomeKind::Unstable, Some(Clause::Isolation)),
        None if any_admissible => {
            let rival = (0..n).filter(|&j| j != i && s.assignment[j] != s.assignment[i]).count() > 0;
            (OutcomeKind::Unstable, Some(if rival { Clause::Membership } else { Clause::Label }))
        }
        None => (OutcomeKind::Inconclusive, None),
    };
    OracleVerdict { point: x.clone(), set: s.assignment[i], kind, certified_delta: best, clause }
}

/// Stable points of each set.
pub fn oracle_stable_points(s: &FiniteScenario, cfg: &ProbeConfig) -> Vec<Vec<Point>> {
    let mut out = vec![Vec::new(); s.labels.len()];
    for v in oracle_verdicts(s, cfg) {
        if v.kind == OutcomeKind::Stable {
            out[v.set].push(v.point);
        }
    }
    out
}

/// Points whose every ball of radius in `(rho, diameter]` meets set `k`
/// away from the point itself.
pub fn oracle_accumulation_points(s: &FiniteScenario, k: usize, rho: f64) -> Vec<Point> {
    let n = s.support.len();
    let diam = s.diameter();
    (0..n)
        .into_par_iter()
        .filter(|&i| {
            let dists: Vec<f64> = (0..n).map(|j| s.dist(i, j)).collect();
            let cands = candidates(&dists, &[rho.next_up(), diam]);
            cands
                .iter()
                .filter(|r| **r > rho && **r <= diam)
                .all(|&r| (0..n).any(|j| j != i && s.assignment[j] == k && dists[j] < r))
        })
        .map(|i| s.support[i].clone())
        .collect()
}

/// Whether every support point's `delta`-ball meets set `k`.
pub fn oracle_dense(s: &FiniteScenario, k: usize, delta: f64) -> bool {
    let n = s.support.len();
    (0..n).all(|i| (0..n).any(|j| s.assignment[j] == k && s.dist(i, j) < delta))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionStyle {
    Random,
    Voronoi,
    Lattice,
}

/// Randomized finite scenarios: 10 to 500 points in dimension 1 to 3,
/// 2 to 4 sets, random / Voronoi / banded partitions, mixed metrics.
pub fn random_suite(seed: u64, count: usize) -> Vec<FiniteScenario> {
    (0..count).map(|i| random_scenario(seed, i as u64)).collect()
}

pub fn random_scenario(seed: u64, index: u64) -> FiniteScenario {
    let mut rng = derive_rng_stream(seed, index).rng();
    let dim = rng.gen_range(1..=3usize);
    let m = rng.gen_range(2..=4usize);
    let style = [PartitionStyle::Random, PartitionStyle::Voronoi, PartitionStyle::Lattice][index as usize % 3];
    let metric = [Metric::L2, Metric::L1, Metric::Linf][rng.gen_range(0..3)].clone();

    let support: Vec<Point> = if style == PartitionStyle::Lattice {
        let side = [rng.gen_range(10..=200usize), rng.gen_range(4..=22), rng.gen_range(3..=7)][dim - 1];
        let h = 1.0 / side as f64;
        let mut pts = Vec::new();
        let mut idx = vec![0usize; dim];
        'outer: loop {
            pts.push(Point::from_slice(&idx.iter().map(|k| *k as f64 * h).collect::<Vec<_>>()));
            for k in idx.iter_mut() {
                *k += 1;
                if *k < side {
                    continue 'outer;
                }
                *k = 0;
            }
            break;
        }
        pts
    } else {
        let n = rng.gen_range(10..=500usize);
        let mut pts: Vec<Point> = Vec::with_capacity(n);
        while pts.len() < n {
            let p = Point::from_slice(&(0..dim).map(|_| rng.gen::<f64>()).collect::<Vec<_>>());
            if !pts.contains(&p) {
                pts.push(p);
            }
        }
        pts
    };
    let n = support.len();

    let mut assignment: Vec<usize> = match style {
        PartitionStyle::Random => (0..n).map(|_| rng.gen_range(0..m)).collect(),
        PartitionStyle::Voronoi => {
            let seeds: Vec<usize> = rand::seq::index::sample(&mut rng, n, m).into_vec();
            (0..n)
                .map(|i| {
                    (0..m)
                        .min_by(|&a, &b| {
                            let da = metric.eval(support[i].coords(), support[seeds[a]].coords());
                            let db = metric.eval(support[i].coords(), support[seeds[b]].coords());
                            da.total_cmp(&db)
                        })
                        .expect("m >= 2")
                })
                .collect()
        }
        PartitionStyle::Lattice => {
            // bands along the first axis, of a random width in nodes
            let width = rng.gen_range(1..=4usize);
            let h = support.get(1).map_or(1.0, |p| metric.eval(p.coords(), support[0].coords()));
            (0..n).map(|i| ((support[i].coords()[0] / h).round() as usize / width) % m).collect()
        }
    };
    // every set non-empty
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    for k in 0..m {
        if !assignment.contains(&k) {
            let victim =
                order.iter().copied().find(|&i| assignment.iter().filter(|a| **a == assignment[i]).count() > 1);
            if let Some(v) = victim {
                assignment[v] = k;
            }
        }
    }

    // resolution around the typical nearest-neighbor spacing
    let mut nn: Vec<f64> = (0..n.min(64))
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| metric.eval(support[i].coords(), support[j].coords()))
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    nn.sort_by(f64::total_cmp);
    let rho = nn[nn.len() / 2] * rng.gen_range(0.8..2.5);

    let labels = (0..m).map(|k| Label::Int(k as i64)).collect();
    FiniteScenario::new(support, metric, assignment, labels, rho).expect("generated scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64) -> Point {
        Point::from_slice(&[x])
    }

    fn grid(n: usize, assign: impl Fn(usize) -> usize) -> FiniteScenario {
        let support: Vec<Point> = (0..n).map(|k| pt(k as f64 / 100.0)).collect();
        FiniteScenario::new(support, Metric::L2, (0..n).map(assign).collect(), vec![Label::Int(0), Label::Int(1)], 0.01)
            .unwrap()
    }

    #[test]
    fn ball_enumeration_is_strict() {
        let s = grid(101, |k| k % 2);
        let b = enumerate_ball(&s, &pt(0.5), 0.015).unwrap();
        assert_eq!(b, vec![pt(0.49), pt(0.5), pt(0.51)]);
        assert_eq!(enumerate_ball(&s, &pt(0.5), 0.01).unwrap(), vec![pt(0.5)]);
        assert!(matches!(enumerate_ball(&s, &pt(0.5), 0.0), Err(Error::InvalidProbe(_))));
        assert!(matches!(enumerate_ball(&s, &pt(0.505), 0.1), Err(Error::InvalidProbe(_))));
    }

    #[test]
    fn alternating_has_no_stable_points() {
        let s = grid(101, |k| k % 2);
        for mode in [Mode::Strict, Mode::Resolution { rho: Some(0.01) }, Mode::Resolution { rho: Some(0.005) }] {
            let cfg = ProbeConfig::with_start(0.1).with_mode(mode);
            assert!(oracle_stable_points(&s, &cfg).iter().all(Vec::is_empty));
        }
    }

    #[test]
    fn run_lattice_interior_is_stable() {
        let s = grid(101, |k| usize::from(k >= 50));
        let cfg = ProbeConfig::with_start(0.1).with_mode(Mode::Resolution { rho: Some(0.01) });
        let v = oracle_verdicts(&s, &cfg);
        assert_eq!(v[20].kind, OutcomeKind::Stable);
        assert_eq!(v[20].certified_delta, Some(0.1));
        assert!((v[45].certified_delta.unwrap() - 0.05).abs() < 1e-12);
        assert_eq!(v[49].kind, OutcomeKind::Unstable);
        assert_eq!(v[50].kind, OutcomeKind::Unstable);
        let strict = ProbeConfig::with_start(0.1);
        assert!(oracle_stable_points(&s, &strict).iter().all(Vec::is_empty));
    }

    #[test]
    fn single_set_is_invalid() {
        let r = FiniteScenario::new(vec![pt(0.0), pt(1.0)], Metric::L2, vec![0, 0], vec![Label::Int(0)], 0.1);
        assert!(r.is_err());
    }

    #[test]
    fn reciprocal_accumulation() {
        let mut support: Vec<Point> = (1..=1000).map(|n| pt(1.0 / n as f64)).collect();
        support.push(pt(0.0));
        support.push(pt(0.3));
        let mut assignment = vec![0; 1000];
        assignment.extend([1, 1]);
        let s = FiniteScenario::new(support, Metric::L2, assignment, vec![Label::Int(0), Label::Int(1)], 1e-3).unwrap();
        assert!(oracle_accumulation_points(&s, 0, 1e-3).contains(&pt(0.0)));
        // the nearest reciprocal is 1e-3 away, so radii in (1e-4, 1e-3] miss
        assert!(!oracle_accumulation_points(&s, 0, 1e-4).contains(&pt(0.0)));
        assert!(!oracle_accumulation_points(&s, 0, 0.01).contains(&pt(0.3)));
    }

    #[test]
    fn density_of_even_nodes() {
        let s = grid(101, |k| k % 2);
        assert!(oracle_dense(&s, 0, 0.02));
        assert!(!oracle_dense(&s, 0, 0.005));
        let all = grid(10, |k| usize::from(k == 9));
        assert!(!oracle_dense(&all, 1, 0.05));
    }

    #[test]
    fn suite_is_varied_and_valid() {
        let suite = random_suite(7, 12);
        assert_eq!(suite.len(), 12);
        for s in &suite {
            assert!((10..=500).contains(&s.support.len()));
            assert!(s.support[0].dim() <= 3);
            let c = s.classifier().unwrap();
            assert!((2..=4).contains(&c.sets().len()));
        }
        let again = random_suite(7, 12);
        assert_eq!(suite[5].support, again[5].support);
    }
}
