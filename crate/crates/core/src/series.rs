//! Convergent sequences toward a probe and the sub-series test for stability.
//!
//! A point is refuted as soon as some generator's sequence ends in a tail
//! outside the point's set (or with another label). A `Stable` verdict here
//! only means that no generator of the fixed family found such a tail.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, Label};
use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, Metric, Point, RngStream};
use crate::precision::{machine_epsilon, representability_floor, DEFAULT_K};
use crate::sets::DomainSet;
use crate::stability::{home_label, judge, Clause, Judgement, Mode, Outcome, ProbeConfig, RadiusRecord, Verdict};

pub const DEFAULT_RATIO: f64 = 0.5;
pub const DEFAULT_MAX_LEN: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Along a fixed direction.
    Radial { direction: Vec<f64> },
    /// Rotating by `angular_step` radians per term in a random 2-plane.
    Spiral { angular_step: f64 },
    /// Fresh random direction and a random shrink in `[1/2, 1]` per term.
    Jittered,
    /// Support points inside the start ball, farthest first.
    LatticeWalk,
}

fn default_ratio() -> f64 {
    DEFAULT_RATIO
}

fn default_max_len() -> usize {
    DEFAULT_MAX_LEN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceGenerator {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// `r_0`; the series tester overrides it per probe.
    #[serde(default)]
    pub initial_offset: f64,
    #[serde(default = "default_max_len")]
    pub max_len: usize,
    #[serde(default = "default_stream")]
    pub stream: RngStream,
}

fn default_stream() -> RngStream {
    derive_rng_stream(0, 0)
}

impl SequenceGenerator {
    pub fn new(kind: GeneratorKind, initial_offset: f64) -> Self {
        Self { kind, ratio: DEFAULT_RATIO, initial_offset, max_len: DEFAULT_MAX_LEN, stream: default_stream() }
    }

    pub fn with_ratio(mut self, q: f64) -> Self {
        self.ratio = q;
        self
    }

    pub fn with_stream(mut self, stream: RngStream) -> Self {
        self.stream = stream;
        self
    }

    pub fn name(&self) -> String {
        match &self.kind {
            GeneratorKind::Radial { direction } => format!("radial{direction:?}"),
            GeneratorKind::Spiral { .. } => "spiral".into(),
            GeneratorKind::Jittered => "jittered".into(),
            GeneratorKind::LatticeWalk => "lattice_walk".into(),
        }
    }
}

/// Radial pairs along every axis, one spiral and one jittered generator.
pub fn default_family(dim: usize) -> Vec<SequenceGenerator> {
    let mut out = Vec::with_capacity(2 * dim + 2);
    for i in 0..dim {
        for s in [1.0, -1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            out.push(SequenceGenerator::new(GeneratorKind::Radial { direction: e }, 0.0));
        }
    }
    out.push(SequenceGenerator::new(GeneratorKind::Spiral { angular_step: 1.0 }, 0.0));
    out.push(SequenceGenerator::new(GeneratorKind::Jittered, 0.0));
    out
}

fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if v.iter().any(|x| *x != 0.0) {
            return v;
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Orthonormal pair spanning a random plane.
fn random_plane(rng: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<f64>) {
    let a = gaussian(rng, n);
    let na = dot(&a, &a).sqrt();
    let a: Vec<f64> = a.iter().map(|x| x / na).collect();
    loop {
        let b = gaussian(rng, n);
        let p = dot(&a, &b);
        let b: Vec<f64> = b.iter().zip(&a).map(|(y, x)| y - p * x).collect();
        let nb = dot(&b, &b).sqrt();
        if nb > 1e-6 {
            return (a, b.iter().map(|x| x / nb).collect());
        }
    }
}

/// `target + step * u`, pulled in until it is within `bound` of the target.
fn place(target: &[f64], u: &[f64], step: f64, bound: f64, metric: &Metric) -> Vec<f64> {
    let mut s = step;
    let mut shrink = 1.0 - 4.0 * machine_epsilon();
    loop {
        let y: Vec<f64> = target.iter().zip(u).map(|(t, v)| t + s * v).collect();
        if metric.eval(target, &y) <= bound {
            return y;
        }
        // near the floor rounding of the coordinates dominates; back off faster
        s *= shrink;
        shrink = (2.0 * shrink - 1.0).max(0.5);
    }
}

/// Terms `x_n` with `d(x_n, target) <= r_0 * q^n`, ending at `max_len` or
/// once the offset falls below the representability floor.
pub fn generate_sequence(gen: &SequenceGenerator, target: &Point, metric: &Metric) -> Result<Vec<Point>> {
    let q = gen.ratio;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidInput(format!("ratio must lie in (0, 1), got {q}")));
    }
    let floor = representability_floor(target.coords(), DEFAULT_K);
    let r0 = gen.initial_offset;
    if !r0.is_finite() || r0 <= floor {
        return Err(Error::DegenerateRadius { radius: r0, floor });
    }
    let n = target.dim();
    let t = target.coords();
    let mut rng = gen.stream.rng();
    let plane = match gen.kind {
        GeneratorKind::Spiral { .. } if n >= 2 => Some(random_plane(&mut rng, n)),
        _ => None,
    };
    let fixed = match &gen.kind {
        GeneratorKind::Radial { direction } => {
            if direction.len() != n {
                return Err(Error::Dimension { expected: n, got: direction.len() });
            }
            let norm = metric.norm(direction);
            if !(norm.is_finite() && norm > 0.0) {
                return Err(Error::InvalidInput("radial direction must be non-zero".into()));
            }
            Some(direction.iter().map(|d| d / norm).collect::<Vec<f64>>())
        }
        GeneratorKind::LatticeWalk => {
            return Err(Error::NotSupported("lattice walks need a finite support; use lattice_walk".into()))
        }
        _ => None,
    };

    let mut out = Vec::with_capacity(gen.max_len);
    let mut bound = r0;
    for k in 0..gen.max_len {
        if bound < floor {
            break;
        }
        let (u, step) = match (&gen.kind, &fixed, &plane) {
            (_, Some(u), _) => (u.clone(), bound),
            (GeneratorKind::Spiral { angular_step }, _, Some((a, b))) => {
                let th = angular_step * k as f64;
                let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| th.cos() * x + th.sin() * y).collect();
                let norm = metric.norm(&v);
                (v.iter().map(|x| x / norm).collect(), bound)
            }
            // one dimension: the spiral alternates sides
            (GeneratorKind::Spiral { .. }, _, None) => (vec![if k % 2 == 0 { 1.0 } else { -1.0 }], bound),
            _ => {
                let v = gaussian(&mut rng, n);
                let norm = metric.norm(&v);
                let shrink: f64 = rng.gen_range(0.5..=1.0);
                (v.iter().map(|x| x / norm).collect(), bound * shrink)
            }
        };
        let y = place(t, &u, step, bound, metric);
        if y == t {
            break;
        }
        out.push(Point::new(y)?);
        bound *= q;
    }
    Ok(out)
}

/// Support points `s != target` with `d(s, target) < r0`, farthest first;
/// equal distances are ordered by coordinates.
pub fn lattice_walk(support: &[Point], target: &Point, r0: f64, metric: &Metric) -> Vec<Point> {
    let mut pts: Vec<(f64, &Point)> = support
        .iter()
        .filter(|s| *s != target)
        .map(|s| (metric.eval(target.coords(), s.coords()), s))
        .filter(|(d, _)| *d < r0)
        .collect();
    pts.sort_by(|a, b| {
        b.0.total_cmp(&a.0).then_with(|| {
            a.1.coords()
                .iter()
                .zip(b.1.coords())
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    pts.into_iter().map(|(_, p)| p.clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubseriesInfo {
    /// First index from which every term is retained.
    pub k0: Option<usize>,
    /// Indices of terms in the set and distinct from the target.
    pub indices: Vec<usize>,
    pub all_in_set: bool,
    pub terminal_distance: Option<f64>,
}

/// Terms of `seq` that lie in `set` and differ from `target`.
pub fn extract_subseries_in_set(seq: &[Point], set: &DomainSet, target: &Point, metric: &Metric) -> SubseriesInfo {
    extract_with(seq, target, metric, |i| set.contains_unchecked(&seq[i]))
}

fn extract_with(seq: &[Point], target: &Point, metric: &Metric, keep: impl Fn(usize) -> bool) -> SubseriesInfo {
    let retained: Vec<bool> = seq.iter().enumerate().map(|(i, p)| p != target && keep(i)).collect();
    let indices: Vec<usize> = (0..seq.len()).filter(|&i| retained[i]).collect();
    let k0 = match retained.iter().rposition(|r| !r) {
        None if !seq.is_empty() => Some(0),
        Some(i) if i + 1 < seq.len() => Some(i + 1),
        _ => None,
    };
    SubseriesInfo {
        k0,
        all_in_set: k0.is_some(),
        indices,
        terminal_distance: seq.last().map(|p| metric.eval(p.coords(), target.coords())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorOutcome {
    pub generator: String,
    pub terms: usize,
    pub subseries: SubseriesInfo,
    /// First term of a tail that never returns to the probe's set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rival: Option<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesVerdict {
    #[serde(flatten)]
    pub verdict: Verdict,
    /// Hypotheses under which the sub-series test decides stability are not
    /// established for this classifier.
    pub advisory: bool,
    pub generators: Vec<GeneratorOutcome>,
}

/// Sub-series stability test at `x` over the generator family `gens`.
///
/// Each generator starts at `r_0 = min(delta_start, clearance of x)` and its
/// terms are cut at the smallest radius the ball tester would use. On a
/// finite support only the lattice walk is run.
pub fn test_stability_via_series(
    c: &Classifier,
    x: &Point,
    gens: &[SequenceGenerator],
    cfg: &ProbeConfig,
    metric: &Metric,
    stream: RngStream,
) -> Result<SeriesVerdict> {
    cfg.validate()?;
    x.check_dim(c.space().dim())?;
    if gens.is_empty() {
        return Err(Error::InvalidInput("series test needs at least one generator".into()));
    }
    let home = c.locate(x)?;
    let advisory = !(c.sets().len() == 2 && c.sets().iter().any(DomainSet::is_open));
    let label = match home_label(c, home, x) {
        Ok(l) => l,
        Err(e) => {
            let verdict = Verdict::inconclusive(format!("label of the probe: {e}"), 1, vec![]);
            return Ok(SeriesVerdict { verdict, advisory, generators: vec![] });
        }
    };
    if let Some(support) = c.space().support() {
        return finite(c, x, home, &label, support, cfg, metric, advisory);
    }
    continuum(c, x, home, &label, gens, cfg, metric, stream, advisory)
}

#[allow(clippy::too_many_arguments)]
fn continuum(
    c: &Classifier,
    x: &Point,
    home: usize,
    label: &Label,
    gens: &[SequenceGenerator],
    cfg: &ProbeConfig,
    metric: &Metric,
    stream: RngStream,
    advisory: bool,
) -> Result<SeriesVerdict> {
    let lower = cfg.delta_min.max(cfg.floor_at(x));
    let threshold = cfg.threshold_at(x);
    let space = c.space();
    let r0 = match c.sets()[home].clearance(x, metric) {
        Some(cl) if cl >= lower => cfg.delta_start.min(cl),
        _ => cfg.delta_start,
    };

    let mut outcomes = Vec::with_capacity(gens.len());
    let mut used = 0u64;
    let mut refutation: Option<(Point, Clause)> = None;
    let mut unknown: Option<String> = None;
    let mut certified = f64::INFINITY;
    for (g, gen) in gens.iter().enumerate() {
        if gen.kind == GeneratorKind::LatticeWalk {
            continue;
        }
        let mut gen = gen.clone();
        gen.initial_offset = r0;
        gen.stream = stream.substream(g as u64);
        let seq: Vec<Point> = generate_sequence(&gen, x, metric)?
            .into_iter()
            .filter(|p| {
                let d = metric.eval(x.coords(), p.coords());
                d >= lower && threshold.is_none_or(|t| d > t) && space.contains(p)
            })
            .collect();
        used += seq.len() as u64;
        let judged: Vec<Judgement> = seq.iter().map(|p| judge(c, home, label, p)).collect();
        if let Some(Judgement::Unknown(e)) = judged.iter().find(|j| matches!(j, Judgement::Unknown(_))) {
            unknown.get_or_insert(e.clone());
        }
        let sub = extract_with(&seq, x, metric, |i| judged[i] == Judgement::Clean);
        let rival = match sub.k0 {
            Some(k0) => {
                certified = certified.min(metric.eval(x.coords(), seq[k0].coords()).next_up());
                None
            }
            None => {
                // the tail after the last retained term never returns
                let start = sub.indices.last().map_or(0, |i| i + 1);
                seq.get(start).map(|w| (w.clone(), &judged[start]))
            }
        };
        if let Some((w, Judgement::Violation(cl))) = &rival {
            refutation.get_or_insert((w.clone(), *cl));
        }
        outcomes.push(GeneratorOutcome {
            generator: gen.name(),
            terms: seq.len(),
            subseries: sub,
            rival: rival.map(|(w, _)| w),
        });
    }

    let trace = vec![RadiusRecord { radius: r0, clean: refutation.is_none(), witness: None, clause: None }];
    let verdict = if let Some((w, clause)) = refutation {
        let radius = metric.eval(x.coords(), w.coords()).next_up();
        Verdict {
            outcome: Outcome::Unstable { witness: w, clause, radius },
            trusted: true,
            approximate: false,
            probes_used: used,
            trace,
        }
    } else if let Some(e) = unknown {
        Verdict::inconclusive(e, used, trace)
    } else if outcomes.is_empty() || !certified.is_finite() {
        Verdict::inconclusive("no generator produced terms above the resolution floor", used, trace)
    } else {
        Verdict {
            outcome: Outcome::Stable { certified_delta: certified.min(r0) },
            trusted: true,
            approximate: true,
            probes_used: used,
            trace,
        }
    };
    Ok(SeriesVerdict { verdict, advisory, generators: outcomes })
}

/// Lattice walk from `delta_start` inward. The last rival term fixes the
/// largest clean radius; the walk's final term is the nearest neighbor.
#[allow(clippy::too_many_arguments)]
fn finite(
    c: &Classifier,
    x: &Point,
    home: usize,
    label: &Label,
    support: &[Point],
    cfg: &ProbeConfig,
    metric: &Metric,
    advisory: bool,
) -> Result<SeriesVerdict> {
    if !support.iter().any(|s| s == x) {
        return Err(Error::InvalidProbe(format!("{x} is not a support point")));
    }
    let start = cfg.delta_start;
    let walk = lattice_walk(support, x, start, metric);
    let judged: Vec<Judgement> = walk.iter().map(|p| judge(c, home, label, p)).collect();
    let used = walk.len() as u64;
    if let Some(Judgement::Unknown(e)) = judged.iter().find(|j| matches!(j, Judgement::Unknown(_))) {
        let verdict = Verdict::inconclusive(e.clone(), used, vec![]);
        return Ok(SeriesVerdict { verdict, advisory, generators: vec![] });
    }
    let sub = extract_with(&walk, x, metric, |i| judged[i] == Judgement::Clean);
    let last_rival = (0..walk.len()).rev().find(|&i| judged[i] != Judgement::Clean);
    let rival = last_rival.map(|i| walk[i].clone());
    let outcome_row = GeneratorOutcome { generator: "lattice_walk".into(), terms: walk.len(), subseries: sub, rival };

    let delta = last_rival.map_or(start, |i| metric.eval(x.coords(), walk[i].coords()));
    let nearest = walk.last().map_or(f64::INFINITY, |p| metric.eval(x.coords(), p.coords()));
    let lower = cfg.delta_min.max(cfg.floor_at(x));
    let threshold = cfg.threshold_at(x);
    let trace = vec![RadiusRecord { radius: delta, clean: true, witness: None, clause: None }];
    let exact =
        |outcome| Verdict { outcome, trusted: true, approximate: false, probes_used: used, trace: trace.clone() };

    let too_small = delta < cfg.delta_min || threshold.is_some_and(|t| delta <= t);
    let verdict = if threshold.is_some_and(|t| start <= t) {
        Verdict::inconclusive("delta_start lies at or below the resolution", used, trace.clone())
    } else if let Some(i) = last_rival.filter(|_| too_small) {
        let Judgement::Violation(clause) = judged[i] else { unreachable!("rival terms are violations") };
        exact(Outcome::Unstable { witness: walk[i].clone(), clause, radius: delta.next_up() })
    } else {
        let non_isolated = match cfg.mode {
            Mode::Strict => nearest < lower,
            Mode::Resolution { .. } => nearest <= threshold.expect("resolution mode"),
        };
        if non_isolated {
            exact(Outcome::Stable { certified_delta: delta })
        } else {
            let radius = nearest.min(delta);
            exact(Outcome::Unstable { witness: x.clone(), clause: Clause::Isolation, radius })
        }
    };
    Ok(SeriesVerdict { verdict, advisory, generators: vec![outcome_row] })
}
