//! Points, metrics, neighborhoods and seeded sampling inside balls.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::precision::{representability_floor, DEFAULT_K};

/// A point of `R^n` with finite coordinates. Negative zero is normalized to
/// positive zero so that equality coincides with bitwise equality.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidPoint("a point needs at least one coordinate".into()));
        }
        if let Some(bad) = coords.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidPoint(format!("non-finite coordinate {bad}")));
        }
        Ok(Self(coords.into_iter().map(|c| c + 0.0).collect()))
    }

    /// Builds a point from coordinates already known to be finite.
    ///
    /// # Panics
    /// Panics on empty or non-finite input.
    pub fn from_slice(coords: &[f64]) -> Self {
        Self::new(coords.to_vec()).expect("finite, non-empty coordinates")
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm_inf(&self) -> f64 {
        self.0.iter().fold(0.0f64, |m, c| m.max(c.abs()))
    }

    pub(crate) fn bit_key(&self) -> Vec<u64> {
        self.0.iter().map(|c| c.to_bits()).collect()
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::Dimension { expected: dim, got: self.dim() })
        }
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Point").field(&self.0).finish()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// User-supplied distance function. Axioms are only spot-checked.
#[derive(Clone)]
pub struct CustomMetric {
    name: String,
    f: Arc<DistanceFn>,
}

type DistanceFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;

impl CustomMetric {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { name: name.into(), f: Arc::new(f) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Clone)]
pub enum Metric {
    L1,
    L2,
    Linf,
    Custom(CustomMetric),
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::L1 => write!(f, "L1"),
            Metric::L2 => write!(f, "L2"),
            Metric::Linf => write!(f, "Linf"),
            Metric::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl PartialEq for Metric {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Metric::L1, Metric::L1) | (Metric::L2, Metric::L2) | (Metric::Linf, Metric::Linf) => true,
            (Metric::Custom(a), Metric::Custom(b)) => Arc::ptr_eq(&a.f, &b.f),
            _ => false,
        }
    }
}

impl Metric {
    pub fn is_builtin(&self) -> bool {
        !matches!(self, Metric::Custom(_))
    }

    pub fn name(&self) -> &str {
        match self {
            Metric::L1 => "l1",
            Metric::L2 => "l2",
            Metric::Linf => "linf",
            Metric::Custom(c) => &c.name,
        }
    }

    /// Distance between raw coordinate slices of equal length.
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), b.len());
        match self {
            Metric::L1 => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
            Metric::Linf => a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs())),
            Metric::L2 => {
                // scaled to avoid underflow of tiny differences
                let scale = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
                if scale == 0.0 {
                    return 0.0;
                }
                let s: f64 = a
                    .iter()
                    .zip(b)
                    .map(|(x, y)| {
                        let t = (x - y) / scale;
                        t * t
                    })
                    .sum();
                scale * s.sqrt()
            }
            Metric::Custom(c) => (c.f)(a, b),
        }
    }

    /// Norm of a displacement vector under this metric.
    pub fn norm(&self, v: &[f64]) -> f64 {
        let zero = vec![0.0; v.len()];
        self.eval(&zero, v)
    }
}

/// Distance between two points of equal dimension.
pub fn distance(metric: &Metric, p: &Point, q: &Point) -> Result<f64> {
    q.check_dim(p.dim())?;
    Ok(metric.eval(p.coords(), q.coords()))
}

/// Closed axis-aligned box bounding the ambient space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Bounds {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("bounds need matching, non-empty lo/hi".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite() && l <= h) {
                return Err(Error::InvalidInput(format!("bad bounds interval [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        c.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (l, h))| l <= x && x <= h)
    }
}

/// The ambient metric space: `R^dim`, optionally clipped to a box and
/// optionally reduced to a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct Space {
    dim: usize,
    bounds: Option<Bounds>,
    support: Option<Arc<Vec<Point>>>,
    coverage_declared: bool,
}

impl Space {
    pub fn euclidean(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        Ok(Self { dim, bounds: None, support: None, coverage_declared: false })
    }

    pub fn bounded(bounds: Bounds) -> Self {
        Self { dim: bounds.dim(), bounds: Some(bounds), support: None, coverage_declared: false }
    }

    /// Finite metric space. Points must be pairwise distinct and inside `bounds` when given.
    pub fn finite(support: Vec<Point>, bounds: Option<Bounds>) -> Result<Self> {
        let dim = support
            .first()
            .map(Point::dim)
            .ok_or_else(|| Error::InvalidInput("finite support must be non-empty".into()))?;
        let mut seen = HashSet::with_capacity(support.len());
        for p in &support {
            p.check_dim(dim)?;
            if let Some(b) = &bounds {
                if b.dim() != dim {
                    return Err(Error::Dimension { expected: dim, got: b.dim() });
                }
                if !b.contains(p.coords()) {
                    return Err(Error::InvalidInput(format!("support point {p} lies outside the bounds")));
                }
            }
            if !seen.insert(p.bit_key()) {
                return Err(Error::InvalidInput(format!("duplicate support point {p}")));
            }
        }
        Ok(Self { dim, bounds, support: Some(Arc::new(support)), coverage_declared: false })
    }

    /// Marks the space as the union of the classification sets.
    pub fn with_coverage(mut self, declared: bool) -> Self {
        self.coverage_declared = declared;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bounds(&self) -> Option<&Bounds> {
        self.bounds.as_ref()
    }

    pub fn support(&self) -> Option<&[Point]> {
        self.support.as_deref().map(Vec::as_slice)
    }

    pub fn coverage_declared(&self) -> bool {
        self.coverage_declared
    }

    /// Whether a point of `R^dim` belongs to the space.
    pub fn contains(&self, p: &Point) -> bool {
        if p.dim() != self.dim {
            return false;
        }
        if let Some(b) = &self.bounds {
            if !b.contains(p.coords()) {
                return false;
            }
        }
        match &self.support {
            Some(s) => s.iter().any(|q| q == p),
            None => true,
        }
    }

    /// Diameter under `metric`: the bounds diagonal, else the support's
    /// largest pairwise distance, else `None` for an unbounded continuum.
    pub fn diameter(&self, metric: &Metric) -> Option<f64> {
        if let Some(b) = &self.bounds {
            return Some(metric.eval(&b.lo, &b.hi));
        }
        let s = self.support.as_ref()?;
        let mut d = 0.0f64;
        for (i, p) in s.iter().enumerate() {
            for q in &s[i + 1..] {
                d = d.max(metric.eval(p.coords(), q.coords()));
            }
        }
        Some(d)
    }
}

/// A reproducible random stream: `(master_seed, stream_index)` fixes the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    /// A fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }

    /// Child stream keyed by `key`; pure in `(self, key)`.
    pub fn substream(&self, key: u64) -> RngStream {
        RngStream { master_seed: self.master_seed, stream_index: splitmix64(self.stream_index ^ splitmix64(key)) }
    }
}

pub fn derive_rng_stream(master_seed: u64, index: u64) -> RngStream {
    RngStream { master_seed, stream_index: index }
}

const MAX_DRAWS_PER_POINT: usize = 10_000;

/// Draws `count` points uniformly from the open ball `B(center, radius)`.
///
/// Every point is strictly inside the ball and differs from the center.
pub fn sample_ball(center: &Point, radius: f64, count: usize, metric: &Metric, rng: &RngStream) -> Result<Vec<Point>> {
    sample_ball_where(center, radius, count, metric, rng, |_| true)
}

/// [`sample_ball`] restricted to points accepted by `keep` (e.g. the ambient bounds).
pub(crate) fn sample_ball_where(
    center: &Point,
    radius: f64,
    count: usize,
    metric: &Metric,
    stream: &RngStream,
    keep: impl Fn(&Point) -> bool,
) -> Result<Vec<Point>> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidInput(format!("radius must be positive, got {radius}")));
    }
    if count == 0 {
        return Err(Error::InvalidInput("count must be at least 1".into()));
    }
    let floor = representability_floor(center.coords(), DEFAULT_K);
    if radius < floor {
        return Err(Error::DegenerateRadius { radius, floor });
    }

    let n = center.dim();
    let c = center.coords();
    let mut rng = stream.rng();
    let mut out = Vec::with_capacity(count);
    let mut buf = vec![0.0; n];
    let mut draws = 0usize;
    while out.len() < count {
        if draws >= MAX_DRAWS_PER_POINT * count {
            return Err(Error::DegenerateRadius { radius, floor });
        }
        draws += 1;
        match metric {
            Metric::L2 => {
                let mut norm2 = 0.0;
                for b in buf.iter_mut() {
                    let g: f64 = rng.sample(StandardNormal);
                    *b = g;
                    norm2 += g * g;
                }
                if norm2 == 0.0 {
                    continue;
                }
                let u: f64 = rng.gen();
                let r = radius * u.powf(1.0 / n as f64) / norm2.sqrt();
                for (b, ci) in buf.iter_mut().zip(c) {
                    *b = ci + *b * r;
                }
            }
            _ => {
                // accept-reject inside the circumscribing box
                for (b, ci) in buf.iter_mut().zip(c) {
                    *b = ci + radius * (2.0 * rng.gen::<f64>() - 1.0);
                }
            }
        }
        if buf.iter().any(|x| !x.is_finite()) || buf.as_slice() == c {
            continue;
        }
        if metric.eval(c, &buf) >= radius {
            continue;
        }
        let p = Point::new(buf.clone())?;
        if keep(&p) {
            out.push(p);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::from_slice(c)
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance(&Metric::L2, &pt(&[0.0, 0.0]), &pt(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(distance(&Metric::Linf, &pt(&[1.0, 2.0]), &pt(&[1.0, 2.0])).unwrap(), 0.0);
        let d = distance(&Metric::L1, &pt(&[0.1, 0.2]), &pt(&[0.4, -0.2])).unwrap();
        // |0.1 - 0.4| + |0.2 + 0.2| evaluated term by term
        assert_eq!(d, (0.1f64 - 0.4).abs() + (0.2f64 - -0.2).abs());
        assert!((d - 0.7).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        let e = distance(&Metric::L2, &pt(&[0.0]), &pt(&[0.0, 1.0])).unwrap_err();
        assert_eq!(e, Error::Dimension { expected: 1, got: 2 });
    }

    #[test]
    fn point_rejects_non_finite_and_normalizes_zero() {
        assert!(Point::new(vec![f64::NAN]).is_err());
        assert!(Point::new(vec![]).is_err());
        let p = pt(&[-0.0]);
        assert_eq!(p.coords()[0].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn l2_tiny_difference_is_nonzero() {
        let d = Metric::L2.eval(&[0.0, 0.0], &[1e-200, 0.0]);
        assert_eq!(d, 1e-200);
    }

    #[test]
    fn sample_ball_inside_and_deterministic() {
        let c = pt(&[0.0, 0.0]);
        let s = derive_rng_stream(7, 3);
        let a = sample_ball(&c, 1.0, 64, &Metric::L2, &s).unwrap();
        assert_eq!(a.len(), 64);
        assert!(a.iter().all(|p| Metric::L2.eval(c.coords(), p.coords()) < 1.0));
        let b = sample_ball(&c, 1.0, 64, &Metric::L2, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_ball_other_metrics() {
        let c = pt(&[1.0, -2.0, 0.5]);
        for m in [Metric::L1, Metric::Linf] {
            let pts = sample_ball(&c, 0.25, 100, &m, &derive_rng_stream(1, 1)).unwrap();
            assert!(pts.iter().all(|p| m.eval(c.coords(), p.coords()) < 0.25 && *p != c));
        }
    }

    #[test]
    fn degenerate_radius() {
        // 1 + 1e-320 == 1 in binary64, so no neighbor of (1, 1) is that close
        assert_eq!(1.0 + 1e-320, 1.0);
        let e = sample_ball(&pt(&[1.0, 1.0]), 1e-320, 4, &Metric::L2, &derive_rng_stream(0, 0)).unwrap_err();
        assert!(matches!(e, Error::DegenerateRadius { .. }));
    }

    #[test]
    fn near_floor_radius_still_yields_distinct_points() {
        let c = pt(&[1.0, 1.0]);
        let r = representability_floor(c.coords(), DEFAULT_K);
        let pts = sample_ball(&c, r, 16, &Metric::L2, &derive_rng_stream(0, 9)).unwrap();
        assert!(pts.iter().all(|p| *p != c && Metric::L2.eval(c.coords(), p.coords()) < r));
    }

    #[test]
    fn streams_differ_by_index_and_seed() {
        let first = |s: RngStream| s.rng().gen::<u64>();
        assert_eq!(first(derive_rng_stream(42, 0)), first(derive_rng_stream(42, 0)));
        assert_ne!(first(derive_rng_stream(42, 0)), first(derive_rng_stream(42, 1)));
        assert_ne!(first(derive_rng_stream(41, 0)), first(derive_rng_stream(42, 0)));
    }

    #[test]
    fn finite_space_validation() {
        assert!(Space::finite(vec![pt(&[0.0]), pt(&[0.0])], None).is_err());
        let b = Bounds::new(vec![0.0], vec![1.0]).unwrap();
        assert!(Space::finite(vec![pt(&[2.0])], Some(b)).is_err());
        let s = Space::finite(vec![pt(&[0.0]), pt(&[0.25]), pt(&[1.0])], None).unwrap();
        assert_eq!(s.diameter(&Metric::L2), Some(1.0));
        assert!(s.contains(&pt(&[0.25])));
        assert!(!s.contains(&pt(&[0.5])));
    }
}
