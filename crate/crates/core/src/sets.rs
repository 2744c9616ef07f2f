//! Classification sets: membership, nearest-member queries and density at a
//! fixed resolution.

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, sample_ball, Metric, Point};
use crate::precision::machine_epsilon;
use crate::stability::ProbeConfig;

/// Relative tolerance (in units of the spacing) within which a coordinate
/// snaps onto a lattice node.
pub const LATTICE_SNAP: f64 = 1e-9;

/// Node budget for lattice searches and enumerations.
const LATTICE_BUDGET: usize = 2_000_000;

/// Axis-aligned box with a per-face open/closed flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub lo_closed: Vec<bool>,
    pub hi_closed: Vec<bool>,
}

impl AxisBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>, lo_closed: Vec<bool>, hi_closed: Vec<bool>) -> Result<Self> {
        let n = lo.len();
        if n == 0 || hi.len() != n || lo_closed.len() != n || hi_closed.len() != n {
            return Err(Error::InvalidInput("box fields must share one non-zero length".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l.is_finite() && h.is_finite()) || l > h {
                return Err(Error::InvalidInput(format!("box needs finite lo <= hi, got [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi, lo_closed, hi_closed })
    }

    pub fn closed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = lo.len();
        Self::new(lo, hi, vec![true; n], vec![true; n])
    }

    pub fn open(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        let n = lo.len();
        Self::new(lo, hi, vec![false; n], vec![false; n])
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        (0..self.dim()).all(|i| {
            let x = c[i];
            (x > self.lo[i] || (self.lo_closed[i] && x == self.lo[i]))
                && (x < self.hi[i] || (self.hi_closed[i] && x == self.hi[i]))
        })
    }

    pub fn is_empty(&self) -> bool {
        (0..self.dim()).any(|i| self.lo[i] == self.hi[i] && !(self.lo_closed[i] && self.hi_closed[i]))
    }

    pub fn is_open(&self) -> bool {
        self.lo_closed.iter().chain(&self.hi_closed).all(|c| !c)
    }

    pub fn is_closed(&self) -> bool {
        self.lo_closed.iter().chain(&self.hi_closed).all(|c| *c)
    }

    fn clamp(&self, c: &[f64]) -> Vec<f64> {
        c.iter().enumerate().map(|(i, x)| x.clamp(self.lo[i], self.hi[i])).collect()
    }

    /// Nearest member; open faces are approached from inside by one ulp.
    fn project(&self, c: &[f64]) -> Option<Vec<f64>> {
        if self.is_empty() {
            return None;
        }
        let mut y = self.clamp(c);
        for (i, yi) in y.iter_mut().enumerate() {
            if *yi == self.lo[i] && !self.lo_closed[i] {
                *yi = yi.next_up();
            }
            if *yi == self.hi[i] && !self.hi_closed[i] {
                *yi = yi.next_down();
            }
        }
        self.contains(&y).then_some(y)
    }

    /// Distance from an interior point to the nearest face.
    fn clearance(&self, c: &[f64]) -> f64 {
        (0..self.dim()).fold(f64::INFINITY, |m, i| m.min(c[i] - self.lo[i]).min(self.hi[i] - c[i]))
    }

    /// Points just outside each face, nearest first.
    fn exits(&self, c: &[f64]) -> Vec<(f64, Vec<f64>)> {
        let mut out = Vec::with_capacity(2 * self.dim());
        for i in 0..self.dim() {
            let lo = if self.lo_closed[i] { self.lo[i].next_down() } else { self.lo[i] };
            let hi = if self.hi_closed[i] { self.hi[i].next_up() } else { self.hi[i] };
            for t in [lo, hi] {
                let mut y = c.to_vec();
                y[i] = t;
                out.push(((c[i] - t).abs(), y));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }

    /// A point in both boxes, if they intersect.
    pub fn intersection_witness(&self, other: &AxisBox) -> Option<Vec<f64>> {
        let mut w = Vec::with_capacity(self.dim());
        for i in 0..self.dim() {
            let (lo, lo_closed) = match self.lo[i].total_cmp(&other.lo[i]) {
                std::cmp::Ordering::Greater => (self.lo[i], self.lo_closed[i]),
                std::cmp::Ordering::Less => (other.lo[i], other.lo_closed[i]),
                std::cmp::Ordering::Equal => (self.lo[i], self.lo_closed[i] && other.lo_closed[i]),
            };
            let (hi, hi_closed) = match self.hi[i].total_cmp(&other.hi[i]) {
                std::cmp::Ordering::Less => (self.hi[i], self.hi_closed[i]),
                std::cmp::Ordering::Greater => (other.hi[i], other.hi_closed[i]),
                std::cmp::Ordering::Equal => (self.hi[i], self.hi_closed[i] && other.hi_closed[i]),
            };
            if lo < hi {
                let mid = 0.5 * (lo + hi);
                w.push(if mid > lo && mid < hi {
                    mid
                } else if lo_closed {
                    lo
                } else {
                    hi
                });
            } else if lo == hi && lo_closed && hi_closed {
                w.push(lo);
            } else {
                return None;
            }
        }
        Some(w)
    }
}

/// Which lattice indices belong to the set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IndexPredicate {
    All,
    /// Parity of the index sum.
    Parity {
        even: bool,
    },
    /// `sum(k) mod modulus == residue`.
    Modulo {
        modulus: i64,
        residue: i64,
    },
    /// `min <= k[axis] <= max`.
    Range {
        axis: usize,
        min: i64,
        max: i64,
    },
}

impl IndexPredicate {
    pub fn admits(&self, k: &[i64]) -> bool {
        match self {
            IndexPredicate::All => true,
            IndexPredicate::Parity { even } => (k.iter().sum::<i64>().rem_euclid(2) == 0) == *even,
            IndexPredicate::Modulo { modulus, residue } => {
                k.iter().sum::<i64>().rem_euclid(*modulus) == residue.rem_euclid(*modulus)
            }
            IndexPredicate::Range { axis, min, max } => k.get(*axis).is_some_and(|v| min <= v && v <= max),
        }
    }
}

/// Nodes `origin + spacing * k`, optionally bounded per axis and filtered by an index predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub origin: Vec<f64>,
    pub spacing: f64,
    #[serde(default)]
    pub index_min: Option<Vec<i64>>,
    #[serde(default)]
    pub index_max: Option<Vec<i64>>,
    #[serde(default = "default_predicate")]
    pub predicate: IndexPredicate,
}

fn default_predicate() -> IndexPredicate {
    IndexPredicate::All
}

impl Lattice {
    pub fn new(origin: Vec<f64>, spacing: f64) -> Result<Self> {
        let l = Self { origin, spacing, index_min: None, index_max: None, predicate: IndexPredicate::All };
        l.validate()?;
        Ok(l)
    }

    pub fn with_index_range(mut self, min: Vec<i64>, max: Vec<i64>) -> Result<Self> {
        self.index_min = Some(min);
        self.index_max = Some(max);
        self.validate()?;
        Ok(self)
    }

    pub fn with_predicate(mut self, predicate: IndexPredicate) -> Result<Self> {
        self.predicate = predicate;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.origin.len();
        if n == 0 || self.origin.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("lattice origin must be finite and non-empty".into()));
        }
        if !(self.spacing.is_finite() && self.spacing > 0.0) {
            return Err(Error::InvalidInput(format!("lattice spacing must be positive, got {}", self.spacing)));
        }
        for b in [&self.index_min, &self.index_max].into_iter().flatten() {
            if b.len() != n {
                return Err(Error::Dimension { expected: n, got: b.len() });
            }
        }
        match &self.predicate {
            IndexPredicate::Modulo { modulus, .. } if *modulus <= 0 => {
                Err(Error::InvalidInput("lattice modulus must be positive".into()))
            }
            IndexPredicate::Range { axis, .. } if *axis >= n => {
                Err(Error::InvalidInput(format!("range axis {axis} out of bounds for dimension {n}")))
            }
            _ => Ok(()),
        }
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn node(&self, k: &[i64]) -> Vec<f64> {
        self.origin.iter().zip(k).map(|(o, ki)| o + self.spacing * *ki as f64).collect()
    }

    fn in_range(&self, k: &[i64]) -> bool {
        let lo_ok = self.index_min.as_ref().is_none_or(|m| k.iter().zip(m).all(|(a, b)| a >= b));
        let hi_ok = self.index_max.as_ref().is_none_or(|m| k.iter().zip(m).all(|(a, b)| a <= b));
        lo_ok && hi_ok
    }

    pub fn admits(&self, k: &[i64]) -> bool {
        self.in_range(k) && self.predicate.admits(k)
    }

    /// Index of the node `c` snaps to, if any.
    pub fn index_of(&self, c: &[f64]) -> Option<Vec<i64>> {
        let tol = LATTICE_SNAP * self.spacing;
        let k: Vec<i64> = c.iter().zip(&self.origin).map(|(x, o)| ((x - o) / self.spacing).round() as i64).collect();
        let node = self.node(&k);
        node.iter().zip(c).all(|(a, b)| (a - b).abs() <= tol).then_some(k)
    }

    pub fn contains(&self, c: &[f64]) -> bool {
        self.index_of(c).is_some_and(|k| self.admits(&k))
    }

    fn is_empty(&self) -> bool {
        match (&self.index_min, &self.index_max) {
            (Some(lo), Some(hi)) => lo.iter().zip(hi).any(|(a, b)| a > b),
            _ => false,
        }
    }

    fn center_index(&self, c: &[f64]) -> Vec<i64> {
        (0..self.dim())
            .map(|i| {
                let t = ((c[i] - self.origin[i]) / self.spacing).round();
                let mut k = if t.is_finite() { t as i64 } else { 0 };
                if let Some(m) = &self.index_min {
                    k = k.max(m[i]);
                }
                if let Some(m) = &self.index_max {
                    k = k.min(m[i]);
                }
                k
            })
            .collect()
    }

    /// Nearest admitted node to `c`, skipping the node bitwise equal to `exclude`.
    ///
    /// Searches index shells of growing Chebyshev radius around the rounded
    /// index; every node in shell `R + 1` is at least `(R + 1/2) * spacing`
    /// away under L1, L2 and Linf, which bounds the search.
    pub fn nearest(&self, c: &[f64], metric: &Metric, exclude: Option<&[f64]>) -> Result<(Vec<f64>, f64)> {
        if !metric.is_builtin() {
            return Err(Error::NotSupported("lattice nearest-node search needs a built-in metric".into()));
        }
        if self.is_empty() {
            return Err(Error::EmptySet("lattice".into()));
        }
        let n = self.dim();
        let center = self.center_index(c);
        let mut best: Option<(Vec<f64>, f64)> = None;
        let mut visited = 0usize;
        let mut radius: i64 = 0;
        loop {
            let mut any_in_range = false;
            for_each_shell(n, radius, |off| {
                let k: Vec<i64> = center.iter().zip(off).map(|(a, b)| a + b).collect();
                if !self.in_range(&k) {
                    return;
                }
                any_in_range = true;
                visited += 1;
                if !self.predicate.admits(&k) {
                    return;
                }
                let node = self.node(&k);
                if exclude.is_some_and(|e| e == node.as_slice()) {
                    return;
                }
                let d = metric.eval(c, &node);
                if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                    best = Some((node, d));
                }
            });
            if let Some((_, d)) = &best {
                if *d <= (radius as f64 + 0.5) * self.spacing {
                    break;
                }
            }
            if !any_in_range && radius > 0 && self.index_min.is_some() && self.index_max.is_some() {
                // shell left the bounded index box entirely
                break;
            }
            if visited > LATTICE_BUDGET {
                return Err(Error::NotSupported("lattice search budget exhausted".into()));
            }
            radius += 1;
        }
        best.ok_or_else(|| Error::EmptySet("lattice".into()))
    }

    /// All admitted nodes of a bounded lattice, or `None` if unbounded or too large.
    pub fn enumerate(&self) -> Option<Vec<Vec<f64>>> {
        let (lo, hi) = (self.index_min.as_ref()?, self.index_max.as_ref()?);
        let mut total: usize = 1;
        for (a, b) in lo.iter().zip(hi) {
            if a > b {
                return Some(Vec::new());
            }
            total = total.checked_mul((b - a + 1) as usize)?;
        }
        if total > LATTICE_BUDGET {
            return None;
        }
        let mut out = Vec::new();
        let mut k = lo.clone();
        loop {
            if self.predicate.admits(&k) {
                out.push(self.node(&k));
            }
            let mut axis = 0;
            loop {
                if axis == k.len() {
                    return Some(out);
                }
                if k[axis] < hi[axis] {
                    k[axis] += 1;
                    break;
                }
                k[axis] = lo[axis];
                axis += 1;
            }
        }
    }
}

/// Calls `f` for every integer offset with Chebyshev norm exactly `r`.
fn for_each_shell(n: usize, r: i64, mut f: impl FnMut(&[i64])) {
    let mut off = vec![-r; n];
    loop {
        if off.iter().any(|v| v.abs() == r) {
            f(&off);
        }
        let mut axis = 0;
        loop {
            if axis == n {
                return;
            }
            if off[axis] < r {
                off[axis] += 1;
                break;
            }
            off[axis] = -r;
            axis += 1;
        }
    }
}

#[derive(Clone)]
pub struct FiniteSet {
    points: Vec<Point>,
    index: HashSet<Vec<u64>>,
}

impl FiniteSet {
    pub fn points(&self) -> &[Point] {
        &self.points
    }
}

#[derive(Clone)]
pub struct BallSet {
    pub center: Point,
    pub radius: f64,
    pub closed: bool,
    pub metric: Metric,
}

impl BallSet {
    fn contains(&self, c: &[f64]) -> bool {
        let d = self.metric.eval(self.center.coords(), c);
        d < self.radius || (self.closed && d == self.radius)
    }

    /// The Linf ball as a box, for cross-metric queries.
    fn as_box(&self) -> Option<AxisBox> {
        if self.metric != Metric::Linf {
            return None;
        }
        let lo = self.center.coords().iter().map(|c| c - self.radius).collect();
        let hi = self.center.coords().iter().map(|c| c + self.radius).collect();
        let n = self.center.dim();
        AxisBox::new(lo, hi, vec![self.closed; n], vec![self.closed; n]).ok()
    }

    /// Point at metric distance `t * radius` from the center along `p - center`.
    fn radial(&self, p: &[f64], t: f64) -> Vec<f64> {
        let c = self.center.coords();
        let mut v: Vec<f64> = p.iter().zip(c).map(|(a, b)| a - b).collect();
        let mut norm = self.metric.norm(&v);
        if norm == 0.0 {
            v = vec![0.0; c.len()];
            v[0] = 1.0;
            norm = self.metric.norm(&v);
        }
        let s = t * self.radius / norm;
        c.iter().zip(&v).map(|(ci, vi)| ci + vi * s).collect()
    }
}

type MembershipFn = Arc<dyn Fn(&Point) -> bool + Send + Sync>;
type MemberSampler = Arc<dyn Fn(&Point, f64) -> Option<Point> + Send + Sync>;

/// Membership oracle. The optional sampler proposes a member within a ball
/// (`center`, `radius`) and is trusted when it reports none.
#[derive(Clone)]
pub struct PredicateSet {
    contains: MembershipFn,
    sampler: Option<MemberSampler>,
}

#[derive(Clone)]
pub enum Shape {
    Finite(FiniteSet),
    BoxUnion(Vec<AxisBox>),
    Ball(BallSet),
    Lattice(Lattice),
    Predicate(PredicateSet),
    /// Everything in `R^n` outside the inner set.
    Complement(Box<DomainSet>),
}

/// One classification set.
#[derive(Clone)]
pub struct DomainSet {
    id: String,
    dim: usize,
    shape: Shape,
}

impl fmt::Debug for DomainSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DomainSet({}: {})", self.id, self.kind_name())
    }
}

fn metric_err(what: &str, metric: &Metric) -> Error {
    Error::NotSupported(format!("{what} under metric `{}`", metric.name()))
}

/// Nearest float neighbors of `c` (one coordinate stepped by one ulp) that satisfy `keep`.
fn nearest_neighbor_float(c: &[f64], metric: &Metric, keep: impl Fn(&[f64]) -> bool) -> Option<(Vec<f64>, f64)> {
    let mut best: Option<(Vec<f64>, f64)> = None;
    for i in 0..c.len() {
        for t in [c[i].next_up(), c[i].next_down()] {
            if !t.is_finite() {
                continue;
            }
            let mut y = c.to_vec();
            y[i] = t;
            if keep(&y) {
                let d = metric.eval(c, &y);
                if best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                    best = Some((y, d));
                }
            }
        }
    }
    best
}

impl DomainSet {
    pub fn finite(id: impl Into<String>, points: Vec<Point>) -> Result<Self> {
        let id = id.into();
        let dim = points.first().map(Point::dim).ok_or_else(|| Error::EmptySet(id.clone()))?;
        let mut index = HashSet::with_capacity(points.len());
        for p in &points {
            p.check_dim(dim)?;
            if !index.insert(p.bit_key()) {
                return Err(Error::InvalidInput(format!("set `{id}` repeats point {p}")));
            }
        }
        Ok(Self { id, dim, shape: Shape::Finite(FiniteSet { points, index }) })
    }

    pub fn box_union(id: impl Into<String>, boxes: Vec<AxisBox>) -> Result<Self> {
        let id = id.into();
        let dim = boxes.first().map(AxisBox::dim).ok_or_else(|| Error::EmptySet(id.clone()))?;
        if let Some(b) = boxes.iter().find(|b| b.dim() != dim) {
            return Err(Error::Dimension { expected: dim, got: b.dim() });
        }
        Ok(Self { id, dim, shape: Shape::BoxUnion(boxes) })
    }

    pub fn ball(id: impl Into<String>, center: Point, radius: f64, closed: bool, metric: Metric) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidInput(format!("ball radius must be positive, got {radius}")));
        }
        let dim = center.dim();
        Ok(Self { id: id.into(), dim, shape: Shape::Ball(BallSet { center, radius, closed, metric }) })
    }

    pub fn lattice(id: impl Into<String>, lattice: Lattice) -> Result<Self> {
        lattice.validate()?;
        Ok(Self { id: id.into(), dim: lattice.dim(), shape: Shape::Lattice(lattice) })
    }

    pub fn predicate(
        id: impl Into<String>,
        dim: usize,
        contains: impl Fn(&Point) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            id: id.into(),
            dim,
            shape: Shape::Predicate(PredicateSet { contains: Arc::new(contains), sampler: None }),
        }
    }

    /// Attaches a member sampler to a predicate set; other variants are returned unchanged.
    pub fn with_sampler(mut self, sampler: impl Fn(&Point, f64) -> Option<Point> + Send + Sync + 'static) -> Self {
        if let Shape::Predicate(p) = &mut self.shape {
            p.sampler = Some(Arc::new(sampler));
        }
        self
    }

    pub fn complement(id: impl Into<String>, inner: DomainSet) -> Self {
        Self { id: id.into(), dim: inner.dim, shape: Shape::Complement(Box::new(inner)) }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn kind_name(&self) -> &'static str {
        match &self.shape {
            Shape::Finite(_) => "finite",
            Shape::BoxUnion(_) => "box_union",
            Shape::Ball(_) => "ball",
            Shape::Lattice(_) => "lattice",
            Shape::Predicate(_) => "predicate",
            Shape::Complement(_) => "complement",
        }
    }

    /// Membership is decided exactly (no opaque oracle involved).
    pub fn is_exact(&self) -> bool {
        match &self.shape {
            Shape::Predicate(_) => false,
            Shape::Complement(inner) => inner.is_exact(),
            _ => true,
        }
    }

    /// Open by construction.
    pub fn is_open(&self) -> bool {
        match &self.shape {
            Shape::BoxUnion(b) => b.iter().all(AxisBox::is_open),
            Shape::Ball(b) => !b.closed,
            Shape::Complement(inner) => inner.is_closed(),
            _ => false,
        }
    }

    /// Closed by construction.
    pub fn is_closed(&self) -> bool {
        match &self.shape {
            Shape::BoxUnion(b) => b.iter().all(AxisBox::is_closed),
            Shape::Ball(b) => b.closed,
            Shape::Finite(_) | Shape::Lattice(_) => true,
            Shape::Complement(inner) => inner.is_open(),
            Shape::Predicate(_) => false,
        }
    }

    pub fn contains(&self, p: &Point) -> Result<bool> {
        p.check_dim(self.dim)?;
        Ok(self.contains_unchecked(p))
    }

    pub(crate) fn contains_unchecked(&self, p: &Point) -> bool {
        self.contains_coords(p.coords())
    }

    fn contains_coords(&self, c: &[f64]) -> bool {
        match &self.shape {
            Shape::Finite(f) => f.index.contains(&c.iter().map(|x| (x + 0.0).to_bits()).collect::<Vec<_>>()),
            Shape::BoxUnion(b) => b.iter().any(|b| b.contains(c)),
            Shape::Ball(b) => b.contains(c),
            Shape::Lattice(l) => l.contains(c),
            Shape::Predicate(p) => match Point::new(c.to_vec()) {
                Ok(pt) => (p.contains)(&pt),
                Err(_) => false,
            },
            Shape::Complement(inner) => !inner.contains_coords(c),
        }
    }

    /// Member at minimal distance from `p`, with that distance.
    ///
    /// Exact for finite sets, lattices, single boxes and balls queried in
    /// their own metric. Open boundaries are approached by one ulp, so the
    /// returned distance is zero exactly when `p` is a member.
    pub fn nearest_member(&self, p: &Point, metric: &Metric) -> Result<(Point, f64)> {
        p.check_dim(self.dim)?;
        let (y, d) = self.nearest_coords(p.coords(), metric)?;
        Ok((Point::new(y)?, d))
    }

    fn nearest_coords(&self, c: &[f64], metric: &Metric) -> Result<(Vec<f64>, f64)> {
        if self.contains_coords(c) && !matches!(self.shape, Shape::Predicate(_)) {
            return Ok((c.to_vec(), 0.0));
        }
        match &self.shape {
            Shape::Finite(f) => f
                .points
                .iter()
                .map(|q| (q, metric.eval(c, q.coords())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map(|(q, d)| (q.coords().to_vec(), d))
                .ok_or_else(|| Error::EmptySet(self.id.clone())),
            Shape::BoxUnion(boxes) => {
                if !metric.is_builtin() {
                    return Err(metric_err("box projection", metric));
                }
                boxes
                    .iter()
                    .filter_map(|b| b.project(c))
                    .map(|y| {
                        let d = metric.eval(c, &y);
                        (y, d)
                    })
                    .min_by(|a, b| a.1.total_cmp(&b.1))
                    .ok_or_else(|| Error::EmptySet(self.id.clone()))
            }
            Shape::Ball(b) => {
                if b.metric == *metric {
                    let mut t = 1.0;
                    for _ in 0..200 {
                        let y = b.radial(c, t);
                        if b.contains(&y) {
                            let d = metric.eval(c, &y);
                            return Ok((y, d));
                        }
                        t *= 1.0 - 4.0 * machine_epsilon();
                    }
                    Err(Error::NotSupported("ball projection did not settle".into()))
                } else if let (Some(bx), true) = (b.as_box(), metric.is_builtin()) {
                    let y = bx.project(c).ok_or_else(|| Error::EmptySet(self.id.clone()))?;
                    let d = metric.eval(c, &y);
                    Ok((y, d))
                } else {
                    Err(metric_err("ball projection", metric))
                }
            }
            Shape::Lattice(l) => l.nearest(c, metric, None),
            Shape::Predicate(_) => Err(Error::NotSupported(format!("nearest member of predicate set `{}`", self.id))),
            Shape::Complement(inner) => inner.exit_point(c, metric),
        }
    }

    /// Nearest point outside `self`, for `c` inside `self`.
    fn exit_point(&self, c: &[f64], metric: &Metric) -> Result<(Vec<f64>, f64)> {
        match &self.shape {
            Shape::BoxUnion(boxes) => {
                if !metric.is_builtin() {
                    return Err(metric_err("box exit", metric));
                }
                let mut cands: Vec<(f64, Vec<f64>)> =
                    boxes.iter().filter(|b| b.contains(c)).flat_map(|b| b.exits(c)).collect();
                cands.sort_by(|a, b| a.0.total_cmp(&b.0));
                cands
                    .into_iter()
                    .find(|(_, y)| !self.contains_coords(y))
                    .map(|(_, y)| {
                        let d = metric.eval(c, &y);
                        (y, d)
                    })
                    .ok_or_else(|| Error::NotSupported("box union covers every face exit".into()))
            }
            Shape::Ball(b) => {
                if b.metric == *metric {
                    let mut t = 1.0;
                    for _ in 0..200 {
                        let y = b.radial(c, t);
                        if !b.contains(&y) {
                            let d = metric.eval(c, &y);
                            return Ok((y, d));
                        }
                        t *= 1.0 + 4.0 * machine_epsilon();
                    }
                    Err(Error::NotSupported("ball exit did not settle".into()))
                } else if let (Some(bx), true) = (b.as_box(), metric.is_builtin()) {
                    bx.exits(c)
                        .into_iter()
                        .find(|(_, y)| !b.contains(y))
                        .map(|(_, y)| {
                            let d = metric.eval(c, &y);
                            (y, d)
                        })
                        .ok_or_else(|| Error::NotSupported("ball exit".into()))
                } else {
                    Err(metric_err("ball exit", metric))
                }
            }
            Shape::Finite(_) | Shape::Lattice(_) => {
                // discrete sets have empty interior: step off the node
                let mut y = c.to_vec();
                let mut step = (c[0].abs() * machine_epsilon()).max(f64::MIN_POSITIVE);
                for _ in 0..1100 {
                    y[0] = c[0] + step;
                    if !self.contains_coords(&y) {
                        let d = metric.eval(c, &y);
                        return Ok((y, d));
                    }
                    step *= 2.0;
                }
                Err(Error::NotSupported("could not step off the discrete set".into()))
            }
            Shape::Predicate(_) => Err(Error::NotSupported(format!("complement of predicate set `{}`", self.id))),
            Shape::Complement(inner) => inner.nearest_coords(c, metric),
        }
    }

    /// Nearest member distinct from `p`; used for accumulation tests.
    pub fn nearest_other_member(&self, p: &Point, metric: &Metric) -> Result<(Point, f64)> {
        p.check_dim(self.dim)?;
        let c = p.coords();
        let (y, d) = match &self.shape {
            Shape::Finite(f) => f
                .points
                .iter()
                .filter(|q| *q != p)
                .map(|q| (q.coords().to_vec(), metric.eval(c, q.coords())))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .ok_or_else(|| Error::EmptySet(self.id.clone()))?,
            Shape::Lattice(l) => l.nearest(c, metric, Some(c))?,
            Shape::Predicate(_) => {
                return Err(Error::NotSupported(format!("nearest member of predicate set `{}`", self.id)))
            }
            _ => {
                if self.contains_coords(c) {
                    if !metric.is_builtin() {
                        return Err(metric_err("neighbor search", metric));
                    }
                    nearest_neighbor_float(c, metric, |y| self.contains_coords(y))
                        .ok_or_else(|| Error::EmptySet(format!("{} (no member besides the query point)", self.id)))?
                } else {
                    self.nearest_coords(c, metric)?
                }
            }
        };
        Ok((Point::new(y)?, d))
    }

    /// Lower bound on the distance from `p` to the complement of `self`
    /// (zero when `p` is not a member). `None` when no bound is available.
    pub fn clearance(&self, p: &Point, metric: &Metric) -> Option<f64> {
        self.clearance_coords(p.coords(), metric)
    }

    fn clearance_coords(&self, c: &[f64], metric: &Metric) -> Option<f64> {
        if matches!(self.shape, Shape::Predicate(_)) {
            return None;
        }
        if !self.contains_coords(c) {
            return Some(0.0);
        }
        match &self.shape {
            Shape::Finite(_) | Shape::Lattice(_) => Some(0.0),
            Shape::BoxUnion(boxes) => metric
                .is_builtin()
                .then(|| boxes.iter().filter(|b| b.contains(c)).map(|b| b.clearance(c)).fold(0.0, f64::max)),
            Shape::Ball(b) => {
                if b.metric == *metric {
                    Some((b.radius - metric.eval(b.center.coords(), c)).max(0.0))
                } else if metric.is_builtin() {
                    b.as_box().map(|bx| bx.clearance(c))
                } else {
                    None
                }
            }
            Shape::Complement(inner) => inner.gap_coords(c, metric),
            Shape::Predicate(_) => None,
        }
    }

    /// Infimum distance from `p` to the set (zero for members).
    pub fn gap(&self, p: &Point, metric: &Metric) -> Option<f64> {
        self.gap_coords(p.coords(), metric)
    }

    fn gap_coords(&self, c: &[f64], metric: &Metric) -> Option<f64> {
        if matches!(self.shape, Shape::Predicate(_)) {
            return None;
        }
        if self.contains_coords(c) {
            return Some(0.0);
        }
        match &self.shape {
            Shape::Finite(_) | Shape::Lattice(_) => self.nearest_coords(c, metric).ok().map(|(_, d)| d),
            Shape::BoxUnion(boxes) => metric.is_builtin().then(|| {
                boxes
                    .iter()
                    .filter(|b| !b.is_empty())
                    .map(|b| metric.eval(c, &b.clamp(c)))
                    .fold(f64::INFINITY, f64::min)
            }),
            Shape::Ball(b) => {
                if b.metric == *metric {
                    Some((metric.eval(b.center.coords(), c) - b.radius).max(0.0))
                } else if metric.is_builtin() {
                    b.as_box().map(|bx| metric.eval(c, &bx.clamp(c)))
                } else {
                    None
                }
            }
            Shape::Complement(inner) => inner.clearance_coords(c, metric),
            Shape::Predicate(_) => None,
        }
    }

    /// Member proposal from a predicate set's sampler, if it has one.
    fn sampled_member(&self, center: &Point, radius: f64) -> Option<Option<Point>> {
        match &self.shape {
            Shape::Predicate(PredicateSet { sampler: Some(s), .. }) => Some(s(center, radius)),
            _ => None,
        }
    }
}

/// Outcome of a density test at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityVerdict {
    pub dense: bool,
    pub resolution: f64,
    pub failure_witness: Option<Point>,
    /// The miss was established by sampling rather than an exact query.
    pub approximate: bool,
}

/// Whether every probe's `delta`-ball meets the set.
///
/// Exact variants decide each ball with [`DomainSet::nearest_member`];
/// predicate sets fall back to the member sampler or to uniform ball
/// sampling, in which case a miss is flagged `approximate`.
pub fn is_dense_at_resolution(
    set: &DomainSet,
    probes: &[Point],
    delta: f64,
    metric: &Metric,
    budget: &ProbeConfig,
) -> Result<DensityVerdict> {
    if !(delta.is_finite() && delta > 0.0) {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    if probes.is_empty() {
        return Err(Error::InvalidInput("density test needs at least one probe".into()));
    }
    let mut approximate = false;
    for (i, probe) in probes.iter().enumerate() {
        probe.check_dim(set.dim())?;
        let hit = match set.nearest_member(probe, metric) {
            Ok((_, d)) => d < delta,
            Err(Error::NotSupported(_)) => {
                if set.contains_unchecked(probe) {
                    true
                } else if let Some(found) = set.sampled_member(probe, delta) {
                    found.is_some_and(|m| set.contains_unchecked(&m) && metric.eval(probe.coords(), m.coords()) < delta)
                } else {
                    let stream = derive_rng_stream(budget.seed, i as u64).substream(delta.to_bits());
                    let hit = match sample_ball(probe, delta, budget.samples_per_radius, metric, &stream) {
                        Ok(pts) => pts.iter().any(|q| set.contains_unchecked(q)),
                        Err(Error::DegenerateRadius { .. }) => false,
                        Err(e) => return Err(e),
                    };
                    if !hit {
                        approximate = true;
                    }
                    hit
                }
            }
            Err(Error::EmptySet(_)) => false,
            Err(e) => return Err(e),
        };
        if !hit {
            return Ok(DensityVerdict {
                dense: false,
                resolution: delta,
                failure_witness: Some(probe.clone()),
                approximate,
            });
        }
    }
    Ok(DensityVerdict { dense: true, resolution: delta, failure_witness: None, approximate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(c: &[f64]) -> Point {
        Point::from_slice(c)
    }

    fn unit_interval_open() -> DomainSet {
        DomainSet::box_union("D", vec![AxisBox::open(vec![0.0], vec![1.0]).unwrap()]).unwrap()
    }

    #[test]
    fn open_interval_membership() {
        let d = unit_interval_open();
        assert!(d.contains(&pt(&[0.5])).unwrap());
        assert!(!d.contains(&pt(&[1.0])).unwrap());
        assert!(!d.contains(&pt(&[0.0])).unwrap());
        assert!(matches!(d.contains(&pt(&[0.5, 0.5])), Err(Error::Dimension { .. })));
    }

    #[test]
    fn lattice_even_membership() {
        let l = Lattice::new(vec![0.0], 0.01).unwrap().with_predicate(IndexPredicate::Parity { even: true }).unwrap();
        let d = DomainSet::lattice("even", l).unwrap();
        assert!(d.contains(&pt(&[0.02])).unwrap());
        assert!(!d.contains(&pt(&[0.03])).unwrap());
        assert!(!d.contains(&pt(&[0.025])).unwrap());
        // k / 100 differs from k * 0.01 in the last bits but still snaps
        assert!(d.contains(&pt(&[14.0 / 100.0])).unwrap());
    }

    #[test]
    fn nearest_member_reciprocals() {
        let pts: Vec<Point> = (1..=1_000_000).map(|n| pt(&[1.0 / n as f64])).collect();
        let d = DomainSet::finite("recip", pts.clone()).unwrap();
        let (m, dist) = d.nearest_member(&pt(&[0.3]), &Metric::L2).unwrap();
        // linear-scan oracle
        let best = pts.iter().map(|q| (q, (q.coords()[0] - 0.3).abs())).min_by(|a, b| a.1.total_cmp(&b.1)).unwrap();
        assert_eq!(&m, best.0);
        assert_eq!(dist, best.1);
        assert_eq!(m.coords()[0], 1.0 / 3.0);
        assert!((dist - 0.0333333).abs() < 1e-6);
    }

    #[test]
    fn nearest_member_ball_and_box() {
        let ball = DomainSet::ball("B", pt(&[0.0, 0.0]), 1.0, true, Metric::L2).unwrap();
        let (m, d) = ball.nearest_member(&pt(&[2.0, 0.0]), &Metric::L2).unwrap();
        assert_eq!(m, pt(&[1.0, 0.0]));
        assert_eq!(d, 1.0);

        let bx = DomainSet::box_union("Q", vec![AxisBox::closed(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap()]).unwrap();
        let (m, d) = bx.nearest_member(&pt(&[0.5, 0.5]), &Metric::L2).unwrap();
        assert_eq!((m, d), (pt(&[0.5, 0.5]), 0.0));
        assert!(matches!(
            DomainSet::predicate("P", 1, |_| true).nearest_member(&pt(&[0.0]), &Metric::L2),
            Err(Error::NotSupported(_))
        ));
    }

    #[test]
    fn open_boundary_is_approached_not_reached() {
        let d = unit_interval_open();
        let (m, dist) = d.nearest_member(&pt(&[1.0]), &Metric::L2).unwrap();
        assert!(d.contains(&m).unwrap());
        assert!(dist > 0.0 && dist < 1e-15);
    }

    #[test]
    fn lattice_nearest_matches_scan() {
        let l = Lattice::new(vec![0.0, 0.0], 0.1)
            .unwrap()
            .with_index_range(vec![0, 0], vec![10, 10])
            .unwrap()
            .with_predicate(IndexPredicate::Parity { even: false })
            .unwrap();
        let nodes = l.enumerate().unwrap();
        let d = DomainSet::lattice("odd", l).unwrap();
        for q in [[0.33, 0.71], [-3.0, 0.5], [2.0, 2.0], [0.5, 0.5]] {
            for m in [Metric::L1, Metric::L2, Metric::Linf] {
                let (_, got) = d.nearest_member(&pt(&q), &m).unwrap();
                let want = nodes.iter().map(|n| m.eval(&q, n)).fold(f64::INFINITY, f64::min);
                assert_eq!(got, want, "{q:?} {m:?}");
            }
        }
    }

    #[test]
    fn complement_queries() {
        let d = unit_interval_open();
        let dc = DomainSet::complement("Dc", d.clone());
        assert!(dc.contains(&pt(&[1.0])).unwrap());
        let (m, dist) = dc.nearest_member(&pt(&[0.75]), &Metric::L2).unwrap();
        assert_eq!(m, pt(&[1.0]));
        assert_eq!(dist, 0.25);
        assert_eq!(d.clearance(&pt(&[0.75]), &Metric::L2), Some(0.25));
        assert_eq!(dc.clearance(&pt(&[1.5]), &Metric::L2), Some(0.5));
        assert_eq!(dc.gap(&pt(&[0.75]), &Metric::L2), Some(0.25));
        assert!(dc.is_closed() && d.is_open());
    }

    #[test]
    fn nearest_other_member_distinct() {
        let d = unit_interval_open();
        let (m, dist) = d.nearest_other_member(&pt(&[0.5]), &Metric::L2).unwrap();
        assert_ne!(m, pt(&[0.5]));
        assert!(dist > 0.0 && dist < 1e-15);
        let f = DomainSet::finite("F", vec![pt(&[0.0]), pt(&[0.5])]).unwrap();
        assert_eq!(f.nearest_other_member(&pt(&[0.0]), &Metric::L2).unwrap().1, 0.5);
    }

    #[test]
    fn box_intersection() {
        let a = AxisBox::new(vec![0.0], vec![1.0], vec![true], vec![false]).unwrap();
        let b = AxisBox::closed(vec![1.0], vec![2.0]).unwrap();
        assert!(a.intersection_witness(&b).is_none());
        let c = AxisBox::closed(vec![0.5], vec![2.0]).unwrap();
        let w = a.intersection_witness(&c).unwrap();
        assert!(a.contains(&w) && c.contains(&w));
    }

    #[test]
    fn density_examples() {
        let cfg = ProbeConfig::default();
        let l = Lattice::new(vec![0.0], 0.001).unwrap().with_index_range(vec![0], vec![1000]).unwrap();
        let lat = DomainSet::lattice("L", l).unwrap();
        let grid: Vec<Point> = (0..=100).map(|i| pt(&[i as f64 * 0.01])).collect();
        assert!(is_dense_at_resolution(&lat, &grid, 0.001, &Metric::L2, &cfg).unwrap().dense);

        let half = DomainSet::box_union("H", vec![AxisBox::open(vec![0.0], vec![0.5]).unwrap()]).unwrap();
        let v = is_dense_at_resolution(&half, &[pt(&[0.9])], 0.1, &Metric::L2, &cfg).unwrap();
        assert!(!v.dense && !v.approximate);
        assert_eq!(v.failure_witness, Some(pt(&[0.9])));

        let recip = DomainSet::finite("R", (1..=1000).map(|n| pt(&[1.0 / n as f64])).collect()).unwrap();
        let grid: Vec<Point> = (0..=10).map(|i| pt(&[i as f64 / 10.0])).collect();
        let v = is_dense_at_resolution(&recip, &grid, 0.01, &Metric::L2, &cfg).unwrap();
        let first_miss =
            grid.iter().find(|g| (1..=1000).all(|n| (g.coords()[0] - 1.0 / n as f64).abs() >= 0.01)).cloned();
        assert!(!v.dense);
        assert_eq!(v.failure_witness, first_miss);
        assert_eq!(v.failure_witness, Some(pt(&[0.3])));
    }

    #[test]
    fn predicate_density_is_approximate() {
        let cfg = ProbeConfig::default();
        let p = DomainSet::predicate("P", 1, |q| q.coords()[0] < 0.0);
        let v = is_dense_at_resolution(&p, &[pt(&[1.0])], 0.5, &Metric::L2, &cfg).unwrap();
        assert!(!v.dense && v.approximate);
        let v = is_dense_at_resolution(&p, &[pt(&[0.1])], 0.5, &Metric::L2, &cfg).unwrap();
        assert!(v.dense);

        let sampled = DomainSet::predicate("S", 1, |q| q.coords()[0] < 0.0).with_sampler(|c, r| {
            let x = c.coords()[0] - 0.5 * r;
            (x < 0.0).then(|| Point::from_slice(&[x]))
        });
        let v = is_dense_at_resolution(&sampled, &[pt(&[1.0])], 0.5, &Metric::L2, &cfg).unwrap();
        assert!(!v.dense && !v.approximate);
    }
}
