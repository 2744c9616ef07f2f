//! The classifier abstraction: disjoint labeled sets over a space, with an
//! optional black-box labeling function, and a checker for the four axioms
//! (domain coverage, disjointness, constancy per set, distinct labels).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metric::{Point, Space};
use crate::sets::{DomainSet, Shape};

/// A class label: integer or short token.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Label {
    Int(i64),
    Token(String),
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Int(i) => write!(f, "{i}"),
            Label::Token(s) => write!(f, "{s}"),
        }
    }
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Token(s.to_string())
    }
}

impl From<i64> for Label {
    fn from(i: i64) -> Self {
        Label::Int(i)
    }
}

impl Label {
    /// Parses a response token: integers become `Int`, anything else `Token`.
    pub fn parse(token: &str) -> Label {
        let t = token.trim();
        t.parse::<i64>().map(Label::Int).unwrap_or_else(|_| Label::Token(t.to_string()))
    }
}

/// A black-box model consulted for labels instead of the induced map.
pub trait LabelOracle: Send + Sync {
    fn label(&self, p: &Point) -> Result<Label>;

    fn describe(&self) -> String {
        "external".into()
    }
}

/// Adapts a closure into a [`LabelOracle`].
pub struct FnOracle<F>(pub F);

impl<F> LabelOracle for FnOracle<F>
where
    F: Fn(&Point) -> Label + Send + Sync,
{
    fn label(&self, p: &Point) -> Result<Label> {
        Ok((self.0)(p))
    }

    fn describe(&self) -> String {
        "closure".into()
    }
}

#[derive(Clone)]
pub struct Classifier {
    space: Space,
    sets: Vec<DomainSet>,
    labels: Vec<Label>,
    external: Option<Arc<dyn LabelOracle>>,
}

impl fmt::Debug for Classifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Classifier")
            .field("sets", &self.sets)
            .field("labels", &self.labels)
            .field("external", &self.external.as_ref().map(|e| e.describe()))
            .finish()
    }
}

impl Classifier {
    /// Needs at least two sets, one label per set, and matching dimensions.
    /// Duplicate labels are accepted here and reported by
    /// [`check_classifier_axioms`].
    pub fn new(space: Space, sets: Vec<DomainSet>, labels: Vec<Label>) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::InvalidInput(format!("a classifier needs at least two sets, got {}", sets.len())));
        }
        if sets.len() != labels.len() {
            return Err(Error::InvalidInput(format!("{} sets but {} labels", sets.len(), labels.len())));
        }
        if let Some(s) = sets.iter().find(|s| s.dim() != space.dim()) {
            return Err(Error::Dimension { expected: space.dim(), got: s.dim() });
        }
        Ok(Self { space, sets, labels, external: None })
    }

    pub fn with_external(mut self, oracle: Arc<dyn LabelOracle>) -> Self {
        self.external = Some(oracle);
        self
    }

    pub fn space(&self) -> &Space {
        &self.space
    }

    pub fn sets(&self) -> &[DomainSet] {
        &self.sets
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn external(&self) -> Option<&Arc<dyn LabelOracle>> {
        self.external.as_ref()
    }

    pub fn is_external(&self) -> bool {
        self.external.is_some()
    }

    /// Index of the unique set containing `p`.
    pub fn locate(&self, p: &Point) -> Result<usize> {
        p.check_dim(self.space.dim())?;
        let mut found: Option<usize> = None;
        for (i, s) in self.sets.iter().enumerate() {
            if s.contains_unchecked(p) {
                if let Some(first) = found {
                    return Err(Error::PartitionViolation {
                        first: self.sets[first].id().to_string(),
                        second: s.id().to_string(),
                    });
                }
                found = Some(i);
            }
        }
        found.ok_or(Error::UndefinedPoint)
    }

    /// Label of `p`: the declared label of its set, or the external model's answer.
    pub fn classify(&self, p: &Point) -> Result<Label> {
        let i = self.locate(p)?;
        match &self.external {
            Some(ext) => ext.label(p),
            None => Ok(self.labels[i].clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxiomClause {
    #[serde(rename = "i")]
    Coverage,
    #[serde(rename = "ii")]
    Disjoint,
    #[serde(rename = "iii")]
    Constant,
    #[serde(rename = "iv")]
    DistinctLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomViolation {
    pub clause: AxiomClause,
    pub witnesses: Vec<Point>,
    pub labels: Vec<Label>,
    pub detail: String,
    /// Found (or only ruled out) by probing rather than analytically.
    pub approximate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub passed: bool,
    pub violations: Vec<AxiomViolation>,
    /// Set pairs whose disjointness was only checked on the probes.
    pub probed_pairs: Vec<(String, String)>,
}

/// Analytic disjointness test for a pair of exact sets.
/// `Some(None)`: disjoint. `Some(Some(w))`: `w` lies in both. `None`: no analytic route.
fn exact_intersection(a: &DomainSet, b: &DomainSet) -> Option<Option<Point>> {
    let both = |c: &[f64]| -> Option<Point> {
        let p = Point::new(c.to_vec()).ok()?;
        (a.contains_unchecked(&p) && b.contains_unchecked(&p)).then_some(p)
    };
    match (a.shape(), b.shape()) {
        (Shape::Complement(inner), _) if inner.id() == b.id() => Some(None),
        (_, Shape::Complement(inner)) if inner.id() == a.id() => Some(None),
        (Shape::Finite(f), _) => Some(f.points().iter().find(|p| b.contains_unchecked(p)).cloned()),
        (_, Shape::Finite(f)) => Some(f.points().iter().find(|p| a.contains_unchecked(p)).cloned()),
        (Shape::Lattice(l), _) | (_, Shape::Lattice(l)) => {
            let nodes = l.enumerate()?;
            Some(nodes.iter().find_map(|n| both(n)))
        }
        (Shape::BoxUnion(ba), Shape::BoxUnion(bb)) => {
            for x in ba {
                for y in bb {
                    if let Some(w) = x.intersection_witness(y) {
                        return Some(Some(Point::new(w).ok()?));
                    }
                }
            }
            Some(None)
        }
        (Shape::Ball(x), Shape::Ball(y)) if x.metric == y.metric && x.metric.is_builtin() => {
            let d = x.metric.eval(x.center.coords(), y.center.coords());
            let reach = x.radius + y.radius;
            if d > reach || (d == reach && !(x.closed && y.closed)) {
                return Some(None);
            }
            // point on the center segment at the weighted split
            let t = if d == 0.0 { 0.0 } else { x.radius / reach };
            let w: Vec<f64> = x.center.coords().iter().zip(y.center.coords()).map(|(p, q)| p + t * (q - p)).collect();
            Some(both(&w).or_else(|| Point::new(w).ok()))
        }
        _ => None,
    }
}

/// Checks the classifier axioms on a probe cloud.
///
/// Disjointness is decided analytically for exact set pairs and by probing
/// otherwise; constancy compares the external model against the declared
/// labels; coverage is only enforced when the space declares it.
pub fn check_classifier_axioms(c: &Classifier, probes: &[Point]) -> AxiomReport {
    let mut violations = Vec::new();
    let mut probed_pairs = Vec::new();

    for i in 0..c.labels.len() {
        for j in i + 1..c.labels.len() {
            if c.labels[i] == c.labels[j] {
                violations.push(AxiomViolation {
                    clause: AxiomClause::DistinctLabels,
                    witnesses: vec![],
                    labels: vec![c.labels[i].clone()],
                    detail: format!("sets `{}` and `{}` share label {}", c.sets[i].id(), c.sets[j].id(), c.labels[i]),
                    approximate: false,
                });
            }
        }
    }

    for i in 0..c.sets.len() {
        for j in i + 1..c.sets.len() {
            let (a, b) = (&c.sets[i], &c.sets[j]);
            match exact_intersection(a, b) {
                Some(Some(w)) => violations.push(AxiomViolation {
                    clause: AxiomClause::Disjoint,
                    witnesses: vec![w],
                    labels: vec![c.labels[i].clone(), c.labels[j].clone()],
                    detail: format!("`{}` and `{}` intersect", a.id(), b.id()),
                    approximate: false,
                }),
                Some(None) => {}
                None => {
                    probed_pairs.push((a.id().to_string(), b.id().to_string()));
                    if let Some(w) = probes
                        .iter()
                        .find(|p| p.dim() == c.space.dim() && a.contains_unchecked(p) && b.contains_unchecked(p))
                    {
                        violations.push(AxiomViolation {
                            clause: AxiomClause::Disjoint,
                            witnesses: vec![w.clone()],
                            labels: vec![c.labels[i].clone(), c.labels[j].clone()],
                            detail: format!("probe lies in both `{}` and `{}`", a.id(), b.id()),
                            approximate: true,
                        });
                    }
                }
            }
        }
    }

    for p in probes {
        if p.dim() != c.space.dim() {
            continue;
        }
        let homes: Vec<usize> = (0..c.sets.len()).filter(|&i| c.sets[i].contains_unchecked(p)).collect();
        match homes.as_slice() {
            [] if c.space.coverage_declared() && c.space.contains(p) => violations.push(AxiomViolation {
                clause: AxiomClause::Coverage,
                witnesses: vec![p.clone()],
                labels: vec![],
                detail: "probe is in the space but in no set".into(),
                approximate: false,
            }),
            [i] => {
                if let Some(ext) = &c.external {
                    match ext.label(p) {
                        Ok(got) if got != c.labels[*i] => violations.push(AxiomViolation {
                            clause: AxiomClause::Constant,
                            witnesses: vec![p.clone()],
                            labels: vec![c.labels[*i].clone(), got],
                            detail: format!("model label differs from the label of `{}`", c.sets[*i].id()),
                            approximate: false,
                        }),
                        Ok(_) => {}
                        Err(e) => violations.push(AxiomViolation {
                            clause: AxiomClause::Constant,
                            witnesses: vec![p.clone()],
                            labels: vec![c.labels[*i].clone()],
                            detail: format!("model gave no label: {e}"),
                            approximate: true,
                        }),
                    }
                }
            }
            _ => {}
        }
    }

    AxiomReport { passed: violations.is_empty(), violations, probed_pairs }
}
