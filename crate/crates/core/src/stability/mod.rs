//! Stable-point testing at finite precision.
//!
//! A point `x` of a set `D` is stable when some ball `B(x, delta)` stays
//! inside `D` with the label of `x`, and every smaller ball still holds a
//! point other than `x`. The testers here walk a geometric radius schedule,
//! look for counterexamples by sampling (or by enumeration on a finite
//! support), and certify clean balls with exact clearance queries whenever
//! the sets allow it.

mod accumulation;
mod ball;
mod blocker;
mod cross_check;

use serde::{Deserialize, Serialize};

use crate::classifier::{Classifier, Label};
use crate::error::{Error, Result};
use crate::metric::{Metric, Point, Space};
use crate::precision::{representability_floor, DEFAULT_K};

pub use crate::precision::{calibrate, estimate_machine_epsilon, EpsilonCalibration, EpsilonVariant};
pub use accumulation::{test_accumulation_point, test_accumulation_point_seeded, AccumulationVerdict, ChainLink};
pub use ball::{test_stable_point, test_stable_point_seeded};
pub use blocker::{blocker_violations, dense_blocker_scan, BlockerReport, BlockerViolation, DensityFinding};
pub use cross_check::{
    cross_check_stable_accumulation, cross_check_with, density_probes, AgreementReport, Disagreement,
};

/// How far down clause iii (non-isolation) is enforced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Every smaller radius, down to the representability floor.
    Strict,
    /// Only radii above `rho`; `None` means `k * eps * (1 + |x|_inf)` at each probe.
    Resolution { rho: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub delta_start: f64,
    pub shrink_factor: f64,
    pub delta_min: f64,
    pub samples_per_radius: usize,
    pub mode: Mode,
    pub seed: u64,
    pub max_radii: usize,
    /// Multiplier on the machine epsilon for floors and default resolutions.
    pub k: u32,
}

pub const DEFAULT_SAMPLES: usize = 64;
pub const DEFAULT_MAX_RADII: usize = 40;
pub const DEFAULT_SHRINK: f64 = 0.5;

impl Default for ProbeConfig {
    fn default() -> Self {
        Self::with_start(0.1)
    }
}

impl ProbeConfig {
    /// Defaults around a given starting radius.
    pub fn with_start(delta_start: f64) -> Self {
        Self {
            delta_start,
            shrink_factor: DEFAULT_SHRINK,
            delta_min: delta_start * DEFAULT_SHRINK.powi(DEFAULT_MAX_RADII as i32 - 1),
            samples_per_radius: DEFAULT_SAMPLES,
            mode: Mode::Strict,
            seed: 0,
            max_radii: DEFAULT_MAX_RADII,
            k: DEFAULT_K,
        }
    }

    /// Starts at a tenth of the space diameter.
    pub fn for_space(space: &Space, metric: &Metric) -> Self {
        let start = space.diameter(metric).filter(|d| *d > 0.0).map_or(0.1, |d| 0.1 * d);
        Self::with_start(start)
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidInput(m));
        if !(self.shrink_factor > 0.0 && self.shrink_factor < 1.0) {
            return bad(format!("shrink_factor must lie in (0, 1), got {}", self.shrink_factor));
        }
        if !(self.delta_min.is_finite() && self.delta_min > 0.0) {
            return bad(format!("delta_min must be positive, got {}", self.delta_min));
        }
        if !(self.delta_start.is_finite() && self.delta_start > self.delta_min) {
            return bad(format!("delta_start ({}) must exceed delta_min ({})", self.delta_start, self.delta_min));
        }
        if self.samples_per_radius == 0 || self.max_radii == 0 || self.k == 0 {
            return bad("samples_per_radius, max_radii and k must be positive".into());
        }
        if let Mode::Resolution { rho: Some(r) } = self.mode {
            if !(r.is_finite() && r > 0.0) {
                return bad(format!("resolution rho must be positive, got {r}"));
            }
        }
        Ok(())
    }

    /// The geometric schedule `delta_start * f^j`, stopping below `delta_min`.
    pub fn radii(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.max_radii);
        let mut r = self.delta_start;
        while out.len() < self.max_radii && r >= self.delta_min {
            out.push(r);
            r *= self.shrink_factor;
        }
        out
    }

    pub fn floor_at(&self, x: &Point) -> f64 {
        representability_floor(x.coords(), self.k)
    }

    /// Resolution `rho` at `x`, in resolution mode.
    pub fn rho_at(&self, x: &Point) -> Option<f64> {
        match self.mode {
            Mode::Strict => None,
            Mode::Resolution { rho } => Some(rho.unwrap_or_else(|| self.floor_at(x))),
        }
    }

    /// `rho` widened by the representability floor at `x`: distances that
    /// agree with `rho` up to rounding of the coordinates compare as equal.
    pub fn threshold_at(&self, x: &Point) -> Option<f64> {
        self.rho_at(x).map(|r| r + self.floor_at(x))
    }

    /// Scheduled radii that are meaningful at `x`.
    pub(crate) fn radii_at(&self, x: &Point) -> Vec<f64> {
        let lower = self.delta_min.max(self.floor_at(x));
        let thr = self.threshold_at(x);
        self.radii().into_iter().filter(|r| *r >= lower && thr.is_none_or(|t| *r > t)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Clause {
    /// A point of the ball lies outside the probe's set.
    #[serde(rename = "ii-membership")]
    Membership,
    /// A point of the ball carries a different label.
    #[serde(rename = "ii-label")]
    Label,
    /// Some admissible smaller ball contains only the probe.
    #[serde(rename = "iii-isolation")]
    Isolation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "lowercase")]
pub enum Outcome {
    Stable { certified_delta: f64 },
    Unstable { witness: Point, clause: Clause, radius: f64 },
    Inconclusive { reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Stable,
    Unstable,
    Inconclusive,
}

impl Outcome {
    pub fn kind(&self) -> OutcomeKind {
        match self {
            Outcome::Stable { .. } => OutcomeKind::Stable,
            Outcome::Unstable { .. } => OutcomeKind::Unstable,
            Outcome::Inconclusive { .. } => OutcomeKind::Inconclusive,
        }
    }

    pub fn certified_delta(&self) -> Option<f64> {
        match self {
            Outcome::Stable { certified_delta } => Some(*certified_delta),
            _ => None,
        }
    }

    pub fn clause(&self) -> Option<Clause> {
        match self {
            Outcome::Unstable { clause, .. } => Some(*clause),
            _ => None,
        }
    }
}

/// One radius visited by a tester.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusRecord {
    pub radius: f64,
    pub clean: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub witness: Option<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clause: Option<Clause>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    /// False when the labels came from a model that failed the axiom check.
    pub trusted: bool,
    /// Some conclusion rests on sampling alone.
    pub approximate: bool,
    pub probes_used: u64,
    pub trace: Vec<RadiusRecord>,
}

impl Verdict {
    pub fn kind(&self) -> OutcomeKind {
        self.outcome.kind()
    }

    pub fn is_stable(&self) -> bool {
        self.kind() == OutcomeKind::Stable
    }

    pub(crate) fn inconclusive(reason: impl Into<String>, probes_used: u64, trace: Vec<RadiusRecord>) -> Self {
        Verdict {
            outcome: Outcome::Inconclusive { reason: reason.into() },
            trusted: true,
            approximate: false,
            probes_used,
            trace,
        }
    }
}

/// How a single point relates to the probe's set and label.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Judgement {
    Clean,
    Violation(Clause),
    Unknown(String),
}

pub(crate) fn judge(c: &Classifier, home: usize, home_label: &Label, p: &Point) -> Judgement {
    match c.locate(p) {
        Ok(i) if i == home => match c.external() {
            None => Judgement::Clean,
            Some(ext) => match ext.label(p) {
                Ok(l) if l == *home_label => Judgement::Clean,
                Ok(_) => Judgement::Violation(Clause::Label),
                Err(e) => Judgement::Unknown(e.to_string()),
            },
        },
        Ok(_) | Err(Error::UndefinedPoint) | Err(Error::PartitionViolation { .. }) => {
            Judgement::Violation(Clause::Membership)
        }
        Err(e) => Judgement::Unknown(e.to_string()),
    }
}

/// Label the testers compare against: the model's answer at `x` or the declared label.
pub(crate) fn home_label(c: &Classifier, home: usize, x: &Point) -> Result<Label> {
    match c.external() {
        Some(ext) => ext.label(x),
        None => Ok(c.labels()[home].clone()),
    }
}

/// Re-evaluates an unstable verdict's witness against the classifier.
///
/// Membership and label witnesses must lie inside the recorded radius and
/// break membership or label; isolation witnesses must be the probe itself
/// with an enumerated ball holding nothing else. Verdicts other than
/// `Unstable` re-verify trivially.
pub fn reverify_witness(c: &Classifier, x: &Point, verdict: &Verdict, metric: &Metric) -> bool {
    let Outcome::Unstable { witness, clause, radius } = &verdict.outcome else {
        return true;
    };
    let Ok(home) = c.locate(x) else { return false };
    let Ok(label) = home_label(c, home, x) else { return false };
    if metric.eval(x.coords(), witness.coords()) >= *radius {
        return false;
    }
    match clause {
        Clause::Membership => judge(c, home, &label, witness) == Judgement::Violation(Clause::Membership),
        Clause::Label => judge(c, home, &label, witness) == Judgement::Violation(Clause::Label),
        Clause::Isolation => match c.space().support() {
            Some(s) => witness == x && s.iter().all(|q| q == x || metric.eval(x.coords(), q.coords()) >= *radius),
            None => false,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule() {
        let cfg = ProbeConfig::with_start(0.4);
        let r = cfg.radii();
        assert_eq!(r.len(), 40);
        assert_eq!(r[0], 0.4);
        assert_eq!(*r.last().unwrap(), cfg.delta_min);
        cfg.validate().unwrap();
    }

    #[test]
    fn invalid_configs() {
        let c = ProbeConfig { shrink_factor: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let mut c = ProbeConfig::default();
        c.delta_min = c.delta_start;
        assert!(c.validate().is_err());
        let c = ProbeConfig::default().with_mode(Mode::Resolution { rho: Some(0.0) });
        assert!(c.validate().is_err());
    }

    #[test]
    fn default_rho_is_floor() {
        let c = ProbeConfig::default().with_mode(Mode::Resolution { rho: None });
        let x = Point::from_slice(&[1.0]);
        assert_eq!(c.rho_at(&x), Some(4.0 * f64::EPSILON * 2.0));
        assert_eq!(ProbeConfig::default().rho_at(&x), None);
    }

    #[test]
    fn verdict_json_shape() {
        let v = Verdict {
            outcome: Outcome::Stable { certified_delta: 0.25 },
            trusted: true,
            approximate: false,
            probes_used: 64,
            trace: vec![],
        };
        let j = serde_json::to_value(&v).unwrap();
        assert_eq!(j["outcome"], "stable");
        assert_eq!(j["certified_delta"], 0.25);
        let back: Verdict = serde_json::from_value(j).unwrap();
        assert_eq!(back, v);
    }
}
