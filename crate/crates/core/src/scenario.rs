//! Scenario files: JSON descriptions of a classifier, its probes and the
//! analyses to run.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{Classifier, Label};
use crate::error::{Error, Result};
use crate::external::SubprocessClassifier;
use crate::metric::{derive_rng_stream, Bounds, Metric, Point, Space};
use crate::series::{default_family, SequenceGenerator};
use crate::sets::{AxisBox, DomainSet, Lattice};
use crate::stability::{Mode, ProbeConfig};

pub const SCENARIO_SCHEMA: &str = "domstab.scenario/1";

/// Grids larger than this are rejected.
pub const MAX_GRID_POINTS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricName {
    L1,
    #[default]
    L2,
    Linf,
}

impl MetricName {
    pub fn metric(self) -> Metric {
        match self {
            MetricName::L1 => Metric::L1,
            MetricName::L2 => Metric::L2,
            MetricName::Linf => Metric::Linf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    #[default]
    Strict,
    Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Analysis {
    Axioms,
    Epsilon,
    Density,
    Stability,
    Accumulation,
    Series,
    CrossCheck,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SupportSpec {
    Inline(Vec<Vec<f64>>),
    /// Path to a CSV of coordinates, relative to the scenario file.
    Csv(String),
    /// `origin + spacing * k` for `0 <= k[i] < count[i]`.
    Lattice {
        origin: Vec<f64>,
        spacing: f64,
        count: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<SupportSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    /// Default for every face; open unless set.
    #[serde(default)]
    pub closed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lo_closed: Option<Vec<bool>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hi_closed: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapeSpec {
    Finite {
        points: Vec<Vec<f64>>,
    },
    BoxUnion {
        boxes: Vec<BoxSpec>,
    },
    Ball {
        center: Vec<f64>,
        radius: f64,
        #[serde(default)]
        closed: bool,
    },
    Lattice(Lattice),
    /// Everything outside the set with id `of`.
    Complement {
        of: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSpec {
    pub id: String,
    pub label: Label,
    #[serde(flatten)]
    pub shape: ShapeSpec,
}

fn default_timeout_ms() -> u64 {
    5000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalSpec {
    pub command: Vec<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProbeSpec {
    Explicit {
        points: Vec<Vec<f64>>,
    },
    /// Grid over the bounds with the given spacing per axis.
    Grid {
        spacing: f64,
    },
    /// Uniform points in the bounds.
    Random {
        count: usize,
    },
    /// Every support point.
    Support,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfigSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_start: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shrink_factor: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples_per_radius: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_radii: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<u32>,
}

/// The file as written, before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema: String,
    #[serde(default)]
    pub seed: u64,
    pub space: SpaceSpec,
    #[serde(default)]
    pub metric: MetricName,
    #[serde(default)]
    pub coverage_declared: bool,
    pub sets: Vec<SetSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<ExternalSpec>,
    pub probes: ProbeSpec,
    #[serde(default)]
    pub probe_config: ProbeConfigSpec,
    #[serde(default)]
    pub mode: ModeName,
    /// Resolution for resolution mode; defaults to the representability floor per probe.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default)]
    pub resolutions: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generators: Option<Vec<SequenceGenerator>>,
    #[serde(default)]
    pub analyses: Vec<Analysis>,
}

/// A validated scenario, ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    /// SHA-256 of the canonical file content and the resolved support.
    pub digest: String,
    pub classifier: Classifier,
    pub metric: Metric,
    pub probes: Vec<Point>,
    pub config: ProbeConfig,
    pub resolutions: Vec<f64>,
    pub generators: Vec<SequenceGenerator>,
    pub analyses: Vec<Analysis>,
}

/// Reads the raw file; errors carry the JSON location.
pub fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Schema(vec![format!("line {} column {}: {e}", e.line(), e.column())]))
}

pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let file = load_scenario_file(path)?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    build_scenario(file, &base)
}

pub fn parse_scenario_str(text: &str, base_dir: &Path) -> Result<Scenario> {
    let file: ScenarioFile = serde_json::from_str(text)
        .map_err(|e| Error::Schema(vec![format!("line {} column {}: {e}", e.line(), e.column())]))?;
    build_scenario(file, base_dir)
}

struct Issues(Vec<String>);

impl Issues {
    fn push(&mut self, at: impl AsRef<str>, msg: impl AsRef<str>) {
        self.0.push(format!("{}: {}", at.as_ref(), msg.as_ref()));
    }

    fn check(&mut self, ok: bool, at: impl AsRef<str>, msg: impl AsRef<str>) -> bool {
        if !ok {
            self.push(at, msg);
        }
        ok
    }

    fn dims(&mut self, at: impl AsRef<str>, got: usize, want: usize) -> bool {
        self.check(got == want, at, format!("expected {want} coordinates, found {got}"))
    }
}

fn finite_point(c: &[f64]) -> Option<Point> {
    Point::new(c.to_vec()).ok()
}

fn read_support_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            // a header row
            Err(_) if i == 0 => {}
            Err(e) => return Err(Error::Schema(vec![format!("{} row {}: {e}", path.display(), i + 1)])),
        }
    }
    Ok(rows)
}

fn lattice_support(origin: &[f64], spacing: f64, count: &[usize]) -> Vec<Vec<f64>> {
    let n = origin.len();
    let total: usize = count.iter().product();
    let mut out = Vec::with_capacity(total);
    if total == 0 {
        return out;
    }
    let mut idx = vec![0usize; n];
    loop {
        out.push((0..n).map(|i| origin[i] + spacing * idx[i] as f64).collect());
        let mut a = 0;
        loop {
            if a == n {
                return out;
            }
            idx[a] += 1;
            if idx[a] < count[a] {
                break;
            }
            idx[a] = 0;
            a += 1;
        }
    }
}

fn grid_points(b: &Bounds, spacing: f64) -> Vec<Point> {
    let counts: Vec<usize> =
        (0..b.dim()).map(|i| ((b.hi[i] - b.lo[i]) / spacing + 1e-9).floor() as usize + 1).collect();
    lattice_support(&b.lo, spacing, &counts).into_iter().filter_map(|c| finite_point(&c)).collect()
}

fn build_shape(spec: &SetSpec, at: &str, dim: usize, metric: &Metric, issues: &mut Issues) -> Option<DomainSet> {
    let id = spec.id.clone();
    match &spec.shape {
        ShapeSpec::Finite { points } => {
            let mut pts = Vec::with_capacity(points.len());
            for (j, p) in points.iter().enumerate() {
                if issues.dims(format!("{at}.points[{j}]"), p.len(), dim) {
                    match finite_point(p) {
                        Some(p) => pts.push(p),
                        None => issues.push(format!("{at}.points[{j}]"), "coordinates must be finite"),
                    }
                }
            }
            DomainSet::finite(id, pts).map_err(|e| issues.push(at, e.to_string())).ok()
        }
        ShapeSpec::BoxUnion { boxes } => {
            let mut out = Vec::new();
            for (j, b) in boxes.iter().enumerate() {
                let bat = format!("{at}.boxes[{j}]");
                if !(issues.dims(format!("{bat}.lo"), b.lo.len(), dim)
                    && issues.dims(format!("{bat}.hi"), b.hi.len(), dim))
                {
                    continue;
                }
                let lc = b.lo_closed.clone().unwrap_or_else(|| vec![b.closed; dim]);
                let hc = b.hi_closed.clone().unwrap_or_else(|| vec![b.closed; dim]);
                match AxisBox::new(b.lo.clone(), b.hi.clone(), lc, hc) {
                    Ok(x) => out.push(x),
                    Err(e) => issues.push(bat, e.to_string()),
                }
            }
            if out.is_empty() {
                issues.push(at, "box_union needs at least one valid box");
                return None;
            }
            DomainSet::box_union(id, out).map_err(|e| issues.push(at, e.to_string())).ok()
        }
        ShapeSpec::Ball { center, radius, closed } => {
            if !issues.dims(format!("{at}.center"), center.len(), dim) {
                return None;
            }
            let c = finite_point(center)?;
            DomainSet::ball(id, c, *radius, *closed, metric.clone()).map_err(|e| issues.push(at, e.to_string())).ok()
        }
        ShapeSpec::Lattice(l) => {
            if !issues.dims(format!("{at}.origin"), l.origin.len(), dim) {
                return None;
            }
            DomainSet::lattice(id, l.clone()).map_err(|e| issues.push(at, e.to_string())).ok()
        }
        ShapeSpec::Complement { .. } => None,
    }
}

/// Validates `file` and materializes the classifier, probes and configuration.
/// All problems found are reported together.
pub fn build_scenario(file: ScenarioFile, base_dir: &Path) -> Result<Scenario> {
    let mut issues = Issues(Vec::new());
    let dim = file.space.dim;
    let metric = file.metric.metric();
    issues.check(file.schema == SCENARIO_SCHEMA, "schema", format!("expected \"{SCENARIO_SCHEMA}\""));
    if !issues.check(dim > 0, "space.dim", "must be positive") {
        return Err(Error::Schema(issues.0));
    }

    let bounds = match &file.space.bounds {
        Some(b)
            if issues.dims("space.bounds.lo", b.lo.len(), dim) && issues.dims("space.bounds.hi", b.hi.len(), dim) =>
        {
            Bounds::new(b.lo.clone(), b.hi.clone()).map_err(|e| issues.push("space.bounds", e.to_string())).ok()
        }
        _ => None,
    };

    let support_rows = match &file.space.support {
        None => None,
        Some(SupportSpec::Inline(rows)) => Some(rows.clone()),
        Some(SupportSpec::Csv(rel)) => {
            let path: PathBuf = base_dir.join(rel);
            match read_support_csv(&path) {
                Ok(rows) => Some(rows),
                Err(Error::Schema(v)) => {
                    v.into_iter().for_each(|m| issues.push("space.support.csv", m));
                    None
                }
                Err(e) => {
                    issues.push("space.support.csv", e.to_string());
                    None
                }
            }
        }
        Some(SupportSpec::Lattice { origin, spacing, count }) => {
            let ok = issues.dims("space.support.lattice.origin", origin.len(), dim)
                & issues.dims("space.support.lattice.count", count.len(), dim)
                & issues.check(
                    *spacing > 0.0 && spacing.is_finite(),
                    "space.support.lattice.spacing",
                    "must be positive",
                );
            ok.then(|| lattice_support(origin, *spacing, count))
        }
    };
    let support: Option<Vec<Point>> = support_rows.map(|rows| {
        rows.iter()
            .enumerate()
            .filter_map(|(i, r)| {
                if !issues.dims(format!("space.support[{i}]"), r.len(), dim) {
                    return None;
                }
                let p = finite_point(r);
                if p.is_none() {
                    issues.push(format!("space.support[{i}]"), "coordinates must be finite");
                }
                p
            })
            .collect()
    });

    // sets
    issues.check(file.sets.len() >= 2, "sets", "a classifier needs at least two sets");
    let mut ids = HashSet::new();
    let mut labels_seen: HashMap<&Label, usize> = HashMap::new();
    for (i, s) in file.sets.iter().enumerate() {
        issues.check(!s.id.is_empty(), format!("sets[{i}].id"), "must be non-empty");
        issues.check(ids.insert(s.id.as_str()), format!("sets[{i}].id"), format!("duplicate id `{}`", s.id));
        if let Some(j) = labels_seen.insert(&s.label, i) {
            issues.push(
                format!("sets[{i}].label"),
                format!("label {} already used by sets[{j}]; axiom clause iv requires distinct labels", s.label),
            );
        }
    }
    let mut built: Vec<Option<DomainSet>> = file
        .sets
        .iter()
        .enumerate()
        .map(|(i, s)| build_shape(s, &format!("sets[{i}]"), dim, &metric, &mut issues))
        .collect();
    for (i, s) in file.sets.iter().enumerate() {
        if let ShapeSpec::Complement { of } = &s.shape {
            match file.sets.iter().position(|t| &t.id == of) {
                Some(j) if j == i => issues.push(format!("sets[{i}].of"), "a set cannot be its own complement"),
                Some(j) => match &built[j] {
                    Some(inner) => built[i] = Some(DomainSet::complement(s.id.clone(), inner.clone())),
                    None if matches!(file.sets[j].shape, ShapeSpec::Complement { .. }) => {
                        issues.push(format!("sets[{i}].of"), "complement of a complement is not supported")
                    }
                    None => {}
                },
                None => issues.push(format!("sets[{i}].of"), format!("unknown set id `{of}`")),
            }
        }
    }

    // probes
    let probes: Vec<Point> = match &file.probes {
        ProbeSpec::Explicit { points } => {
            issues.check(!points.is_empty(), "probes.points", "needs at least one point");
            points
                .iter()
                .enumerate()
                .filter_map(|(i, p)| {
                    if !issues.dims(format!("probes.points[{i}]"), p.len(), dim) {
                        return None;
                    }
                    let q = finite_point(p);
                    if q.is_none() {
                        issues.push(format!("probes.points[{i}]"), "coordinates must be finite");
                    }
                    q
                })
                .collect()
        }
        ProbeSpec::Grid { spacing } => {
            let ok =
                issues.check(*spacing > 0.0 && spacing.is_finite(), "probes.spacing", "grid spacing must be positive")
                    & issues.check(bounds.is_some(), "probes", "grid probes need space.bounds")
                    & issues.check(support.is_none(), "probes", "use support or explicit probes on a finite support");
            match (&bounds, ok) {
                (Some(b), true) => {
                    let count: f64 = (0..dim).map(|i| ((b.hi[i] - b.lo[i]) / spacing).floor() + 1.0).product();
                    if issues.check(
                        count <= MAX_GRID_POINTS as f64,
                        "probes.spacing",
                        format!("grid of {count} points exceeds {MAX_GRID_POINTS}"),
                    ) {
                        grid_points(b, *spacing)
                    } else {
                        vec![]
                    }
                }
                _ => vec![],
            }
        }
        ProbeSpec::Random { count } => {
            let ok = issues.check(*count > 0, "probes.count", "must be positive")
                & issues.check(bounds.is_some(), "probes", "random probes need space.bounds")
                & issues.check(support.is_none(), "probes", "use support or explicit probes on a finite support");
            match (&bounds, ok) {
                (Some(b), true) => {
                    let mut rng = derive_rng_stream(file.seed, u64::MAX - 1).rng();
                    (0..*count)
                        .map(|_| {
                            Point::from_slice(&(0..dim).map(|i| rng.gen_range(b.lo[i]..=b.hi[i])).collect::<Vec<_>>())
                        })
                        .collect()
                }
                _ => vec![],
            }
        }
        ProbeSpec::Support => {
            issues.check(support.is_some(), "probes", "support probes need space.support");
            support.clone().unwrap_or_default()
        }
    };

    if let Some(rho) = file.rho {
        issues.check(rho > 0.0 && rho.is_finite(), "rho", "must be positive");
    }
    for (i, r) in file.resolutions.iter().enumerate() {
        issues.check(*r > 0.0 && r.is_finite(), format!("resolutions[{i}]"), "must be positive");
    }
    if let Some(ext) = &file.external {
        issues.check(!ext.command.is_empty(), "external.command", "must name a program");
        issues.check(ext.timeout_ms > 0, "external.timeout_ms", "must be positive");
    }
    if let Some(gens) = &file.generators {
        issues.check(!gens.is_empty(), "generators", "needs at least one generator");
        for (i, g) in gens.iter().enumerate() {
            issues.check(g.ratio > 0.0 && g.ratio < 1.0, format!("generators[{i}].ratio"), "must lie in (0, 1)");
            issues.check(g.max_len > 0, format!("generators[{i}].max_len"), "must be positive");
        }
    }

    if !issues.0.is_empty() {
        return Err(Error::Schema(issues.0));
    }

    // space and classifier
    let space = match &support {
        Some(s) => {
            Space::finite(s.clone(), bounds.clone()).map_err(|e| Error::Schema(vec![format!("space.support: {e}")]))?
        }
        None => match &bounds {
            Some(b) => Space::bounded(b.clone()),
            None => Space::euclidean(dim)?,
        },
    }
    .with_coverage(file.coverage_declared);
    let mut sets: Vec<DomainSet> = built.into_iter().map(|s| s.expect("validated set")).collect();
    if let Some(s) = &support {
        for (i, set) in sets.iter_mut().enumerate() {
            let members: Vec<Point> = s.iter().filter(|p| set.contains_unchecked(p)).cloned().collect();
            if members.is_empty() {
                issues.push(format!("sets[{i}]"), "contains no support point");
                continue;
            }
            *set = DomainSet::finite(set.id().to_string(), members)?;
        }
        if !issues.0.is_empty() {
            return Err(Error::Schema(issues.0));
        }
    }
    let labels = file.sets.iter().map(|s| s.label.clone()).collect();
    let mut classifier = Classifier::new(space, sets, labels).map_err(|e| Error::Schema(vec![format!("sets: {e}")]))?;
    if let Some(ext) = &file.external {
        let sub = SubprocessClassifier::spawn(&ext.command, Duration::from_millis(ext.timeout_ms))?;
        classifier = classifier.with_external(Arc::new(sub));
    }

    // tester configuration
    let mut config = ProbeConfig::for_space(classifier.space(), &metric).with_seed(file.seed);
    let pc = &file.probe_config;
    if let Some(v) = pc.delta_start {
        let scaled = ProbeConfig::with_start(v);
        config.delta_start = v;
        config.delta_min = scaled.delta_min;
    }
    if let Some(v) = pc.shrink_factor {
        config.shrink_factor = v;
    }
    if let Some(v) = pc.delta_min {
        config.delta_min = v;
    }
    if let Some(v) = pc.samples_per_radius {
        config.samples_per_radius = v;
    }
    if let Some(v) = pc.max_radii {
        config.max_radii = v;
    }
    if let Some(v) = pc.k {
        config.k = v;
    }
    config.mode = match file.mode {
        ModeName::Strict => Mode::Strict,
        ModeName::Resolution => Mode::Resolution { rho: file.rho },
    };
    config.validate().map_err(|e| Error::Schema(vec![format!("probe_config: {e}")]))?;

    let generators = file.generators.clone().unwrap_or_else(|| default_family(dim));
    let digest = digest(&file, support.as_deref());
    let mut analyses = file.analyses.clone();
    analyses.sort();
    analyses.dedup();
    Ok(Scenario {
        resolutions: file.resolutions.clone(),
        analyses,
        file,
        digest,
        classifier,
        metric,
        probes,
        config,
        generators,
    })
}

/// SHA-256 over the canonical JSON of the file (keys sorted) and the
/// bit patterns of the resolved support points.
pub fn digest(file: &ScenarioFile, support: Option<&[Point]>) -> String {
    let value = serde_json::to_value(file).expect("scenario serializes");
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(&value).expect("json value serializes"));
    for p in support.unwrap_or_default() {
        for c in p.coords() {
            h.update(c.to_bits().to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_BOXES: &str = r#"{
        "schema": "domstab.scenario/1",
        "seed": 3,
        "space": {"dim": 2, "bounds": {"lo": [-1, -1], "hi": [2, 2]}},
        "sets": [
            {"id": "D", "label": "in", "kind": "box_union", "boxes": [{"lo": [0, 0], "hi": [1, 1]}]},
            {"id": "E", "label": "out", "kind": "complement", "of": "D"}
        ],
        "probes": {"kind": "grid", "spacing": 0.5},
        "analyses": ["stability"]
    }"#;

    fn parse(text: &str) -> Result<Scenario> {
        parse_scenario_str(text, Path::new("."))
    }

    fn schema_errors(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Schema(v)) => v,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_two_box_file() {
        let s = parse(TWO_BOXES).unwrap();
        assert_eq!(s.classifier.sets().len(), 2);
        assert_eq!(s.probes.len(), 49);
        assert_eq!(s.config.seed, 3);
        assert!((s.config.delta_start - 0.1 * 18f64.sqrt()).abs() < 1e-15);
        assert_eq!(s.analyses, vec![Analysis::Stability]);
        assert_eq!(s.digest.len(), 64);
        assert_eq!(s.digest, parse(TWO_BOXES).unwrap().digest);
    }

    #[test]
    fn duplicate_labels_rejected() {
        let text = TWO_BOXES.replace("\"out\"", "\"in\"");
        let errs = schema_errors(&text);
        assert!(errs.iter().any(|e| e.starts_with("sets[1].label") && e.contains("clause iv")), "{errs:?}");
    }

    #[test]
    fn bad_grid_spacing_rejected() {
        let errs = schema_errors(&TWO_BOXES.replace("\"spacing\": 0.5", "\"spacing\": 0"));
        assert!(errs.iter().any(|e| e.starts_with("probes.spacing")));
        let errs = schema_errors(&TWO_BOXES.replace("\"spacing\": 0.5", "\"spacing\": -1"));
        assert!(errs.iter().any(|e| e.starts_with("probes.spacing")));
    }

    #[test]
    fn unknown_field_located() {
        let errs = schema_errors(&TWO_BOXES.replace("\"seed\": 3", "\"sede\": 3"));
        assert!(errs[0].starts_with("line 3"), "{errs:?}");
    }

    #[test]
    fn several_problems_reported_together() {
        let text = TWO_BOXES.replace("\"of\": \"D\"", "\"of\": \"X\"").replace("\"spacing\": 0.5", "\"spacing\": 0");
        assert_eq!(schema_errors(&text).len(), 2);
    }

    #[test]
    fn lattice_support_materializes_sets() {
        let text = r#"{
            "schema": "domstab.scenario/1",
            "space": {"dim": 1, "support": {"lattice": {"origin": [0], "spacing": 0.01, "count": [101]}}},
            "sets": [
                {"id": "even", "label": 0, "kind": "lattice", "origin": [0], "spacing": 0.01, "predicate": {"parity": {"even": true}}},
                {"id": "odd", "label": 1, "kind": "lattice", "origin": [0], "spacing": 0.01, "predicate": {"parity": {"even": false}}}
            ],
            "probes": {"kind": "support"},
            "mode": "resolution",
            "rho": 0.005
        }"#;
        let s = parse(text).unwrap();
        assert_eq!(s.probes.len(), 101);
        assert_eq!(s.classifier.sets()[0].kind_name(), "finite");
        assert_eq!(s.config.mode, Mode::Resolution { rho: Some(0.005) });
        let errs = schema_errors(&text.replace("\"kind\": \"support\"", "\"kind\": \"random\", \"count\": 4"));
        assert!(errs.iter().any(|e| e.contains("random probes need")));
    }

    #[test]
    fn csv_support_relative_to_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("pts.csv"), "x\n0.0\n0.5\n1.0\n").unwrap();
        let text = r#"{
            "schema": "domstab.scenario/1",
            "space": {"dim": 1, "support": {"csv": "pts.csv"}},
            "sets": [
                {"id": "a", "label": "a", "kind": "finite", "points": [[0.0], [0.5]]},
                {"id": "b", "label": "b", "kind": "finite", "points": [[1.0]]}
            ],
            "probes": {"kind": "support"}
        }"#;
        let path = dir.path().join("s.json");
        std::fs::write(&path, text).unwrap();
        let s = parse_scenario(&path).unwrap();
        assert_eq!(s.classifier.space().support().unwrap().len(), 3);
    }
}
