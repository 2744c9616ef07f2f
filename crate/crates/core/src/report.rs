//! Running a scenario and writing its report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{check_classifier_axioms, AxiomClause, AxiomReport, Label};
use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, Point};
use crate::oracle::{oracle_verdicts, FiniteScenario, OracleVerdict};
use crate::scenario::{Analysis, Scenario};
use crate::series::{test_stability_via_series, SeriesVerdict};
use crate::sets::is_dense_at_resolution;
use crate::stability::{
    blocker_violations, calibrate, cross_check_stable_accumulation, test_accumulation_point_seeded,
    test_stable_point_seeded, AccumulationVerdict, AgreementReport, BlockerViolation, Clause, DensityFinding,
    EpsilonCalibration, EpsilonVariant, Mode, OutcomeKind, Verdict,
};

pub const REPORT_SCHEMA: &str = "domstab.report/1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    CsvSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSection {
    pub halving: EpsilonCalibration,
    pub compounding: EpsilonCalibration,
    /// Resolution used when resolution mode has no explicit rho, at the origin.
    pub default_resolution: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub id: String,
    pub label: Label,
    pub kind: String,
    pub open: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub index: usize,
    pub point: Point,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stability: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accumulation: Option<AccumulationVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub series: Option<SeriesVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossCheckSection {
    pub eligible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<AgreementReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSection {
    pub eligible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    /// Oracle-stable support points per set id.
    pub stable: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockerSection {
    pub consistent: bool,
    pub violations: Vec<BlockerViolation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub probes: usize,
    pub stable: usize,
    pub unstable: usize,
    pub inconclusive: usize,
}

impl OutcomeCounts {
    fn add(&mut self, k: OutcomeKind) {
        self.probes += 1;
        match k {
            OutcomeKind::Stable => self.stable += 1,
            OutcomeKind::Unstable => self.unstable += 1,
            OutcomeKind::Inconclusive => self.inconclusive += 1,
        }
    }
}

/// Fractions of probes on which two analyses agree; `None` when no probe
/// carries both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AgreementRates {
    pub stability_series: Option<f64>,
    pub stability_accumulation: Option<f64>,
    pub stability_oracle: Option<f64>,
    pub cross_check: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    /// Probes in no set.
    pub outside: usize,
    pub errors: usize,
    pub stability: BTreeMap<String, OutcomeCounts>,
    pub series: BTreeMap<String, OutcomeCounts>,
    pub agreement: AgreementRates,
    pub blocker_consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub tool_version: String,
    pub scenario_digest: String,
    pub seed: u64,
    pub mode: Mode,
    pub epsilon: EpsilonSection,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sets: Vec<SetSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axioms: Option<AxiomReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<Vec<DensityFinding>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<Vec<ProbeRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_check: Option<CrossCheckSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocker: Option<BlockerSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aggregates: Option<Aggregates>,
    /// Set when an induced axiom violation stopped the run or the blocker
    /// check found a contradiction.
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    /// Unix seconds; excluded from [`Report::content_digest`].
    pub timestamp: u64,
}

impl Report {
    /// SHA-256 of the JSON report with the timestamp cleared.
    pub fn content_digest(&self) -> String {
        let mut r = self.clone();
        r.timestamp = 0;
        let bytes = serde_json::to_vec(&r).expect("report serializes");
        Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// True when the axiom section holds a violation of the set definitions
    /// themselves, as opposed to a disagreement with an external model.
    pub fn induced_axiom_violation(&self) -> bool {
        self.axioms.as_ref().is_some_and(|a| a.violations.iter().any(|v| v.clause != AxiomClause::Constant))
    }

    pub fn blocker_inconsistent(&self) -> bool {
        self.blocker.as_ref().is_some_and(|b| !b.consistent)
    }

    /// Aggregates as they follow from the records and sections.
    pub fn recompute_aggregates(&self) -> Option<Aggregates> {
        let records = self.records.as_ref()?;
        let mut a = Aggregates { blocker_consistent: !self.blocker_inconsistent(), ..Default::default() };
        let (mut ss, mut sa, mut so) = ((0, 0), (0, 0), (0, 0));
        for r in records {
            if r.error.is_some() {
                a.errors += 1;
            }
            let Some(set) = &r.set else {
                if r.error.is_none() {
                    a.outside += 1;
                }
                continue;
            };
            if let Some(v) = &r.stability {
                a.stability.entry(set.clone()).or_default().add(v.kind());
            }
            if let Some(v) = &r.series {
                a.series.entry(set.clone()).or_default().add(v.verdict.kind());
            }
            if let (Some(v), Some(s)) = (&r.stability, &r.series) {
                ss.0 += 1;
                ss.1 += usize::from(v.kind() == s.verdict.kind());
            }
            if let (Some(v), Some(acc)) = (&r.stability, &r.accumulation) {
                sa.0 += 1;
                let agree = matches!(
                    (v.kind(), acc.accumulation),
                    (OutcomeKind::Stable, true) | (OutcomeKind::Unstable, false)
                );
                sa.1 += usize::from(agree);
            }
            if let (Some(v), Some(o)) = (&r.stability, &r.oracle) {
                so.0 += 1;
                so.1 += usize::from(oracle_matches(v, o));
            }
        }
        let rate = |(n, k): (usize, usize)| (n > 0).then(|| k as f64 / n as f64);
        a.agreement = AgreementRates {
            stability_series: rate(ss),
            stability_accumulation: rate(sa),
            stability_oracle: rate(so),
            cross_check: self.cross_check.as_ref().and_then(|c| c.report.as_ref()).map(|r| r.rate),
        };
        Some(a)
    }

    /// Checks that the stored aggregates follow from the records.
    pub fn audit(&self) -> Result<()> {
        if self.aggregates != self.recompute_aggregates() {
            return Err(Error::Precondition("report aggregates do not recompute from the records".into()));
        }
        if let Some(b) = &self.blocker {
            if b.consistent != b.violations.is_empty() {
                return Err(Error::Precondition("blocker flag disagrees with its violations".into()));
            }
        }
        Ok(())
    }
}

/// Same kind, certificate and clause as the oracle.
pub fn oracle_matches(v: &Verdict, o: &OracleVerdict) -> bool {
    v.kind() == o.kind && v.outcome.certified_delta() == o.certified_delta && v.outcome.clause() == o.clause
}

/// Both epsilon recurrences from 1.0 with multiplier `k`.
pub fn epsilon_section(k: u32) -> EpsilonSection {
    let halving = calibrate(1.0, EpsilonVariant::Halving, k, 0.0).expect("1.0 is a valid start");
    let compounding = calibrate(1.0, EpsilonVariant::Compounding, k, 0.0).expect("1.0 is a valid start");
    EpsilonSection { default_resolution: halving.resolution, halving, compounding }
}

/// Runs every requested analysis. Analysis failures that concern single
/// probes land in the probe's record; everything else is an error.
pub fn run_scenario(s: &Scenario, opts: &RunOptions) -> Result<Report> {
    match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Io(format!("worker pool: {e}")))?
            .install(|| run_inner(s)),
        None => run_inner(s),
    }
}

fn run_inner(s: &Scenario) -> Result<Report> {
    let c = &s.classifier;
    let cfg = &s.config;
    let metric = &s.metric;
    let wants = |a: Analysis| s.analyses.contains(&a);
    let mut report = Report {
        schema: REPORT_SCHEMA.into(),
        tool_version: env!("CARGO_PKG_VERSION").into(),
        scenario_digest: s.digest.clone(),
        seed: cfg.seed,
        mode: cfg.mode,
        epsilon: epsilon_section(cfg.k),
        sets: Vec::new(),
        axioms: None,
        density: None,
        records: None,
        cross_check: None,
        oracle: None,
        blocker: None,
        aggregates: None,
        failed: false,
        failure: None,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    if s.analyses.iter().all(|a| *a == Analysis::Epsilon) {
        return Ok(report);
    }
    report.sets = c
        .sets()
        .iter()
        .zip(c.labels())
        .map(|(d, l)| SetSummary { id: d.id().into(), label: l.clone(), kind: d.kind_name().into(), open: d.is_open() })
        .collect();

    let axioms = check_classifier_axioms(c, &s.probes);
    let untrusted = !axioms.passed && c.is_external();
    report.axioms = Some(axioms);
    if report.induced_axiom_violation() {
        report.failed = true;
        report.failure = Some("the classification sets violate the classifier axioms".into());
        return Ok(report);
    }

    if wants(Analysis::Density) {
        let resolutions = if s.resolutions.is_empty() { cfg.radii() } else { s.resolutions.clone() };
        let jobs: Vec<(usize, f64)> =
            (0..c.sets().len()).flat_map(|k| resolutions.iter().map(move |r| (k, *r))).collect();
        let findings = jobs
            .par_iter()
            .map(|&(k, r)| {
                let set = &c.sets()[k];
                let verdict = is_dense_at_resolution(set, &s.probes, r, metric, cfg)?;
                Ok(DensityFinding { set: set.id().to_string(), set_index: k, verdict })
            })
            .collect::<Result<Vec<_>>>()?;
        report.density = Some(findings);
    }

    let oracle = if wants(Analysis::Oracle) {
        match c.space().support() {
            None => {
                report.oracle = Some(OracleSection {
                    eligible: false,
                    reason: Some("the oracle needs a finite support".into()),
                    stable: BTreeMap::new(),
                });
                None
            }
            Some(_) => {
                let rho = match &cfg.mode {
                    Mode::Resolution { rho: Some(r) } => *r,
                    _ => report.epsilon.default_resolution,
                };
                let fs = FiniteScenario::from_classifier(c, metric.clone(), rho)?;
                let verdicts = oracle_verdicts(&fs, cfg);
                let mut stable: BTreeMap<String, usize> = fs.set_ids.iter().map(|id| (id.clone(), 0)).collect();
                for v in verdicts.iter().filter(|v| v.kind == OutcomeKind::Stable) {
                    *stable.get_mut(&fs.set_ids[v.set]).expect("known set") += 1;
                }
                report.oracle = Some(OracleSection { eligible: true, reason: None, stable });
                Some(fs.support.into_iter().zip(verdicts).collect::<Vec<_>>())
            }
        }
    } else {
        None
    };

    let per_probe = [Analysis::Stability, Analysis::Accumulation, Analysis::Series, Analysis::Oracle];
    if per_probe.iter().any(|a| wants(*a)) {
        let records: Vec<ProbeRecord> =
            s.probes.par_iter().enumerate().map(|(i, x)| probe_record(s, i, x, oracle.as_deref())).collect();
        report.records = Some(records);
    }
    if untrusted {
        for r in report.records.iter_mut().flatten() {
            if let Some(v) = &mut r.stability {
                v.trusted = false;
            }
            if let Some(v) = &mut r.series {
                v.verdict.trusted = false;
            }
        }
    }

    if wants(Analysis::CrossCheck) {
        report.cross_check = Some(match cross_check_stable_accumulation(c, &s.probes, cfg, metric) {
            Ok(r) => CrossCheckSection { eligible: true, reason: None, report: Some(r) },
            Err(Error::Precondition(reason)) => {
                CrossCheckSection { eligible: false, reason: Some(reason), report: None }
            }
            Err(e) => return Err(e),
        });
    }

    if let (Some(findings), Some(records)) = (&report.density, &report.records) {
        let stable_records: Vec<(usize, Point, usize, &Verdict)> = records
            .iter()
            .filter_map(|r| {
                let home = c.sets().iter().position(|d| Some(d.id()) == r.set.as_deref())?;
                Some((r.index, r.point.clone(), home, r.stability.as_ref()?))
            })
            .collect();
        if !stable_records.is_empty() {
            let violations = blocker_violations(c, findings, &stable_records);
            report.blocker = Some(BlockerSection { consistent: violations.is_empty(), violations });
        }
    }
    if report.blocker_inconsistent() {
        report.failed = true;
        report.failure = Some("a stable certificate contradicts a density finding".into());
    }
    report.aggregates = report.recompute_aggregates();
    Ok(report)
}

fn probe_record(s: &Scenario, i: usize, x: &Point, oracle: Option<&[(Point, OracleVerdict)]>) -> ProbeRecord {
    let c = &s.classifier;
    let cfg = &s.config;
    let mut rec = ProbeRecord {
        index: i,
        point: x.clone(),
        set: None,
        stability: None,
        accumulation: None,
        series: None,
        oracle: None,
        error: None,
    };
    let home = match c.locate(x) {
        Ok(h) => h,
        Err(Error::UndefinedPoint) => return rec,
        Err(e) => {
            rec.error = Some(e.to_string());
            return rec;
        }
    };
    rec.set = Some(c.sets()[home].id().to_string());
    let stream = derive_rng_stream(cfg.seed, i as u64);
    let wants = |a: Analysis| s.analyses.contains(&a);
    let mut errors = Vec::new();
    let mut note = |what: &str, e: Error| errors.push(format!("{what}: {e}"));
    if wants(Analysis::Stability) {
        match test_stable_point_seeded(c, x, cfg, &s.metric, stream) {
            Ok(v) => rec.stability = Some(v),
            Err(e) => note("stability", e),
        }
    }
    if wants(Analysis::Accumulation) {
        match test_accumulation_point_seeded(&c.sets()[home], x, cfg, &s.metric, stream.substream(u64::MAX)) {
            Ok(v) => rec.accumulation = Some(v),
            Err(e) => note("accumulation", e),
        }
    }
    if wants(Analysis::Series) {
        match test_stability_via_series(c, x, &s.generators, cfg, &s.metric, stream) {
            Ok(v) => rec.series = Some(v),
            Err(e) => note("series", e),
        }
    }
    if let Some(table) = oracle {
        match table.iter().find(|(p, _)| p == x) {
            Some((_, v)) => rec.oracle = Some(v.clone()),
            None => note("oracle", Error::InvalidProbe(format!("{x} is not a support point"))),
        }
    }
    if !errors.is_empty() {
        rec.error = Some(errors.join("; "));
    }
    rec
}

fn mode_name(m: &Mode) -> &'static str {
    match m {
        Mode::Strict => "strict",
        Mode::Resolution { .. } => "resolution",
    }
}

fn clause_name(c: Clause) -> String {
    serde_json::to_value(c).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn outcome_name(k: OutcomeKind) -> &'static str {
    match k {
        OutcomeKind::Stable => "stable",
        OutcomeKind::Unstable => "unstable",
        OutcomeKind::Inconclusive => "inconclusive",
    }
}

/// Renders the report after auditing its aggregates.
///
/// The CSV summary has one row per probe. Its outcome comes from the ball
/// tester, falling back to the series tester, then the oracle.
pub fn render_report(r: &Report, format: ReportFormat) -> Result<Vec<u8>> {
    r.audit()?;
    match format {
        ReportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(r).map_err(|e| Error::Io(e.to_string()))?;
            out.push(b'\n');
            Ok(out)
        }
        ReportFormat::CsvSummary => {
            let records = r.records.as_deref().unwrap_or_default();
            let dim = records.first().map_or(0, |p| p.point.dim());
            let mut w = csv::Writer::from_writer(Vec::new());
            let mut header: Vec<String> = vec!["index".into()];
            header.extend((0..dim).map(|i| format!("x{i}")));
            header.extend(["set", "mode", "outcome", "certified_delta", "clause"].map(String::from));
            let io = |e: csv::Error| Error::Io(e.to_string());
            w.write_record(&header).map_err(io)?;
            for rec in records {
                let (kind, delta, clause) = match (&rec.stability, &rec.series, &rec.oracle) {
                    (Some(v), _, _) | (None, Some(SeriesVerdict { verdict: v, .. }), _) => {
                        (Some(v.kind()), v.outcome.certified_delta(), v.outcome.clause())
                    }
                    (None, None, Some(o)) => (Some(o.kind), o.certified_delta, o.clause),
                    _ => (None, None, None),
                };
                let mut row: Vec<String> = vec![rec.index.to_string()];
                row.extend(rec.point.coords().iter().map(|c| c.to_string()));
                row.push(rec.set.clone().unwrap_or_default());
                row.push(mode_name(&r.mode).into());
                row.push(kind.map(outcome_name).unwrap_or_default().into());
                row.push(delta.map(|d| d.to_string()).unwrap_or_default());
                row.push(clause.map(clause_name).unwrap_or_default());
                w.write_record(&row).map_err(io)?;
            }
            w.into_inner().map_err(|e| Error::Io(e.to_string()))
        }
    }
}

/// Writes the rendered report to `out`, or to stdout when `out` is `None`.
pub fn emit_report(r: &Report, format: ReportFormat, out: Option<&Path>) -> Result<()> {
    let bytes = render_report(r, format)?;
    match out {
        Some(p) => std::fs::write(p, bytes).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => std::io::stdout().lock().write_all(&bytes).map_err(|e| Error::Io(e.to_string())),
    }
}
