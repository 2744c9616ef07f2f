use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::Result;
use crate::metric::{derive_rng_stream, Metric, Point};
use crate::sets::{is_dense_at_resolution, DensityVerdict};

use super::{test_stable_point_seeded, ProbeConfig, Verdict};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFinding {
    pub set: String,
    pub set_index: usize,
    #[serde(flatten)]
    pub verdict: DensityVerdict,
}

/// A stable certificate that a dense rival set rules out: a tester bug.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockerViolation {
    pub probe_index: usize,
    pub point: Point,
    pub home_set: String,
    pub dense_set: String,
    pub resolution: f64,
    pub certified_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockerReport {
    pub coverage_declared: bool,
    pub findings: Vec<DensityFinding>,
    pub verdicts: Vec<Option<Verdict>>,
    pub violations: Vec<BlockerViolation>,
    pub consistent: bool,
}

/// Cross-examines stability certificates against density findings.
///
/// `records` holds `(probe_index, point, home_set_index, verdict)`. A set
/// dense at `r` meets every probe's `r`-ball, so a probe of another set
/// certified with `delta >= r` contradicts the density finding.
pub fn blocker_violations(
    c: &Classifier,
    findings: &[DensityFinding],
    records: &[(usize, Point, usize, &Verdict)],
) -> Vec<BlockerViolation> {
    let mut out = Vec::new();
    for f in findings.iter().filter(|f| f.verdict.dense) {
        for (idx, p, home, v) in records {
            if *home == f.set_index {
                continue;
            }
            if let Some(d) = v.outcome.certified_delta() {
                if d >= f.verdict.resolution {
                    out.push(BlockerViolation {
                        probe_index: *idx,
                        point: p.clone(),
                        home_set: c.sets()[*home].id().to_string(),
                        dense_set: f.set.clone(),
                        resolution: f.verdict.resolution,
                        certified_delta: d,
                    });
                }
            }
        }
    }
    out
}

/// Density of every set at every resolution, then stability of every probe,
/// then the consistency check between the two.
///
/// Probes outside every set get no verdict.
pub fn dense_blocker_scan(
    c: &Classifier,
    probes: &[Point],
    resolutions: &[f64],
    cfg: &ProbeConfig,
    metric: &Metric,
) -> Result<BlockerReport> {
    let mut findings = Vec::new();
    for (k, set) in c.sets().iter().enumerate() {
        for &r in resolutions {
            let verdict = is_dense_at_resolution(set, probes, r, metric, cfg)?;
            findings.push(DensityFinding { set: set.id().to_string(), set_index: k, verdict });
        }
    }
    let verdicts: Vec<Option<(usize, Verdict)>> = probes
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let Ok(home) = c.locate(p) else { return Ok(None) };
            let v = test_stable_point_seeded(c, p, cfg, metric, derive_rng_stream(cfg.seed, i as u64))?;
            Ok(Some((home, v)))
        })
        .collect::<Result<_>>()?;
    let records: Vec<(usize, Point, usize, &Verdict)> = verdicts
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.as_ref().map(|(h, v)| (i, probes[i].clone(), *h, v)))
        .collect();
    let violations = blocker_violations(c, &findings, &records);
    Ok(BlockerReport {
        coverage_declared: c.space().coverage_declared(),
        consistent: violations.is_empty(),
        findings,
        verdicts: verdicts.into_iter().map(|v| v.map(|(_, v)| v)).collect(),
        violations,
    })
}
