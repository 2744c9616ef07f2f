use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, Metric, Point, RngStream};
use crate::sets::{is_dense_at_resolution, DomainSet};

use super::{
    test_accumulation_point_seeded, test_stable_point_seeded, AccumulationVerdict, OutcomeKind, ProbeConfig, Verdict,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Disagreement {
    pub probe_index: usize,
    pub point: Point,
    pub stable: Verdict,
    pub accumulation: AccumulationVerdict,
    /// The probe sits closer to the boundary than the smallest scheduled
    /// radius, so no certificate was reachable.
    pub resolution_limited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub set: String,
    pub probes_in_set: usize,
    pub skipped_outside_set: usize,
    pub agreements: usize,
    pub rate: f64,
    pub disagreements: Vec<Disagreement>,
}

/// Points used to decide the density preconditions: the support when there
/// is one, otherwise a grid over the bounds.
pub fn density_probes(c: &Classifier) -> Option<Vec<Point>> {
    if let Some(s) = c.space().support() {
        return Some(s.to_vec());
    }
    let b = c.space().bounds()?;
    let n = b.dim();
    let per_axis = ((4096f64).powf(1.0 / n as f64).floor() as usize).clamp(2, 21);
    let mut out = Vec::with_capacity(per_axis.pow(n as u32));
    let mut idx = vec![0usize; n];
    loop {
        let coords: Vec<f64> =
            (0..n).map(|i| b.lo[i] + (b.hi[i] - b.lo[i]) * idx[i] as f64 / (per_axis - 1) as f64).collect();
        out.push(Point::new(coords).ok()?);
        let mut axis = 0;
        loop {
            if axis == n {
                return Some(out);
            }
            idx[axis] += 1;
            if idx[axis] < per_axis {
                break;
            }
            idx[axis] = 0;
            axis += 1;
        }
    }
}

fn eligible_set(c: &Classifier, cfg: &ProbeConfig, metric: &Metric) -> Result<usize> {
    if c.sets().len() != 2 {
        return Err(Error::Precondition(format!("needs exactly two sets, found {}", c.sets().len())));
    }
    let d = c
        .sets()
        .iter()
        .position(DomainSet::is_open)
        .ok_or_else(|| Error::Precondition("neither set is open by construction".into()))?;
    let probes = density_probes(c)
        .ok_or_else(|| Error::Precondition("density check needs bounds or a finite support".into()))?;
    for set in c.sets() {
        for r in cfg.radii() {
            let v = is_dense_at_resolution(set, &probes, r, metric, cfg)?;
            if v.dense {
                return Err(Error::Precondition(format!("set `{}` is dense at resolution {r}", set.id())));
            }
        }
    }
    Ok(d)
}

/// Compares the stable-point and accumulation-point testers on the probes
/// inside the open set of a two-set classifier.
pub fn cross_check_stable_accumulation(
    c: &Classifier,
    probes: &[Point],
    cfg: &ProbeConfig,
    metric: &Metric,
) -> Result<AgreementReport> {
    cross_check_with(c, probes, cfg, metric, test_stable_point_seeded, test_accumulation_point_seeded)
}

/// [`cross_check_stable_accumulation`] with the two testers supplied by the caller.
pub fn cross_check_with<S, A>(
    c: &Classifier,
    probes: &[Point],
    cfg: &ProbeConfig,
    metric: &Metric,
    stable: S,
    accumulate: A,
) -> Result<AgreementReport>
where
    S: Fn(&Classifier, &Point, &ProbeConfig, &Metric, RngStream) -> Result<Verdict> + Sync,
    A: Fn(&DomainSet, &Point, &ProbeConfig, &Metric, RngStream) -> Result<AccumulationVerdict> + Sync,
{
    cfg.validate()?;
    let d = eligible_set(c, cfg, metric)?;
    let set = &c.sets()[d];

    let rows: Vec<Option<(bool, Option<Disagreement>)>> = probes
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            if !set.contains(x)? {
                return Ok(None);
            }
            let stream = derive_rng_stream(cfg.seed, i as u64);
            let sv = stable(c, x, cfg, metric, stream)?;
            let av = accumulate(set, x, cfg, metric, stream.substream(u64::MAX))?;
            let agree =
                matches!((sv.kind(), av.accumulation), (OutcomeKind::Stable, true) | (OutcomeKind::Unstable, false));
            if agree {
                return Ok(Some((true, None)));
            }
            let smallest = cfg.radii_at(x).last().copied().unwrap_or(f64::INFINITY);
            let resolution_limited = sv.kind() == OutcomeKind::Unstable
                && av.accumulation
                && set.clearance(x, metric).is_some_and(|cl| cl < smallest);
            Ok(Some((
                false,
                Some(Disagreement {
                    probe_index: i,
                    point: x.clone(),
                    stable: sv,
                    accumulation: av,
                    resolution_limited,
                }),
            )))
        })
        .collect::<Result<_>>()?;

    let probes_in_set = rows.iter().flatten().count();
    let agreements = rows.iter().flatten().filter(|(a, _)| *a).count();
    let disagreements: Vec<Disagreement> = rows.into_iter().flatten().filter_map(|(_, d)| d).collect();
    Ok(AgreementReport {
        set: set.id().to_string(),
        probes_in_set,
        skipped_outside_set: probes.len() - probes_in_set,
        agreements,
        rate: if probes_in_set == 0 { 1.0 } else { agreements as f64 / probes_in_set as f64 },
        disagreements,
    })
}
