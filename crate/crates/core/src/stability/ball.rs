use crate::classifier::{Classifier, Label};
use crate::error::{Error, Result};
use crate::metric::{derive_rng_stream, sample_ball_where, Metric, Point, RngStream};
use crate::sets::DomainSet;

use super::{home_label, judge, Clause, Judgement, Mode, Outcome, ProbeConfig, RadiusRecord, Verdict};

/// Tests whether `x` is a stable point of `c`, using stream 0 of `cfg.seed`.
pub fn test_stable_point(c: &Classifier, x: &Point, cfg: &ProbeConfig, metric: &Metric) -> Result<Verdict> {
    test_stable_point_seeded(c, x, cfg, metric, derive_rng_stream(cfg.seed, 0))
}

/// [`test_stable_point`] drawing its samples from `stream`.
///
/// On a finite support the ball is enumerated. Otherwise each scheduled
/// radius is sampled, and where the probe's set can report its clearance
/// the nearest outside point is checked too, so a certified ball never
/// reaches past the boundary.
pub fn test_stable_point_seeded(
    c: &Classifier,
    x: &Point,
    cfg: &ProbeConfig,
    metric: &Metric,
    stream: RngStream,
) -> Result<Verdict> {
    cfg.validate()?;
    x.check_dim(c.space().dim())?;
    if c.space().support().is_some() {
        return enumerate_support(c, x, cfg, metric);
    }
    let home = c.locate(x)?;
    let label = match home_label(c, home, x) {
        Ok(l) => l,
        Err(e) => return Ok(Verdict::inconclusive(format!("label of the probe: {e}"), 1, vec![])),
    };
    continuum(c, x, home, &label, cfg, metric, stream)
}

fn continuum(
    c: &Classifier,
    x: &Point,
    home: usize,
    label: &Label,
    cfg: &ProbeConfig,
    metric: &Metric,
    stream: RngStream,
) -> Result<Verdict> {
    let radii = cfg.radii_at(x);
    if radii.is_empty() {
        return Ok(Verdict::inconclusive("no scheduled radius above the resolution floor", 0, vec![]));
    }
    let space = c.space();
    let home_set = &c.sets()[home];
    let clearance = home_set.clearance(x, metric);
    let outside = DomainSet::complement("outside", home_set.clone());

    let mut trace = Vec::with_capacity(radii.len());
    let mut used = 0u64;
    let mut approximate = clearance.is_none() || c.is_external();
    let mut unknown: Option<String> = None;

    for &r in &radii {
        let sub = stream.substream(r.to_bits());
        let samples = match sample_ball_where(x, r, cfg.samples_per_radius, metric, &sub, |p| space.contains(p)) {
            Ok(s) => s,
            Err(Error::DegenerateRadius { .. }) => {
                unknown.get_or_insert_with(|| format!("could not sample inside the space at radius {r}"));
                trace.push(RadiusRecord { radius: r, clean: false, witness: None, clause: None });
                continue;
            }
            Err(e) => return Err(e),
        };
        used += samples.len() as u64;

        let mut violation = None;
        let mut undecided = false;
        for p in &samples {
            match judge(c, home, label, p) {
                Judgement::Clean => {}
                Judgement::Violation(cl) => {
                    violation = Some((p.clone(), cl));
                    break;
                }
                Judgement::Unknown(e) => {
                    undecided = true;
                    unknown.get_or_insert(e);
                }
            }
        }

        if violation.is_none() && clearance.is_some_and(|cl| r > cl) {
            match outside.nearest_member(x, metric) {
                Ok((w, d)) if d < r && space.contains(&w) => {
                    used += 1;
                    match judge(c, home, label, &w) {
                        Judgement::Violation(cl) => violation = Some((w, cl)),
                        Judgement::Unknown(e) => {
                            undecided = true;
                            unknown.get_or_insert(e);
                        }
                        Judgement::Clean => approximate = true,
                    }
                }
                // the boundary is out of reach or leaves the space; samples decide
                _ => approximate = true,
            }
        }

        match violation {
            Some((w, cl)) => trace.push(RadiusRecord { radius: r, clean: false, witness: Some(w), clause: Some(cl) }),
            None if undecided => trace.push(RadiusRecord { radius: r, clean: false, witness: None, clause: None }),
            None => {
                trace.push(RadiusRecord { radius: r, clean: true, witness: None, clause: None });
                return Ok(Verdict {
                    outcome: Outcome::Stable { certified_delta: r },
                    trusted: true,
                    approximate,
                    probes_used: used,
                    trace,
                });
            }
        }
    }

    let all_violated = trace.iter().all(|t| t.witness.is_some());
    if all_violated {
        let last = trace.last().expect("non-empty schedule");
        let outcome = Outcome::Unstable {
            witness: last.witness.clone().expect("violation witness"),
            clause: last.clause.expect("violation clause"),
            radius: last.radius,
        };
        return Ok(Verdict { outcome, trusted: true, approximate: false, probes_used: used, trace });
    }
    let reason = unknown.unwrap_or_else(|| "no clean radius and no violation at every radius".into());
    Ok(Verdict { approximate, ..Verdict::inconclusive(reason, used, trace) })
}

/// Exact test on a finite support.
///
/// The ball `B(x, delta_start)` is enumerated; if it holds a violating
/// point the radius shrinks to that point's distance, which is the largest
/// clean radius. Clause iii then reduces to the nearest-neighbor distance.
fn enumerate_support(c: &Classifier, x: &Point, cfg: &ProbeConfig, metric: &Metric) -> Result<Verdict> {
    let support = c.space().support().expect("finite support");
    if !support.iter().any(|s| s == x) {
        return Err(Error::InvalidProbe(format!("{x} is not a support point")));
    }
    let home = c.locate(x)?;
    let label = match home_label(c, home, x) {
        Ok(l) => l,
        Err(e) => return Ok(Verdict::inconclusive(format!("label of the probe: {e}"), 1, vec![])),
    };

    let start = cfg.delta_start;
    let mut used = 0u64;
    let mut nearest_other = f64::INFINITY;
    let mut violator: Option<(Point, f64, Clause)> = None;
    let mut unknown = None;
    for s in support {
        if s == x {
            continue;
        }
        let d = metric.eval(x.coords(), s.coords());
        nearest_other = nearest_other.min(d);
        if d >= start {
            continue;
        }
        used += 1;
        match judge(c, home, &label, s) {
            Judgement::Clean => {}
            Judgement::Violation(cl) => {
                if violator.as_ref().is_none_or(|(_, bd, _)| d < *bd) {
                    violator = Some((s.clone(), d, cl));
                }
            }
            Judgement::Unknown(e) => {
                unknown.get_or_insert(e);
            }
        }
    }
    if let Some(e) = unknown {
        return Ok(Verdict::inconclusive(e, used, vec![]));
    }

    let mut trace = Vec::new();
    let delta = match &violator {
        Some((w, d, cl)) => {
            trace.push(RadiusRecord { radius: start, clean: false, witness: Some(w.clone()), clause: Some(*cl) });
            trace.push(RadiusRecord { radius: *d, clean: true, witness: None, clause: None });
            *d
        }
        None => {
            trace.push(RadiusRecord { radius: start, clean: true, witness: None, clause: None });
            start
        }
    };

    let lower = cfg.delta_min.max(cfg.floor_at(x));
    let threshold = cfg.threshold_at(x);
    let exact =
        |outcome| Verdict { outcome, trusted: true, approximate: false, probes_used: used, trace: trace.clone() };

    if threshold.is_some_and(|t| start <= t) {
        return Ok(Verdict::inconclusive("delta_start lies at or below the resolution", used, trace));
    }
    if let Some((w, d, clause)) = violator.filter(|_| delta < cfg.delta_min || threshold.is_some_and(|t| delta <= t)) {
        return Ok(exact(Outcome::Unstable { witness: w, clause, radius: d.next_up() }));
    }
    // clause iii: every admissible smaller ball holds a point besides x
    let non_isolated = match cfg.mode {
        Mode::Strict => nearest_other < lower,
        Mode::Resolution { .. } => nearest_other <= threshold.expect("resolution mode"),
    };
    if non_isolated {
        Ok(exact(Outcome::Stable { certified_delta: delta }))
    } else {
        let radius = nearest_other.min(delta);
        Ok(exact(Outcome::Unstable { witness: x.clone(), clause: Clause::Isolation, radius }))
    }
}
