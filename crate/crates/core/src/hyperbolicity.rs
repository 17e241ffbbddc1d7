//! Julia sampling by inverse iteration, singular orbits, hyperbolicity classes and expansion fits.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maps::{dedupe, MapSpec, OrbitRecord, Terminal};
use crate::numerics::{fit_line, mix_seed};
use crate::sphere::{chordal_distance, SpherePoint};

/// Escape radius used for transcendental orbit probes.
pub const ESCAPE_RADIUS: f64 = 1e6;
/// Longest forward probe for the membership proxy.
pub const PROBE_STEPS: usize = 200;
/// The probe stops trusting an orbit once it has expanded by this factor.
pub const PROBE_EXPANSION: f64 = 1e8;
/// A point this close (spherically) to an attracting cycle is taken to be in its basin.
pub const BASIN_TOL: f64 = 1e-6;
/// Largest branch index drawn during inverse iteration for transcendental maps.
pub const MAX_BRANCH: i64 = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SampleMethod {
    InverseIteration { seed: u64, depth: usize },
    PrepoleClosure { depth: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JuliaSample {
    pub points: Vec<SpherePoint>,
    pub method: SampleMethod,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Yes,
    No,
    Undetermined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractingCycle {
    pub points: Vec<SpherePoint>,
    /// `|multiplier|`, the product of spherical derivatives around the cycle.
    pub multiplier: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperbolicityReport {
    pub in_h_sphere: Verdict,
    pub in_h_plane: Verdict,
    /// Euclidean-expansion flag; diagnostic only, `None` unless the plane class is confirmed.
    pub in_h_euclid: Option<bool>,
    /// Spherical distance from the post-singular points (∞ included) to the sample.
    pub post_singular_to_julia_distance: f64,
    /// The same distance with the post-singular set restricted to the plane.
    pub plane_distance: f64,
    /// Mean nearest-neighbour spacing of the sample.
    pub resolution_scale: f64,
    pub attracting_cycles: Vec<AttractingCycle>,
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionEstimate {
    pub c_hat: f64,
    pub lambda_hat: f64,
    /// `(n, min over the sample of ln (f^n)^×)`, starting with `(0, 0)`.
    pub per_depth_minima: Vec<(usize, f64)>,
    pub fit_residual: f64,
}

fn escape_radius(map: &MapSpec) -> f64 {
    if map.is_rational() {
        f64::INFINITY
    } else {
        ESCAPE_RADIUS
    }
}

/// A repelling fixed point: the largest-multiplier finite fixed point for rational maps,
/// the limit of the principal inverse branch started at 1 otherwise.
pub fn repelling_seed(map: &MapSpec) -> Result<Complex64> {
    if map.is_rational() {
        let mut best: Option<(f64, Complex64)> = None;
        for z in map.rational_fixed_points()? {
            if map.is_pole(z) {
                continue;
            }
            let m = map.derivative(SpherePoint::Finite(z))?.norm();
            if m > 1.0 + 1e-9 && best.is_none_or(|(bm, _)| m > bm) {
                best = Some((m, z));
            }
        }
        return best.map(|(_, z)| z).ok_or(Error::NoRepellingSeed);
    }
    let mut z = Complex64::new(1.0, 0.0);
    for _ in 0..500 {
        let (next, _) = map.branch_preimage(SpherePoint::Finite(z), 0).map_err(|_| Error::NoRepellingSeed)?;
        let done = (next - z).norm() <= 1e-15 * (1.0 + z.norm());
        z = next;
        if done {
            break;
        }
    }
    let fz = map.eval(SpherePoint::Finite(z))?.finite().ok_or(Error::NoRepellingSeed)?;
    let m = map.derivative(SpherePoint::Finite(z))?.norm();
    if (fz - z).norm() > 1e-9 * (1.0 + z.norm()) || m <= 1.0 {
        return Err(Error::NoRepellingSeed);
    }
    Ok(z)
}

/// Forward orbits of every singular value, each paired with its starting value.
pub fn singular_orbits(map: &MapSpec, horizon: usize) -> Result<Vec<(SpherePoint, OrbitRecord)>> {
    let sing = map.singular_values()?;
    let r = escape_radius(map);
    Ok(sing
        .all_values()
        .into_iter()
        .filter(|v| map.is_rational() || !v.is_infinite())
        .map(|v| (v, map.orbit(v, horizon, r)))
        .collect())
}

/// The post-singular set: union of singular forward orbits up to `horizon` steps.
pub fn post_singular_orbit(map: &MapSpec, horizon: usize) -> Result<Vec<SpherePoint>> {
    let mut out = Vec::new();
    for (_, o) in singular_orbits(map, horizon)? {
        out.extend(o.points);
    }
    Ok(out)
}

fn cycle_multiplier(map: &MapSpec, cycle: &[SpherePoint]) -> f64 {
    let mut s = 0.0;
    for p in cycle {
        match map.log_sphere_derivative(*p) {
            Ok(v) => s += v,
            Err(_) => return f64::NAN,
        }
    }
    s.exp()
}

/// Attracting cycles reached by singular orbits (deduplicated).
pub fn attracting_cycles(map: &MapSpec, horizon: usize) -> Result<Vec<AttractingCycle>> {
    let mut out: Vec<AttractingCycle> = Vec::new();
    for (_, o) in singular_orbits(map, horizon)? {
        if let Terminal::ConvergedToCycle(c) = o.terminal {
            let m = cycle_multiplier(map, &c);
            if m < 1.0 - 1e-9 && !out.iter().any(|k| same_cycle(&k.points, &c)) {
                out.push(AttractingCycle { points: c, multiplier: m });
            }
        }
    }
    Ok(out)
}

fn same_cycle(a: &[SpherePoint], b: &[SpherePoint]) -> bool {
    a.len() == b.len() && b.iter().any(|p| chordal_distance(*p, a[0]) < BASIN_TOL)
}

/// Membership proxy: within the trusted part of the forward orbit (at most `PROBE_STEPS`
/// steps, and only while the accumulated spherical expansion stays below `PROBE_EXPANSION`)
/// the point neither escapes, hits a pole, nor enters an attracting basin.
pub fn passes_membership_proxy(map: &MapSpec, z: SpherePoint, cycles: &[AttractingCycle]) -> bool {
    let r = escape_radius(map);
    let limit = PROBE_EXPANSION.ln();
    let mut cur = z;
    let mut cum = 0.0;
    for _ in 0..=PROBE_STEPS {
        if cycles.iter().flat_map(|c| c.points.iter()).any(|p| chordal_distance(*p, cur) < BASIN_TOL) {
            return false;
        }
        if let SpherePoint::Finite(w) = cur {
            if w.norm() > r {
                return false;
            }
            if map.is_transcendental() && map.is_pole(w) {
                return false;
            }
        } else if map.is_transcendental() {
            return false;
        }
        if cum > limit {
            return true;
        }
        match map.step(cur) {
            Ok((next, ld)) => {
                cum += ld.max(-50.0);
                cur = next;
            }
            Err(_) => return false,
        }
    }
    true
}

/// Branch weights `∝ 1/(1+|k|)²` for `|k| ≤ limit`, as a cumulative table.
fn branch_table(limit: i64) -> (Vec<i64>, Vec<f64>) {
    let ks: Vec<i64> = (-limit..=limit).collect();
    let mut acc = 0.0;
    let cdf = ks
        .iter()
        .map(|k| {
            acc += 1.0 / ((1 + k.abs()) as f64).powi(2);
            acc
        })
        .collect::<Vec<_>>();
    let total = acc;
    (ks, cdf.into_iter().map(|c| c / total).collect())
}

fn draw_branch(rng: &mut ChaCha8Rng, table: &(Vec<i64>, Vec<f64>)) -> i64 {
    let u: f64 = rng.gen();
    let i = table.1.partition_point(|c| *c < u).min(table.0.len() - 1);
    table.0[i]
}

fn backward_orbit(map: &MapSpec, seed_point: Complex64, depth: usize, rng: &mut ChaCha8Rng, table: &(Vec<i64>, Vec<f64>)) -> Result<SpherePoint> {
    let mut z = SpherePoint::Finite(seed_point);
    for _ in 0..depth {
        z = if map.is_rational() {
            let pre = map.rational_preimages(z)?;
            pre[rng.gen_range(0..pre.len())]
        } else {
            let k = draw_branch(rng, table);
            SpherePoint::Finite(map.branch_preimage(z, k)?.0)
        };
    }
    Ok(z)
}

/// `count` Julia points: the repelling fixed point itself, then random backward orbits of
/// length `depth` started there, each checked against the membership proxy.
pub fn julia_sample(map: &MapSpec, count: usize, depth: usize, seed: u64) -> Result<JuliaSample> {
    if count == 0 || depth == 0 {
        return Err(Error::InvalidArgument("count and depth must be positive".into()));
    }
    let start = repelling_seed(map)?;
    let cycles = attracting_cycles(map, PROBE_STEPS).unwrap_or_default();
    let limit = map.branch_limit().map_or(MAX_BRANCH, |l| l.min(MAX_BRANCH));
    let table = branch_table(limit);
    const ATTEMPTS: u64 = 20;
    let found: Vec<Option<SpherePoint>> = (1..count)
        .into_par_iter()
        .map(|i| {
            for attempt in 0..ATTEMPTS {
                let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, (i as u64) | (attempt << 40)));
                if let Ok(z) = backward_orbit(map, start, depth, &mut rng, &table) {
                    if passes_membership_proxy(map, z, &cycles) {
                        return Some(z);
                    }
                }
            }
            None
        })
        .collect();
    let mut points = vec![SpherePoint::Finite(start)];
    points.extend(found.iter().flatten().copied());
    if points.len() < count {
        return Err(Error::SampleExhausted { found: points.len(), wanted: count });
    }
    Ok(JuliaSample { count: points.len(), points, method: SampleMethod::InverseIteration { seed, depth } })
}

/// Mean spherical nearest-neighbour distance.
pub fn mean_spacing(points: &[SpherePoint]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    let nn: Vec<f64> = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut best = f64::INFINITY;
            for (j, q) in points.iter().enumerate() {
                if j != i {
                    best = best.min(chordal_distance(points[i], *q));
                }
            }
            best
        })
        .collect();
    nn.iter().sum::<f64>() / nn.len() as f64
}

fn min_distance(a: &[SpherePoint], b: &[SpherePoint]) -> f64 {
    a.par_iter()
        .map(|p| b.iter().map(|q| chordal_distance(*p, *q)).fold(f64::INFINITY, f64::min))
        .reduce(|| f64::INFINITY, f64::min)
}

/// Numeric classification into the sphere and plane hyperbolicity classes.
pub fn classify(map: &MapSpec, horizon: usize, sample: &JuliaSample) -> HyperbolicityReport {
    let mut evidence = Vec::new();
    let mut report = HyperbolicityReport {
        in_h_sphere: Verdict::Undetermined,
        in_h_plane: Verdict::Undetermined,
        in_h_euclid: None,
        post_singular_to_julia_distance: 0.0,
        plane_distance: 0.0,
        resolution_scale: mean_spacing(&sample.points),
        attracting_cycles: vec![],
        evidence: vec![],
    };
    let sing = match map.singular_values() {
        Ok(s) => s,
        Err(e) => {
            report.evidence.push(format!("singular values unavailable: {e}"));
            return report;
        }
    };
    let orbits = match singular_orbits(map, horizon) {
        Ok(o) => o,
        Err(e) => {
            report.evidence.push(format!("singular orbits unavailable: {e}"));
            return report;
        }
    };
    let mut violation = false;
    let mut open = false;
    let mut post = Vec::new();
    for (v, o) in &orbits {
        post.extend(o.points.iter().copied());
        match &o.terminal {
            Terminal::ConvergedToCycle(c) => {
                let m = cycle_multiplier(map, c);
                if m < 1.0 - 1e-9 {
                    evidence.push(format!("singular value {v} attracted to a cycle of period {} (|multiplier| {m:.3e})", c.len()));
                    if !report.attracting_cycles.iter().any(|k| same_cycle(&k.points, c)) {
                        report.attracting_cycles.push(AttractingCycle { points: c.clone(), multiplier: m });
                    }
                } else {
                    violation = true;
                    evidence.push(format!("singular value {v} lands on a non-attracting cycle (|multiplier| {m:.6})"));
                }
            }
            Terminal::HitPole(k) => {
                violation = true;
                evidence.push(format!("singular value {v} is a prepole (pole after {k} steps)"));
            }
            Terminal::Escaped { step, .. } => {
                violation = true;
                evidence.push(format!("singular orbit of {v} escapes at step {step}"));
            }
            Terminal::Alive => {
                open = true;
                evidence.push(format!("singular orbit of {v} undecided after {horizon} steps"));
            }
        }
    }
    let finite_post: Vec<SpherePoint> = post.iter().copied().filter(|p| !p.is_infinite()).collect();
    report.plane_distance = min_distance(&finite_post, &sample.points);
    report.post_singular_to_julia_distance = min_distance(&post, &sample.points);
    let margin = 3.0 * report.resolution_scale;
    evidence.push(format!(
        "post-singular distance {:.4e} (plane {:.4e}) vs 3x spacing {:.4e}",
        report.post_singular_to_julia_distance, report.plane_distance, margin
    ));

    report.in_h_plane = if violation {
        Verdict::No
    } else if open || report.plane_distance <= margin {
        Verdict::Undetermined
    } else {
        Verdict::Yes
    };
    report.in_h_sphere = match report.in_h_plane {
        Verdict::Yes => {
            if map.is_transcendental() && sing.infinity_is_asymptotic {
                evidence.push("infinity is an asymptotic value".into());
                Verdict::No
            } else if map.is_transcendental() && sing.infinity_is_critical_value() {
                evidence.push("infinity is a critical value".into());
                Verdict::No
            } else if report.post_singular_to_julia_distance > margin {
                Verdict::Yes
            } else {
                Verdict::Undetermined
            }
        }
        v => v,
    };
    if report.in_h_plane == Verdict::Yes {
        report.in_h_euclid = euclidean_growth(map, &sample.points, 10);
        if let Some(flag) = report.in_h_euclid {
            evidence.push(format!("euclidean derivative growth fit positive: {flag}"));
        }
    }
    report.evidence = evidence;
    report
}

/// Minimum of `ln (f^n)^×` over the sample for each `n ≤ max_depth`; `None` where no orbit survives.
fn depth_minima(map: &MapSpec, points: &[SpherePoint], max_depth: usize, euclidean: bool) -> Vec<Option<f64>> {
    let per_point: Vec<Vec<Option<f64>>> = points
        .par_iter()
        .map(|z| {
            let mut out = vec![None; max_depth + 1];
            out[0] = Some(0.0);
            let mut cur = *z;
            let mut cum = 0.0;
            for slot in out.iter_mut().skip(1) {
                if let SpherePoint::Finite(w) = cur {
                    if map.is_transcendental() && map.is_pole(w) {
                        break;
                    }
                } else if map.is_transcendental() || euclidean {
                    break;
                }
                let ld = if euclidean {
                    match map.derivative(cur) {
                        Ok(d) => d.norm().ln(),
                        Err(_) => break,
                    }
                } else {
                    match map.log_sphere_derivative(cur) {
                        Ok(v) => v,
                        Err(_) => break,
                    }
                };
                cum += ld;
                *slot = Some(cum);
                match map.eval(cur) {
                    Ok(n) => cur = n,
                    Err(_) => break,
                }
            }
            out
        })
        .collect();
    (0..=max_depth)
        .map(|n| per_point.iter().filter_map(|v| v[n]).fold(None, |acc: Option<f64>, x| Some(acc.map_or(x, |a| a.min(x)))))
        .collect()
}

fn euclidean_growth(map: &MapSpec, points: &[SpherePoint], depth: usize) -> Option<bool> {
    let minima = depth_minima(map, points, depth, true);
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        minima.iter().enumerate().skip(1).filter_map(|(n, v)| v.map(|v| (n as f64, v))).unzip();
    fit_line(&xs, &ys).map(|f| f.slope > 0.0)
}

/// Fits `min ln (f^n)^× ≈ ln c + n ln λ` over `n = 1..=max_depth`.
pub fn expansion_estimate(map: &MapSpec, sample: &JuliaSample, max_depth: usize) -> Result<ExpansionEstimate> {
    let minima = depth_minima(map, &sample.points, max_depth, false);
    let per_depth_minima: Vec<(usize, f64)> = minima.iter().enumerate().filter_map(|(n, v)| v.map(|v| (n, v))).collect();
    let fit_pts: Vec<(f64, f64)> = per_depth_minima.iter().filter(|(n, _)| *n >= 1).map(|(n, v)| (*n as f64, *v)).collect();
    if fit_pts.len() < 3 {
        return Err(Error::DegenerateFit { usable: fit_pts.len() });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = fit_pts.into_iter().unzip();
    let fit = fit_line(&xs, &ys).ok_or(Error::DegenerateFit { usable: xs.len() })?;
    Ok(ExpansionEstimate {
        c_hat: fit.intercept.exp(),
        lambda_hat: fit.slope.exp(),
        per_depth_minima,
        fit_residual: fit.max_residual,
    })
}

/// Points of the sample, deduplicated at a spherical tolerance.
pub fn distinct_points(points: &[SpherePoint], tol: f64) -> Vec<SpherePoint> {
    dedupe(points.to_vec(), tol)
}
