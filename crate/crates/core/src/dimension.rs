//! Dimension estimators: the Bowen root, a Moran-equation IFS lower bound, and box counting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolicity::{attracting_cycles, classify, julia_sample, post_singular_orbit, JuliaSample, Verdict, PROBE_STEPS};
use crate::maps::{Family, MapSpec};
use crate::numerics::{bisect, fit_line};
use crate::render::{render_julia, Probe, RasterGrid, Viewport};
use crate::sphere::SpherePoint;
use crate::transfer::{build_tree_with, poincare_from_tree, PressureOptions, TreeOptions};

/// Koebe distortion constant on the half-radius disk.
pub const KOEBE: f64 = 81.0;
/// Branches need `|(f^N)'| > 4·81`.
pub const ADMISSION: f64 = 4.0 * KOEBE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxCount {
    pub dim: f64,
    /// Largest deviation of `ln N` from the fitted line.
    pub residual: f64,
    /// Dyadic levels used: boxes are `2^level` pixels on a side.
    pub levels: Vec<u32>,
    pub counts: Vec<usize>,
}

/// Occupied `2^l`-pixel boxes at each level (a box is occupied when any of its pixels is),
/// minimized over grid offsets of `0` and half a box on each axis.
pub fn box_counts(raster: &RasterGrid, levels: &[u32]) -> Vec<usize> {
    let pixels: Vec<(usize, usize)> = (0..raster.height)
        .flat_map(|row| (0..raster.width).map(move |col| (col, row)))
        .filter(|(c, r)| raster.occupied[r * raster.width + c])
        .collect();
    levels
        .iter()
        .map(|&l| {
            let side = 1usize << l;
            let shifts: &[usize] = if side > 1 { &[0, side / 2] } else { &[0] };
            let bw = raster.width / side + 2;
            let bh = raster.height / side + 2;
            let mut best = usize::MAX;
            let mut seen = vec![false; bw * bh];
            for &dx in shifts {
                for &dy in shifts {
                    seen.fill(false);
                    let mut n = 0;
                    for &(c, r) in &pixels {
                        let k = ((r + dy) / side) * bw + (c + dx) / side;
                        if !seen[k] {
                            seen[k] = true;
                            n += 1;
                        }
                    }
                    best = best.min(n);
                }
            }
            best
        })
        .collect()
}

/// Slope of `ln N(side)` against `ln(1/side)` over dyadic box sizes.
pub fn box_counting(raster: &RasterGrid, levels: &[u32]) -> Result<BoxCount> {
    if levels.len() < 4 {
        return Err(Error::InvalidArgument(format!("box counting needs at least 4 scales, got {}", levels.len())));
    }
    let counts = box_counts(raster, levels);
    let occupied = counts.iter().copied().max().unwrap_or(0);
    if occupied == 0 {
        return Err(Error::DegenerateRaster { occupied });
    }
    let px = raster.pixel_size();
    let xs: Vec<f64> = levels.iter().map(|&l| -((1u64 << l) as f64 * px).ln()).collect();
    let ys: Vec<f64> = counts.iter().map(|&n| (n as f64).ln()).collect();
    let fit = fit_line(&xs, &ys).ok_or(Error::InvalidArgument("box sizes must differ".into()))?;
    Ok(BoxCount { dim: fit.slope, residual: fit.max_residual, levels: levels.to_vec(), counts })
}

/// Root of `Σ b_i^t = 1`, accurate to `1e-12` in `t`.
pub fn solve_moran(ratios: &[f64]) -> Result<f64> {
    if ratios.len() < 2 {
        return Err(Error::TooFewBranches(ratios.len()));
    }
    if ratios.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
        return Err(Error::InvalidArgument("contraction ratios must lie in (0, 1)".into()));
    }
    let g = |t: f64| ratios.iter().map(|b| b.powf(t)).sum::<f64>() - 1.0;
    let mut hi = 1.0;
    while g(hi) > 0.0 {
        hi *= 2.0;
    }
    let (a, b) = bisect(g, 0.0, hi, 1e-13);
    Ok(0.5 * (a + b))
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsBranch {
    /// Solution of `f^N(z) = a` inside the base disk.
    pub preimage: Complex64,
    /// Fixed point of the inverse branch, when the contraction iteration settled.
    pub fixed_point: Option<Complex64>,
    /// `|(f^N)'|` at the preimage.
    pub derivative: f64,
    pub b_lower: f64,
    pub b_upper: f64,
    pub path: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IfsSystem {
    pub center: Complex64,
    pub radius: f64,
    pub level: usize,
    pub branches: Vec<IfsBranch>,
    /// Admissible branches before overlap pruning.
    pub candidates: usize,
}

/// Default base-disk radius: a quarter of the Euclidean distance from `a` to the post-singular orbit.
pub fn koebe_radius(map: &MapSpec, a: Complex64) -> Result<f64> {
    let post = post_singular_orbit(map, PROBE_STEPS)?;
    let d = post
        .iter()
        .filter_map(|p| p.finite())
        .map(|w| (w - a).norm())
        .fold(f64::INFINITY, f64::min);
    if !d.is_finite() || d <= 0.0 {
        return Err(Error::InvalidArgument("base point touches the post-singular set".into()));
    }
    Ok(d / 4.0)
}

fn follow_branch(map: &MapSpec, w: Complex64, path: &[i64], hints: &[SpherePoint]) -> Result<Complex64> {
    let mut cur = SpherePoint::Finite(w);
    for (l, k) in path.iter().enumerate() {
        cur = if map.is_rational() {
            let roots = map.rational_preimages(cur)?;
            let hint = hints[l];
            *roots
                .iter()
                .min_by(|x, y| crate::chordal_distance(**x, hint).total_cmp(&crate::chordal_distance(**y, hint)))
                .ok_or(Error::RootPolishFailed(*k))?
        } else {
            SpherePoint::Finite(map.branch_preimage(cur, *k)?.0)
        };
    }
    cur.finite().ok_or(Error::RootPolishFailed(path.last().copied().unwrap_or(0)))
}

/// Largest `N` whose level fits the exact-tree node cap for the given budget.
fn max_exact_level(map: &MapSpec, budget: usize, cap: usize) -> usize {
    let per = map.degree().map_or(budget, |d| d.min(budget)).max(2);
    let mut n = 1;
    while per.checked_pow(n as u32 + 1).is_some_and(|v| v <= cap) {
        n += 1;
    }
    n
}

/// Inverse branches of `f^N` mapping the disk `B(a, r)` into itself with `|(f^N)'| > 324`,
/// pruned to pairwise-disjoint images, and the root of the Moran equation for their lower ratios.
pub fn ifs_lower_bound(map: &MapSpec, a: SpherePoint, r: f64, n: usize, budget: usize) -> Result<(IfsSystem, f64)> {
    let center = a.finite().ok_or(Error::InvalidArgument("base point must be finite".into()))?;
    if !(r > 0.0) || n == 0 {
        return Err(Error::InvalidArgument("radius and level must be positive".into()));
    }
    let tree = build_tree_with(map, a, &TreeOptions { depth: n, branch_budget: budget, max_level_nodes: usize::MAX, ..TreeOptions::default() })?;
    let mut cands = Vec::new();
    for (i, node) in tree.levels[n].nodes.iter().enumerate() {
        let Some(z) = node.point.finite() else { continue };
        if (z - center).norm() >= r {
            continue;
        }
        // chain rule along the ancestors, each mapping onto its parent
        let mut deriv = 1.0;
        let mut hints = vec![SpherePoint::Infinity; n];
        let mut idx = i;
        for lvl in (1..=n).rev() {
            let nd = &tree.levels[lvl].nodes[idx];
            deriv *= map.derivative(nd.point)?.norm();
            hints[lvl - 1] = nd.point;
            idx = nd.parent as usize;
        }
        if !(deriv > ADMISSION) || (z - center).norm() + KOEBE * r / deriv >= r {
            continue;
        }
        let path = tree.path(n, i);
        let mut w = z;
        let mut fixed = None;
        for _ in 0..100 {
            let next = match follow_branch(map, w, &path, &hints) {
                Ok(v) => v,
                Err(_) => break,
            };
            let done = (next - w).norm() < 1e-14 * (1.0 + w.norm());
            w = next;
            if done {
                fixed = Some(w);
                break;
            }
        }
        cands.push(IfsBranch { preimage: z, fixed_point: fixed, derivative: deriv, b_lower: 1.0 / (KOEBE * deriv), b_upper: KOEBE / deriv, path });
    }
    let candidates = cands.len();
    // keep the strongest contractions last: a pair of overlapping images loses its larger derivative
    cands.sort_by(|x, y| x.derivative.total_cmp(&y.derivative));
    let mut kept: Vec<IfsBranch> = Vec::new();
    for c in cands {
        let rc = c.b_upper * r;
        if kept.iter().all(|k| (k.preimage - c.preimage).norm() > rc + k.b_upper * r) {
            kept.push(c);
        }
    }
    if kept.len() < 2 {
        return Err(Error::TooFewBranches(kept.len()));
    }
    let ratios: Vec<f64> = kept.iter().map(|b| b.b_lower).collect();
    let t0 = solve_moran(&ratios)?;
    Ok((IfsSystem { center, radius: r, level: n, branches: kept, candidates }, t0))
}

/// Raises `N` from `n_start` until at least two branches survive or `n_max` is reached.
pub fn ifs_auto(map: &MapSpec, a: SpherePoint, r: f64, n_start: usize, n_max: usize, budget: usize) -> Result<(IfsSystem, f64)> {
    let top = n_max.min(max_exact_level(map, budget, 1 << 20));
    let mut last = Error::TooFewBranches(0);
    for n in n_start.max(1)..=top {
        match ifs_lower_bound(map, a, r, n, budget) {
            Ok(v) => return Ok(v),
            Err(Error::TooFewBranches(k)) => last = Error::TooFewBranches(k),
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RadialNote {
    #[serde(rename = "SphereHyperbolic_FullJulia")]
    SphereHyperbolicFullJulia,
    #[serde(rename = "PlaneHyperbolic_RadialOnly")]
    PlaneHyperbolicRadialOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IfsConfig {
    /// Base-disk radius; `None` uses the quarter distance to the post-singular orbit.
    pub radius: Option<f64>,
    pub n_start: usize,
    pub n_max: usize,
    pub budget: usize,
}

impl Default for IfsConfig {
    fn default() -> Self {
        IfsConfig { radius: None, n_start: 1, n_max: 16, budget: 9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterConfig {
    /// `None` frames the Julia sample (one lattice period for periodic families).
    pub viewport: Option<Viewport>,
    pub resolution: Option<(usize, usize)>,
    pub max_steps: usize,
    /// `None` enables the spread rule only when fates cannot separate the Fatou set.
    pub spread: Option<f64>,
    pub levels: Vec<u32>,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig { viewport: None, resolution: None, max_steps: PROBE_STEPS, spread: None, levels: (2..=7).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DimensionConfig {
    pub seed: u64,
    pub sample_size: usize,
    pub sample_depth: usize,
    pub depth: Option<usize>,
    pub budget: usize,
    /// `None` picks a family bracket whose ends have opposite pressure signs.
    pub bracket: Option<(f64, f64)>,
    pub tol: f64,
    pub ifs: IfsConfig,
    pub raster: RasterConfig,
    pub ifs_tolerance: f64,
    pub box_tolerance: f64,
}

impl Default for DimensionConfig {
    fn default() -> Self {
        DimensionConfig {
            seed: 0,
            sample_size: 200,
            sample_depth: 12,
            depth: None,
            budget: 9,
            bracket: None,
            tol: 1e-6,
            ifs: IfsConfig::default(),
            raster: RasterConfig::default(),
            ifs_tolerance: 0.02,
            box_tolerance: 0.05,
        }
    }
}

/// Bracket with positive pressure at the left end and negative at the right.
pub fn default_bracket(map: &MapSpec) -> (f64, f64) {
    match map.family() {
        Family::Rational { .. } => (0.0, 2.0),
        Family::Tangent { .. } | Family::Exponential { .. } => (0.55, 2.0),
        Family::PoleSeries { p, .. } => (1.0 / (2.0 * *p as f64) + 0.05, 2.0),
    }
}

/// Frames the sample: reduced into one lattice period for periodic families; a thin strip
/// (16384×64, rows centred on the sample) when the sample is nearly horizontal, else 2048².
pub fn default_raster(map: &MapSpec, sample: &JuliaSample) -> (Viewport, (usize, usize)) {
    let mut pts: Vec<Complex64> = sample.points.iter().filter_map(|p| p.finite()).collect();
    if let Some(step) = map.lattice_step() {
        let u = step / step.norm();
        for z in pts.iter_mut() {
            let alpha = (*z * u.conj()).re;
            *z -= step * (alpha / step.norm()).floor();
        }
    }
    let (mut re0, mut re1, mut im0, mut im1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for z in &pts {
        re0 = re0.min(z.re);
        re1 = re1.max(z.re);
        im0 = im0.min(z.im);
        im1 = im1.max(z.im);
    }
    if pts.is_empty() {
        return (Viewport::new(Complex64::new(0.0, 0.0), 4.0, 4.0), (2048, 2048));
    }
    let (w, h) = (re1 - re0, im1 - im0);
    let c = Complex64::new(0.5 * (re0 + re1), 0.5 * (im0 + im1));
    if h < w / 1024.0 {
        let (cols, rows) = (16384usize, 64usize);
        let width = 1.16 * w;
        let px = width / cols as f64;
        // an even row count puts a corner row on the axis; shift so pixel centres sit there
        return (Viewport::new(Complex64::new(c.re, c.im + 0.5 * px), width, px * rows as f64), (cols, rows));
    }
    let side = 1.16 * w.max(h);
    (Viewport::new(c, side, side), (2048, 2048))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionReport {
    pub map: MapSpec,
    pub config: DimensionConfig,
    pub base_point: SpherePoint,
    pub s_bowen: f64,
    pub s_residual: f64,
    pub bracket: (f64, f64),
    pub ifs_lower: f64,
    pub ifs_level: usize,
    pub ifs_radius: f64,
    pub ifs_branches: usize,
    pub box_count: BoxCount,
    pub viewport: Viewport,
    pub resolution: (usize, usize),
    pub spread_rule: Option<f64>,
    pub verdict_consistent: bool,
    pub radial_note: RadialNote,
    pub checks: Vec<ReportCheck>,
    pub notes: Vec<String>,
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.at_stage(name))
}

/// Bowen root, IFS lower bound and box count for a hyperbolic map, with a consistency verdict.
pub fn dimension_report(map: &MapSpec, config: &DimensionConfig) -> Result<DimensionReport> {
    let sample = stage("sample", julia_sample(map, config.sample_size.max(2), config.sample_depth, config.seed))?;
    let class = classify(map, PROBE_STEPS, &sample);
    let radial_note = match (class.in_h_sphere, class.in_h_plane) {
        (Verdict::Yes, _) => RadialNote::SphereHyperbolicFullJulia,
        (_, Verdict::Yes) => RadialNote::PlaneHyperbolicRadialOnly,
        _ => {
            return Err(Error::HypothesisUnverified(format!(
                "{} is not confirmed hyperbolic (sphere {:?}, plane {:?})",
                map.name(),
                class.in_h_sphere,
                class.in_h_plane
            ))
            .at_stage("classify"))
        }
    };
    let a = sample.points[0];
    let center = a.finite().ok_or(Error::InvalidArgument("base point at infinity".into()))?;

    let mut popts = PressureOptions::for_map(map);
    popts.tree.branch_budget = config.budget;
    popts.tree.seed = config.seed;
    if let Some(d) = config.depth {
        popts.tree.depth = d;
    }
    let bracket = config.bracket.unwrap_or_else(|| default_bracket(map));
    let (view, res) = match (config.raster.viewport, config.raster.resolution) {
        (Some(v), Some(r)) => (v, r),
        (v, r) => {
            let (dv, dr) = default_raster(map, &sample);
            (v.unwrap_or(dv), r.unwrap_or(dr))
        }
    };
    let attractors = attracting_cycles(map, PROBE_STEPS).map(|c| c.len()).unwrap_or(0);
    let spread = config.raster.spread.or(if attractors >= 2 { None } else { Probe::default().spread });
    let probe = Probe { max_steps: config.raster.max_steps, spread, ..Probe::default() };

    let (bowen, (ifs, boxes)) = rayon::join(
        || {
            let tree = stage("pressure", build_tree_with(map, a, &popts.tree))?;
            stage("bowen", poincare_from_tree(&tree, bracket, config.tol, popts.fit_start(tree.depth()), popts.tail_mode))
        },
        || {
            rayon::join(
                || {
                    let r = match config.ifs.radius {
                        Some(r) => r,
                        None => stage("ifs", koebe_radius(map, center))?,
                    };
                    let (sys, t0) = stage("ifs", ifs_auto(map, a, r, config.ifs.n_start, config.ifs.n_max, config.ifs.budget))?;
                    Ok::<_, Error>((sys, t0))
                },
                || {
                    let raster = stage("render", render_julia(map, view, res, probe))?;
                    stage("box_count", box_counting(&raster, &config.raster.levels))
                },
            )
        },
    );
    let bowen = bowen?;
    let (sys, t0) = ifs?;
    let boxes = boxes?;

    let s = bowen.s;
    let mut checks = vec![
        ReportCheck {
            name: "ifs_below_bowen".into(),
            passed: t0 <= s + config.ifs_tolerance,
            detail: format!("ifs {t0:.6} vs s {s:.6} (tolerance {})", config.ifs_tolerance),
        },
        ReportCheck { name: "bowen_below_two".into(), passed: s < 2.0, detail: format!("s = {s:.6}") },
    ];
    let mut notes = Vec::new();
    match radial_note {
        RadialNote::SphereHyperbolicFullJulia => {
            checks.push(ReportCheck {
                name: "box_matches_bowen".into(),
                passed: (s - boxes.dim).abs() <= config.box_tolerance,
                detail: format!("box {:.6} vs s {s:.6} (tolerance {})", boxes.dim, config.box_tolerance),
            });
            checks.push(ReportCheck { name: "box_below_two".into(), passed: boxes.dim < 2.0, detail: format!("box = {:.6}", boxes.dim) });
        }
        RadialNote::PlaneHyperbolicRadialOnly => notes.push(
            "plane-hyperbolic only: s is the dimension of the radial Julia set; the box count of the whole Julia set may exceed it".into(),
        ),
    }
    let verdict_consistent = checks.iter().all(|c| c.passed);
    Ok(DimensionReport {
        map: map.clone(),
        config: config.clone(),
        base_point: a,
        s_bowen: s,
        s_residual: bowen.residual,
        bracket,
        ifs_lower: t0,
        ifs_level: sys.level,
        ifs_radius: sys.radius,
        ifs_branches: sys.branches.len(),
        box_count: boxes,
        viewport: view,
        resolution: res,
        spread_rule: spread,
        verdict_consistent,
        radial_note,
        checks,
        notes,
    })
}
