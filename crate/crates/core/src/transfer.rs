//! Preimage trees, transfer-operator level sums, pressure, the Bowen root and eigen analysis.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolicity::{post_singular_orbit, JuliaSample};
use crate::maps::{Family, MapSpec};
use crate::numerics::{bisect, fit_line, integrate, log_sum_exp, mix_seed, spearman};
use crate::sphere::{chordal_distance, SpherePoint};

/// How the omitted infinite tail of preimages enters a level sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TailMode {
    /// Report the tail only as a bound; sums cover retained branches.
    Bound,
    /// Fold the estimated tail into the sums.
    #[default]
    Extrapolate,
}

/// The omitted branches beyond a boundary preimage, as a function of `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TailSpec {
    /// Omitted preimages `anchor + j·step`, `j ≥ 1`, sharing the anchor's `|f'|`.
    Lattice { anchor: Complex64, step: Complex64 },
    /// Omitted terms `(n/first)^{-exponent·t}`, `n > first`.
    PowerLaw { first: f64, exponent: f64 },
}

const EXPLICIT_TAIL_TERMS: usize = 8;

/// `∫_{v0}^∞ (1+v²)^{-t} dv` for `t > 1/2`, `v0 ≥ 0`.
fn upper_integral(v0: f64, t: f64) -> f64 {
    let series = |v: f64| {
        // Σ_m C(−t, m) v^{1−2t−2m}/(2t+2m−1)
        let mut coef = 1.0;
        let mut total = 0.0;
        for m in 0..400 {
            let term = coef * v.powf(1.0 - 2.0 * t - 2.0 * m as f64) / (2.0 * t + 2.0 * m as f64 - 1.0);
            total += term;
            if term.abs() <= 1e-17 * total.abs() {
                break;
            }
            coef *= (-t - m as f64) / (m as f64 + 1.0);
        }
        total
    };
    if v0 >= 2.0 {
        series(v0)
    } else {
        integrate(|v| (1.0 + v * v).powf(-t), v0, 2.0, 4) + series(2.0)
    }
}

impl TailSpec {
    /// Sum of omitted terms relative to the boundary term; `+inf` where the tail diverges.
    pub fn ratio(&self, t: f64) -> f64 {
        match *self {
            TailSpec::Lattice { anchor, step } => {
                if t <= 0.5 {
                    return f64::INFINITY;
                }
                let s = step.norm();
                let rot = anchor * (step / s).conj();
                let (alpha, beta) = (rot.re, rot.im);
                let c = 1.0 + beta * beta;
                let base = (c + alpha * alpha).ln();
                let rel = |x: f64| {
                    let u = alpha + x * s;
                    (-t * ((c + u * u).ln() - base)).exp()
                };
                let mut total: f64 = (1..=EXPLICIT_TAIL_TERMS).map(|j| rel(j as f64)).sum();
                let x0 = (EXPLICIT_TAIL_TERMS + 1) as f64;
                let u0 = alpha + x0 * s;
                let g0 = rel(x0);
                let dg0 = -t * 2.0 * u0 * s / (c + u0 * u0) * g0;
                let v0 = (u0 / c.sqrt()).max(0.0);
                let log_int = -s.ln() + (0.5 - t) * c.ln() + upper_integral(v0, t).ln() + t * base;
                total += log_int.exp() + 0.5 * g0 - dg0 / 12.0;
                total
            }
            TailSpec::PowerLaw { first, exponent } => {
                let e = exponent * t;
                if e <= 1.0 {
                    return f64::INFINITY;
                }
                let rel = |x: f64| (x / first).powf(-e);
                let mut total: f64 = (1..=EXPLICIT_TAIL_TERMS).map(|j| rel(first + j as f64)).sum();
                let x0 = first + (EXPLICIT_TAIL_TERMS + 1) as f64;
                let g0 = rel(x0);
                let dg0 = -e / x0 * g0;
                total += first.powf(e) * x0.powf(1.0 - e) / (e - 1.0) + 0.5 * g0 - dg0 / 12.0;
                total
            }
        }
    }
}

fn tail_ratio(tails: &[TailSpec], t: f64) -> f64 {
    tails.iter().map(|s| s.ratio(t)).sum()
}

/// One solution of `f(z) = a` with `ln f^×(z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preimage {
    pub point: SpherePoint,
    pub log_sphere_derivative: f64,
    pub branch: i64,
    /// Omitted branches continuing past this one (at most one per side).
    pub tails: Vec<TailSpec>,
}

/// Branch labels `0, 1, −1, 2, −2, …` truncated to `budget` (and to the family's branch range).
pub fn branch_order(budget: usize, limit: Option<i64>) -> Vec<i64> {
    let mut out = Vec::with_capacity(budget);
    let mut k = 0i64;
    while out.len() < budget {
        if limit.is_some_and(|l| k > l) {
            break;
        }
        out.push(k);
        if k > 0 && out.len() < budget {
            out.push(-k);
        }
        k += 1;
    }
    out
}

/// Preimages of `a`: all `d` roots for rational maps, labelled branches ordered by `|k|` otherwise.
/// The outermost branch on each side of a transcendental map carries the tail of the omitted ones.
pub fn preimages(map: &MapSpec, a: SpherePoint, budget: usize) -> Result<Vec<Preimage>> {
    if budget == 0 {
        return Err(Error::InvalidArgument("branch budget must be positive".into()));
    }
    if map.omitted_values().iter().any(|o| chordal_distance(*o, a) < 1e-14) {
        return Err(Error::OmittedValue(a));
    }
    if map.is_rational() {
        let pts = map.rational_preimages(a)?;
        return pts
            .into_iter()
            .take(budget)
            .enumerate()
            .map(|(i, p)| Ok(Preimage { point: p, log_sphere_derivative: map.log_sphere_derivative(p)?, branch: i as i64, tails: vec![] }))
            .collect();
    }
    let limit = map.branch_limit();
    let ks = branch_order(budget, limit);
    let kmax = ks.iter().copied().max().unwrap_or(0);
    let kmin = ks.iter().copied().min().unwrap_or(0);
    let mut out = Vec::with_capacity(ks.len());
    for k in ks {
        let (z, ld) = map.branch_preimage(a, k).map_err(|e| match e {
            Error::OmittedValue(_) => e,
            _ => Error::RootPolishFailed(k),
        })?;
        let mut tails = Vec::new();
        if k == kmax && k >= 0 {
            tails.extend(tail_for(map, z, k, 1.0, limit));
        }
        if k == kmin && k <= 0 {
            tails.extend(tail_for(map, z, k, -1.0, limit));
        }
        out.push(Preimage { point: SpherePoint::Finite(z), log_sphere_derivative: ld, branch: k, tails });
    }
    Ok(out)
}

fn tail_for(map: &MapSpec, z: Complex64, k: i64, side: f64, limit: Option<i64>) -> Option<TailSpec> {
    match map.family() {
        Family::Tangent { .. } | Family::Exponential { .. } => {
            Some(TailSpec::Lattice { anchor: z, step: map.lattice_step().unwrap() * side })
        }
        Family::PoleSeries { p, .. } => {
            if limit.is_some_and(|l| k.abs() >= l) {
                return None;
            }
            let first = (*p as f64).powi(2) + k.abs() as f64;
            Some(TailSpec::PowerLaw { first, exponent: 2.0 * *p as f64 })
        }
        Family::Rational { .. } => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub point: SpherePoint,
    pub cumulative_log_sphere_derivative: f64,
    pub parent: u32,
    pub branch: i64,
    /// Log of the Horvitz–Thompson weight (0 on exact levels).
    pub log_weight: f64,
    /// Set where `f^×` vanished or the accumulator is not finite.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeLevel {
    pub nodes: Vec<TreeNode>,
    /// Tail specs keyed by node index, ascending.
    pub tails: Vec<(u32, TailSpec)>,
    pub branch_budget_used: usize,
    pub sampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreimageTree {
    pub base_point: SpherePoint,
    /// `levels[0]` holds the base point; `levels[n]` the solutions of `f^n(z) = a`.
    pub levels: Vec<TreeLevel>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeOptions {
    pub depth: usize,
    pub branch_budget: usize,
    /// Levels that would exceed this many nodes are sampled instead of enumerated.
    pub max_level_nodes: usize,
    pub seed: u64,
    /// Exponent used for the sampling proposal on sampled levels.
    pub proposal_t: f64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { depth: 6, branch_budget: 9, max_level_nodes: 1 << 20, seed: 0, proposal_t: 1.0 }
    }
}

impl PreimageTree {
    pub fn depth(&self) -> usize {
        self.levels.len() - 1
    }

    /// Branch labels from the base point down to node `idx` of level `n`.
    pub fn path(&self, n: usize, idx: usize) -> Vec<i64> {
        let mut out = Vec::with_capacity(n);
        let mut i = idx;
        for lvl in (1..=n).rev() {
            let node = &self.levels[lvl].nodes[i];
            out.push(node.branch);
            i = node.parent as usize;
        }
        out.reverse();
        out
    }
}

pub fn build_tree(map: &MapSpec, a: SpherePoint, depth: usize, branch_budget: usize) -> Result<PreimageTree> {
    build_tree_with(map, a, &TreeOptions { depth, branch_budget, ..TreeOptions::default() })
}

struct Expansion {
    children: Vec<TreeNode>,
    tails: Vec<(usize, TailSpec)>,
}

pub fn build_tree_with(map: &MapSpec, a: SpherePoint, opts: &TreeOptions) -> Result<PreimageTree> {
    if opts.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    let root = TreeNode { point: a, cumulative_log_sphere_derivative: 0.0, parent: 0, branch: 0, log_weight: 0.0, degenerate: false };
    let mut tree = PreimageTree { base_point: a, levels: vec![TreeLevel { nodes: vec![root], tails: vec![], branch_budget_used: 0, sampled: false }] };
    let per_parent = match map.degree() {
        Some(d) => d.min(opts.branch_budget),
        None => branch_order(opts.branch_budget, map.branch_limit()).len(),
    };
    for n in 1..=opts.depth {
        let parents = &tree.levels[n - 1].nodes;
        let sampled = parents.len().saturating_mul(per_parent) > opts.max_level_nodes;
        let draws = (opts.max_level_nodes / parents.len().max(1)).max(1);
        let level_seed = mix_seed(opts.seed, n as u64);
        let expansions: Vec<Result<Expansion>> = parents
            .par_iter()
            .enumerate()
            .map(|(pi, parent)| {
                let pre = preimages(map, parent.point, opts.branch_budget)
                    .map_err(|e| Error::AtPath { path: tree.path(n - 1, pi), source: Box::new(e) })?;
                let make = |p: &Preimage, extra_log_w: f64| {
                    let cum = parent.cumulative_log_sphere_derivative + p.log_sphere_derivative;
                    TreeNode {
                        point: p.point,
                        cumulative_log_sphere_derivative: cum,
                        parent: pi as u32,
                        branch: p.branch,
                        log_weight: parent.log_weight + extra_log_w,
                        degenerate: parent.degenerate || !cum.is_finite(),
                    }
                };
                if !sampled || draws >= pre.len() {
                    let mut ex = Expansion { children: Vec::with_capacity(pre.len()), tails: vec![] };
                    for (i, p) in pre.iter().enumerate() {
                        ex.children.push(make(p, 0.0));
                        ex.tails.extend(p.tails.iter().map(|t| (i, *t)));
                    }
                    return Ok(ex);
                }
                // multinomial draws from q_k ∝ (f^×)^{-t₀}·(1 + tail), reweighted by count/(m q_k)
                let logq: Vec<f64> = pre
                    .iter()
                    .map(|p| {
                        let tail = tail_ratio(&p.tails, opts.proposal_t);
                        let tail = if tail.is_finite() { tail } else { 0.0 };
                        -opts.proposal_t * p.log_sphere_derivative + tail.ln_1p()
                    })
                    .collect();
                let norm = log_sum_exp(&logq);
                let q: Vec<f64> = logq.iter().map(|l| (l - norm).exp()).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(level_seed);
                rng.set_stream(pi as u64);
                let mut counts = vec![0usize; pre.len()];
                for _ in 0..draws {
                    let u: f64 = rng.gen();
                    let mut acc = 0.0;
                    let mut pick = pre.len() - 1;
                    for (i, qi) in q.iter().enumerate() {
                        acc += qi;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    counts[pick] += 1;
                }
                let mut ex = Expansion { children: vec![], tails: vec![] };
                for (i, p) in pre.iter().enumerate() {
                    if counts[i] == 0 {
                        continue;
                    }
                    let w = (counts[i] as f64 / (draws as f64 * q[i])).ln();
                    ex.tails.extend(p.tails.iter().map(|t| (ex.children.len(), *t)));
                    ex.children.push(make(p, w));
                }
                Ok(ex)
            })
            .collect();
        let mut nodes = Vec::new();
        let mut tails = Vec::new();
        for ex in expansions {
            let ex = ex?;
            let offset = nodes.len();
            tails.extend(ex.tails.into_iter().map(|(i, t)| ((offset + i) as u32, t)));
            nodes.extend(ex.children);
        }
        tree.levels.push(TreeLevel { nodes, tails, branch_budget_used: per_parent, sampled });
    }
    Ok(tree)
}

/// `ln L^n_t(1)(a)` at one level, with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferSum {
    pub level: usize,
    /// The reported log sum (tail folded in under `Extrapolate`).
    pub log_value: f64,
    /// Log sum over retained branches only.
    pub log_truncated: f64,
    /// `ln(full/truncated)`: the log-size of the omitted tail.
    pub tail_bound_log: f64,
}

/// Level sums for `n = 1..=depth` in one pass.
pub fn level_sums(tree: &PreimageTree, t: f64, mode: TailMode) -> Vec<TransferSum> {
    let mut acc_parent = vec![0.0f64];
    let mut out = Vec::with_capacity(tree.depth());
    for n in 1..=tree.depth() {
        let level = &tree.levels[n];
        let ratios: Vec<(u32, f64)> = level.tails.par_iter().map(|(i, spec)| (*i, spec.ratio(t))).collect();
        let mut extra: Vec<f64> = vec![0.0; level.nodes.len()];
        for (i, r) in ratios {
            extra[i as usize] += r;
        }
        let acc: Vec<f64> =
            level.nodes.iter().zip(&extra).map(|(nd, r)| acc_parent[nd.parent as usize] + r.ln_1p()).collect();
        let base: Vec<f64> = level
            .nodes
            .iter()
            .map(|nd| if t == 0.0 { nd.log_weight } else { nd.log_weight - t * nd.cumulative_log_sphere_derivative })
            .collect();
        let full: Vec<f64> = base.iter().zip(&acc).map(|(b, a)| b + a).collect();
        let log_truncated = log_sum_exp(&base);
        let log_full = log_sum_exp(&full);
        let tail_bound_log = if log_full.is_finite() { log_full - log_truncated } else { f64::INFINITY };
        let log_value = match mode {
            TailMode::Extrapolate => log_full,
            TailMode::Bound => log_truncated,
        };
        out.push(TransferSum { level: n, log_value, log_truncated, tail_bound_log });
        acc_parent = acc;
    }
    out
}

/// `ln L^n_t(1)(a)` for one level.
pub fn transfer_sum(tree: &PreimageTree, t: f64, n: usize, mode: TailMode) -> Result<TransferSum> {
    if n == 0 || n > tree.depth() {
        return Err(Error::InvalidArgument(format!("level {n} outside 1..={}", tree.depth())));
    }
    Ok(level_sums(tree, t, mode)[n - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PressureOptions {
    pub tree: TreeOptions,
    /// First level used in the slope fit; earlier levels carry the base-point transient.
    /// `None` fits the second half of the levels.
    pub fit_from: Option<usize>,
    pub tail_mode: TailMode,
}

impl Default for PressureOptions {
    fn default() -> Self {
        PressureOptions { tree: TreeOptions::default(), fit_from: None, tail_mode: TailMode::Extrapolate }
    }
}

/// Rational trees are exact and cheap, so they go as deep as `d^n ≤ 2^14` allows.
const RATIONAL_TREE_NODES: usize = 1 << 14;

impl PressureOptions {
    pub fn for_map(map: &MapSpec) -> Self {
        let mut opts = PressureOptions::default();
        if let Some(d) = map.degree() {
            let mut depth = 1;
            while d.pow(depth as u32 + 1) <= RATIONAL_TREE_NODES {
                depth += 1;
            }
            opts.tree.depth = depth.max(opts.tree.depth);
        }
        opts
    }

    pub fn fit_start(&self, depth: usize) -> usize {
        self.fit_from.unwrap_or((depth / 2).max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressurePoint {
    pub t: f64,
    pub pressure: f64,
    /// Largest deviation of a per-level increment from the fitted slope.
    pub residual: f64,
    pub depth: usize,
    pub tail_bound_log: f64,
    pub level_logs: Vec<f64>,
}

/// Pressure as the least-squares slope of `n ↦ ln L^n_t(1)(a)` over the fit window.
pub fn pressure_from_tree(tree: &PreimageTree, t: f64, fit_from: usize, mode: TailMode) -> Result<PressurePoint> {
    let sums = level_sums(tree, t, mode);
    let depth = tree.depth();
    let logs: Vec<f64> = sums.iter().map(|s| s.log_value).collect();
    if logs.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged { t });
    }
    let from = if depth > fit_from { fit_from } else { 1 };
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    if from == 0 || depth == 1 {
        xs.push(0.0);
        ys.push(0.0);
    }
    for n in from.max(1)..=depth {
        xs.push(n as f64);
        ys.push(logs[n - 1]);
    }
    let fit = fit_line(&xs, &ys).ok_or(Error::InvalidArgument("pressure fit needs two levels".into()))?;
    // increments between consecutive fitted levels
    let first_inc = if xs[0] == 0.0 { 1 } else { from + 1 };
    let increments: Vec<f64> =
        (first_inc..=depth).map(|n| logs[n - 1] - if n >= 2 { logs[n - 2] } else { 0.0 }).collect();
    let residual = increments.iter().map(|d| (d - fit.slope).abs()).fold(0.0, f64::max);
    if increments.len() >= 3 && increments.windows(2).all(|w| w[1] > w[0]) && increments.last().unwrap() - increments[0] > 1.0 {
        return Err(Error::Diverged { t });
    }
    Ok(PressurePoint { t, pressure: fit.slope, residual, depth, tail_bound_log: sums[depth - 1].tail_bound_log, level_logs: logs })
}

pub fn pressure_estimate(map: &MapSpec, a: SpherePoint, t: f64, opts: &PressureOptions) -> Result<PressurePoint> {
    let tree = build_tree_with(map, a, &opts.tree)?;
    pressure_from_tree(&tree, t, opts.fit_start(tree.depth()), opts.tail_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PressureCurve {
    pub t_values: Vec<f64>,
    /// `+inf` where the sums diverge.
    pub p_values: Vec<f64>,
    pub fit_residuals: Vec<f64>,
    pub tail_bound_logs: Vec<f64>,
    pub depth_used: usize,
    pub base_point: SpherePoint,
    /// Leftmost grid point with a finite pressure (proxy for the convergence edge).
    pub tau: Option<f64>,
}

impl PressureCurve {
    /// CSV with columns `t,P,residual,depth,tail_bound_log`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("t,P,residual,depth,tail_bound_log\n");
        for i in 0..self.t_values.len() {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                self.t_values[i], self.p_values[i], self.fit_residuals[i], self.depth_used, self.tail_bound_logs[i]
            );
        }
        s
    }
}

pub fn pressure_curve_from_tree(tree: &PreimageTree, ts: &[f64], fit_from: usize, mode: TailMode) -> PressureCurve {
    let mut curve = PressureCurve {
        t_values: ts.to_vec(),
        p_values: vec![],
        fit_residuals: vec![],
        tail_bound_logs: vec![],
        depth_used: tree.depth(),
        base_point: tree.base_point,
        tau: None,
    };
    for &t in ts {
        match pressure_from_tree(tree, t, fit_from, mode) {
            Ok(p) => {
                curve.p_values.push(p.pressure);
                curve.fit_residuals.push(p.residual);
                curve.tail_bound_logs.push(p.tail_bound_log);
                if curve.tau.is_none_or(|tau| t < tau) {
                    curve.tau = Some(t);
                }
            }
            Err(_) => {
                curve.p_values.push(f64::INFINITY);
                curve.fit_residuals.push(f64::INFINITY);
                curve.tail_bound_logs.push(f64::INFINITY);
            }
        }
    }
    curve
}

pub fn pressure_curve(map: &MapSpec, a: SpherePoint, ts: &[f64], opts: &PressureOptions) -> Result<PressureCurve> {
    let tree = build_tree_with(map, a, &opts.tree)?;
    Ok(pressure_curve_from_tree(&tree, ts, opts.fit_start(tree.depth()), opts.tail_mode))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareResult {
    pub s: f64,
    /// Fit residual of the pressure at the returned exponent.
    pub residual: f64,
    pub pressure_at_s: f64,
    pub final_bracket: (f64, f64),
}

fn signed_pressure(tree: &PreimageTree, t: f64, fit_from: usize, mode: TailMode) -> Result<f64> {
    match pressure_from_tree(tree, t, fit_from, mode) {
        Ok(p) => Ok(p.pressure),
        Err(Error::Diverged { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Bisection for the zero of the (strictly decreasing) pressure on `bracket`.
pub fn poincare_from_tree(tree: &PreimageTree, bracket: (f64, f64), tol: f64, fit_from: usize, mode: TailMode) -> Result<PoincareResult> {
    let (lo, hi) = bracket;
    let p_lo = signed_pressure(tree, lo, fit_from, mode)?;
    let p_hi = signed_pressure(tree, hi, fit_from, mode)?;
    if !(p_lo > 0.0 && p_hi < 0.0) {
        return Err(Error::BadBracket { lo, hi, p_lo, p_hi });
    }
    let mut err = None;
    let (a, b) = bisect(
        |t| match signed_pressure(tree, t, fit_from, mode) {
            Ok(p) => p,
            Err(e) => {
                err.get_or_insert(e);
                0.0
            }
        },
        lo,
        hi,
        tol,
    );
    if let Some(e) = err {
        return Err(e);
    }
    let s = 0.5 * (a + b);
    let at = pressure_from_tree(tree, s, fit_from, mode)?;
    Ok(PoincareResult { s, residual: at.residual, pressure_at_s: at.pressure, final_bracket: (a, b) })
}

pub fn poincare_exponent(map: &MapSpec, a: SpherePoint, bracket: (f64, f64), tol: f64, opts: &PressureOptions) -> Result<PoincareResult> {
    let tree = build_tree_with(map, a, &opts.tree)?;
    poincare_from_tree(&tree, bracket, tol, opts.fit_start(tree.depth()), opts.tail_mode)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferEigenData {
    pub sample: JuliaSample,
    pub eigenvalue_log: f64,
    pub eigenfunction_values: Vec<f64>,
    pub iterations: usize,
    /// Spread of the log normalization factors over the last 10 iterations.
    pub factor_spread: f64,
}

fn nearest_index(points: &[SpherePoint], z: SpherePoint) -> usize {
    let mut best = (f64::INFINITY, 0);
    for (i, p) in points.iter().enumerate() {
        let d = chordal_distance(*p, z);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Power iteration of the operator discretized on the sample by nearest-point projection.
pub fn transfer_eigen(map: &MapSpec, sample: &JuliaSample, t: f64, iterations: usize, budget: usize) -> Result<TransferEigenData> {
    let pts = &sample.points;
    if pts.len() < 2 {
        return Err(Error::InvalidArgument("sample too small".into()));
    }
    let rows: Vec<Result<Vec<(usize, f64)>>> = pts
        .par_iter()
        .map(|a| {
            let pre = preimages(map, *a, budget)?;
            let mut row: Vec<(usize, f64)> = Vec::with_capacity(pre.len());
            for p in pre {
                let mut w = if t == 0.0 { 1.0 } else { (-t * p.log_sphere_derivative).exp() };
                w *= 1.0 + tail_ratio(&p.tails, t);
                if !w.is_finite() {
                    return Err(Error::Diverged { t });
                }
                row.push((nearest_index(pts, p.point), w));
            }
            Ok(row)
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let n = pts.len();
    let mut g = vec![1.0; n];
    let mut factors = Vec::with_capacity(iterations);
    for _ in 0..iterations.max(10) {
        let next: Vec<f64> = rows.iter().map(|row| row.iter().map(|(j, w)| w * g[*j]).sum()).collect();
        let c = next.iter().sum::<f64>() / n as f64;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::NotConverged { spread: f64::INFINITY });
        }
        g = next.into_iter().map(|v| v / c).collect();
        factors.push(c.ln());
    }
    let tail = &factors[factors.len() - 10..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tail.iter().copied().fold(f64::INFINITY, f64::min);
    if spread > 1e-3 {
        return Err(Error::NotConverged { spread });
    }
    Ok(TransferEigenData {
        sample: sample.clone(),
        eigenvalue_log: tail.iter().sum::<f64>() / tail.len() as f64,
        eigenfunction_values: g,
        iterations: factors.len(),
        factor_spread: spread,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistortionOptions {
    pub max_level: usize,
    pub t: f64,
    pub pair_count: usize,
    /// Euclidean radius of the disk around the base point.
    pub radius: f64,
    /// Largest branch label followed for transcendental maps.
    pub max_branch: i64,
    pub seed: u64,
}

impl Default for DistortionOptions {
    fn default() -> Self {
        DistortionOptions { max_level: 6, t: 0.7, pair_count: 200, radius: 0.05, max_branch: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionLevel {
    pub level: usize,
    pub max_defect: f64,
    pub median_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub levels: Vec<DistortionLevel>,
    /// `(n, defect per unit distance)` for every pair and level.
    pub samples: Vec<(usize, f64)>,
    /// Rank correlation between level and defect over all samples.
    pub spearman_rho: f64,
    /// Whether the disk keeps twice its radius from the post-singular orbit.
    pub disk_clear: bool,
}

/// `|1 − ((f^n)^×(g_n u))^t/((f^n)^×(g_n v))^t| / d(u, v)`; zero when `u = v`.
pub fn distortion_defect(t: f64, log_u: f64, log_v: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    (1.0 - (t * (log_u - log_v)).exp()).abs() / d
}

/// Follows random inverse branches from pairs of points near `a` and records the defect per level.
pub fn distortion_check(map: &MapSpec, a: SpherePoint, opts: &DistortionOptions) -> Result<DistortionReport> {
    let center = a.finite().ok_or(Error::InvalidArgument("base point must be finite".into()))?;
    let post = post_singular_orbit(map, 200).unwrap_or_default();
    let clear = post.iter().all(|p| match p {
        SpherePoint::Finite(w) => (w - center).norm() > 2.0 * opts.radius,
        SpherePoint::Infinity => true,
    });
    let ks: Vec<i64> = (-opts.max_branch..=opts.max_branch).collect();
    let weights: Vec<f64> = ks.iter().map(|k| 1.0 / ((1 + k.abs()) as f64).powi(2)).collect();
    let total: f64 = weights.iter().sum();
    let per_pair: Vec<Result<Vec<(usize, f64)>>> = (0..opts.pair_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(opts.seed, i as u64));
            let disk = |rng: &mut ChaCha8Rng| {
                let r = opts.radius * rng.gen::<f64>().sqrt();
                let th = rng.gen::<f64>() * std::f64::consts::TAU;
                center + Complex64::from_polar(r, th)
            };
            let u0 = disk(&mut rng);
            let v0 = disk(&mut rng);
            let d = chordal_distance(u0.into(), v0.into());
            let (mut u, mut v) = (SpherePoint::Finite(u0), SpherePoint::Finite(v0));
            let (mut lu, mut lv) = (0.0, 0.0);
            let mut out = Vec::with_capacity(opts.max_level);
            for n in 1..=opts.max_level {
                if map.is_rational() {
                    let pu = map.rational_preimages(u)?;
                    let pick = pu[rng.gen_range(0..pu.len())];
                    let pv = map.rational_preimages(v)?;
                    let near = pv[nearest_index(&pv, pick)];
                    lu += map.log_sphere_derivative(pick)?;
                    lv += map.log_sphere_derivative(near)?;
                    u = pick;
                    v = near;
                } else {
                    let x: f64 = rng.gen::<f64>() * total;
                    let mut acc = 0.0;
                    let mut k = ks[ks.len() - 1];
                    for (kk, w) in ks.iter().zip(&weights) {
                        acc += w;
                        if x < acc {
                            k = *kk;
                            break;
                        }
                    }
                    let (zu, du) = map.branch_preimage(u, k)?;
                    let (zv, dv) = map.branch_preimage(v, k)?;
                    lu += du;
                    lv += dv;
                    u = SpherePoint::Finite(zu);
                    v = SpherePoint::Finite(zv);
                }
                out.push((n, distortion_defect(opts.t, lu, lv, d)));
            }
            Ok(out)
        })
        .collect();
    let mut samples = Vec::new();
    for r in per_pair {
        samples.extend(r?);
    }
    let mut levels = Vec::new();
    for n in 1..=opts.max_level {
        let mut v: Vec<f64> = samples.iter().filter(|(m, _)| *m == n).map(|(_, d)| *d).collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let max_defect = v.last().copied().unwrap_or(0.0);
        let median_defect = if v.is_empty() { 0.0 } else { v[v.len() / 2] };
        levels.push(DistortionLevel { level: n, max_defect, median_defect });
    }
    let xs: Vec<f64> = samples.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, d)| *d).collect();
    Ok(DistortionReport { levels, spearman_rho: spearman(&xs, &ys), samples, disk_clear: clear })
}

/// `max_a ln L^1_t(1)(a)` over the given base points.
pub fn summability_bound(map: &MapSpec, points: &[SpherePoint], t: f64, budget: usize) -> Result<f64> {
    let vals: Vec<Result<f64>> = points
        .par_iter()
        .map(|a| {
            let tree = build_tree(map, *a, 1, budget)?;
            Ok(level_sums(&tree, t, TailMode::Extrapolate)[0].log_value)
        })
        .collect();
    let mut best = f64::NEG_INFINITY;
    for v in vals {
        best = best.max(v?);
    }
    Ok(best)
}

/// Level-`n` sum restricted to nodes within spherical distance `r` of `center` (retained branches only).
pub fn localized_sum(tree: &PreimageTree, t: f64, n: usize, center: SpherePoint, r: f64) -> f64 {
    let vals: Vec<f64> = tree.levels[n]
        .nodes
        .iter()
        .filter(|nd| chordal_distance(nd.point, center) < r)
        .map(|nd| nd.log_weight - t * nd.cumulative_log_sphere_derivative)
        .collect();
    log_sum_exp(&vals)
}
