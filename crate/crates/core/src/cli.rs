//! Command runner behind the `merotherm` binary: JSON config in, JSON/CSV/PGM artifacts and a
//! manifest out.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dimension::{dimension_report, DimensionConfig};
use crate::error::{Error, Result};
use crate::hyperbolicity::{classify, expansion_estimate, julia_sample, repelling_seed, HyperbolicityReport, ExpansionEstimate, Verdict, PROBE_STEPS};
use crate::maps::MapSpec;
use crate::render::{render_julia, Probe, Viewport};
use crate::sphere::SpherePoint;
use crate::symbolic::{conjugacy_check_with, ConjugacyFailure, SymbolicCoder};
use crate::transfer::{pressure_curve, transfer_eigen, PressureOptions, TailMode};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Classify,
    Pressure,
    Dim,
    Render,
    Code,
    Selftest,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Classify => "classify",
            Command::Pressure => "pressure",
            Command::Dim => "dim",
            Command::Render => "render",
            Command::Code => "code",
            Command::Selftest => "selftest",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub sample_size: usize,
    pub sample_depth: usize,
    pub horizon: usize,
    pub expansion_depth: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig { sample_size: 200, sample_depth: 12, horizon: PROBE_STEPS, expansion_depth: 10 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureConfig {
    pub t_values: Option<Vec<f64>>,
    pub base_point: Option<SpherePoint>,
    pub depth: Option<usize>,
    pub budget: Option<usize>,
    pub fit_from: Option<usize>,
    pub tail_mode: TailMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    /// `None` frames the Julia sample the same way `dim` does.
    pub viewport: Option<Viewport>,
    pub resolution: Option<(usize, usize)>,
    pub probe: Option<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodeConfig {
    pub sample_size: usize,
    pub sample_depth: usize,
    pub depth: usize,
    /// Extra points coded after the sample.
    pub points: Vec<SpherePoint>,
}

impl Default for CodeConfig {
    fn default() -> Self {
        CodeConfig { sample_size: 200, sample_depth: 12, depth: 12, points: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub map: MapSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub pressure: PressureConfig,
    #[serde(default)]
    pub dim: DimensionConfig,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default)]
    pub code: CodeConfig,
}

impl RunConfig {
    pub fn new(map: MapSpec) -> Self {
        RunConfig {
            map,
            seed: 0,
            classify: ClassifyConfig::default(),
            pressure: PressureConfig::default(),
            dim: DimensionConfig::default(),
            render: RenderConfig::default(),
            code: CodeConfig::default(),
        }
    }

    /// Parses a config, naming the offending field and its line and column on failure.
    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            let message = message.split(" at line ").next().unwrap_or(&message).to_string();
            Error::Config(format!("{source}:{}:{}: field `{path}`: {message}", inner.line(), inner.column()))
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, &path.display().to_string())
    }
}

pub fn default_t_values(map: &MapSpec) -> Vec<f64> {
    if map.is_rational() {
        vec![0.0, 0.5, 1.0, 1.5, 2.0]
    } else {
        vec![0.6, 0.7, 0.8, 0.9, 1.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Command,
    pub exit_status: i32,
    pub config: RunConfig,
    pub artifacts: Vec<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_status: i32,
    pub artifacts: Vec<PathBuf>,
    /// Human-readable summary lines for stdout.
    pub summary: Vec<String>,
}

pub fn exit_status_for(e: &Error) -> i32 {
    if e.is_hypothesis() || matches!(e.root(), Error::Undecidable { .. }) {
        2
    } else {
        1
    }
}

struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), bytes)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }
}

/// Runs one command and always writes `manifest.json`, even when the command fails.
pub fn run(command: Command, mut config: RunConfig, out: &Path) -> Result<RunOutcome> {
    fs::create_dir_all(out)?;
    config.dim.seed = config.seed;
    let mut outputs = Outputs { dir: out.to_path_buf(), written: Vec::new() };
    let result = match command {
        Command::Classify => run_classify(&mut config, &mut outputs),
        Command::Pressure => run_pressure(&mut config, &mut outputs),
        Command::Dim => run_dim(&mut config, &mut outputs),
        Command::Render => run_render(&mut config, &mut outputs),
        Command::Code => run_code(&mut config, &mut outputs),
        Command::Selftest => run_selftest(&mut outputs),
    };
    let (exit_status, summary, error) = match result {
        Ok((status, summary)) => (status, summary, None),
        Err(e) => (exit_status_for(&e), vec![format!("error: {e}")], Some(e.to_string())),
    };
    let artifacts: Vec<PathBuf> = outputs.written.iter().map(|n| out.join(n)).collect();
    let manifest = Manifest { tool: "merotherm", version: VERSION, command, exit_status, config, artifacts: outputs.written.clone(), error };
    outputs.json("manifest.json", &manifest)?;
    Ok(RunOutcome { exit_status, artifacts, summary })
}

type Step = Result<(i32, Vec<String>)>;

#[derive(Serialize)]
struct ClassifyArtifact<'a> {
    map: &'a MapSpec,
    report: HyperbolicityReport,
    expansion: Option<ExpansionEstimate>,
}

fn run_classify(config: &mut RunConfig, out: &mut Outputs) -> Step {
    let c = &config.classify;
    let sample = julia_sample(&config.map, c.sample_size, c.sample_depth, config.seed)?;
    let report = classify(&config.map, c.horizon, &sample);
    let expansion = if report.in_h_sphere == Verdict::Yes || report.in_h_plane == Verdict::Yes {
        expansion_estimate(&config.map, &sample, c.expansion_depth).ok()
    } else {
        None
    };
    let summary = vec![
        format!("sphere-hyperbolic: {:?}", report.in_h_sphere),
        format!("plane-hyperbolic: {:?}", report.in_h_plane),
        format!("attracting cycles: {}", report.attracting_cycles.len()),
    ];
    let undetermined = report.in_h_sphere != Verdict::Yes
        && report.in_h_plane != Verdict::Yes
        && (report.in_h_sphere == Verdict::Undetermined || report.in_h_plane == Verdict::Undetermined);
    out.json("classify.json", &ClassifyArtifact { map: &config.map, report, expansion })?;
    Ok((if undetermined { 2 } else { 0 }, summary))
}

fn run_pressure(config: &mut RunConfig, out: &mut Outputs) -> Step {
    let map = &config.map;
    let p = &mut config.pressure;
    let mut opts = PressureOptions::for_map(map);
    opts.tree.depth = *p.depth.get_or_insert(opts.tree.depth);
    opts.tree.branch_budget = *p.budget.get_or_insert(opts.tree.branch_budget);
    opts.tree.seed = config.seed;
    opts.fit_from = Some(*p.fit_from.get_or_insert(opts.fit_start(opts.tree.depth)));
    opts.tail_mode = p.tail_mode;
    let ts = p.t_values.get_or_insert_with(|| default_t_values(map)).clone();
    let a = *p.base_point.get_or_insert(SpherePoint::new(repelling_seed(map)?));
    let curve = pressure_curve(map, a, &ts, &opts)?;
    out.write("pressure.csv", curve.to_csv().as_bytes())?;
    let summary = curve.t_values.iter().zip(&curve.p_values).map(|(t, v)| format!("P({t}) = {v:.6}")).collect();
    let diverged = curve.p_values.iter().any(|v| !v.is_finite());
    Ok((if diverged { 2 } else { 0 }, summary))
}

fn run_dim(config: &mut RunConfig, out: &mut Outputs) -> Step {
    let report = dimension_report(&config.map, &config.dim)?;
    config.dim = report.config.clone();
    out.json("dimension.json", &report)?;
    let summary = vec![
        format!("s_bowen = {:.6} (residual {:.2e})", report.s_bowen, report.s_residual),
        format!("ifs_lower = {:.6} at level {}", report.ifs_lower, report.ifs_level),
        if report.box_count.dim.is_nan() { "box_count: skipped".to_string() } else { format!("box_count = {:.4} (residual {:.3})", report.box_count.dim, report.box_count.residual) },
        format!("consistent: {}", report.verdict_consistent),
    ];
    Ok((0, summary))
}

fn run_render(config: &mut RunConfig, out: &mut Outputs) -> Step {
    let map = &config.map;
    let r = &mut config.render;
    if r.viewport.is_none() || r.resolution.is_none() {
        let sample = julia_sample(map, config.dim.sample_size, config.dim.sample_depth, config.seed)?;
        let (viewport, resolution) = crate::dimension::default_raster(map, &sample);
        r.viewport.get_or_insert(viewport);
        r.resolution.get_or_insert(resolution);
    }
    let probe = *r.probe.get_or_insert_with(Probe::default);
    let raster = render_julia(map, r.viewport.unwrap(), r.resolution.unwrap(), probe)?;
    out.write("julia.pgm", &raster.to_pgm())?;
    out.write("occupancy.csv", raster.occupancy_csv().as_bytes())?;
    Ok((0, vec![format!("{}x{} raster, {} marked cells", raster.width, raster.height, raster.occupied_count())]))
}

#[derive(Serialize)]
struct CodedPoint {
    point: SpherePoint,
    itinerary: Option<crate::symbolic::ItinerarySequence>,
    display: Option<String>,
}

#[derive(Serialize)]
struct CodeArtifact<'a> {
    map: &'a MapSpec,
    depth: usize,
    points: Vec<CodedPoint>,
    conjugacy: ConjugacySummary,
}

#[derive(Serialize)]
struct ConjugacySummary {
    checked: usize,
    passes: usize,
    failures: Vec<ConjugacyFailure>,
    collisions: Vec<(usize, usize)>,
}

fn run_code(config: &mut RunConfig, out: &mut Outputs) -> Step {
    let c = &config.code;
    let coder = SymbolicCoder::new(&config.map)?;
    let mut points = julia_sample(&config.map, c.sample_size, c.sample_depth, config.seed)?.points;
    points.extend_from_slice(&c.points);
    let report = conjugacy_check_with(&coder, &points, c.depth)?;
    let coded: Vec<CodedPoint> = points
        .iter()
        .zip(&report.itineraries)
        .map(|(p, it)| CodedPoint { point: *p, display: it.as_ref().map(|s| s.to_string()), itinerary: it.clone() })
        .collect();
    let mut summary: Vec<String> = coded.iter().filter_map(|c| c.display.as_ref().map(|d| format!("{} ↦ {d}", c.point))).collect();
    summary.push(format!("conjugacy: {}/{} pass, {} collisions", report.passes, report.checked, report.collisions.len()));
    let status = if report.failures.is_empty() { 0 } else { 2 };
    let conjugacy = ConjugacySummary { checked: report.checked, passes: report.passes, failures: report.failures, collisions: report.collisions };
    out.json("itineraries.json", &CodeArtifact { map: &config.map, depth: c.depth, points: coded, conjugacy })?;
    Ok((status, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SelftestCheck {
    pub name: String,
    pub value: f64,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl SelftestCheck {
    fn new(name: String, value: f64, expected: f64, tolerance: f64) -> Self {
        SelftestCheck { name, value, expected, tolerance, pass: (value - expected).abs() <= tolerance }
    }
}

/// Every quantity here is exact for `z^d`: `P(t) = (1−t) ln d`, root 1, constant eigenfunction,
/// expansion rate `ln d` per step.
pub fn selftest_checks() -> Result<Vec<SelftestCheck>> {
    let mut checks = Vec::new();
    for d in [2usize, 3, 4] {
        let map = MapSpec::monomial(d)?;
        let a = SpherePoint::new(repelling_seed(&map)?);
        let opts = PressureOptions::for_map(&map);
        let ts = default_t_values(&map);
        let curve = pressure_curve(&map, a, &ts, &opts)?;
        for (t, p) in ts.iter().zip(&curve.p_values) {
            checks.push(SelftestCheck::new(format!("z^{d} pressure at t={t}"), *p, (1.0 - t) * (d as f64).ln(), 1e-6));
        }
        if d <= 3 {
            let root = crate::transfer::poincare_exponent(&map, a, (0.0, 2.0), 1e-6, &opts)?;
            checks.push(SelftestCheck::new(format!("z^{d} Bowen root"), root.s, 1.0, 1e-3));
        }
    }
    let square = MapSpec::monomial(2)?;
    let sample = julia_sample(&square, 64, 10, 0)?;
    let eigen = transfer_eigen(&square, &sample, 1.0, 50, 9)?;
    checks.push(SelftestCheck::new("z^2 eigenvalue log at t=1".into(), eigen.eigenvalue_log, 0.0, 1e-6));
    let spread = eigen.eigenfunction_values.iter().fold(0.0f64, |m, h| m.max((h - 1.0).abs()));
    checks.push(SelftestCheck::new("z^2 eigenfunction deviation from 1".into(), spread, 0.0, 1e-6));
    let expansion = expansion_estimate(&square, &sample, 10)?;
    checks.push(SelftestCheck::new("z^2 expansion rate".into(), expansion.lambda_hat, 2.0, 1e-6));
    Ok(checks)
}

fn run_selftest(out: &mut Outputs) -> Step {
    let checks = selftest_checks()?;
    let summary = checks.iter().map(|c| format!("[{}] {}: {:.9} (expected {} ± {:e})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.expected, c.tolerance)).collect();
    let status = if checks.iter().all(|c| c.pass) { 0 } else { 1 };
    out.json("selftest.json", &checks)?;
    Ok((status, summary))
}
