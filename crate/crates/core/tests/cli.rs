use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const SQUARE: &str = r#"{"map": {"family": "rational", "numerator": [0, 0, 1], "denominator": [1]}}"#;

fn merotherm(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_merotherm"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.json");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn selftest_passes() {
    let dir = TempDir::new().unwrap();
    let out = merotherm(dir.path(), &["selftest"], None);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let checks: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/selftest.json")).unwrap()).unwrap();
    assert!(checks.as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn square_pressure_csv_is_linear() {
    let dir = TempDir::new().unwrap();
    let out = merotherm(dir.path(), &["pressure"], Some(SQUARE));
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(dir.path().join("out/pressure.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,P,residual,depth,tail_bound_log"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
    for (t, p) in rows {
        assert!((p - (1.0 - t) * 2f64.ln()).abs() < 1e-9, "P({t}) = {p}");
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "pressure");
    assert_eq!(manifest["config"]["pressure"]["depth"], 14);
    assert_eq!(manifest["artifacts"][0], "pressure.csv");
}

#[test]
fn config_errors_name_the_field_and_line() {
    let dir = TempDir::new().unwrap();
    let bad = "{\"map\": {\"family\": \"tangent\", \"lambda\": 0.5},\n \"pressure\": {\"t_values\": [0.6, \"x\"]}}";
    let out = merotherm(dir.path(), &["pressure"], Some(bad));
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("pressure.t_values[1]") && err.contains("config.json:2:"), "{err}");

    let unknown = r#"{"map": {"family": "tangent", "lambda": 0.5}, "pressur": {}}"#;
    let out = merotherm(dir.path(), &["pressure"], Some(unknown));
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("pressur"));
}

#[test]
fn coding_a_rational_map_is_a_hypothesis_failure() {
    let dir = TempDir::new().unwrap();
    let out = merotherm(dir.path(), &["code"], Some(SQUARE));
    assert_eq!(code(&out), 2);
    let manifest = fs::read_to_string(dir.path().join("out/manifest.json")).unwrap();
    assert!(manifest.contains("hypothesis unverified"));
}

#[test]
fn tangent_code_prints_itineraries() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"map": {"family": "tangent", "lambda": 0.5}, "code": {"sample_size": 20, "points": [1.5707963267948966]}}"#;
    let out = merotherm(dir.path(), &["code"], Some(config));
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("↦ (1, ∞)"), "{stdout}");
    assert!(stdout.contains("conjugacy: 21/21 pass"), "{stdout}");
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/itineraries.json")).unwrap()).unwrap();
    assert_eq!(doc["points"][20]["itinerary"]["terminator"], "infinity");
}

#[test]
fn render_writes_pgm_and_csv() {
    let dir = TempDir::new().unwrap();
    let config = r#"{"map": {"family": "rational", "numerator": [0, 0, 1], "denominator": [1]},
        "render": {"viewport": {"center": [0, 0], "width": 3, "height": 3}, "resolution": [128, 128]}}"#;
    let out = merotherm(dir.path(), &["render"], Some(config));
    assert_eq!(code(&out), 0);
    let pgm = fs::read(dir.path().join("out/julia.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n128 128\n255\n"));
    assert_eq!(pgm.len(), 15 + 128 * 128);
    let csv = fs::read_to_string(dir.path().join("out/occupancy.csv")).unwrap();
    assert!(csv.lines().count() > 100);
}

#[test]
fn classify_reports_hyperbolicity() {
    let dir = TempDir::new().unwrap();
    let out = merotherm(dir.path(), &["classify", "--seed", "4"], Some(r#"{"map": {"family": "tangent", "lambda": 0.5}}"#));
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/classify.json")).unwrap()).unwrap();
    assert_eq!(doc["report"]["in_h_sphere"], "Yes");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["seed"], 4);
}
