use merotherm::hyperbolicity::julia_sample;
use merotherm::render::*;
use merotherm::MapSpec;
use num_complex::Complex64;

fn square(w: f64) -> Viewport {
    Viewport::new(Complex64::new(0.0, 0.0), w, w)
}

fn coverage(r: &RasterGrid, pts: &[Complex64]) -> f64 {
    let hit = pts
        .iter()
        .filter(|z| r.viewport.pixel_of(**z, r.width, r.height).is_some_and(|(c, row)| r.is_occupied(c, row)))
        .count();
    hit as f64 / pts.len() as f64
}

#[test]
fn square_map_marks_the_unit_circle() {
    let m = MapSpec::monomial(2).unwrap();
    let r = render_julia(&m, square(4.0), (1024, 1024), Probe::default()).unwrap();
    let px = r.pixel_size();
    let mut n = 0;
    for row in 0..r.height {
        for col in 0..r.width {
            if r.is_occupied(col, row) {
                n += 1;
                let z = r.viewport.pixel_center(col, row, r.width, r.height);
                assert!((z.norm() - 1.0).abs() < 3.0 * px, "{z}");
            }
        }
    }
    let perimeter = std::f64::consts::TAU / px;
    assert!(n as f64 > perimeter && (n as f64) < 4.0 * perimeter, "{n}");
}

#[test]
fn tangent_marks_concentrate_on_the_real_axis() {
    let m = MapSpec::tangent(0.5).unwrap();
    let vp = Viewport::from_bounds(-2.0 * std::f64::consts::PI, 2.0 * std::f64::consts::PI, -2.0, 2.0);
    let r = render_julia(&m, vp, (1024, 1024), Probe::default()).unwrap();
    assert!(r.occupied_count() > 100);
    for row in 0..r.height {
        for col in 0..r.width {
            if r.is_occupied(col, row) {
                let z = vp.pixel_center(col, row, r.width, r.height);
                assert!(z.im.abs() < 0.1, "{z}");
            }
        }
    }
    let sample = julia_sample(&m, 300, 12, 2).unwrap();
    let pts: Vec<Complex64> = sample.points.iter().filter_map(|p| p.finite()).filter(|z| z.re.abs() < 6.0).collect();
    assert!(coverage(&r, &pts) >= 0.99, "{}", coverage(&r, &pts));
}

#[test]
fn sample_coverage_holds_as_resolution_doubles() {
    let m = MapSpec::quadratic(Complex64::new(0.1, 0.0)).unwrap();
    let sample = julia_sample(&m, 300, 12, 3).unwrap();
    let pts: Vec<Complex64> = sample.points.iter().filter_map(|p| p.finite()).collect();
    for res in [1024, 2048] {
        let r = render_julia(&m, square(3.0), (res, res), Probe::default()).unwrap();
        assert!(coverage(&r, &pts) >= 0.99, "{res}: {}", coverage(&r, &pts));
    }
}

#[test]
fn far_viewport_is_empty() {
    let m = MapSpec::monomial(2).unwrap();
    let r = render_julia(&m, Viewport::new(Complex64::new(10.0, 10.0), 1.0, 1.0), (64, 64), Probe::default()).unwrap();
    assert_eq!(r.occupied_count(), 0);
}

#[test]
fn small_resolution_is_rejected() {
    let m = MapSpec::monomial(2).unwrap();
    assert!(render_julia(&m, square(4.0), (32, 64), Probe::default()).is_err());
}

#[test]
fn outputs_round_trip_and_repeat() {
    let m = MapSpec::quadratic(Complex64::new(0.1, 0.0)).unwrap();
    let a = render_julia(&m, square(3.0), (96, 64), Probe::default()).unwrap();
    let b = render_julia(&m, square(3.0), (96, 64), Probe::default()).unwrap();
    assert_eq!(a, b);
    let pgm = a.to_pgm();
    assert!(pgm.starts_with(b"P5\n96 64\n255\n"));
    assert_eq!(pgm.len(), "P5\n96 64\n255\n".len() + 96 * 64);
    let (w, h, px) = read_pgm(&pgm).unwrap();
    assert_eq!((w, h), (96, 64));
    for (i, occ) in a.occupied.iter().enumerate() {
        assert_eq!(*occ, px[i] == 0);
    }
    let csv = a.occupancy_csv();
    assert!(csv.starts_with("col,row\n"));
    assert_eq!(read_occupancy_csv(&csv, 96, 64).unwrap(), a.occupied);
    let dir = tempfile::tempdir().unwrap();
    a.write_pgm(&dir.path().join("j.pgm")).unwrap();
    assert_eq!(std::fs::read(dir.path().join("j.pgm")).unwrap(), pgm);
}
