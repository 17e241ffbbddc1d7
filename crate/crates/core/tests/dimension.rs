use merotherm::dimension::*;
use merotherm::render::{RasterGrid, Viewport};
use merotherm::{Error, MapSpec, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn raster(w: usize, h: usize, f: impl Fn(usize, usize) -> bool) -> RasterGrid {
    let occ = (0..h).flat_map(|r| (0..w).map(move |c| (c, r))).map(|(c, r)| f(c, r)).collect();
    RasterGrid::from_occupancy(Viewport::new(Complex64::new(0.0, 0.0), 4.0, 4.0 * h as f64 / w as f64), w, h, occ).unwrap()
}

#[test]
fn moran_examples() {
    let t = solve_moran(&[1.0 / 3.0, 1.0 / 3.0]).unwrap();
    assert!((t - 2f64.ln() / 3f64.ln()).abs() < 1e-10);
    assert!((solve_moran(&[0.5, 0.5]).unwrap() - 1.0).abs() < 1e-10);
    assert!((solve_moran(&[0.25; 4]).unwrap() - 1.0).abs() < 1e-10);
    assert!(matches!(solve_moran(&[0.5]), Err(Error::TooFewBranches(1))));
    assert!(solve_moran(&[0.5, 1.5]).is_err());
}

proptest! {
    #[test]
    fn moran_root_solves_and_grows(ratios in proptest::collection::vec(1e-4f64..0.45, 2..12), extra in 1e-4f64..0.45) {
        let t = solve_moran(&ratios).unwrap();
        let sum: f64 = ratios.iter().map(|b| b.powf(t)).sum();
        prop_assert!((sum - 1.0).abs() < 1e-10);
        let mut more = ratios.clone();
        more.push(extra);
        prop_assert!(solve_moran(&more).unwrap() > t);
    }
}

#[test]
fn circle_raster_has_dimension_one() {
    let n = 2048;
    let c = n as f64 / 2.0;
    let rad = 0.4 * n as f64;
    let r = raster(n, n, |col, row| {
        let (x, y) = (col as f64 + 0.5 - c, row as f64 + 0.5 - c);
        ((x * x + y * y).sqrt() - rad).abs() < 0.5
    });
    let b = box_counting(&r, &[2, 3, 4, 5, 6, 7]).unwrap();
    assert!((b.dim - 1.0).abs() < 0.05, "{}", b.dim);
}

#[test]
fn filled_and_point_rasters() {
    let full = raster(256, 256, |_, _| true);
    let b = box_counting(&full, &[0, 1, 2, 3, 4]).unwrap();
    assert!((b.dim - 2.0).abs() < 0.01);
    assert!(b.residual < 1e-9);
    let point = raster(256, 256, |c, r| c == 0 && r == 0);
    let b = box_counting(&point, &[0, 1, 2, 3, 4]).unwrap();
    assert!(b.dim.abs() < 1e-12);
    let empty = raster(256, 256, |_, _| false);
    assert!(matches!(box_counting(&empty, &[0, 1, 2, 3]), Err(Error::DegenerateRaster { occupied: 0 })));
    assert!(box_counting(&full, &[0, 1, 2]).is_err());
}

#[test]
fn grid_offsets_do_not_split_a_line() {
    // a horizontal line on a dyadic boundary still counts as one box row
    let r = raster(1024, 64, |_, row| row == 31 || row == 32);
    let counts = box_counts(&r, &[2, 3, 4]);
    assert_eq!(counts, vec![256, 128, 64]);
}

#[test]
fn ifs_branches_meet_admission_rules() {
    let m = MapSpec::monomial(2).unwrap();
    let a = SpherePoint::from(1.0);
    let r = koebe_radius(&m, Complex64::new(1.0, 0.0)).unwrap();
    assert!((r - 0.25).abs() < 1e-12);
    assert!(matches!(ifs_lower_bound(&m, a, r, 5, 2), Err(Error::TooFewBranches(_))));
    let (sys, t0) = ifs_auto(&m, a, r, 1, 14, 2).unwrap();
    assert!(sys.branches.len() >= 2);
    for b in &sys.branches {
        assert!(b.derivative > ADMISSION);
        assert!(b.b_lower <= b.b_upper && b.b_upper < 0.25);
        assert!((b.preimage - 1.0).norm() < r);
        let fp = b.fixed_point.expect("contraction settles");
        let mut w = SpherePoint::from(fp);
        for _ in 0..sys.level {
            w = m.eval(w).unwrap();
        }
        assert!((w.finite().unwrap() - fp).norm() < 1e-9);
    }
    for (i, x) in sys.branches.iter().enumerate() {
        for y in &sys.branches[i + 1..] {
            assert!((x.preimage - y.preimage).norm() > (x.b_upper + y.b_upper) * r);
        }
    }
    assert!(t0 > 0.0 && t0 <= 1.0);
}

#[test]
fn tangent_ifs_bound_sits_below_the_bowen_root() {
    let m = MapSpec::tangent(0.5).unwrap();
    let a = Complex64::new(1.1655611852072112, 0.0);
    let r = koebe_radius(&m, a).unwrap();
    let (sys, t0) = ifs_auto(&m, SpherePoint::from(a), r, 1, 6, 9).unwrap();
    assert!(sys.level >= 4);
    assert!(t0 > 0.0 && t0 < 0.7501378524240584 + 0.02);
}

#[test]
fn square_map_report_is_consistent() {
    let m = MapSpec::monomial(2).unwrap();
    let r = dimension_report(&m, &DimensionConfig::default()).unwrap();
    assert!((r.s_bowen - 1.0).abs() < 1e-6);
    assert!((r.box_count.dim - 1.0).abs() < 0.05);
    assert!(r.verdict_consistent);
    assert_eq!(r.radial_note, RadialNote::SphereHyperbolicFullJulia);
    assert_eq!(r.spread_rule, None);
}

#[test]
fn exponential_report_is_radial_only() {
    let m = MapSpec::exponential(0.1).unwrap();
    let cfg = DimensionConfig { raster: RasterConfig { resolution: Some((512, 512)), ..RasterConfig::default() }, ..DimensionConfig::default() };
    let r = dimension_report(&m, &cfg).unwrap();
    assert_eq!(r.radial_note, RadialNote::PlaneHyperbolicRadialOnly);
    assert!(r.s_bowen > 0.5 && r.s_bowen < 2.0);
    assert!(!r.notes.is_empty());
    assert!(r.checks.iter().all(|c| c.name != "box_matches_bowen"));
}

#[test]
fn non_hyperbolic_map_is_refused() {
    // the critical orbit of z² − 2 lands on the repelling fixed point 2
    let m = MapSpec::quadratic(Complex64::new(-2.0, 0.0)).unwrap();
    let err = dimension_report(&m, &DimensionConfig::default()).unwrap_err();
    assert!(err.is_hypothesis(), "{err}");
}
