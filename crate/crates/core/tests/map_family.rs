use std::f64::consts::{FRAC_PI_2, PI};

use merotherm::sphere::spherical_derivative_from_parts;
use merotherm::{spherical_derivative, MapSpec, SpherePoint, Terminal};
use num_complex::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> SpherePoint {
    SpherePoint::new(Complex64::new(re, im))
}

fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[test]
fn eval_examples() {
    let sq = MapSpec::monomial(2).unwrap();
    assert_eq!(sq.eval(c(2.0, 0.0)).unwrap(), c(4.0, 0.0));
    let tan = MapSpec::tangent(0.5).unwrap();
    assert_eq!(tan.eval(c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    assert_eq!(tan.eval(c(FRAC_PI_2, 0.0)).unwrap(), SpherePoint::Infinity);
    assert!(tan.eval(SpherePoint::Infinity).is_err());
}

#[test]
fn derivative_examples() {
    let sq = MapSpec::monomial(2).unwrap();
    assert!((sq.derivative(c(3.0, 0.0)).unwrap() - 6.0).norm() < 1e-14);
    let tan = MapSpec::tangent(0.5).unwrap();
    assert!((tan.derivative(c(0.0, 0.0)).unwrap() - 0.5).norm() < 1e-15);
    let ex = MapSpec::exponential(0.1).unwrap();
    assert!((ex.derivative(c(0.0, 0.0)).unwrap() - 0.1).norm() < 1e-15);
    assert!(tan.derivative(c(FRAC_PI_2, 0.0)).is_err());
}

#[test]
fn spherical_derivative_at_infinity() {
    // z²/((z−1)(z−2)) at ∞ gives 3/2
    let f = MapSpec::rational(vec![cx(0.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)], vec![cx(2.0, 0.0), cx(-3.0, 0.0), cx(1.0, 0.0)]).unwrap();
    let v = spherical_derivative(&f, SpherePoint::Infinity).unwrap();
    assert!((v.value() - 1.5).abs() < 1e-14, "{}", v.value());
    // 2z + 1/z at ∞ gives 1/2
    let g = MapSpec::rational(vec![cx(1.0, 0.0), cx(0.0, 0.0), cx(2.0, 0.0)], vec![cx(0.0, 0.0), cx(1.0, 0.0)]).unwrap();
    let v = spherical_derivative(&g, SpherePoint::Infinity).unwrap();
    assert!((v.value() - 0.5).abs() < 1e-14, "{}", v.value());
    let t = MapSpec::tangent(0.5).unwrap();
    assert!(spherical_derivative(&t, SpherePoint::Infinity).is_err());
}

#[test]
fn identity_and_inversion_are_isometries() {
    for z in [cx(0.3, 0.4), cx(2.0, -1.0), cx(-0.1, 5.0), cx(1e-4, 0.0)] {
        let id = spherical_derivative_from_parts(z, z, cx(1.0, 0.0));
        assert!(id.log_value.abs() < 1e-15);
        let inv = spherical_derivative_from_parts(z, 1.0 / z, -1.0 / (z * z));
        assert!(inv.log_value.abs() < 1e-12, "{}", inv.log_value);
    }
    // 1/z² = (1/z)∘z², so it shares the spherical derivative of z²
    let sq = MapSpec::monomial(2).unwrap();
    let inv_sq = MapSpec::rational(vec![cx(1.0, 0.0)], vec![cx(0.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)]).unwrap();
    for z in [c(0.3, 0.4), c(2.0, -1.0), c(-0.1, 5.0)] {
        let a = spherical_derivative(&sq, z).unwrap().log_value;
        let b = spherical_derivative(&inv_sq, z).unwrap().log_value;
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn simple_pole_limit_formula() {
    let t = MapSpec::tangent(0.5).unwrap();
    let p = FRAC_PI_2 + PI;
    let v = spherical_derivative(&t, c(p, 0.0)).unwrap();
    assert!((v.value() - (1.0 + p * p) / 0.5).abs() < 1e-10);
    // approaching the pole gives the same limit
    let near = spherical_derivative(&t, c(p + 1e-7, 0.0)).unwrap();
    assert!((near.value() / v.value() - 1.0).abs() < 1e-5);
}

#[test]
fn critical_point_flag() {
    let sq = MapSpec::monomial(2).unwrap();
    let v = spherical_derivative(&sq, c(0.0, 0.0)).unwrap();
    assert!(v.is_zero_flag);
}

#[test]
fn poles_examples() {
    let tan = MapSpec::tangent(0.5).unwrap();
    let mut p: Vec<f64> = tan.poles_in_disk(5.0).iter().map(|z| z.finite().unwrap().re).collect();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let want = [-1.5 * PI, -FRAC_PI_2, FRAC_PI_2, 1.5 * PI];
    assert_eq!(p.len(), 4);
    for (a, b) in p.iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(MapSpec::exponential(0.1).unwrap().poles_in_disk(100.0).is_empty());
    let f = MapSpec::rational(vec![cx(1.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)], vec![cx(0.0, 0.0), cx(1.0, 0.0)]).unwrap();
    assert_eq!(f.poles_in_disk(2.0), vec![c(0.0, 0.0)]);
    let ps = MapSpec::pole_series(2, 1.0, 40).unwrap();
    let q = ps.poles_in_disk(30.0);
    assert_eq!(q.len(), 4); // ±16, ±25
}

#[test]
fn singular_value_examples() {
    let sq = MapSpec::monomial(2).unwrap().singular_values().unwrap();
    assert!(sq.critical_values.contains(&c(0.0, 0.0)));
    assert!(sq.critical_values.contains(&SpherePoint::Infinity));
    let t = MapSpec::tangent(0.5).unwrap().singular_values().unwrap();
    assert!(t.critical_values.is_empty());
    assert_eq!(t.asymptotic_values, vec![c(0.0, 0.5), c(0.0, -0.5)]);
    assert!(!t.infinity_is_asymptotic);
    // the omitted values are approached along the imaginary axis
    let tan = MapSpec::tangent(0.5).unwrap();
    let far = tan.eval(c(0.3, 40.0)).unwrap().finite().unwrap();
    assert!((far - cx(0.0, 0.5)).norm() < 1e-30);
    let e = MapSpec::exponential(0.1).unwrap().singular_values().unwrap();
    assert_eq!(e.asymptotic_values, vec![c(0.0, 0.0)]);
    assert!(e.infinity_is_asymptotic);
}

#[test]
fn orbit_examples() {
    let sq = MapSpec::monomial(2).unwrap();
    let o = sq.orbit(c(2.0, 0.0), 10, 1e6);
    assert_eq!(o.terminal, Terminal::Escaped { step: 5, radius: 1e6 });
    let tan = MapSpec::tangent(0.5).unwrap();
    let o = tan.orbit(c(FRAC_PI_2, 0.0), 10, 1e6);
    assert_eq!(o.terminal, Terminal::HitPole(0));
    assert_eq!(o.points.len(), 1);
    let o = tan.orbit(c(0.3, 0.0), 200, 1e6);
    match o.terminal {
        Terminal::ConvergedToCycle(cyc) => {
            assert_eq!(cyc.len(), 1);
            assert!(cyc[0].abs() < 1e-8);
        }
        t => panic!("unexpected {t:?}"),
    }
    let o = sq.orbit(c(0.5, 0.5), 1, 1e6);
    assert_eq!(o.points.len(), 2);
    assert_eq!(o.terminal, Terminal::Alive);
}

#[test]
fn rejects_invalid_maps() {
    assert!(MapSpec::tangent(0.0).is_err());
    assert!(MapSpec::polynomial(&[0.0, 1.0]).is_err());
    // (z-1)/(z-1)·z… common root
    assert!(MapSpec::rational(vec![cx(-1.0, 0.0), cx(0.0, 0.0), cx(1.0, 0.0)], vec![cx(-1.0, 0.0), cx(1.0, 0.0)]).is_err());
    assert!(MapSpec::pole_series(3, 1.0, 5).is_err());
}

#[test]
fn json_roundtrip_and_diagnostics() {
    let m = MapSpec::from_json(r#"{"family":"tangent","lambda":0.5}"#).unwrap();
    assert_eq!(m, MapSpec::tangent(0.5).unwrap());
    let again = MapSpec::from_json(&m.to_json()).unwrap();
    assert_eq!(again, m);
    let r = MapSpec::from_json(r#"{"family":"rational","numerator":[[0.1,0],0,1],"denominator":[1]}"#).unwrap();
    assert_eq!(r.degree(), Some(2));
    let err = MapSpec::from_json(r#"{"family":"tangent","lamda":0.5}"#).unwrap_err().to_string();
    assert!(err.contains("lamda"), "{err}");
}

#[test]
fn pole_series_tail_refusal() {
    // p = 1 has a slowly decaying tail: refused away from the origin
    let m = MapSpec::pole_series(1, 1.0, 100).unwrap();
    assert!(m.eval(c(0.5, 0.0)).is_err());
}

fn rand_point() -> impl Strategy<Value = Complex64> {
    (-3.0f64..3.0, -2.0f64..2.0).prop_map(|(a, b)| cx(a, b))
}

fn check_fd(m: &MapSpec, z: Complex64) {
    if m.is_pole(z) {
        return;
    }
    let h = 1e-6 * (1.0 + z.norm());
    let f = |w: Complex64| m.eval(SpherePoint::Finite(w)).unwrap().finite().unwrap();
    let fd = (f(z + h) - f(z - h)) / (2.0 * h);
    let d = m.derivative(SpherePoint::Finite(z)).unwrap();
    assert!((fd - d).norm() <= 1e-5 * d.norm().max(1.0), "{z} {fd} {d}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn derivative_matches_finite_differences(z in rand_point()) {
        let maps = [
            MapSpec::quadratic(cx(0.1, 0.0)).unwrap(),
            MapSpec::tangent(0.5).unwrap(),
            MapSpec::exponential(0.1).unwrap(),
            MapSpec::pole_series(3, 1.0, 500).unwrap(),
        ];
        for m in &maps {
            let zz = if matches!(m.family(), merotherm::Family::Tangent { .. }) && (z.re.rem_euclid(PI) - FRAC_PI_2).abs() < 0.05 { z + 0.2 } else { z };
            check_fd(m, zz);
        }
    }

    #[test]
    fn tangent_is_pi_periodic(z in rand_point()) {
        let t = MapSpec::tangent(0.5).unwrap();
        prop_assume!(!t.is_pole(z) && (z.re.rem_euclid(PI) - FRAC_PI_2).abs() > 1e-3);
        let a = t.eval(SpherePoint::Finite(z)).unwrap().finite().unwrap();
        let b = t.eval(SpherePoint::Finite(z + PI)).unwrap().finite().unwrap();
        prop_assert!((a - b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn pole_series_is_odd(z in rand_point()) {
        let m = MapSpec::pole_series(3, 1.0, 500).unwrap();
        let a = m.eval(SpherePoint::Finite(z)).unwrap().finite().unwrap();
        let b = m.eval(SpherePoint::Finite(-z)).unwrap().finite().unwrap();
        prop_assert!((a + b).norm() <= 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn chain_rule_in_log_space(z in rand_point()) {
        let f = MapSpec::quadratic(cx(0.1, 0.0)).unwrap();
        let g = MapSpec::tangent(0.5).unwrap();
        let fz = f.eval(SpherePoint::Finite(z)).unwrap();
        let w = fz.finite().unwrap();
        prop_assume!(!g.is_pole(w) && (w.re.rem_euclid(PI) - FRAC_PI_2).abs() > 1e-2 && w.norm() < 50.0);
        // (g∘f)^× by direct formula
        let gf = g.eval(fz).unwrap().finite().unwrap();
        let d = g.derivative(fz).unwrap() * f.derivative(SpherePoint::Finite(z)).unwrap();
        let direct = d.norm().ln() + (1.0 + z.norm_sqr()).ln() - (1.0 + gf.norm_sqr()).ln();
        let chained = g.log_sphere_derivative(fz).unwrap() + f.log_sphere_derivative(SpherePoint::Finite(z)).unwrap();
        prop_assert!((direct - chained).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn distance_symmetric_and_bounded(a in rand_point(), b in rand_point()) {
        let d1 = merotherm::chordal_distance(a.into(), b.into());
        let d2 = merotherm::chordal_distance(b.into(), a.into());
        prop_assert_eq!(d1, d2);
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2).contains(&d1));
    }

    #[test]
    fn triangle_inequality(a in rand_point(), b in rand_point(), c in rand_point()) {
        let d = |x: Complex64, y: Complex64| merotherm::chordal_distance(x.into(), y.into());
        prop_assert!(d(a, c) <= d(a, b) + d(b, c) + 4.0 * f64::EPSILON);
    }

    #[test]
    fn inversion_has_unit_sphere_derivative(z in rand_point()) {
        // 1/z is a spherical isometry: |f'|(1+|z|²)/(1+|1/z|²) = 1
        prop_assume!(z.norm() > 1e-3);
        let fp = 1.0 / z.norm_sqr();
        let v = fp * (1.0 + z.norm_sqr()) / (1.0 + 1.0 / z.norm_sqr());
        prop_assert!((v - 1.0).abs() < 1e-12);
    }
}
