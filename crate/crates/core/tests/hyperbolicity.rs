use merotherm::hyperbolicity::{
    classify, expansion_estimate, julia_sample, post_singular_orbit, repelling_seed, Verdict,
};
use merotherm::{MapSpec, SpherePoint};
use num_complex::Complex64;

#[test]
fn circle_sample() {
    let m = MapSpec::monomial(2).unwrap();
    let s = julia_sample(&m, 500, 30, 1).unwrap();
    assert_eq!(s.points.len(), 500);
    for p in &s.points {
        assert!((p.abs() - 1.0).abs() < 1e-6);
    }
}

#[test]
fn tangent_sample_is_real() {
    let m = MapSpec::tangent(0.5).unwrap();
    let s = julia_sample(&m, 500, 30, 1).unwrap();
    for p in &s.points {
        assert!(p.finite().unwrap().im.abs() < 1e-6);
    }
    let seed = repelling_seed(&m).unwrap();
    assert!((seed.re - 1.165_561_185_207_211_2).abs() < 1e-12, "{seed}");
}

#[test]
fn cantor_quadratic_sample_bounded() {
    let m = MapSpec::polynomial(&[-6.0, 0.0, 1.0]).unwrap();
    let s = julia_sample(&m, 200, 30, 2).unwrap();
    for p in &s.points {
        let z = p.finite().unwrap();
        assert!(z.re.abs() <= 3.0 && z.im.abs() < 1e-6, "{z}");
        let o = m.orbit(*p, 20, 1e3);
        assert!(matches!(o.terminal, merotherm::Terminal::Alive | merotherm::Terminal::ConvergedToCycle(_)), "{z}");
    }
}

#[test]
fn backward_then_forward_is_stable() {
    let m = MapSpec::tangent(0.5).unwrap();
    let s = julia_sample(&m, 50, 30, 4).unwrap();
    for p in &s.points {
        let (pre, _) = m.branch_preimage(*p, 1).unwrap();
        let back = m.eval(SpherePoint::Finite(pre)).unwrap();
        assert!(merotherm::chordal_distance(back, *p) < 1e-9);
    }
}

#[test]
fn post_singular_examples() {
    let sq = MapSpec::monomial(2).unwrap();
    let p = post_singular_orbit(&sq, 10).unwrap();
    assert!(p.contains(&SpherePoint::Finite(Complex64::new(0.0, 0.0))));
    assert!(p.contains(&SpherePoint::Infinity));
    let t = MapSpec::tangent(0.5).unwrap();
    let p = post_singular_orbit(&t, 50).unwrap();
    let last = p.iter().filter(|z| z.finite().unwrap().im > 0.0).last().unwrap();
    assert!(last.abs() < 1e-8);
    let e = MapSpec::exponential(0.1).unwrap();
    let p = post_singular_orbit(&e, 50).unwrap();
    let x = p.last().unwrap().finite().unwrap();
    assert!((x.re - 0.111_832_559_158_962_9).abs() < 1e-8, "{x}");
}

#[test]
fn classification_examples() {
    let t = MapSpec::tangent(0.5).unwrap();
    let s = julia_sample(&t, 300, 30, 1).unwrap();
    let r = classify(&t, 200, &s);
    assert_eq!(r.in_h_sphere, Verdict::Yes, "{:?}", r.evidence);
    assert!(r.post_singular_to_julia_distance > 0.0);

    let e = MapSpec::exponential(0.1).unwrap();
    let s = julia_sample(&e, 300, 30, 1).unwrap();
    let r = classify(&e, 200, &s);
    assert_eq!(r.in_h_plane, Verdict::Yes, "{:?}", r.evidence);
    assert_eq!(r.in_h_sphere, Verdict::No);

    let sq = MapSpec::monomial(2).unwrap();
    let s = julia_sample(&sq, 300, 30, 1).unwrap();
    let r = classify(&sq, 200, &s);
    assert_eq!(r.in_h_sphere, Verdict::Yes);
    assert!((r.post_singular_to_julia_distance - std::f64::consts::FRAC_PI_4).abs() < 1e-6);
}

#[test]
fn expansion_examples() {
    let sq = MapSpec::monomial(2).unwrap();
    let s = julia_sample(&sq, 500, 30, 1).unwrap();
    let e = expansion_estimate(&sq, &s, 10).unwrap();
    assert!((e.lambda_hat - 2.0).abs() < 1e-6);
    assert!((e.c_hat - 1.0).abs() < 1e-5);
    assert_eq!(e.per_depth_minima[0], (0, 0.0));
    for (n, v) in &e.per_depth_minima {
        assert!((v - *n as f64 * 2f64.ln()).abs() < 1e-6);
    }
    let t = MapSpec::tangent(0.5).unwrap();
    let s = julia_sample(&t, 500, 30, 1).unwrap();
    let e = expansion_estimate(&t, &s, 10).unwrap();
    assert!(e.lambda_hat > 1.0);
    assert!(e.c_hat > 0.0);
    assert!(e.per_depth_minima.windows(2).all(|w| w[1].0 == w[0].0 + 1));
}
