use std::f64::consts::{FRAC_PI_2, PI};

use merotherm::hyperbolicity::julia_sample;
use merotherm::symbolic::*;
use merotherm::{Error, MapSpec, SpherePoint};
use num_complex::Complex64;
use proptest::prelude::*;

fn tangent() -> MapSpec {
    MapSpec::tangent(0.5).unwrap()
}

fn real(x: f64) -> SpherePoint {
    SpherePoint::Finite(Complex64::new(x, 0.0))
}

fn seq(symbols: &[i64], terminator: Terminator) -> ItinerarySequence {
    let truncated_at = (terminator == Terminator::None).then_some(symbols.len());
    ItinerarySequence { symbols: symbols.to_vec(), terminator, truncated_at }
}

/// Repelling fixed point of 0.5 tan in the strip (kπ, (k+1)π), by bisection on the half-strip
/// between the pole and the zero where `0.5 tan x − x` changes sign.
fn fixed_point_in_strip(k: i64) -> f64 {
    let pole = (k as f64 + 0.5) * PI;
    let (mut lo, mut hi) = if k >= 0 { ((k as f64 * PI).max(0.5), pole - 1e-12) } else { (pole + 1e-12, (k + 1) as f64 * PI - 0.5) };
    let g = |x: f64| 0.5 * x.tan() - x;
    let rising = g(hi) > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if (g(mid) > 0.0) == rising { hi = mid } else { lo = mid }
    }
    0.5 * (lo + hi)
}

#[test]
fn zigzag_is_a_bijection_onto_positive_integers() {
    assert_eq!((-2..=2).map(zigzag).collect::<Vec<_>>(), vec![4, 2, 1, 3, 5]);
    assert!(unzigzag(0).is_err());
}

proptest! {
    #[test]
    fn zigzag_round_trip(k in -1_000_000_i64..1_000_000) {
        prop_assert_eq!(unzigzag(zigzag(k)).unwrap(), k);
    }
}

#[test]
fn pole_stops_with_infinity() {
    let coder = SymbolicCoder::new(&tangent()).unwrap();
    for depth in [1, 5, 40] {
        let it = coder.itinerary(real(FRAC_PI_2), depth).unwrap();
        assert_eq!(it, seq(&[0], Terminator::Infinity));
    }
    assert_eq!(coder.itinerary(real(FRAC_PI_2), 3).unwrap().to_string(), "(1, ∞)");
    assert_eq!(coder.itinerary(SpherePoint::Infinity, 3).unwrap(), seq(&[], Terminator::Infinity));
}

#[test]
fn prepole_of_order_two() {
    let coder = SymbolicCoder::new(&tangent()).unwrap();
    // 0.5 tan z0 = π/2 with z0 in the strip (π, 2π)
    let z0 = PI.atan() + PI;
    let it = coder.itinerary(real(z0), 10).unwrap();
    assert_eq!(it, seq(&[1, 0], Terminator::Infinity));
    let report = conjugacy_check_with(&coder, &[real(z0), real(FRAC_PI_2 - 2.0 * PI)], 10).unwrap();
    assert_eq!(report.passes, 2, "{:?}", report.failures);
}

#[test]
fn prepoles_up_to_order_five_stop_after_their_order() {
    let coder = SymbolicCoder::new(&tangent()).unwrap();
    for k in [-5i64, -1, 0, 3, 9] {
        let mut z = FRAC_PI_2 + k as f64 * PI;
        let mut strips = vec![k];
        for branch in [2i64, -1, 0, 5] {
            z = (2.0 * z).atan() + branch as f64 * PI;
            strips.insert(0, (z / PI).floor() as i64);
            let it = coder.itinerary(real(z), 12).unwrap();
            assert_eq!(it, seq(&strips, Terminator::Infinity), "z = {z}");
        }
    }
}

#[test]
fn repelling_fixed_points_give_constant_sequences() {
    let coder = SymbolicCoder::new(&tangent()).unwrap();
    for k in [-3, -1, 0, 1, 4] {
        let it = coder.itinerary(real(fixed_point_in_strip(k)), 5).unwrap();
        assert_eq!(it, seq(&[k; 5], Terminator::None));
    }
}

#[test]
fn strip_boundaries_are_ambiguous() {
    let coder = SymbolicCoder::new(&tangent()).unwrap();
    for x in [0.0, PI, -2.0 * PI + 1e-12] {
        assert!(matches!(coder.itinerary(real(x), 3), Err(Error::StripAmbiguous { .. })));
    }
}

#[test]
fn shift_drops_one_symbol() {
    assert_eq!(shift(&seq(&[3, -1, 2], Terminator::None)).unwrap(), seq(&[-1, 2], Terminator::None));
    assert_eq!(shift(&seq(&[5], Terminator::Infinity)).unwrap(), seq(&[], Terminator::Infinity));
    assert!(matches!(shift(&seq(&[], Terminator::Infinity)), Err(Error::EmptySequence)));
}

#[test]
fn moser_neighbourhoods() {
    let center = seq(&[2, -1], Terminator::Infinity);
    let w = MoserNeighborhood::w_around(&center, 10).unwrap();
    assert!(in_neighborhood(&center, &w).unwrap());
    // zigzag(5) = 11 ≥ 10, zigzag(4) = 9 < 10
    assert!(in_neighborhood(&seq(&[2, -1, 5, 0], Terminator::None), &w).unwrap());
    assert!(!in_neighborhood(&seq(&[2, -1, 4, 0], Terminator::None), &w).unwrap());
    assert!(!in_neighborhood(&seq(&[2, 0, 9], Terminator::None), &w).unwrap());
    assert!(matches!(in_neighborhood(&seq(&[2, -1], Terminator::None), &w), Err(Error::Undecidable { needed: 3 })));
    assert!(MoserNeighborhood::w_around(&seq(&[1], Terminator::None), 3).is_err());

    let v = MoserNeighborhood::v_around(&center, 1).unwrap();
    assert!(in_neighborhood(&seq(&[2, 7, 7], Terminator::None), &v).unwrap());
    assert!(!in_neighborhood(&seq(&[], Terminator::Infinity), &v).unwrap());
    assert!(matches!(in_neighborhood(&seq(&[], Terminator::None), &v), Err(Error::Undecidable { needed: 1 })));
}

#[test]
fn only_tangent_maps_with_one_attracting_fixed_point_are_coded() {
    for map in [MapSpec::quadratic(Complex64::new(0.1, 0.0)).unwrap(), MapSpec::exponential(0.1).unwrap(), MapSpec::tangent(2.0).unwrap()] {
        assert!(matches!(SymbolicCoder::new(&map), Err(Error::HypothesisUnverified(_))), "{}", map.name());
    }
}

#[test]
fn conjugacy_holds_on_a_julia_sample() {
    let map = tangent();
    let sample = julia_sample(&map, 200, 12, 3).unwrap();
    let report = conjugacy_check(&map, &sample, 12).unwrap();
    assert_eq!(report.checked, 200);
    assert_eq!(report.passes, 200, "{:?}", report.failures);
    assert!(report.collisions.is_empty(), "{:?}", report.collisions);
}

#[test]
fn itineraries_survive_a_tighter_pole_tolerance() {
    let map = tangent();
    let sample = julia_sample(&map, 200, 12, 5).unwrap();
    let coder = SymbolicCoder::new(&map).unwrap();
    let mut tight = coder.clone();
    tight.pole_tol /= 2.0;
    let same = sample.points.iter().filter(|z| coder.itinerary(**z, 12).unwrap() == tight.itinerary(**z, 12).unwrap()).count();
    assert!(same >= 198, "{same}");
}

#[test]
fn sequences_serialize_as_natural_numbers() {
    let s = seq(&[0, -1, 3], Terminator::None);
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(json, r#"{"symbols":[1,2,7],"terminator":"none","truncated_at":3}"#);
    assert_eq!(serde_json::from_str::<ItinerarySequence>(&json).unwrap(), s);
    assert!(serde_json::from_str::<ItinerarySequence>(r#"{"symbols":[0],"terminator":"none","truncated_at":1}"#).is_err());
}
