//! Itineraries through the strips between consecutive zeros of the tangent, the shift, Moser
//! neighbourhoods, and a numeric check of the conjugacy `φ∘f = σ∘φ`.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyperbolicity::{attracting_cycles, classify, julia_sample, singular_orbits, JuliaSample, Verdict, BASIN_TOL, PROBE_STEPS};
use crate::maps::{Family, MapSpec, Terminal};
use crate::sphere::{chordal_distance, SpherePoint};

/// Distance to a strip boundary below which the strip index is not trusted.
pub const STRIP_MARGIN: f64 = 1e-9;

/// Relative distance to a pole at which an orbit point counts as landing on it. Rounding a
/// prepole to f64 and iterating forward misses the pole by up to ~5e-10 relative through order 5
/// (more beyond), so the window matches the strip margin rather than the evaluation tolerance.
pub const PREPOLE_TOL: f64 = 1e-9;

/// `k ≥ 0 ↦ 2k+1`, `k < 0 ↦ −2k`: a bijection `ℤ → {1, 2, …}`.
pub fn zigzag(k: i64) -> u64 {
    if k >= 0 {
        2 * k as u64 + 1
    } else {
        2 * k.unsigned_abs()
    }
}

pub fn unzigzag(n: u64) -> Result<i64> {
    match n {
        0 => Err(Error::InvalidArgument("symbols start at 1".into())),
        n if n % 2 == 1 => Ok(((n - 1) / 2) as i64),
        n => Ok(-((n / 2) as i64)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminator {
    None,
    Infinity,
}

/// Strip indices `k ∈ ℤ`; serialized through [`zigzag`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItinerarySequence {
    pub symbols: Vec<i64>,
    pub terminator: Terminator,
    /// Set when the orbit was followed for this many steps without reaching a pole.
    pub truncated_at: Option<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SequenceRepr {
    symbols: Vec<u64>,
    terminator: Terminator,
    truncated_at: Option<usize>,
}

impl Serialize for ItinerarySequence {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SequenceRepr { symbols: self.symbols.iter().map(|k| zigzag(*k)).collect(), terminator: self.terminator, truncated_at: self.truncated_at }
            .serialize(s)
    }
}

impl<'de> Deserialize<'de> for ItinerarySequence {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = SequenceRepr::deserialize(d)?;
        let symbols = r.symbols.into_iter().map(unzigzag).collect::<Result<Vec<_>>>().map_err(serde::de::Error::custom)?;
        Ok(ItinerarySequence { symbols, terminator: r.terminator, truncated_at: r.truncated_at })
    }
}

impl fmt::Display for ItinerarySequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.symbols.iter().map(|k| zigzag(*k).to_string()).collect();
        match self.terminator {
            Terminator::Infinity => parts.push("∞".into()),
            Terminator::None => parts.push("…".into()),
        }
        write!(f, "({})", parts.join(", "))
    }
}

/// `σ`: drops the first symbol.
pub fn shift(s: &ItinerarySequence) -> Result<ItinerarySequence> {
    if s.symbols.is_empty() {
        return Err(Error::EmptySequence);
    }
    Ok(ItinerarySequence {
        symbols: s.symbols[1..].to_vec(),
        terminator: s.terminator,
        truncated_at: s.truncated_at.map(|n| n - 1),
    })
}

/// Basic neighbourhoods of the Moser topology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MoserNeighborhood {
    /// Sequences starting with `prefix`.
    V { prefix: Vec<i64> },
    /// Sequences starting with `prefix` whose next symbol (as a natural number) is at least
    /// `threshold`, or which stop right after `prefix`.
    W { prefix: Vec<i64>, threshold: u64 },
}

impl MoserNeighborhood {
    /// `V_k` around `center`: its first `k` symbols.
    pub fn v_around(center: &ItinerarySequence, k: usize) -> Result<Self> {
        let limit = center.symbols.len();
        let ok = match center.terminator {
            Terminator::Infinity => k < limit.max(1) || (k == 0),
            Terminator::None => k <= limit,
        };
        if !ok {
            return Err(Error::InvalidArgument(format!("V_{k} needs {k} resolved symbols before the end")));
        }
        Ok(MoserNeighborhood::V { prefix: center.symbols[..k].to_vec() })
    }

    /// `W_k` around an ∞-terminated `center`.
    pub fn w_around(center: &ItinerarySequence, k: u64) -> Result<Self> {
        if center.terminator != Terminator::Infinity {
            return Err(Error::InvalidArgument("W neighbourhoods need an ∞-terminated centre".into()));
        }
        Ok(MoserNeighborhood::W { prefix: center.symbols.clone(), threshold: k })
    }
}

pub fn in_neighborhood(s: &ItinerarySequence, nbhd: &MoserNeighborhood) -> Result<bool> {
    let (prefix, threshold) = match nbhd {
        MoserNeighborhood::V { prefix } => (prefix, None),
        MoserNeighborhood::W { prefix, threshold } => (prefix, Some(*threshold)),
    };
    let known = s.symbols.len().min(prefix.len());
    if s.symbols[..known] != prefix[..known] {
        return Ok(false);
    }
    if s.symbols.len() < prefix.len() {
        return match s.terminator {
            // the next entry is ∞, which no finite prefix symbol matches
            Terminator::Infinity => Ok(false),
            Terminator::None => Err(Error::Undecidable { needed: prefix.len() + threshold.map_or(0, |_| 1) }),
        };
    }
    let Some(k) = threshold else { return Ok(true) };
    match s.symbols.get(prefix.len()) {
        Some(next) => Ok(zigzag(*next) >= k),
        None => match s.terminator {
            Terminator::Infinity => Ok(true),
            Terminator::None => Err(Error::Undecidable { needed: prefix.len() + 1 }),
        },
    }
}

/// Coding for a map whose hypotheses were checked once up front.
#[derive(Debug, Clone)]
pub struct SymbolicCoder {
    map: MapSpec,
    period: f64,
    /// Relative tolerance for recognizing a pole along the orbit.
    pub pole_tol: f64,
}

impl SymbolicCoder {
    /// Checks that the map is a sphere-hyperbolic tangent map whose singular orbits all converge
    /// to one attracting fixed point.
    pub fn new(map: &MapSpec) -> Result<Self> {
        if !matches!(map.family(), Family::Tangent { .. }) {
            return Err(Error::HypothesisUnverified(format!("strip coding is available for the tangent family only, not {}", map.name())));
        }
        // declared by the family, not checked numerically
        if !map.singular_values()?.derived_set_finite {
            return Err(Error::HypothesisUnverified("singular values may accumulate".into()));
        }
        let sample = julia_sample(map, 100, 12, 0)?;
        let report = classify(map, PROBE_STEPS, &sample);
        if report.in_h_sphere != Verdict::Yes {
            return Err(Error::HypothesisUnverified(format!("{} is not confirmed sphere-hyperbolic", map.name())));
        }
        let cycles = attracting_cycles(map, PROBE_STEPS)?;
        let [cycle] = cycles.as_slice() else {
            return Err(Error::HypothesisUnverified(format!("{} attracting cycles, expected one", cycles.len())));
        };
        if cycle.points.len() != 1 {
            return Err(Error::HypothesisUnverified("the attracting cycle is not a fixed point".into()));
        }
        for (v, orbit) in singular_orbits(map, PROBE_STEPS)? {
            let ok = matches!(&orbit.terminal, Terminal::ConvergedToCycle(c) if c.iter().any(|p| chordal_distance(*p, cycle.points[0]) < BASIN_TOL));
            if !ok {
                return Err(Error::HypothesisUnverified(format!("singular value {v} does not reach the attracting fixed point")));
            }
        }
        Ok(SymbolicCoder { map: map.clone(), period: map.lattice_step().map_or(std::f64::consts::PI, |s| s.norm()), pole_tol: PREPOLE_TOL })
    }

    pub fn map(&self) -> &MapSpec {
        &self.map
    }

    /// Index of the strip `kπ < Re z < (k+1)π` containing `z`.
    pub fn strip(&self, z: num_complex::Complex64) -> Result<i64> {
        let x = z.re / self.period;
        let k = x.floor();
        let distance = ((x - k).min(k + 1.0 - x)) * self.period;
        if distance < STRIP_MARGIN {
            return Err(Error::StripAmbiguous { distance });
        }
        Ok(k as i64)
    }

    fn is_pole(&self, z: num_complex::Complex64) -> bool {
        // poles sit at the strip centres (k + 1/2)π
        let c = ((z.re / self.period).floor() + 0.5) * self.period;
        let d = num_complex::Complex64::new(z.re - c, z.im).norm();
        d <= self.pole_tol * c.abs().max(1.0)
    }

    /// Strip indices of `z0, f(z0), …` for `depth` steps; stops after a pole with `∞`.
    pub fn itinerary(&self, z0: SpherePoint, depth: usize) -> Result<ItinerarySequence> {
        let mut symbols = Vec::with_capacity(depth);
        let mut cur = z0;
        for _ in 0..depth {
            let z = match cur {
                SpherePoint::Infinity => return Ok(ItinerarySequence { symbols, terminator: Terminator::Infinity, truncated_at: None }),
                SpherePoint::Finite(z) => z,
            };
            symbols.push(self.strip(z)?);
            if self.is_pole(z) {
                return Ok(ItinerarySequence { symbols, terminator: Terminator::Infinity, truncated_at: None });
            }
            cur = self.map.eval(cur)?;
        }
        if cur.is_infinite() && depth == 0 {
            return Ok(ItinerarySequence { symbols, terminator: Terminator::Infinity, truncated_at: None });
        }
        Ok(ItinerarySequence { symbols, terminator: Terminator::None, truncated_at: Some(depth) })
    }
}

pub fn itinerary(map: &MapSpec, z0: SpherePoint, depth: usize) -> Result<ItinerarySequence> {
    SymbolicCoder::new(map)?.itinerary(z0, depth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyFailure {
    pub index: usize,
    pub point: SpherePoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugacyReport {
    pub depth: usize,
    pub checked: usize,
    pub passes: usize,
    pub failures: Vec<ConjugacyFailure>,
    /// Index pairs of distinct points sharing a depth-limited itinerary.
    pub collisions: Vec<(usize, usize)>,
    pub itineraries: Vec<Option<ItinerarySequence>>,
}

/// Checks `itinerary(f(z), depth−1) = σ(itinerary(z, depth))` on every sample point and flags
/// distinct points with equal itineraries.
pub fn conjugacy_check_with(coder: &SymbolicCoder, points: &[SpherePoint], depth: usize) -> Result<ConjugacyReport> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be positive".into()));
    }
    let results: Vec<std::result::Result<ItinerarySequence, String>> = points
        .par_iter()
        .map(|z| {
            let it = coder.itinerary(*z, depth).map_err(|e| e.to_string())?;
            let image = coder.map().eval(*z).map_err(|e| e.to_string())?;
            let next = coder.itinerary(image, depth - 1).map_err(|e| e.to_string())?;
            let shifted = shift(&it).map_err(|e| e.to_string())?;
            if shifted != next {
                return Err(format!("σ·φ(z) = {shifted} but φ(f(z)) = {next}"));
            }
            Ok(it)
        })
        .collect();
    let mut failures = Vec::new();
    let mut itineraries = Vec::with_capacity(points.len());
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(it) => itineraries.push(Some(it)),
            Err(reason) => {
                failures.push(ConjugacyFailure { index, point: points[index], reason });
                itineraries.push(None);
            }
        }
    }
    let mut order: Vec<usize> = (0..points.len()).filter(|i| itineraries[*i].is_some()).collect();
    order.sort_by(|a, b| {
        let (x, y) = (itineraries[*a].as_ref().unwrap(), itineraries[*b].as_ref().unwrap());
        (&x.symbols, x.terminator == Terminator::Infinity).cmp(&(&y.symbols, y.terminator == Terminator::Infinity))
    });
    let mut collisions = Vec::new();
    for w in order.windows(2) {
        if itineraries[w[0]] == itineraries[w[1]] && chordal_distance(points[w[0]], points[w[1]]) > 1e-6 {
            collisions.push((w[0].min(w[1]), w[0].max(w[1])));
        }
    }
    Ok(ConjugacyReport { depth, checked: points.len(), passes: points.len() - failures.len(), failures, collisions, itineraries })
}

pub fn conjugacy_check(map: &MapSpec, sample: &JuliaSample, depth: usize) -> Result<ConjugacyReport> {
    conjugacy_check_with(&SymbolicCoder::new(map)?, &sample.points, depth)
}
