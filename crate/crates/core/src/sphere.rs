//! Points of the Riemann sphere and the spherical metric with density `1/(1+|z|²)`.

use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Result;
use crate::maps::MapSpec;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpherePoint {
    Finite(Complex64),
    Infinity,
}

impl SpherePoint {
    /// Wraps a complex number; any non-finite or NaN component becomes `Infinity`.
    pub fn new(z: Complex64) -> Self {
        if z.re.is_finite() && z.im.is_finite() {
            SpherePoint::Finite(z)
        } else {
            SpherePoint::Infinity
        }
    }

    pub fn real(x: f64) -> Self {
        Self::new(Complex64::new(x, 0.0))
    }

    pub fn finite(&self) -> Option<Complex64> {
        match self {
            SpherePoint::Finite(z) => Some(*z),
            SpherePoint::Infinity => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, SpherePoint::Infinity)
    }

    /// Modulus, `+inf` at infinity.
    pub fn abs(&self) -> f64 {
        match self {
            SpherePoint::Finite(z) => z.norm(),
            SpherePoint::Infinity => f64::INFINITY,
        }
    }

    /// Image under `z ↦ 1/z`, an isometry of the spherical metric.
    pub fn invert(&self) -> Self {
        match self {
            SpherePoint::Infinity => SpherePoint::Finite(Complex64::new(0.0, 0.0)),
            SpherePoint::Finite(z) if *z == Complex64::new(0.0, 0.0) => SpherePoint::Infinity,
            SpherePoint::Finite(z) => SpherePoint::new(z.inv()),
        }
    }
}

impl From<Complex64> for SpherePoint {
    fn from(z: Complex64) -> Self {
        SpherePoint::new(z)
    }
}

impl From<f64> for SpherePoint {
    fn from(x: f64) -> Self {
        SpherePoint::real(x)
    }
}

impl fmt::Display for SpherePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpherePoint::Finite(z) => {
                let sign = if z.im < 0.0 { '-' } else { '+' };
                write!(f, "{}{}{}i", z.re, sign, z.im.abs())
            }
            SpherePoint::Infinity => write!(f, "inf"),
        }
    }
}

// JSON form: `[re, im]` for finite points, the string "inf" for infinity.
impl Serialize for SpherePoint {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            SpherePoint::Finite(z) => [z.re, z.im].serialize(s),
            SpherePoint::Infinity => s.serialize_str("inf"),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PointRepr {
    Pair([f64; 2]),
    Real(f64),
    Named(String),
    Object { re: f64, #[serde(default)] im: f64 },
}

impl<'de> Deserialize<'de> for SpherePoint {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PointRepr::deserialize(d)? {
            PointRepr::Pair([re, im]) => Ok(SpherePoint::new(Complex64::new(re, im))),
            PointRepr::Real(re) => Ok(SpherePoint::real(re)),
            PointRepr::Object { re, im } => Ok(SpherePoint::new(Complex64::new(re, im))),
            PointRepr::Named(s) => match s.to_ascii_lowercase().as_str() {
                "inf" | "infinity" | "∞" => Ok(SpherePoint::Infinity),
                other => Err(serde::de::Error::custom(format!("expected \"inf\", got \"{other}\""))),
            },
        }
    }
}

/// Geodesic distance for the density `1/(1+|ζ|²)`; values lie in `[0, π/2]`.
///
/// Uses `atan2(|a−b|, |1+a·b̄|)`, which equals `arcsin(|a−b|/√((1+|a|²)(1+|b|²)))`
/// but keeps full precision near `π/2`. Both points are inverted first when they lie
/// outside the unit disk.
pub fn chordal_distance(a: SpherePoint, b: SpherePoint) -> f64 {
    match (a, b) {
        (SpherePoint::Infinity, SpherePoint::Infinity) => 0.0,
        (SpherePoint::Finite(z), SpherePoint::Infinity) | (SpherePoint::Infinity, SpherePoint::Finite(z)) => {
            1f64.atan2(z.norm())
        }
        (SpherePoint::Finite(x), SpherePoint::Finite(y)) => {
            if x.norm() > 1.0 && y.norm() > 1.0 {
                finite_distance(x.inv(), y.inv())
            } else {
                finite_distance(x, y)
            }
        }
    }
}

fn finite_distance(a: Complex64, b: Complex64) -> f64 {
    let num = (a - b).norm();
    let den = (Complex64::new(1.0, 0.0) + a * b.conj()).norm();
    num.atan2(den)
}

/// `f^×(z)` stored as its natural log; `is_zero_flag` marks critical points (log is `-inf`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDerivativeValue {
    pub log_value: f64,
    pub is_zero_flag: bool,
}

impl SphericalDerivativeValue {
    pub fn from_log(log_value: f64) -> Self {
        if log_value == f64::NEG_INFINITY {
            Self::zero()
        } else {
            Self { log_value, is_zero_flag: false }
        }
    }

    pub fn zero() -> Self {
        Self { log_value: f64::NEG_INFINITY, is_zero_flag: true }
    }

    pub fn value(&self) -> f64 {
        self.log_value.exp()
    }
}

/// `f^×(z) = |f'(z)|(1+|z|²)/(1+|f(z)|²)`, with the limit convention at poles and,
/// for rational maps, conjugation by `1/z` at infinity.
pub fn spherical_derivative(map: &MapSpec, z: SpherePoint) -> Result<SphericalDerivativeValue> {
    map.log_sphere_derivative(z).map(SphericalDerivativeValue::from_log)
}

/// The same formula from a finite point, its finite image and `f'(z)`, for maps outside the
/// supported families (Möbius maps, hand-built compositions).
pub fn spherical_derivative_from_parts(z: Complex64, fz: Complex64, fprime: Complex64) -> SphericalDerivativeValue {
    SphericalDerivativeValue::from_log(fprime.norm().ln() + z.norm_sqr().ln_1p() - fz.norm_sqr().ln_1p())
}
