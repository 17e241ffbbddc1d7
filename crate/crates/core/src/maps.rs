//! The four map families: evaluation, derivatives, poles, singular values, orbits and inverse branches.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::numerics::ln_one_plus_sq;
use crate::poly;
use crate::sphere::{chordal_distance, SpherePoint};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };
const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Relative threshold for deciding that a point sits on a pole.
pub const POLE_TOL: f64 = 1e-13;
/// Spherical tolerance for recognizing a periodic orbit.
pub const CYCLE_TOL: f64 = 1e-9;
/// Longest period searched by cycle detection.
pub const MAX_PERIOD: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// Ascending coefficients of numerator and denominator.
    Rational { numerator: Vec<Complex64>, denominator: Vec<Complex64> },
    Tangent { lambda: Complex64 },
    Exponential { lambda: Complex64 },
    /// `λ Σ_{n=p²}^{n_max} 2z/(n^{2p} − z²)` plus an analytic tail correction.
    PoleSeries { p: u32, lambda: f64, n_max: u64 },
}

#[derive(Debug, Clone)]
struct RationalData {
    d: usize,
    num: Vec<Complex64>,
    den: Vec<Complex64>,
    dnum: Vec<Complex64>,
    dden: Vec<Complex64>,
    // the same map in the chart ζ = 1/z: f(1/ζ) = num_h(ζ)/den_h(ζ)
    num_h: Vec<Complex64>,
    den_h: Vec<Complex64>,
    dnum_h: Vec<Complex64>,
    dden_h: Vec<Complex64>,
    poles: Vec<Complex64>,
}

#[derive(Debug, Clone)]
struct SeriesData {
    // n^p for n = p²..=n_max
    poles: Vec<f64>,
    first: u64,
}

/// An immutable, validated map instance.
#[derive(Debug, Clone)]
pub struct MapSpec {
    family: Family,
    name: String,
    rational: Option<RationalData>,
    series: Option<SeriesData>,
}

impl PartialEq for MapSpec {
    fn eq(&self, other: &Self) -> bool {
        self.family == other.family && self.name == other.name
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Terminal {
    Alive,
    HitPole(usize),
    Escaped { step: usize, radius: f64 },
    ConvergedToCycle(Vec<SpherePoint>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitRecord {
    pub points: Vec<SpherePoint>,
    pub terminal: Terminal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingularData {
    pub critical_points: Vec<SpherePoint>,
    pub critical_values: Vec<SpherePoint>,
    pub asymptotic_values: Vec<SpherePoint>,
    pub infinity_is_asymptotic: bool,
    /// Declared (not verified) finiteness of the derived set of singular values.
    pub derived_set_finite: bool,
}

impl SingularData {
    pub fn all_values(&self) -> Vec<SpherePoint> {
        let mut v = self.critical_values.clone();
        v.extend(self.asymptotic_values.iter().copied());
        dedupe(v, 1e-9)
    }

    pub fn infinity_is_critical_value(&self) -> bool {
        self.critical_values.iter().any(|p| p.is_infinite())
    }
}

pub(crate) fn dedupe(points: Vec<SpherePoint>, tol: f64) -> Vec<SpherePoint> {
    let mut out: Vec<SpherePoint> = Vec::new();
    for p in points {
        if !out.iter().any(|q| chordal_distance(*q, p) < tol) {
            out.push(p);
        }
    }
    out
}

/// `tan z` that stays accurate for large `|Im z|`.
pub fn tan_robust(z: Complex64) -> Complex64 {
    if z.im.abs() <= 1.0 {
        z.sin() / z.cos()
    } else if z.im > 0.0 {
        let q = (I * z * 2.0).exp();
        I * (ONE - q) / (ONE + q)
    } else {
        let q = (-I * z * 2.0).exp();
        -I * (ONE - q) / (ONE + q)
    }
}

/// `ln(1 + e^{2L})`, i.e. `ln(1+|w|²)` given `L = ln|w|`.
fn ln_one_plus_exp2(l: f64) -> f64 {
    if l > 0.0 {
        2.0 * l + (-2.0 * l).exp().ln_1p()
    } else {
        (2.0 * l).exp().ln_1p()
    }
}

impl MapSpec {
    pub fn new(family: Family, name: Option<String>) -> Result<Self> {
        let name = name.unwrap_or_else(|| default_name(&family));
        let mut spec = MapSpec { family, name, rational: None, series: None };
        match &spec.family {
            Family::Rational { numerator, denominator } => {
                spec.rational = Some(build_rational(numerator, denominator)?);
            }
            Family::Tangent { lambda } | Family::Exponential { lambda } => {
                if *lambda == ZERO || !lambda.re.is_finite() || !lambda.im.is_finite() {
                    return Err(Error::InvalidMap("lambda must be finite and nonzero".into()));
                }
            }
            Family::PoleSeries { p, lambda, n_max } => {
                let (p, lambda, n_max) = (*p, *lambda, *n_max);
                if p < 1 {
                    return Err(Error::InvalidMap("p must be at least 1".into()));
                }
                if !(lambda > 0.0 && lambda.is_finite()) {
                    return Err(Error::InvalidMap("lambda must be positive".into()));
                }
                let first = (p as u64) * (p as u64);
                if n_max < first {
                    return Err(Error::InvalidMap(format!("n_max must be at least p² = {first}")));
                }
                let poles = (first..=n_max).map(|n| (n as f64).powi(p as i32)).collect();
                spec.series = Some(SeriesData { poles, first });
            }
        }
        Ok(spec)
    }

    pub fn rational(numerator: Vec<Complex64>, denominator: Vec<Complex64>) -> Result<Self> {
        Self::new(Family::Rational { numerator, denominator }, None)
    }

    /// Polynomial with real ascending coefficients.
    pub fn polynomial(coeffs: &[f64]) -> Result<Self> {
        Self::rational(coeffs.iter().map(|c| Complex64::new(*c, 0.0)).collect(), vec![ONE])
    }

    /// `z^d`.
    pub fn monomial(d: usize) -> Result<Self> {
        let mut c = vec![0.0; d + 1];
        c[d] = 1.0;
        Self::new(
            Family::Rational { numerator: c.iter().map(|x| Complex64::new(*x, 0.0)).collect(), denominator: vec![ONE] },
            Some(format!("z^{d}")),
        )
    }

    /// `z² + c`.
    pub fn quadratic(c: Complex64) -> Result<Self> {
        Self::new(
            Family::Rational { numerator: vec![c, ZERO, ONE], denominator: vec![ONE] },
            Some(format!("z^2+({c})")),
        )
    }

    pub fn tangent(lambda: f64) -> Result<Self> {
        Self::new(Family::Tangent { lambda: Complex64::new(lambda, 0.0) }, None)
    }

    pub fn exponential(lambda: f64) -> Result<Self> {
        Self::new(Family::Exponential { lambda: Complex64::new(lambda, 0.0) }, None)
    }

    pub fn pole_series(p: u32, lambda: f64, n_max: u64) -> Result<Self> {
        Self::new(Family::PoleSeries { p, lambda, n_max }, None)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config(format!("field `{}`: {}", path, e.into_inner()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("map serializes")
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_rational(&self) -> bool {
        matches!(self.family, Family::Rational { .. })
    }

    pub fn is_transcendental(&self) -> bool {
        !self.is_rational()
    }

    /// Degree for rational maps, `None` for transcendental ones.
    pub fn degree(&self) -> Option<usize> {
        self.rational.as_ref().map(|r| r.d)
    }

    fn rat(&self) -> &RationalData {
        self.rational.as_ref().expect("rational data")
    }

    fn ser(&self) -> &SeriesData {
        self.series.as_ref().expect("series data")
    }

    /// Spacing of the inverse-branch lattice for the periodic families.
    pub fn lattice_step(&self) -> Option<Complex64> {
        match self.family {
            Family::Tangent { .. } => Some(Complex64::new(PI, 0.0)),
            Family::Exponential { .. } => Some(Complex64::new(0.0, 2.0 * PI)),
            _ => None,
        }
    }

    /// Whether a finite point is a pole (relative threshold against the local scale).
    pub fn is_pole(&self, z: Complex64) -> bool {
        match &self.family {
            Family::Rational { .. } => {
                let r = self.rat();
                if z.norm() <= 1.0 {
                    let d = poly::eval(&r.den, z);
                    d.norm() <= POLE_TOL * poly::magnitude(&r.den, z.norm())
                } else {
                    let zeta = z.inv();
                    let d = poly::eval(&r.den_h, zeta);
                    d.norm() <= POLE_TOL * poly::magnitude(&r.den_h, zeta.norm())
                }
            }
            Family::Tangent { .. } => {
                let k = ((z.re - FRAC_PI_2) / PI).round();
                let pole = Complex64::new(FRAC_PI_2 + k * PI, 0.0);
                (z - pole).norm() <= POLE_TOL * pole.norm().max(1.0)
            }
            Family::Exponential { .. } => false,
            Family::PoleSeries { .. } => self.nearest_series_pole(z).1 <= POLE_TOL,
        }
    }

    // (pole, relative distance) of the nearest series pole
    fn nearest_series_pole(&self, z: Complex64) -> (f64, f64) {
        let s = self.ser();
        let Family::PoleSeries { p, .. } = self.family else { unreachable!() };
        let x = z.re.abs();
        let n = x.powf(1.0 / p as f64).round() as i64;
        let lo = s.first as i64;
        let hi = lo + s.poles.len() as i64 - 1;
        let mut best = (f64::NAN, f64::INFINITY);
        for m in [n - 1, n, n + 1] {
            if m < lo || m > hi {
                continue;
            }
            let q = s.poles[(m - lo) as usize].copysign(z.re);
            let rel = (z - q).norm() / q.abs();
            if rel < best.1 {
                best = (q, rel);
            }
        }
        if best.0.is_nan() {
            // z lies left of the first pole
            let q = s.poles[0].copysign(if z.re == 0.0 { 1.0 } else { z.re });
            best = (q, (z - q).norm() / q.abs());
        }
        best
    }

    /// `f(z)`; infinity exactly at poles.
    pub fn eval(&self, z: SpherePoint) -> Result<SpherePoint> {
        match z {
            SpherePoint::Finite(w) => self.eval_finite(w),
            SpherePoint::Infinity => {
                if self.is_transcendental() {
                    return Err(Error::TranscendentalAtInfinity);
                }
                let r = self.rat();
                let n = r.num_h[0];
                let d = r.den_h[0];
                Ok(if d == ZERO { SpherePoint::Infinity } else { SpherePoint::new(n / d) })
            }
        }
    }

    pub fn eval_finite(&self, z: Complex64) -> Result<SpherePoint> {
        match &self.family {
            Family::Rational { .. } => {
                let r = self.rat();
                let (num, den, x) = if z.norm() <= 1.0 { (&r.num, &r.den, z) } else { (&r.num_h, &r.den_h, z.inv()) };
                let d = poly::eval(den, x);
                if d.norm() <= POLE_TOL * poly::magnitude(den, x.norm()) {
                    return Ok(SpherePoint::Infinity);
                }
                Ok(SpherePoint::new(poly::eval(num, x) / d))
            }
            Family::Tangent { lambda } => {
                if self.is_pole(z) {
                    return Ok(SpherePoint::Infinity);
                }
                Ok(SpherePoint::new(lambda * tan_robust(z)))
            }
            Family::Exponential { lambda } => Ok(SpherePoint::new(lambda * z.exp())),
            Family::PoleSeries { .. } => {
                if self.is_pole(z) {
                    return Ok(SpherePoint::Infinity);
                }
                self.series_eval(z).map(|(f, _)| SpherePoint::new(f))
            }
        }
    }

    fn series_eval(&self, z: Complex64) -> Result<(Complex64, Complex64)> {
        let Family::PoleSeries { p, lambda, n_max } = self.family else { unreachable!() };
        let s = self.ser();
        let z2 = z * z;
        let mut f = ZERO;
        let mut df = ZERO;
        for q in s.poles.iter().rev() {
            let a = q * q;
            let den = Complex64::new(a, 0.0) - z2;
            let inv = den.inv();
            f += z * 2.0 * inv;
            df += (Complex64::new(a, 0.0) + z2) * 2.0 * inv * inv;
        }
        let e = 2.0 * p as f64 - 1.0;
        let nm = n_max as f64;
        let tail_coeff = 2.0 * (nm + 0.5).powf(-e) / e;
        f += z * tail_coeff;
        df += Complex64::new(tail_coeff, 0.0);
        let f = f * lambda;
        let df = df * lambda;
        let ratio = z.norm_sqr() / (nm + 1.0).powf(2.0 * p as f64);
        let bound = if ratio < 1.0 {
            2.0 * lambda * z.norm() * nm.powf(-e) / e / (1.0 - ratio)
        } else {
            f64::INFINITY
        };
        if bound > 1e-10 * (1.0 + f.norm()) {
            return Err(Error::TailTooLarge { z, bound });
        }
        Ok((f, df))
    }

    fn series_second_derivative(&self, z: Complex64) -> Complex64 {
        let Family::PoleSeries { lambda, .. } = self.family else { unreachable!() };
        let z2 = z * z;
        let mut d2 = ZERO;
        for q in self.ser().poles.iter().rev() {
            let a = Complex64::new(q * q, 0.0);
            let den = a - z2;
            d2 += z * 4.0 * (a * 3.0 + z2) / (den * den * den);
        }
        d2 * lambda
    }

    /// Euclidean derivative `f'(z)` at a finite non-pole.
    pub fn derivative(&self, z: SpherePoint) -> Result<Complex64> {
        let z = match z {
            SpherePoint::Finite(w) => w,
            SpherePoint::Infinity => return Err(Error::InvalidArgument("derivative needs a finite point".into())),
        };
        if self.is_pole(z) {
            return Err(Error::PoleAt(z));
        }
        Ok(match &self.family {
            Family::Rational { .. } => {
                let r = self.rat();
                let (n, dn) = poly::eval_d(&r.num, z);
                let (d, dd) = poly::eval_d(&r.den, z);
                (dn * d - n * dd) / (d * d)
            }
            Family::Tangent { lambda } => {
                let w = tan_robust(z);
                lambda * (ONE + w * w)
            }
            Family::Exponential { lambda } => lambda * z.exp(),
            Family::PoleSeries { .. } => self.series_eval(z)?.1,
        })
    }

    /// `ln f^×(z)`; `-inf` at critical points and multiple poles.
    pub fn log_sphere_derivative(&self, z: SpherePoint) -> Result<f64> {
        match &self.family {
            Family::Rational { .. } => Ok(self.rational_log_sphere(z)),
            _ => {
                let w = z.finite().ok_or(Error::TranscendentalAtInfinity)?;
                self.transcendental_log_sphere(w)
            }
        }
    }

    fn rational_log_sphere(&self, z: SpherePoint) -> f64 {
        let r = self.rat();
        // f^× = |N'D − ND'|(1+|x|²)/(|N|²+|D|²) in whichever chart keeps |x| ≤ 1
        let (num, den, dnum, dden, x) = match z {
            SpherePoint::Finite(w) if w.norm() <= 1.0 => (&r.num, &r.den, &r.dnum, &r.dden, w),
            SpherePoint::Finite(w) => (&r.num_h, &r.den_h, &r.dnum_h, &r.dden_h, w.inv()),
            SpherePoint::Infinity => (&r.num_h, &r.den_h, &r.dnum_h, &r.dden_h, ZERO),
        };
        let n = poly::eval(num, x);
        let d = poly::eval(den, x);
        let w = poly::eval(dnum, x) * d - n * poly::eval(dden, x);
        let wn = w.norm();
        if wn == 0.0 {
            return f64::NEG_INFINITY;
        }
        wn.ln() + ln_one_plus_sq(x.norm()) - (n.norm_sqr() + d.norm_sqr()).ln()
    }

    fn transcendental_log_sphere(&self, z: Complex64) -> Result<f64> {
        let lz = ln_one_plus_sq(z.norm());
        match &self.family {
            Family::Tangent { lambda } => {
                let la = lambda.norm();
                if self.is_pole(z) {
                    return Ok(lz - la.ln());
                }
                let w = tan_robust(z);
                if w.norm() > 1e8 {
                    let u = w.inv();
                    Ok(la.ln() + (ONE + u * u).norm().ln() - (u.norm_sqr() + la * la).ln() + lz)
                } else {
                    Ok(la.ln() + (ONE + w * w).norm().ln() + lz - ln_one_plus_sq(la * w.norm()))
                }
            }
            Family::Exponential { lambda } => {
                let lf = lambda.norm().ln() + z.re;
                Ok(lf + lz - ln_one_plus_exp2(lf))
            }
            Family::PoleSeries { lambda, .. } => {
                let (q, rel) = self.nearest_series_pole(z);
                if rel <= POLE_TOL {
                    return Ok(ln_one_plus_sq(q) - lambda.ln());
                }
                let (f, df) = self.series_eval(z)?;
                if df == ZERO {
                    return Ok(f64::NEG_INFINITY);
                }
                Ok(df.norm().ln() + lz - ln_one_plus_sq(f.norm()))
            }
            Family::Rational { .. } => unreachable!(),
        }
    }

    /// `(f(z), ln f^×(z))` in one call.
    pub fn step(&self, z: SpherePoint) -> Result<(SpherePoint, f64)> {
        let fz = self.eval(z)?;
        let ld = self.log_sphere_derivative(z)?;
        Ok((fz, ld))
    }

    /// All poles with `|z| ≤ radius`.
    pub fn poles_in_disk(&self, radius: f64) -> Vec<SpherePoint> {
        match &self.family {
            Family::Rational { .. } => self
                .rat()
                .poles
                .iter()
                .filter(|p| p.norm() <= radius)
                .map(|p| SpherePoint::Finite(*p))
                .collect(),
            Family::Tangent { .. } => {
                let kmax = ((radius - FRAC_PI_2) / PI).floor();
                if kmax < 0.0 {
                    return vec![];
                }
                let mut out = Vec::new();
                for k in 0..=(kmax as i64) {
                    let x = FRAC_PI_2 + k as f64 * PI;
                    out.push(SpherePoint::real(x));
                    out.push(SpherePoint::real(-x));
                }
                out
            }
            Family::Exponential { .. } => vec![],
            Family::PoleSeries { .. } => {
                let mut out = Vec::new();
                for q in self.ser().poles.iter().filter(|q| **q <= radius) {
                    out.push(SpherePoint::real(*q));
                    out.push(SpherePoint::real(-q));
                }
                out
            }
        }
    }

    /// Values the map never takes (inverse branches are undefined there).
    pub fn omitted_values(&self) -> Vec<SpherePoint> {
        match &self.family {
            Family::Tangent { lambda } => vec![SpherePoint::Finite(I * lambda), SpherePoint::Finite(-I * lambda)],
            Family::Exponential { .. } => vec![SpherePoint::Finite(ZERO), SpherePoint::Infinity],
            _ => vec![],
        }
    }

    /// Critical points (with ∞ for rational maps when it is critical).
    pub fn critical_points(&self) -> Result<Vec<SpherePoint>> {
        match &self.family {
            Family::Rational { .. } => {
                let r = self.rat();
                let w = poly::trim(&poly::sub(&poly::mul(&r.dnum, &r.den), &poly::mul(&r.num, &r.dden)));
                let mut pts: Vec<SpherePoint> = poly::roots(&w)?.into_iter().map(SpherePoint::Finite).collect();
                if poly::degree(&w) + 2 < 2 * r.d {
                    pts.push(SpherePoint::Infinity);
                }
                Ok(pts)
            }
            Family::Tangent { .. } | Family::Exponential { .. } => Ok(vec![]),
            Family::PoleSeries { .. } => self.series_critical_points(),
        }
    }

    fn series_critical_points(&self) -> Result<Vec<SpherePoint>> {
        let s = self.ser();
        let gaps = (s.poles.len() - 1).min(8);
        let mut seeds = Vec::new();
        let q0 = s.poles[0];
        seeds.push((Complex64::new(0.0, q0), (-q0, q0)));
        seeds.push((Complex64::new(0.0, -q0), (-q0, q0)));
        for j in 0..gaps {
            let (a, b) = (s.poles[j], s.poles[j + 1]);
            let m = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for sx in [1.0, -1.0] {
                for sy in [1.0, -1.0] {
                    seeds.push((Complex64::new(sx * m, sy * h), (sx * a, sx * b)));
                }
            }
        }
        let mut out = Vec::new();
        for (seed, interval) in seeds {
            let z = self.damped_newton_critical(seed).ok_or_else(|| {
                Error::RootSearchFailed(format!("gap ({:.6e}, {:.6e})", interval.0.min(interval.1), interval.0.max(interval.1)))
            })?;
            out.push(SpherePoint::Finite(z));
        }
        Ok(dedupe(out, 1e-9))
    }

    fn damped_newton_critical(&self, seed: Complex64) -> Option<Complex64> {
        let mut z = seed;
        let mut g = self.series_eval(z).ok()?.1;
        for _ in 0..200 {
            let h = self.series_second_derivative(z);
            if h == ZERO {
                return None;
            }
            let step = g / h;
            let mut damp = 1.0;
            let mut accepted = false;
            for _ in 0..40 {
                let cand = z - step * damp;
                if let Ok((_, gc)) = self.series_eval(cand) {
                    if gc.norm() < g.norm() {
                        z = cand;
                        g = gc;
                        accepted = true;
                        break;
                    }
                }
                damp *= 0.5;
            }
            if (step * damp).norm() <= 1e-13 * (1.0 + z.norm()) || g == ZERO {
                return Some(z);
            }
            if !accepted {
                // accept a stalled point only if it is already a root to working precision
                return if g.norm() <= 1e-10 * self.series_eval(z).ok()?.0.norm().max(1.0) { Some(z) } else { None };
            }
        }
        None
    }

    pub fn singular_values(&self) -> Result<SingularData> {
        match &self.family {
            Family::Rational { .. } => {
                let cps = self.critical_points()?;
                let cvs = cps.iter().map(|c| self.eval(*c)).collect::<Result<Vec<_>>>()?;
                Ok(SingularData {
                    critical_points: dedupe(cps, 1e-9),
                    critical_values: dedupe(cvs, 1e-9),
                    asymptotic_values: vec![],
                    infinity_is_asymptotic: false,
                    derived_set_finite: true,
                })
            }
            Family::Tangent { lambda } => Ok(SingularData {
                critical_points: vec![],
                critical_values: vec![],
                asymptotic_values: vec![SpherePoint::Finite(I * lambda), SpherePoint::Finite(-I * lambda)],
                infinity_is_asymptotic: false,
                derived_set_finite: true,
            }),
            Family::Exponential { .. } => Ok(SingularData {
                critical_points: vec![],
                critical_values: vec![],
                asymptotic_values: vec![SpherePoint::Finite(ZERO)],
                infinity_is_asymptotic: true,
                derived_set_finite: true,
            }),
            Family::PoleSeries { .. } => {
                let cps = self.series_critical_points()?;
                let cvs = cps.iter().map(|c| self.eval(*c)).collect::<Result<Vec<_>>>()?;
                Ok(SingularData {
                    critical_points: cps,
                    critical_values: dedupe(cvs, 1e-9),
                    asymptotic_values: vec![SpherePoint::Finite(ZERO)],
                    infinity_is_asymptotic: false,
                    derived_set_finite: true,
                })
            }
        }
    }

    /// Forward orbit with pole, escape and cycle termination.
    ///
    /// Rational maps never report `HitPole`: a pole maps to ∞, which is an ordinary point
    /// and counts as an escape only when `escape_radius` is finite.
    pub fn orbit(&self, z0: SpherePoint, max_steps: usize, escape_radius: f64) -> OrbitRecord {
        let mut points = vec![z0];
        let transcendental = self.is_transcendental();
        let escaped = |p: &SpherePoint| match p {
            SpherePoint::Infinity => escape_radius.is_finite(),
            SpherePoint::Finite(w) => w.norm() > escape_radius,
        };
        if escaped(&z0) {
            return OrbitRecord { points, terminal: Terminal::Escaped { step: 0, radius: escape_radius } };
        }
        for i in 1..=max_steps {
            let cur = points[i - 1];
            if transcendental {
                match cur {
                    SpherePoint::Finite(w) if self.is_pole(w) => {
                        return OrbitRecord { points, terminal: Terminal::HitPole(i - 1) };
                    }
                    SpherePoint::Infinity => {
                        return OrbitRecord { points, terminal: Terminal::Escaped { step: i - 1, radius: escape_radius } };
                    }
                    _ => {}
                }
            }
            let next = match self.eval(cur) {
                Ok(p) => p,
                Err(_) => {
                    return OrbitRecord { points, terminal: Terminal::Escaped { step: i - 1, radius: escape_radius } };
                }
            };
            points.push(next);
            if escaped(&next) || (transcendental && next.is_infinite()) {
                return OrbitRecord { points, terminal: Terminal::Escaped { step: i, radius: escape_radius } };
            }
            if let Some(p) = detect_cycle(&points) {
                let cycle = points[i + 1 - p..=i].to_vec();
                return OrbitRecord { points, terminal: Terminal::ConvergedToCycle(cycle) };
            }
        }
        OrbitRecord { points, terminal: Terminal::Alive }
    }

    /// The labelled inverse branch `k` at `a` for the transcendental families, with `ln f^×` there.
    ///
    /// Tangent: `arctan(a/λ) + kπ`; Exponential: `ln(a/λ) + 2πik`; PoleSeries: the solution
    /// in pole gap `k` (0 is the central gap, negative indices mirror positive ones).
    pub fn branch_preimage(&self, a: SpherePoint, k: i64) -> Result<(Complex64, f64)> {
        match &self.family {
            Family::Tangent { lambda } => {
                let z = match a {
                    SpherePoint::Infinity => Complex64::new(FRAC_PI_2 + k as f64 * PI, 0.0),
                    SpherePoint::Finite(w) => {
                        let u = w / lambda;
                        if (u - I).norm() < 1e-12 || (u + I).norm() < 1e-12 {
                            return Err(Error::OmittedValue(a));
                        }
                        u.atan() + k as f64 * PI
                    }
                };
                let ld = match a {
                    SpherePoint::Infinity => ln_one_plus_sq(z.norm()) - lambda.norm().ln(),
                    SpherePoint::Finite(w) => {
                        (lambda + w * w / lambda).norm().ln() + ln_one_plus_sq(z.norm()) - ln_one_plus_sq(w.norm())
                    }
                };
                Ok((z, ld))
            }
            Family::Exponential { lambda } => {
                let w = match a {
                    SpherePoint::Finite(w) if w != ZERO => w,
                    _ => return Err(Error::OmittedValue(a)),
                };
                let z = (w / lambda).ln() + Complex64::new(0.0, 2.0 * PI * k as f64);
                let ld = w.norm().ln() + ln_one_plus_sq(z.norm()) - ln_one_plus_sq(w.norm());
                Ok((z, ld))
            }
            Family::PoleSeries { .. } => {
                let z = self.series_branch(a, k)?;
                let ld = self.log_sphere_derivative(SpherePoint::Finite(z))?;
                Ok((z, ld))
            }
            Family::Rational { .. } => Err(Error::InvalidArgument("rational maps have unlabelled branches".into())),
        }
    }

    /// Number of labelled branches on each side of 0 (unbounded for the periodic families).
    pub fn branch_limit(&self) -> Option<i64> {
        match self.family {
            Family::PoleSeries { .. } => Some(self.ser().poles.len() as i64 - 1),
            Family::Rational { .. } => Some(0),
            _ => None,
        }
    }

    fn series_branch(&self, a: SpherePoint, k: i64) -> Result<Complex64> {
        let s = self.ser();
        let kk = k.unsigned_abs() as usize;
        if let SpherePoint::Infinity = a {
            let q = if k >= 0 { s.poles.get(kk) } else { s.poles.get(kk - 1) };
            return q.map(|q| Complex64::new(if k >= 0 { *q } else { -q }, 0.0)).ok_or(Error::RootPolishFailed(k));
        }
        if kk >= s.poles.len() {
            return Err(Error::RootPolishFailed(k));
        }
        // gap (lo, hi) on the positive side; the central gap is (-q0, q0)
        let (lo, hi) = if kk == 0 { (-s.poles[0], s.poles[0]) } else { (s.poles[kk - 1], s.poles[kk]) };
        let sign = if k < 0 { -1.0 } else { 1.0 };
        let target = a.finite().expect("finite target") * sign;
        // f is odd and increases from −∞ to ∞ across each real gap; solve on the positive side
        let f_re = |x: f64| -> Result<f64> { Ok(self.series_eval(Complex64::new(x, 0.0))?.0.re) };
        let width = hi - lo;
        let (mut a_lo, mut a_hi) = (lo + 1e-12 * width.max(1.0), hi - 1e-12 * width.max(1.0));
        for _ in 0..200 {
            let mid = 0.5 * (a_lo + a_hi);
            if f_re(mid)? < target.re {
                a_lo = mid;
            } else {
                a_hi = mid;
            }
            if a_hi - a_lo < 1e-14 * (1.0 + mid.abs()) {
                break;
            }
        }
        let mut z = Complex64::new(0.5 * (a_lo + a_hi), 0.0);
        for _ in 0..100 {
            let (f, df) = self.series_eval(z)?;
            let r = f - target;
            if r.norm() <= 1e-13 * (1.0 + target.norm()) {
                return Ok(z * sign);
            }
            let step = r / df;
            let mut damp = 1.0;
            let mut moved = false;
            for _ in 0..40 {
                let cand = z - step * damp;
                if let Ok((fc, _)) = self.series_eval(cand) {
                    if (fc - target).norm() < r.norm() {
                        z = cand;
                        moved = true;
                        break;
                    }
                }
                damp *= 0.5;
            }
            if !moved {
                break;
            }
        }
        let (f, _) = self.series_eval(z)?;
        if (f - target).norm() <= 1e-9 * (1.0 + target.norm()) {
            Ok(z * sign)
        } else {
            Err(Error::RootPolishFailed(k))
        }
    }

    /// All `d` preimages of `a` for a rational map (∞ included with its multiplicity).
    pub fn rational_preimages(&self, a: SpherePoint) -> Result<Vec<SpherePoint>> {
        let r = self.rat();
        // N − aD = 0, written in the better-conditioned form when |a| > 1
        let p = match a {
            SpherePoint::Finite(w) if w.norm() <= 1.0 => poly::sub(&r.num, &poly::scale(&r.den, w)),
            SpherePoint::Finite(w) => poly::sub(&r.den, &poly::scale(&r.num, w.inv())),
            SpherePoint::Infinity => r.den.clone(),
        };
        let mut p = p;
        p.resize(r.d + 1, ZERO);
        let scale = p.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let mut deg = r.d;
        while deg > 0 && p[deg].norm() <= 1e-14 * scale {
            deg -= 1;
        }
        let mut out: Vec<SpherePoint> = poly::roots(&p[..=deg])?.into_iter().map(SpherePoint::new).collect();
        out.extend(std::iter::repeat(SpherePoint::Infinity).take(r.d - deg));
        Ok(out)
    }

    /// Finite fixed points of a rational map: roots of `N − zD`.
    pub fn rational_fixed_points(&self) -> Result<Vec<Complex64>> {
        let r = self.rat();
        let zd = poly::mul(&r.den, &[ZERO, ONE]);
        poly::roots(&poly::sub(&r.num, &zd))
    }
}

/// Smallest period `p ≤ MAX_PERIOD` with the last point (and the one before) returning within tolerance.
pub(crate) fn detect_cycle(points: &[SpherePoint]) -> Option<usize> {
    let i = points.len() - 1;
    for p in 1..=MAX_PERIOD.min(i) {
        if chordal_distance(points[i], points[i - p]) < CYCLE_TOL
            && (i < p + 1 || chordal_distance(points[i - 1], points[i - 1 - p]) < CYCLE_TOL)
        {
            return Some(p);
        }
    }
    None
}

fn build_rational(numerator: &[Complex64], denominator: &[Complex64]) -> Result<RationalData> {
    if numerator.iter().chain(denominator).any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::InvalidMap("coefficients must be finite".into()));
    }
    let num = poly::trim(numerator);
    let den = poly::trim(denominator);
    if den.len() == 1 && den[0] == ZERO {
        return Err(Error::InvalidMap("denominator is zero".into()));
    }
    let dn = poly::degree(&num);
    let dd = poly::degree(&den);
    let d = dn.max(dd);
    if d < 2 {
        return Err(Error::InvalidMap(format!("degree {d} < 2")));
    }
    let poles = poly::roots(&den)?;
    // |Res(N, D)| = |lead(D)^{deg N} Π N(poles)|
    if dd > 0 {
        let mut log_res = dn as f64 * den[dd].norm().ln();
        for p in &poles {
            log_res += poly::eval(&num, *p).norm().ln();
        }
        if !(log_res > 1e-9f64.ln()) {
            return Err(Error::InvalidMap("numerator and denominator share a root".into()));
        }
    } else if num.len() == 1 && num[0] == ZERO {
        return Err(Error::InvalidMap("numerator is zero".into()));
    }
    let num_h = poly::reversed(&num, d);
    let den_h = poly::reversed(&den, d);
    Ok(RationalData {
        d,
        dnum: poly::derivative(&num),
        dden: poly::derivative(&den),
        dnum_h: poly::derivative(&num_h),
        dden_h: poly::derivative(&den_h),
        num,
        den,
        num_h,
        den_h,
        poles,
    })
}

fn fmt_c(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{}", c)
    }
}

fn default_name(f: &Family) -> String {
    match f {
        Family::Rational { numerator, denominator } => format!(
            "rational[{}]/[{}]",
            numerator.iter().map(|c| fmt_c(*c)).collect::<Vec<_>>().join(","),
            denominator.iter().map(|c| fmt_c(*c)).collect::<Vec<_>>().join(",")
        ),
        Family::Tangent { lambda } => format!("tangent({})", fmt_c(*lambda)),
        Family::Exponential { lambda } => format!("exponential({})", fmt_c(*lambda)),
        Family::PoleSeries { p, lambda, n_max } => format!("pole_series(p={p}, lambda={lambda}, n_max={n_max})"),
    }
}

// ---- JSON representation ----

#[derive(Debug, Clone, Copy)]
struct Cx(Complex64);

impl Serialize for Cx {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.0.re, self.0.im].serialize(s)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum CxRepr {
    Pair([f64; 2]),
    Real(f64),
    Object { re: f64, #[serde(default)] im: f64 },
}

impl<'de> Deserialize<'de> for Cx {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Ok(Cx(match CxRepr::deserialize(d)? {
            CxRepr::Pair([re, im]) => Complex64::new(re, im),
            CxRepr::Real(re) => Complex64::new(re, 0.0),
            CxRepr::Object { re, im } => Complex64::new(re, im),
        }))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
enum MapRepr {
    Rational {
        numerator: Vec<Cx>,
        denominator: Vec<Cx>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Tangent {
        lambda: Cx,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    Exponential {
        lambda: Cx,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
    PoleSeries {
        p: u32,
        lambda: f64,
        n_max: u64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
    },
}

impl Serialize for MapSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let name = Some(self.name.clone());
        let repr = match &self.family {
            Family::Rational { numerator, denominator } => MapRepr::Rational {
                numerator: numerator.iter().map(|c| Cx(*c)).collect(),
                denominator: denominator.iter().map(|c| Cx(*c)).collect(),
                name,
            },
            Family::Tangent { lambda } => MapRepr::Tangent { lambda: Cx(*lambda), name },
            Family::Exponential { lambda } => MapRepr::Exponential { lambda: Cx(*lambda), name },
            Family::PoleSeries { p, lambda, n_max } => MapRepr::PoleSeries { p: *p, lambda: *lambda, n_max: *n_max, name },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for MapSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (family, name) = match MapRepr::deserialize(d)? {
            MapRepr::Rational { numerator, denominator, name } => (
                Family::Rational {
                    numerator: numerator.into_iter().map(|c| c.0).collect(),
                    denominator: denominator.into_iter().map(|c| c.0).collect(),
                },
                name,
            ),
            MapRepr::Tangent { lambda, name } => (Family::Tangent { lambda: lambda.0 }, name),
            MapRepr::Exponential { lambda, name } => (Family::Exponential { lambda: lambda.0 }, name),
            MapRepr::PoleSeries { p, lambda, n_max, name } => (Family::PoleSeries { p, lambda, n_max }, name),
        };
        MapSpec::new(family, name).map_err(serde::de::Error::custom)
    }
}
