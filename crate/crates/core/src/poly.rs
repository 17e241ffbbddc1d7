//! Dense complex polynomials (ascending coefficients) and simultaneous root finding.

use num_complex::Complex64;

use crate::error::{Error, Result};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Drops exactly-zero leading coefficients.
pub fn trim(c: &[Complex64]) -> Vec<Complex64> {
    let mut v = c.to_vec();
    while v.len() > 1 && *v.last().unwrap() == ZERO {
        v.pop();
    }
    if v.is_empty() {
        v.push(ZERO);
    }
    v
}

pub fn degree(c: &[Complex64]) -> usize {
    trim(c).len() - 1
}

pub fn eval(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter().rev().fold(ZERO, |acc, &a| acc * z + a)
}

/// Value and first derivative by Horner.
pub fn eval_d(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let mut p = ZERO;
    let mut dp = ZERO;
    for &a in c.iter().rev() {
        dp = dp * z + p;
        p = p * z + a;
    }
    (p, dp)
}

/// `Σ|c_i||z|^i`, the scale against which a polynomial value is judged small.
pub fn magnitude(c: &[Complex64], r: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * r + a.norm())
}

pub fn derivative(c: &[Complex64]) -> Vec<Complex64> {
    if c.len() <= 1 {
        return vec![ZERO];
    }
    c.iter().enumerate().skip(1).map(|(i, a)| a * i as f64).collect()
}

pub fn mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![ZERO; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

pub fn sub(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let n = a.len().max(b.len());
    (0..n)
        .map(|i| a.get(i).copied().unwrap_or(ZERO) - b.get(i).copied().unwrap_or(ZERO))
        .collect()
}

pub fn scale(a: &[Complex64], s: Complex64) -> Vec<Complex64> {
    a.iter().map(|x| x * s).collect()
}

/// Coefficients of `z^n p(1/z)` for a target length `n + 1`.
pub fn reversed(c: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut v = c.to_vec();
    v.resize(n + 1, ZERO);
    v.reverse();
    v
}

/// All roots with multiplicity, by Aberth–Ehrlich iteration followed by Newton polish.
pub fn roots(coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
    let c = trim(coeffs);
    let n = c.len() - 1;
    if n == 0 {
        return Ok(vec![]);
    }
    let lead = c[n];
    if n == 1 {
        return Ok(vec![-c[0] / lead]);
    }
    // leading zero roots are exact
    let zeros = c.iter().take_while(|a| **a == ZERO).count();
    if zeros > 0 {
        let mut r = roots(&c[zeros..])?;
        r.extend(std::iter::repeat(ZERO).take(zeros));
        return Ok(r);
    }
    let monic: Vec<Complex64> = c.iter().map(|a| a / lead).collect();
    let dmonic = derivative(&monic);

    // Start on a circle scaled by the geometric mean of root moduli.
    let radius = (monic[0].norm()).powf(1.0 / n as f64).max(1e-3);
    let mut z: Vec<Complex64> = (0..n)
        .map(|k| Complex64::from_polar(radius, 2.0 * std::f64::consts::PI * k as f64 / n as f64 + 0.4))
        .collect();

    let mut converged = false;
    for _ in 0..1000 {
        let mut max_step: f64 = 0.0;
        for i in 0..n {
            let p = eval(&monic, z[i]);
            if p == ZERO {
                continue;
            }
            let dp = eval(&dmonic, z[i]);
            let ratio = p / dp;
            let mut s = ZERO;
            for j in 0..n {
                if j != i {
                    let d = z[i] - z[j];
                    if d != ZERO {
                        s += d.inv();
                    }
                }
            }
            let w = ratio / (Complex64::new(1.0, 0.0) - ratio * s);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                max_step = max_step.max(w.norm() / (1.0 + z[i].norm()));
            }
        }
        if max_step < 1e-15 {
            converged = true;
            break;
        }
    }
    for zi in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = eval_d(&monic, *zi);
            if dp == ZERO {
                break;
            }
            let step = p / dp;
            let cand = *zi - step;
            if eval(&monic, cand).norm() <= p.norm() {
                *zi = cand;
            } else {
                break;
            }
        }
    }
    if !converged {
        // Accept if residuals are small relative to the polynomial's scale.
        let ok = z.iter().all(|&zi| eval(&monic, zi).norm() <= 1e-8 * magnitude(&monic, zi.norm()));
        if !ok {
            return Err(Error::RootSearchFailed(format!("polynomial of degree {n}")));
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cr(x: f64) -> Complex64 {
        Complex64::new(x, 0.0)
    }

    fn sorted_re(mut v: Vec<Complex64>) -> Vec<f64> {
        v.sort_by(|a, b| a.re.partial_cmp(&b.re).unwrap());
        v.into_iter().map(|z| z.re).collect()
    }

    #[test]
    fn cubic_real_roots() {
        // (z-1)(z-2)(z-3) = z^3 - 6z^2 + 11z - 6
        let r = roots(&[cr(-6.0), cr(11.0), cr(-6.0), cr(1.0)]).unwrap();
        let re = sorted_re(r);
        for (a, b) in re.iter().zip([1.0, 2.0, 3.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn roots_of_unity() {
        let mut c = vec![cr(-1.0)];
        c.extend(vec![cr(0.0); 7]);
        c.push(cr(1.0));
        let r = roots(&c).unwrap();
        assert_eq!(r.len(), 8);
        for z in r {
            assert!((z.norm() - 1.0).abs() < 1e-13);
            assert!((z.powu(8) - 1.0).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_roots_and_double_root() {
        let r = roots(&[cr(0.0), cr(0.0), cr(1.0)]).unwrap();
        assert!(r.iter().all(|z| z.norm() == 0.0));
        // (z-1)^2
        let r = roots(&[cr(1.0), cr(-2.0), cr(1.0)]).unwrap();
        assert!(r.iter().all(|z| (z - 1.0).norm() < 1e-7));
    }

    #[test]
    fn reversed_and_mul() {
        let p = [cr(1.0), cr(2.0)];
        assert_eq!(reversed(&p, 2), vec![cr(0.0), cr(2.0), cr(1.0)]);
        assert_eq!(mul(&p, &p), vec![cr(1.0), cr(4.0), cr(4.0)]);
        let (v, d) = eval_d(&[cr(1.0), cr(0.0), cr(3.0)], cr(2.0));
        assert_eq!((v, d), (cr(13.0), cr(12.0)));
    }
}
