//! Dense real polynomials in `z`, stored with descending powers.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative size below which a leading coefficient produced by addition or
/// subtraction is treated as cancelled.
const CANCEL_EPS: f64 = 64.0 * f64::EPSILON;

/// Real polynomial `c[0] z^d + c[1] z^(d-1) + ... + c[d]`.
///
/// The zero polynomial has an empty coefficient vector. A nonzero polynomial
/// never has a zero leading coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Polynomial {
    coeffs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for Polynomial {
    type Error = Error;

    fn try_from(coeffs: Vec<f64>) -> Result<Self> {
        Polynomial::new(coeffs)
    }
}

impl From<Polynomial> for Vec<f64> {
    fn from(p: Polynomial) -> Self {
        p.coeffs
    }
}

impl Polynomial {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if let Some(bad) = coeffs.iter().find(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite polynomial coefficient {bad}")));
        }
        Ok(Self::from_raw(coeffs))
    }

    /// Builds without the finiteness check. Exact leading zeros are dropped.
    pub(crate) fn from_raw(mut coeffs: Vec<f64>) -> Self {
        let lead = coeffs.iter().position(|&c| c != 0.0).unwrap_or(coeffs.len());
        coeffs.drain(..lead);
        Polynomial { coeffs }
    }

    pub fn zero() -> Self {
        Polynomial { coeffs: Vec::new() }
    }

    pub fn constant(c: f64) -> Self {
        Self::from_raw(vec![c])
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// `z - r`.
    pub fn linear(root: f64) -> Self {
        Self::from_raw(vec![1.0, -root])
    }

    /// `z^k`.
    pub fn monomial(k: usize) -> Self {
        let mut c = vec![0.0; k + 1];
        c[0] = 1.0;
        Polynomial { coeffs: c }
    }

    /// Monic real polynomial with the given roots scaled by `gain`.
    ///
    /// Complex roots must appear together with their conjugates; the
    /// imaginary part of the expanded coefficients is discarded.
    pub fn from_roots(roots: &[Complex64], gain: f64) -> Self {
        let mut acc = vec![Complex64::new(1.0, 0.0)];
        for &r in roots {
            let mut next = vec![Complex64::new(0.0, 0.0); acc.len() + 1];
            for (i, &a) in acc.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * r;
            }
            acc = next;
        }
        Self::from_raw(acc.into_iter().map(|c| gain * c.re).collect())
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree; zero for constants and for the zero polynomial.
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn leading(&self) -> f64 {
        self.coeffs.first().copied().unwrap_or(0.0)
    }

    /// Coefficient of `z^k`.
    pub fn coeff(&self, k: usize) -> f64 {
        if self.is_zero() || k > self.degree() {
            0.0
        } else {
            self.coeffs[self.degree() - k]
        }
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Number of trailing zero coefficients (multiplicity of the root at 0).
    pub fn trailing_zeros(&self) -> usize {
        self.coeffs.iter().rev().take_while(|&&c| c == 0.0).count()
    }

    /// Divides by `z^k`; the caller guarantees `k <= trailing_zeros()`.
    pub fn shift_down(&self, k: usize) -> Self {
        debug_assert!(k <= self.trailing_zeros());
        Self::from_raw(self.coeffs[..self.coeffs.len() - k].to_vec())
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.coeffs.iter().fold(0.0, |acc, &c| acc * x + c)
    }

    pub fn eval_complex(&self, z: Complex64) -> Complex64 {
        self.coeffs.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    pub fn derivative(&self) -> Self {
        let d = self.degree();
        Self::from_raw(
            self.coeffs
                .iter()
                .take(d)
                .enumerate()
                .map(|(i, &c)| c * (d - i) as f64)
                .collect(),
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::from_raw(self.coeffs.iter().map(|c| c * k).collect())
    }

    pub fn mul(&self, other: &Polynomial) -> Self {
        if self.is_zero() || other.is_zero() {
            return Self::zero();
        }
        let mut out = vec![0.0; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self::from_raw(out)
    }

    pub fn add(&self, other: &Polynomial) -> Self {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Polynomial) -> Self {
        self.combine(other, -1.0)
    }

    fn combine(&self, other: &Polynomial, sign: f64) -> Self {
        let len = self.coeffs.len().max(other.coeffs.len());
        let mut out = vec![0.0; len];
        let off_a = len - self.coeffs.len();
        let off_b = len - other.coeffs.len();
        for (i, &a) in self.coeffs.iter().enumerate() {
            out[off_a + i] += a;
        }
        for (i, &b) in other.coeffs.iter().enumerate() {
            out[off_b + i] += sign * b;
        }
        let scale = self.max_abs_coeff().max(other.max_abs_coeff());
        let lead = out
            .iter()
            .position(|c| c.abs() > CANCEL_EPS * scale)
            .unwrap_or(out.len());
        out.drain(..lead);
        Polynomial { coeffs: out }
    }

    pub fn pow(&self, k: u32) -> Self {
        (0..k).fold(Self::one(), |acc, _| acc.mul(self))
    }

    /// Polynomial long division, returning `(quotient, remainder)`.
    pub fn div_rem(&self, divisor: &Polynomial) -> Result<(Polynomial, Polynomial)> {
        if divisor.is_zero() {
            return Err(Error::InvalidInput("division by the zero polynomial".into()));
        }
        if self.degree() < divisor.degree() || self.is_zero() {
            return Ok((Self::zero(), self.clone()));
        }
        let dd = divisor.degree();
        let lead = divisor.leading();
        let mut rem = self.coeffs.clone();
        let qlen = rem.len() - dd;
        let mut quot = vec![0.0; qlen];
        for i in 0..qlen {
            let q = rem[i] / lead;
            quot[i] = q;
            for (j, &d) in divisor.coeffs.iter().enumerate() {
                rem[i + j] -= q * d;
            }
        }
        let remainder = Self::from_raw(rem[qlen..].to_vec());
        Ok((Self::from_raw(quot), remainder))
    }

    /// Synthetic division by `z - r`: returns the quotient and `p(r)`.
    pub fn deflate(&self, r: f64) -> (Polynomial, f64) {
        if self.is_zero() {
            return (Self::zero(), 0.0);
        }
        let mut quot = Vec::with_capacity(self.coeffs.len().saturating_sub(1));
        let mut acc = 0.0;
        for &c in &self.coeffs {
            acc = acc * r + c;
            quot.push(acc);
        }
        let rem = quot.pop().unwrap_or(0.0);
        (Self::from_raw(quot), rem)
    }

    /// Coefficients reversed: `z^d p(1/z)`.
    pub fn reversed(&self) -> Self {
        let mut c = self.coeffs.clone();
        c.reverse();
        Self::from_raw(c)
    }

    /// All complex roots, with multiplicity.
    ///
    /// Exact zero roots are split off first; the rest come from the
    /// eigenvalues of the companion matrix, each polished by a few Newton
    /// steps on the original polynomial.
    pub fn roots(&self) -> Vec<Complex64> {
        if self.degree() == 0 {
            return Vec::new();
        }
        let tz = self.trailing_zeros();
        let mut roots = vec![Complex64::new(0.0, 0.0); tz];
        let core = self.shift_down(tz);
        let d = core.degree();
        if d == 0 {
            return roots;
        }
        let lead = core.leading();
        let mut companion = DMatrix::<f64>::zeros(d, d);
        for j in 0..d {
            companion[(0, j)] = -core.coeffs[j + 1] / lead;
        }
        for i in 1..d {
            companion[(i, i - 1)] = 1.0;
        }
        let deriv = core.derivative();
        for mut r in companion.complex_eigenvalues().iter().copied() {
            // Newton polishing, accepted only while the residual shrinks.
            let mut res = core.eval_complex(r).norm();
            for _ in 0..4 {
                let dp = deriv.eval_complex(r);
                if dp.norm() == 0.0 {
                    break;
                }
                let cand = r - core.eval_complex(r) / dp;
                let cres = core.eval_complex(cand).norm();
                if cres < res {
                    r = cand;
                    res = cres;
                } else {
                    break;
                }
            }
            roots.push(r);
        }
        roots
    }
}

/// `|a - b| <= tol * max(1, |a|)`.
pub fn roots_coincide(a: Complex64, b: Complex64, tol: f64) -> bool {
    (a - b).norm() <= tol * a.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn p(c: &[f64]) -> Polynomial {
        Polynomial::new(c.to_vec()).unwrap()
    }

    #[test]
    fn leading_zeros_are_dropped() {
        let q = p(&[0.0, 0.0, 2.0, 1.0]);
        assert_eq!(q.coeffs(), &[2.0, 1.0]);
        assert_eq!(q.degree(), 1);
        assert!(p(&[0.0]).is_zero());
    }

    #[test]
    fn rejects_non_finite() {
        assert!(Polynomial::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn arithmetic() {
        let a = p(&[1.0, -1.0]);
        let b = p(&[1.0, 1.0]);
        assert_eq!(a.mul(&b).coeffs(), &[1.0, 0.0, -1.0]);
        assert_eq!(a.add(&b).coeffs(), &[2.0, 0.0]);
        assert_eq!(a.sub(&a).coeffs(), &[] as &[f64]);
        assert_eq!(a.pow(2).coeffs(), &[1.0, -2.0, 1.0]);
    }

    #[test]
    fn long_division() {
        let num = p(&[1.0, 0.0, -1.0]);
        let (q, r) = num.div_rem(&p(&[1.0, -1.0])).unwrap();
        assert_eq!(q.coeffs(), &[1.0, 1.0]);
        assert!(r.is_zero());
        let (q, rem) = num.deflate(2.0);
        assert_eq!(q.coeffs(), &[1.0, 2.0]);
        assert_abs_diff_eq!(rem, 3.0);
    }

    #[test]
    fn roots_of_quadratic_and_zero_roots() {
        let mut r = p(&[1.0, 0.0, 1.0, 0.0]).roots();
        r.sort_by(|a, b| a.im.partial_cmp(&b.im).unwrap());
        assert_eq!(r.len(), 3);
        assert_abs_diff_eq!(r[0].im, -1.0, epsilon = 1e-12);
        assert_eq!(r[1], Complex64::new(0.0, 0.0));
        assert_abs_diff_eq!(r[2].im, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn from_roots_roundtrip() {
        let roots = [
            Complex64::new(0.3, 0.4),
            Complex64::new(0.3, -0.4),
            Complex64::new(-0.5, 0.0),
        ];
        let q = Polynomial::from_roots(&roots, 2.0);
        for r in roots {
            assert!(q.eval_complex(r).norm() < 1e-14);
        }
        assert_abs_diff_eq!(q.leading(), 2.0);
    }

    #[test]
    fn reversed_and_derivative() {
        let q = p(&[1.0, 2.0, 3.0]);
        assert_eq!(q.reversed().coeffs(), &[3.0, 2.0, 1.0]);
        assert_eq!(q.derivative().coeffs(), &[2.0, 2.0]);
        assert_eq!(q.coeff(0), 3.0);
        assert_eq!(q.coeff(2), 1.0);
    }
}
