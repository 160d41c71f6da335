//! Rational transfer functions in `z` and the loop algebra built on them.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::{roots_coincide, Polynomial};

/// Roots of numerator and denominator closer than this (relative) cancel.
pub const CANCEL_TOL: f64 = 1e-8;
/// A pole is stable iff its modulus is below `1 - STABILITY_TOL`.
pub const STABILITY_TOL: f64 = 1e-9;

/// Ratio `num(z) / den(z)` kept in reduced form with a monic denominator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTf", into = "RawTf")]
pub struct TransferFunction {
    num: Polynomial,
    den: Polynomial,
}

/// Wire format: `{"num": [...], "den": [...]}`, descending powers.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTf {
    pub num: Vec<f64>,
    pub den: Vec<f64>,
}

impl TryFrom<RawTf> for TransferFunction {
    type Error = Error;

    fn try_from(raw: RawTf) -> Result<Self> {
        TransferFunction::new(Polynomial::new(raw.num)?, Polynomial::new(raw.den)?)
    }
}

impl From<TransferFunction> for RawTf {
    fn from(tf: TransferFunction) -> Self {
        RawTf {
            num: tf.num.coeffs().to_vec(),
            den: tf.den.coeffs().to_vec(),
        }
    }
}

impl TransferFunction {
    /// Builds and reduces `num / den`.
    pub fn new(num: Polynomial, den: Polynomial) -> Result<Self> {
        if den.is_zero() {
            return Err(Error::InvalidInput("denominator is identically zero".into()));
        }
        Ok(Self::reduce(num, den))
    }

    pub fn from_coeffs(num: &[f64], den: &[f64]) -> Result<Self> {
        Self::new(Polynomial::new(num.to_vec())?, Polynomial::new(den.to_vec())?)
    }

    pub fn constant(k: f64) -> Self {
        Self::reduce(Polynomial::constant(k), Polynomial::one())
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    /// Pure delay `z^-k`.
    pub fn delay(k: usize) -> Self {
        Self::reduce(Polynomial::one(), Polynomial::monomial(k))
    }

    pub fn num(&self) -> &Polynomial {
        &self.num
    }

    pub fn den(&self) -> &Polynomial {
        &self.den
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() <= self.den.degree()
    }

    pub fn is_strictly_proper(&self) -> bool {
        self.num.is_zero() || self.num.degree() < self.den.degree()
    }

    pub fn poles(&self) -> Vec<Complex64> {
        self.den.roots()
    }

    pub fn zeros(&self) -> Vec<Complex64> {
        if self.num.is_zero() {
            Vec::new()
        } else {
            self.num.roots()
        }
    }

    pub fn max_pole_modulus(&self) -> f64 {
        self.poles().iter().fold(0.0, |m, p| m.max(p.norm()))
    }

    pub fn is_stable(&self) -> bool {
        self.max_pole_modulus() < 1.0 - STABILITY_TOL
    }

    pub(crate) fn require_stable(&self) -> Result<()> {
        let m = self.max_pole_modulus();
        if m < 1.0 - STABILITY_TOL {
            Ok(())
        } else {
            Err(Error::UnstableSystem { max_pole_modulus: m })
        }
    }

    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        let d = self.den.eval_complex(z);
        let scale = self
            .den
            .coeffs()
            .iter()
            .fold(0.0, |acc, c| acc * z.norm().max(1.0) + c.abs());
        if d.norm() < 1e-12 * scale {
            return Err(Error::EvaluationAtPole { magnitude: d.norm() });
        }
        Ok(self.num.eval_complex(z) / d)
    }

    /// Value on the unit circle at angular frequency `omega`.
    pub fn freq_response(&self, omega: f64) -> Result<Complex64> {
        self.evaluate(Complex64::from_polar(1.0, omega))
    }

    pub fn series(&self, other: &TransferFunction) -> TransferFunction {
        Self::reduce(self.num.mul(&other.num), self.den.mul(&other.den))
    }

    pub fn add(&self, other: &TransferFunction) -> TransferFunction {
        let num = self.num.mul(&other.den).add(&other.num.mul(&self.den));
        Self::reduce(num, self.den.mul(&other.den))
    }

    pub fn sub(&self, other: &TransferFunction) -> TransferFunction {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, k: f64) -> TransferFunction {
        Self::reduce(self.num.scale(k), self.den.clone())
    }

    pub fn pow(&self, k: u32) -> TransferFunction {
        (0..k).fold(Self::one(), |acc, _| acc.series(self))
    }

    /// Reciprocal `den / num`.
    pub fn inverse(&self) -> Result<TransferFunction> {
        if self.num.is_zero() {
            return Err(Error::InvalidInput("cannot invert the zero transfer function".into()));
        }
        Ok(Self::reduce(self.den.clone(), self.num.clone()))
    }

    /// Cancels common roots and makes the denominator monic.
    fn reduce(num: Polynomial, den: Polynomial) -> TransferFunction {
        if num.is_zero() {
            return TransferFunction {
                num: Polynomial::zero(),
                den: Polynomial::one(),
            };
        }
        let tz = num.trailing_zeros().min(den.trailing_zeros());
        let (mut num, mut den) = (num.shift_down(tz), den.shift_down(tz));

        if num.degree() > 0 && den.degree() > 0 {
            let nr = num.roots();
            let mut dr = den.roots();
            let mut common = Vec::new();
            for a in nr {
                let hit = dr
                    .iter()
                    .enumerate()
                    .filter(|(_, &b)| roots_coincide(a, b, CANCEL_TOL))
                    .min_by(|x, y| (a - x.1).norm().total_cmp(&(a - y.1).norm()))
                    .map(|(i, _)| i);
                if let Some(i) = hit {
                    common.push((a + dr[i]) * 0.5);
                    dr.swap_remove(i);
                }
            }
            if !common.is_empty() {
                // Matched complex roots come in conjugate pairs; snap them so
                // the factor polynomial is exactly real.
                let factor = Polynomial::from_roots(&symmetrize(common), 1.0);
                if let (Ok((qn, _)), Ok((qd, _))) = (num.div_rem(&factor), den.div_rem(&factor)) {
                    num = qn;
                    den = qd;
                }
            }
        }
        let lead = den.leading();
        TransferFunction {
            num: num.scale(1.0 / lead),
            den: den.scale(1.0 / lead),
        }
    }
}

/// Pairs each complex root with its conjugate and averages the pair.
fn symmetrize(mut roots: Vec<Complex64>) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(roots.len());
    while let Some(r) = roots.pop() {
        if r.im.abs() <= CANCEL_TOL * r.norm().max(1.0) {
            out.push(Complex64::new(r.re, 0.0));
            continue;
        }
        let partner = roots
            .iter()
            .enumerate()
            .min_by(|x, y| (r.conj() - x.1).norm().total_cmp(&(r.conj() - y.1).norm()))
            .map(|(i, _)| i);
        // An unpaired complex root cannot belong to a real factor.
        if let Some(i) = partner {
            let c = roots.swap_remove(i);
            let m = (r + c.conj()) * 0.5;
            out.push(m);
            out.push(m.conj());
        }
    }
    out
}

/// Closed loop `T = K G / (1 + K G H)`.
pub fn close_loop(
    plant: &TransferFunction,
    controller: &TransferFunction,
    feedback: &TransferFunction,
) -> Result<TransferFunction> {
    let open = controller.series(plant);
    let num = open.num.mul(&feedback.den);
    let den = open.den.mul(&feedback.den).add(&open.num.mul(&feedback.num));
    if den.is_zero() {
        return Err(Error::DegenerateLoop);
    }
    Ok(TransferFunction::reduce(num, den))
}

/// Sensitivity `S = 1 - H T`.
pub fn sensitivity(t: &TransferFunction, h: &TransferFunction) -> TransferFunction {
    TransferFunction::one().sub(&h.series(t))
}
