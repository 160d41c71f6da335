//! SISO state-space models `x+ = A x + B u`, `y = C x + D u`.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lyapunov::solve_stein;
use crate::tf::TransferFunction;

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: RowDVector<f64>,
    pub d: f64,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, c: RowDVector<f64>, d: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::ShapeMismatch {
                expected: format!("A {n}x{n}, B {n}x1, C 1x{n}"),
                got: format!("A {:?}, B {}, C {}", a.shape(), b.len(), c.len()),
            });
        }
        Ok(StateSpaceModel { a, b, c, d })
    }

    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    /// `C (zI - A)^-1 B + D`.
    pub fn evaluate(&self, z: Complex64) -> Result<Complex64> {
        let n = self.order();
        if n == 0 {
            return Ok(Complex64::new(self.d, 0.0));
        }
        let m = DMatrix::<Complex64>::from_fn(n, n, |i, j| {
            let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(i, j)]
        });
        let rhs = DVector::<Complex64>::from_fn(n, |i, _| Complex64::new(self.b[i], 0.0));
        let x = m.lu().solve(&rhs).ok_or(Error::EvaluationAtPole { magnitude: 0.0 })?;
        let y = (0..n).fold(Complex64::new(0.0, 0.0), |acc, i| acc + x[i] * self.c[i]);
        Ok(y + self.d)
    }

    /// Cascade `other ∘ self`: the output of `self` drives `other`.
    pub fn then(&self, other: &StateSpaceModel) -> StateSpaceModel {
        let (n1, n2) = (self.order(), other.order());
        let n = n1 + n2;
        let mut a = DMatrix::zeros(n, n);
        a.view_mut((0, 0), (n1, n1)).copy_from(&self.a);
        a.view_mut((n1, n1), (n2, n2)).copy_from(&other.a);
        a.view_mut((n1, 0), (n2, n1)).copy_from(&(&other.b * &self.c));
        let mut b = DVector::zeros(n);
        b.rows_mut(0, n1).copy_from(&self.b);
        b.rows_mut(n1, n2).copy_from(&(&other.b * self.d));
        let mut c = RowDVector::zeros(n);
        c.columns_mut(0, n1).copy_from(&(&self.c * other.d));
        c.columns_mut(n1, n2).copy_from(&other.c);
        StateSpaceModel {
            a,
            b,
            c,
            d: self.d * other.d,
        }
    }

    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.a)
    }

    /// Observability Gramian `Q = A^T Q A + C^T C`.
    pub fn observability_gramian(&self) -> Result<DMatrix<f64>> {
        let ct = self.c.transpose();
        solve_stein(&self.a.transpose(), &(&ct * &self.c))
    }

    /// Squared H2 norm `D^2 + B^T Q B`; requires `rho(A) < 1`.
    pub fn h2_norm_squared(&self) -> Result<f64> {
        if self.order() == 0 {
            return Ok(self.d * self.d);
        }
        let rho = self.spectral_radius();
        if rho >= 1.0 - crate::tf::STABILITY_TOL {
            return Err(Error::UnstableSystem { max_pole_modulus: rho });
        }
        let q = self.observability_gramian()?;
        Ok(self.d * self.d + (self.b.transpose() * q * &self.b)[(0, 0)])
    }
}

/// Controllable canonical realization of a proper transfer function.
///
/// The input is already reduced, so the realization is minimal.
pub fn realize(tf: &TransferFunction) -> Result<StateSpaceModel> {
    if !tf.is_proper() {
        return Err(Error::NotProper {
            num: tf.num().degree(),
            den: tf.den().degree(),
        });
    }
    let den = tf.den();
    let n = den.degree();
    let lead = den.leading();
    let dcoef = tf.num().coeff(n) / lead;
    // Strictly proper remainder r(z) = num(z) - D den(z), degree < n.
    let mut a = DMatrix::zeros(n, n);
    let mut c = RowDVector::zeros(n);
    for j in 0..n {
        let aj = den.coeff(n - 1 - j) / lead;
        a[(0, j)] = -aj;
        c[j] = tf.num().coeff(n - 1 - j) / lead - dcoef * aj;
    }
    for i in 1..n {
        a[(i, i - 1)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    if n > 0 {
        b[0] = 1.0;
    }
    Ok(StateSpaceModel { a, b, c, d: dcoef })
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone()
        .complex_eigenvalues()
        .iter()
        .fold(0.0, |acc: f64, l| acc.max(l.norm()))
}
