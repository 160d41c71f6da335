//! Discrete Lyapunov (Stein) equation `X = A X A^T + Q` by Smith doubling.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_DOUBLINGS: usize = 64;

/// Solves `X = A X A^T + Q` for `rho(A) < 1`.
///
/// Iterates `X <- X + A_k X A_k^T`, `A_k <- A_k^2`, so after `k` steps `X`
/// holds the first `2^k` terms of `sum_j A^j Q (A^j)^T`. The caller is
/// responsible for checking the spectral radius; divergence is reported
/// as `NoConvergence`.
pub fn solve_stein(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n}x{n}"),
            got: format!("A {:?}, Q {:?}", a.shape(), q.shape()),
        });
    }
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..MAX_DOUBLINGS {
        let inc = &ak * &x * ak.transpose();
        x += &inc;
        ak = &ak * &ak;
        let xs = x.amax();
        if !xs.is_finite() {
            break;
        }
        if inc.amax() <= 1e-17 * xs.max(f64::MIN_POSITIVE) && ak.amax() <= 1e-8 {
            symmetrize(&mut x);
            return Ok(x);
        }
        if ak.amax() == 0.0 {
            symmetrize(&mut x);
            return Ok(x);
        }
    }
    Err(Error::NoConvergence("Smith doubling for the Stein equation".into()))
}

/// Replaces `m` with `(m + m^T) / 2`.
pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}
