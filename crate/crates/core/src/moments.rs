//! Exact mean and covariance propagation of the stacked platoon error
//! system, and its stationary covariance.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::lyapunov::{solve_stein, symmetrize};
use crate::platoon::{min_symmetric_eigenvalue, ConcatenatedPlatoon, InitialCondition};
use crate::tf::STABILITY_TOL;

/// `(mu_xi, mu_zeta)` per sample.
type MeanSeries = (Vec<DVector<f64>>, Vec<DVector<f64>>);
/// `(P_xi, P_zeta)` per sample.
type CovarianceSeries = (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>);

/// Moments at samples `k = 0..horizon`.
///
/// `p_xi` is empty unless the state covariance was requested; for long
/// horizons and many vehicles it dominates memory.
#[derive(Clone, Debug, Default)]
pub struct MomentTrajectory {
    pub horizon: usize,
    pub mu_xi: Vec<DVector<f64>>,
    pub p_xi: Vec<DMatrix<f64>>,
    pub mu_zeta: Vec<DVector<f64>>,
    pub p_zeta: Vec<DMatrix<f64>>,
}

impl MomentTrajectory {
    /// Variance of `zeta_i` (1-based) at sample `k`.
    pub fn variance(&self, k: usize, i: usize) -> f64 {
        self.p_zeta[k][(i - 1, i - 1)]
    }

    pub fn mean(&self, k: usize, i: usize) -> f64 {
        self.mu_zeta[k][i - 1]
    }

    /// First sample after which `P_zeta` stops changing:
    /// `||P(k+1) - P(k)||_max < 1e-10 max(1, ||P(k)||_max)`.
    pub fn stationary_from(&self) -> Option<usize> {
        self.p_zeta.windows(2).position(|w| {
            let scale = w[0].amax().max(1.0);
            (&w[1] - &w[0]).amax() < 1e-10 * scale
        })
    }
}

#[derive(Clone, Debug)]
pub struct StationaryMoments {
    pub mu_zeta_inf: DVector<f64>,
    pub p_xi_inf: DMatrix<f64>,
    pub p_zeta_inf: DMatrix<f64>,
    pub per_vehicle_variance: Vec<f64>,
}

/// Per-step noise contribution for `k > 0`, where `d(k-1)` and `d(k)` both
/// enter the state.
pub fn build_upsilon(sys: &ConcatenatedPlatoon, p_d: f64) -> DMatrix<f64> {
    let ba = &sys.b_a;
    let bb = &sys.b_b;
    let cross = &sys.a * ba * bb.transpose();
    let mut u = (ba * ba.transpose() + bb * bb.transpose() + &cross + cross.transpose()) * p_d;
    symmetrize(&mut u);
    u
}

/// `mu_xi(k+1) = A mu_xi(k) + B_o zeta_0(k)`; `zeta0` shorter than the
/// horizon is padded with zeros.
pub fn propagate_mean(
    sys: &ConcatenatedPlatoon,
    zeta0: &[f64],
    mu_xi0: &DVector<f64>,
    horizon: usize,
) -> Result<MeanSeries> {
    check_dim(sys, mu_xi0.len())?;
    let mut mu_xi = Vec::with_capacity(horizon);
    let mut mu_zeta = Vec::with_capacity(horizon);
    let mut x = mu_xi0.clone();
    for k in 0..horizon {
        mu_zeta.push(&sys.c * &x);
        let next = sys.apply_a(&x) + &sys.b_o * zeta0.get(k).copied().unwrap_or(0.0);
        mu_xi.push(std::mem::replace(&mut x, next));
    }
    Ok((mu_xi, mu_zeta))
}

/// Covariance recursion with the `k = 0` step using `B_a P_d B_a^T` only
/// (no noise before the start). Returns `(P_xi, P_zeta)`; `P_xi` is empty
/// unless `keep_state`.
pub fn propagate_covariance(
    sys: &ConcatenatedPlatoon,
    p_xi0: &DMatrix<f64>,
    p_d: f64,
    horizon: usize,
    keep_state: bool,
) -> Result<CovarianceSeries> {
    check_dim(sys, p_xi0.nrows())?;
    check_psd(p_xi0)?;
    let first = &sys.b_a * sys.b_a.transpose() * p_d;
    let upsilon = build_upsilon(sys, p_d);
    let at = sys.a.transpose();
    let mut p_xi = Vec::new();
    let mut p_zeta = Vec::with_capacity(horizon);
    let mut p = p_xi0.clone();
    symmetrize(&mut p);
    for k in 0..horizon {
        let mut pz = &sys.c * &p * sys.c.transpose();
        symmetrize(&mut pz);
        p_zeta.push(pz);
        let mut next = &sys.a * &p * &at + if k == 0 { &first } else { &upsilon };
        symmetrize(&mut next);
        if keep_state {
            p_xi.push(std::mem::replace(&mut p, next));
        } else {
            p = next;
        }
    }
    Ok((p_xi, p_zeta))
}

pub fn moment_trajectory(
    sys: &ConcatenatedPlatoon,
    zeta0: &[f64],
    initial: &InitialCondition,
    p_d: f64,
    horizon: usize,
    keep_state: bool,
) -> Result<MomentTrajectory> {
    let (mu_xi, mu_zeta) = propagate_mean(sys, zeta0, &initial.mu_xi0, horizon)?;
    let (p_xi, p_zeta) = propagate_covariance(sys, &initial.p_xi0, p_d, horizon, keep_state)?;
    Ok(MomentTrajectory {
        horizon,
        mu_xi: if keep_state { mu_xi } else { Vec::new() },
        p_xi,
        mu_zeta,
        p_zeta,
    })
}

/// Solves `P = A P A^T + Upsilon` by doubling.
pub fn stationary_covariance(sys: &ConcatenatedPlatoon, p_d: f64) -> Result<StationaryMoments> {
    let rho = sys.spectral_radius();
    if rho >= 1.0 - STABILITY_TOL {
        return Err(Error::NotMss { rho });
    }
    let upsilon = build_upsilon(sys, p_d);
    let p_xi_inf = solve_stein(&sys.a, &upsilon)?;
    let mut p_zeta_inf = &sys.c * &p_xi_inf * sys.c.transpose();
    symmetrize(&mut p_zeta_inf);
    let per_vehicle_variance = p_zeta_inf.diagonal().iter().copied().collect();
    Ok(StationaryMoments {
        mu_zeta_inf: DVector::zeros(sys.followers),
        p_xi_inf,
        p_zeta_inf,
        per_vehicle_variance,
    })
}

fn check_dim(sys: &ConcatenatedPlatoon, got: usize) -> Result<()> {
    if got != sys.dim() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}", sys.dim()),
            got: format!("{got}"),
        });
    }
    Ok(())
}

fn check_psd(p: &DMatrix<f64>) -> Result<()> {
    let trace = p.trace().abs();
    let min_eig = min_symmetric_eigenvalue(p);
    if min_eig < -1e-8 * trace {
        return Err(Error::NotPsd {
            min_eigenvalue: min_eig,
        });
    }
    Ok(())
}
