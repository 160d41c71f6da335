//! String-stability verdicts, norm checks on moment trajectories, and the
//! explicit comparison-function bounds on those norms.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::FrequencyGrid;
use crate::lyapunov::solve_stein;
use crate::moments::MomentTrajectory;
use crate::platoon::{ConcatenatedPlatoon, PlatoonSpec};
use crate::spectral::{gain_scan, limiting_variance, spectral_factorize, SpectralFactor};
use crate::ss::spectral_radius;
use crate::tf::STABILITY_TOL;

/// Relative size of the extrapolated L2 tail accepted by
/// [`check_definition1`].
pub const HORIZON_TAIL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub rho_a: f64,
    pub mss: bool,
    pub gain_condition: bool,
    pub hinf_leq_one: bool,
    pub string_stable: bool,
    /// Zero when string stable.
    pub limiting_mean: Option<f64>,
    pub limiting_variance: Option<f64>,
    /// Frequency maximizing `|T|` over the positive grid.
    pub worst_frequency: f64,
    pub max_gain: f64,
    /// `1 - max |T|` over the positive grid.
    pub margin: f64,
    /// `min (1 - |T|^2) / |1 - e^{jw}|^2` over the positive grid; the
    /// gain condition holds when it is positive.
    pub scaled_margin: f64,
}

pub fn certify(spec: &PlatoonSpec, grid: &FrequencyGrid) -> Result<Verdict> {
    let vl = spec.vehicle_loop();
    let rho_a = vl.t_ss.spectral_radius();
    let mss = rho_a < 1.0 - STABILITY_TOL;
    let scan = gain_scan(&vl.t, grid)?;
    let gain_condition = scan.gain_condition();
    let hinf_leq_one = scan.hinf <= 1.0 + STABILITY_TOL;
    let string_stable = mss && gain_condition;
    let (limiting_mean, limiting_variance) = if string_stable {
        let factor = spectral_factorize(&vl.t)?;
        (Some(0.0), Some(limiting_variance(&vl.s, &factor, spec.noise_variance)?))
    } else {
        (None, None)
    };
    Ok(Verdict {
        rho_a,
        mss,
        gain_condition,
        hinf_leq_one,
        string_stable,
        limiting_mean,
        limiting_variance,
        worst_frequency: scan.peak.omega,
        max_gain: scan.peak.value,
        margin: 1.0 - scan.peak.value,
        scaled_margin: scan.scaled_margin,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeanBound {
    pub alpha1: f64,
    pub beta1: f64,
}

impl MeanBound {
    pub fn total(&self) -> f64 {
        self.alpha1 + self.beta1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VarianceBound {
    pub alpha2: f64,
    pub beta2: f64,
}

impl VarianceBound {
    pub fn total(&self) -> f64 {
        self.alpha2 + self.beta2
    }
}

/// `alpha1 = ||T||_inf ||zeta_0||_L2`,
/// `beta1 = ||mu_xi(0)|| max_i sqrt(rho(W_i))` with `W_i` the observability
/// Gramian of `(A, e_i^T C)`.
pub fn mean_bound(
    spec: &PlatoonSpec,
    sys: &ConcatenatedPlatoon,
    zeta0: &[f64],
    grid: &FrequencyGrid,
) -> Result<MeanBound> {
    let rho = sys.spectral_radius();
    if rho >= 1.0 - STABILITY_TOL {
        return Err(Error::NotMss { rho });
    }
    let hinf = gain_scan(&spec.vehicle_loop().t, grid)?.hinf;
    let zeta0_l2 = zeta0.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mu_norm = spec.initial_condition().mu_xi0.norm();
    let beta1 = if mu_norm == 0.0 {
        0.0
    } else {
        mu_norm * max_output_gramian_radius(sys)?.sqrt()
    };
    Ok(MeanBound {
        alpha1: hinf * zeta0_l2,
        beta1,
    })
}

/// `max_i rho(W_i)`, `W_i = A^T W_i A + C^T e_i e_i^T C`.
pub fn max_output_gramian_radius(sys: &ConcatenatedPlatoon) -> Result<f64> {
    let at = sys.a.transpose();
    let mut best: f64 = 0.0;
    for i in 1..=sys.followers {
        let row = sys.output_row(i);
        let q = row.transpose() * &row;
        let w = solve_stein(&at, &q)?;
        best = best.max(spectral_radius(&w));
    }
    Ok(best)
}

/// `alpha2 = sigma_max(P_xi(0)) ||C||_2`, `beta2 = (||S/M||^2 - 1) P_d`.
pub fn variance_bound(spec: &PlatoonSpec, sys: &ConcatenatedPlatoon, factor: &SpectralFactor) -> Result<VarianceBound> {
    let p0 = spec.initial_condition().p_xi0;
    let sigma = max_singular_value(&p0);
    let c_norm = max_singular_value(&sys.c);
    let beta2 = limiting_variance(&spec.vehicle_loop().s, factor, spec.noise_variance)?;
    Ok(VarianceBound {
        alpha2: sigma * c_norm,
        beta2,
    })
}

fn max_singular_value(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormReport {
    /// `||mu_zeta_i||_L2` including the extrapolated tail.
    pub mean_l2: Vec<f64>,
    /// `max_k P_zeta_i(k)`.
    pub variance_linf: Vec<f64>,
    /// `max_k |mu_zeta_i(k)|`; informational only.
    pub mean_linf: Vec<f64>,
    pub bound_mean: Option<f64>,
    pub bound_variance: Option<f64>,
    /// Per vehicle, both norms below their bounds. Empty without bounds.
    pub satisfied: Vec<bool>,
}

impl NormReport {
    pub fn all_satisfied(&self) -> bool {
        !self.satisfied.is_empty() && self.satisfied.iter().all(|s| *s)
    }

    /// Both norm sequences strictly increase with the vehicle index.
    pub fn increasing_in_i(&self) -> bool {
        let inc = |v: &[f64]| v.windows(2).all(|w| w[1] > w[0]);
        inc(&self.mean_l2) && inc(&self.variance_linf)
    }
}

/// Per-vehicle `L2` mean and `L_inf` variance norms of a trajectory,
/// compared against `bounds` when given.
///
/// The mean tail beyond the horizon is extrapolated geometrically with
/// ratio `rho`; the horizon is rejected if that tail exceeds
/// [`HORIZON_TAIL_TOL`] of the norm.
pub fn check_definition1(
    traj: &MomentTrajectory,
    rho: f64,
    bounds: Option<(MeanBound, VarianceBound)>,
) -> Result<NormReport> {
    let n = traj.mu_zeta.first().map_or(0, |m| m.len());
    let horizon = traj.mu_zeta.len();
    let mut mean_l2 = vec![0.0; n];
    let mut mean_linf = vec![0.0f64; n];
    let mut variance_linf = vec![0.0f64; n];
    for (mu, p) in traj.mu_zeta.iter().zip(&traj.p_zeta) {
        for i in 0..n {
            mean_l2[i] += mu[i] * mu[i];
            mean_linf[i] = mean_linf[i].max(mu[i].abs());
            variance_linf[i] = variance_linf[i].max(p[(i, i)]);
        }
    }
    if horizon > 0 && rho < 1.0 {
        let last: &DVector<f64> = &traj.mu_zeta[horizon - 1];
        let ratio = rho * rho / (1.0 - rho * rho);
        for i in 0..n {
            let tail = last[i] * last[i] * ratio;
            if tail > (HORIZON_TAIL_TOL * HORIZON_TAIL_TOL) * mean_l2[i] && tail > 0.0 {
                return Err(Error::HorizonTooShort { tail: tail.sqrt() });
            }
            mean_l2[i] += tail;
        }
    }
    let mean_l2: Vec<f64> = mean_l2.into_iter().map(f64::sqrt).collect();
    let satisfied = match bounds {
        Some((mb, vb)) => (0..n)
            .map(|i| mean_l2[i] <= mb.total() && variance_linf[i] <= vb.total())
            .collect(),
        None => Vec::new(),
    };
    Ok(NormReport {
        mean_l2,
        variance_linf,
        mean_linf,
        bound_mean: bounds.map(|b| b.0.total()),
        bound_variance: bounds.map(|b| b.1.total()),
        satisfied,
    })
}

/// Double limits of the mean and variance: `(0, (||S/M||^2 - 1) P_d)`.
pub fn check_definition2(spec: &PlatoonSpec, grid: &FrequencyGrid) -> Result<(f64, f64)> {
    let verdict = certify(spec, grid)?;
    match verdict.limiting_variance {
        Some(v) if verdict.string_stable => Ok((0.0, v)),
        _ => Err(Error::NotStringStable {
            max_gain: verdict.max_gain,
            omega: verdict.worst_frequency,
        }),
    }
}
