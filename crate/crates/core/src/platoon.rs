//! Vehicle loop and concatenated platoon model.
//!
//! Each follower runs the closed loop `y_i = T (y_{i-1} + d_i)` under the
//! constant time-headway policy `H(z) = (1+h) - h/z`. Stacking the
//! headway-weighted state differences
//! `xi_i(k) = x_{i-1}(k) - x_i(k) - h (x_i(k) - x_i(k-1))` gives a
//! block lower-bidiagonal linear system driven by the leader error
//! `zeta_0` and the channel noises `d(k)`, `d(k-1)`.

use nalgebra::{DMatrix, DVector, RowDVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::poly::roots_coincide;
use crate::ss::{realize, spectral_radius, StateSpaceModel};
use crate::tf::{close_loop, sensitivity, TransferFunction};

/// Tolerance used when counting the poles of `K G` at `z = 1`.
pub const INTEGRATOR_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    #[default]
    Gaussian,
    Uniform,
    Rademacher,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpeedChange {
    /// Sample at which the new speed takes effect.
    pub at: usize,
    pub speed: f64,
}

/// Motion of the virtual reference the leader tracks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeaderProfile {
    ConstantSpeed { speed: f64 },
    PiecewiseSpeed { base_speed: f64, changes: Vec<SpeedChange> },
}

impl Default for LeaderProfile {
    fn default() -> Self {
        LeaderProfile::ConstantSpeed { speed: 1.0 }
    }
}

impl LeaderProfile {
    pub fn base_speed(&self) -> f64 {
        match self {
            LeaderProfile::ConstantSpeed { speed } => *speed,
            LeaderProfile::PiecewiseSpeed { base_speed, .. } => *base_speed,
        }
    }

    /// Reference speed in effect during sample `k`.
    pub fn speed_at(&self, k: usize) -> f64 {
        match self {
            LeaderProfile::ConstantSpeed { speed } => *speed,
            LeaderProfile::PiecewiseSpeed { base_speed, changes } => changes
                .iter()
                .filter(|c| c.at <= k)
                .max_by_key(|c| c.at)
                .map_or(*base_speed, |c| c.speed),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            LeaderProfile::ConstantSpeed { speed } => speed.is_finite(),
            LeaderProfile::PiecewiseSpeed { base_speed, changes } => {
                base_speed.is_finite() && changes.iter().all(|c| c.speed.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput("leader speeds must be finite".into()))
        }
    }
}

/// Mean and covariance of the stacked state `xi(0)`.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialCondition {
    pub mu_xi0: DVector<f64>,
    pub p_xi0: DMatrix<f64>,
}

impl InitialCondition {
    pub fn zero(dim: usize) -> Self {
        InitialCondition {
            mu_xi0: DVector::zeros(dim),
            p_xi0: DMatrix::zeros(dim, dim),
        }
    }

    pub fn new(mu_xi0: DVector<f64>, p_xi0: DMatrix<f64>) -> Result<Self> {
        let n = mu_xi0.len();
        if p_xi0.shape() != (n, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{n}x{n}"),
                got: format!("{:?}", p_xi0.shape()),
            });
        }
        if mu_xi0.iter().chain(p_xi0.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("initial condition must be finite".into()));
        }
        let asym = (&p_xi0 - p_xi0.transpose()).amax();
        if asym > 1e-12 * p_xi0.amax().max(1.0) {
            return Err(Error::InvalidInput(format!("P_xi0 is not symmetric (defect {asym:e})")));
        }
        let min_eig = min_symmetric_eigenvalue(&p_xi0);
        if min_eig < -1e-10 {
            return Err(Error::NotPsd {
                min_eigenvalue: min_eig,
            });
        }
        Ok(InitialCondition { mu_xi0, p_xi0 })
    }

    pub fn dim(&self) -> usize {
        self.mu_xi0.len()
    }
}

pub(crate) fn min_symmetric_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Per-vehicle closed loop: `T`, `S = 1 - H T`, `H`, and a minimal
/// realization of `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct VehicleLoop {
    pub t: TransferFunction,
    pub s: TransferFunction,
    pub h: TransferFunction,
    pub t_ss: StateSpaceModel,
    pub headway: f64,
}

/// `H(z) = (1+h) - h/z`.
pub fn headway_filter(h: f64) -> TransferFunction {
    TransferFunction::from_coeffs(&[1.0 + h, -h], &[1.0, 0.0]).expect("finite headway")
}

pub fn build_vehicle_loop(
    plant: &TransferFunction,
    controller: &TransferFunction,
    headway: f64,
) -> Result<VehicleLoop> {
    if !(headway.is_finite() && headway > 0.0) {
        return Err(Error::InvalidInput(format!(
            "h > 0 is the time headway constant (got {headway})"
        )));
    }
    let open = controller.series(plant);
    let one = Complex64::new(1.0, 0.0);
    let integrators = open
        .poles()
        .iter()
        .filter(|p| roots_coincide(**p, one, INTEGRATOR_TOL))
        .count();
    if integrators < 2 {
        return Err(Error::AssumptionViolation {
            which: Assumption::DoubleIntegrator,
            detail: format!("K*G has {integrators} pole(s) at z = 1, at least 2 are required"),
        });
    }
    let h = headway_filter(headway);
    let t = close_loop(plant, controller, &h)?;
    if !t.is_strictly_proper() {
        return Err(Error::AssumptionViolation {
            which: Assumption::StrictlyProper,
            detail: format!(
                "T has numerator degree {} and denominator degree {}",
                t.num().degree(),
                t.den().degree()
            ),
        });
    }
    let s = sensitivity(&t, &h);
    let t_ss = realize(&t)?;
    Ok(VehicleLoop { t, s, h, t_ss, headway })
}

/// Homogeneous predecessor-following platoon over additive-noise channels.
#[derive(Clone, Debug)]
pub struct PlatoonSpec {
    pub plant: TransferFunction,
    pub controller: TransferFunction,
    pub headway: f64,
    pub followers: usize,
    pub noise_variance: f64,
    pub noise: NoiseDistribution,
    pub leader: LeaderProfile,
    initial: Option<InitialCondition>,
    vehicle: VehicleLoop,
}

impl PlatoonSpec {
    pub fn new(
        plant: TransferFunction,
        controller: TransferFunction,
        headway: f64,
        followers: usize,
        noise_variance: f64,
    ) -> Result<Self> {
        if followers == 0 {
            return Err(Error::InvalidInput("the platoon needs at least one follower".into()));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be finite and nonnegative (got {noise_variance})"
            )));
        }
        let vehicle = build_vehicle_loop(&plant, &controller, headway)?;
        Ok(PlatoonSpec {
            plant,
            controller,
            headway,
            followers,
            noise_variance,
            noise: NoiseDistribution::Gaussian,
            leader: LeaderProfile::default(),
            initial: None,
            vehicle,
        })
    }

    pub fn with_noise(mut self, noise: NoiseDistribution) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_leader(mut self, leader: LeaderProfile) -> Result<Self> {
        leader.validate()?;
        self.leader = leader;
        Ok(self)
    }

    pub fn with_initial(mut self, initial: InitialCondition) -> Result<Self> {
        let dim = self.state_dim();
        if initial.dim() != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("initial condition of dimension {dim}"),
                got: format!("{}", initial.dim()),
            });
        }
        self.initial = Some(initial);
        Ok(self)
    }

    /// Same spec with a different follower count; a given initial
    /// condition is dropped since its dimension no longer matches.
    pub fn with_followers(&self, followers: usize) -> Result<Self> {
        if followers == 0 {
            return Err(Error::InvalidInput("the platoon needs at least one follower".into()));
        }
        let mut out = self.clone();
        out.followers = followers;
        if out.initial.as_ref().is_some_and(|ic| ic.dim() != out.state_dim()) {
            out.initial = None;
        }
        Ok(out)
    }

    pub fn with_noise_variance(&self, noise_variance: f64) -> Result<Self> {
        let mut out = self.clone();
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidInput(
                "noise variance must be finite and nonnegative".into(),
            ));
        }
        out.noise_variance = noise_variance;
        Ok(out)
    }

    pub fn vehicle_loop(&self) -> &VehicleLoop {
        &self.vehicle
    }

    /// Per-vehicle state dimension `n`.
    pub fn order(&self) -> usize {
        self.vehicle.t_ss.order()
    }

    /// `n N`.
    pub fn state_dim(&self) -> usize {
        self.order() * self.followers
    }

    pub fn has_explicit_initial(&self) -> bool {
        self.initial.is_some()
    }

    pub fn initial_condition(&self) -> InitialCondition {
        self.initial
            .clone()
            .unwrap_or_else(|| InitialCondition::zero(self.state_dim()))
    }

    pub fn concatenated(&self) -> Result<ConcatenatedPlatoon> {
        build_concatenated(&self.vehicle.t_ss, self.headway, self.followers)
    }
}

/// Stacked error system
/// `xi(k+1) = A xi(k) + B_o zeta_0(k) + B_a d(k) + B_b d(k-1)`,
/// `zeta(k) = C xi(k)`.
#[derive(Clone, Debug)]
pub struct ConcatenatedPlatoon {
    pub a: DMatrix<f64>,
    pub b_o: DVector<f64>,
    pub b_a: DMatrix<f64>,
    pub b_b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub n: usize,
    pub followers: usize,
    pub lambda: f64,
    pub headway: f64,
    block: StateSpaceModel,
}

/// Input channel of the stacked system.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlatoonInput {
    Leader,
    /// Noise on the channel into follower `j` (1-based).
    Noise(usize),
}

pub fn build_concatenated(t_ss: &StateSpaceModel, headway: f64, followers: usize) -> Result<ConcatenatedPlatoon> {
    if followers == 0 {
        return Err(Error::InvalidInput("the platoon needs at least one follower".into()));
    }
    if t_ss.d != 0.0 {
        return Err(Error::InvalidInput(
            "the vehicle loop must be strictly proper (D = 0)".into(),
        ));
    }
    let n = t_ss.order();
    let dim = n * followers;
    let lambda = -(1.0 + headway);
    let bc = &t_ss.b * &t_ss.c;
    let mut a = DMatrix::zeros(dim, dim);
    let mut b_a = DMatrix::zeros(dim, followers);
    let mut b_b = DMatrix::zeros(dim, followers);
    let mut c = DMatrix::zeros(followers, dim);
    for i in 0..followers {
        let r = i * n;
        a.view_mut((r, r), (n, n)).copy_from(&t_ss.a);
        b_a.view_mut((r, i), (n, 1)).copy_from(&(&t_ss.b * lambda));
        b_b.view_mut((r, i), (n, 1)).copy_from(&(&t_ss.b * headway));
        c.view_mut((i, r), (1, n)).copy_from(&t_ss.c);
        if i > 0 {
            a.view_mut((r, r - n), (n, n)).copy_from(&bc);
            b_a.view_mut((r, i - 1), (n, 1)).copy_from(&t_ss.b);
        }
    }
    let mut b_o = DVector::zeros(dim);
    b_o.rows_mut(0, n).copy_from(&t_ss.b);
    Ok(ConcatenatedPlatoon {
        a,
        b_o,
        b_a,
        b_b,
        c,
        n,
        followers,
        lambda,
        headway,
        block: t_ss.clone(),
    })
}

impl ConcatenatedPlatoon {
    pub fn dim(&self) -> usize {
        self.n * self.followers
    }

    pub fn block(&self) -> &StateSpaceModel {
        &self.block
    }

    /// Spectral radius of the stacked matrix. Its eigenvalues are those of
    /// the diagonal blocks, so only the per-vehicle `A` is decomposed.
    pub fn spectral_radius(&self) -> f64 {
        spectral_radius(&self.block.a)
    }

    /// `A x` using the block-bidiagonal structure.
    pub fn apply_a(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(self.dim());
        for i in 0..self.followers {
            let r = i * n;
            let xi = x.rows(r, n);
            let mut yi = &self.block.a * xi;
            if i > 0 {
                let prev = (&self.block.c * x.rows(r - n, n))[(0, 0)];
                yi += &self.block.b * prev;
            }
            out.rows_mut(r, n).copy_from(&yi);
        }
        out
    }

    /// Frequency response from `input` to `zeta_i` (1-based `i`), computed
    /// directly from the stacked matrices.
    pub fn response(&self, z: Complex64, input: PlatoonInput, output: usize) -> Result<Complex64> {
        if output == 0 || output > self.followers {
            return Err(Error::InvalidInput(format!("output index {output} out of range")));
        }
        let dim = self.dim();
        let b: DVector<Complex64> = match input {
            PlatoonInput::Leader => self.b_o.map(|v| Complex64::new(v, 0.0)),
            PlatoonInput::Noise(j) => {
                if j == 0 || j > self.followers {
                    return Err(Error::InvalidInput(format!("input index {j} out of range")));
                }
                let zi = z.inv();
                DVector::from_fn(dim, |r, _| self.b_a[(r, j - 1)] + self.b_b[(r, j - 1)] * zi)
            }
        };
        let m = DMatrix::<Complex64>::from_fn(dim, dim, |r, c| {
            let diag = if r == c { z } else { Complex64::new(0.0, 0.0) };
            diag - self.a[(r, c)]
        });
        let x = m.lu().solve(&b).ok_or(Error::EvaluationAtPole { magnitude: 0.0 })?;
        Ok((0..dim).fold(Complex64::new(0.0, 0.0), |acc, c| acc + x[c] * self.c[(output - 1, c)]))
    }

    /// `e_i^T C` as a row: maps `xi` to `zeta_i` (1-based).
    pub fn output_row(&self, i: usize) -> RowDVector<f64> {
        self.c.row(i - 1).into_owned()
    }
}

/// Filters mapping the inputs to `zeta_i`, from unrolling
/// `zeta_1 = T zeta_0 - HT d_1`, `zeta_i = T zeta_{i-1} + T d_{i-1} - HT d_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorChain {
    /// `T^i`.
    pub from_leader: TransferFunction,
    /// Entry `j - 1` is the filter from `d_j`: `T^(i-j) S` for `j < i`,
    /// `-H T` for `j = i`.
    pub from_noise: Vec<TransferFunction>,
}

pub fn error_chain_tf(
    t: &TransferFunction,
    s: &TransferFunction,
    h: &TransferFunction,
    i: usize,
) -> Result<ErrorChain> {
    if i == 0 {
        return Err(Error::InvalidInput("vehicle index starts at 1".into()));
    }
    let from_leader = t.pow(i as u32);
    let mut from_noise = Vec::with_capacity(i);
    let mut ts = s.clone();
    let mut tail = Vec::with_capacity(i - 1);
    for _ in 1..i {
        ts = t.series(&ts);
        tail.push(ts.clone());
    }
    // tail[m - 1] = T^m S; d_j sees T^(i-j) S.
    for j in 1..i {
        from_noise.push(tail[i - j - 1].clone());
    }
    from_noise.push(h.series(t).scale(-1.0));
    Ok(ErrorChain {
        from_leader,
        from_noise,
    })
}

/// Noise-free leader run: its own closed loop tracks a virtual predecessor
/// moving at the profile's speed.
#[derive(Clone, Debug)]
pub struct LeaderTrajectory {
    /// `x_0(-1)`.
    pub state_prev: DVector<f64>,
    /// `x_0(k)` for `k = 0..=horizon`.
    pub states: Vec<DVector<f64>>,
    /// `y_0(k)` for `k = 0..horizon`.
    pub positions: Vec<f64>,
    /// `y_0(-1)`.
    pub position_prev: f64,
    /// `zeta_0(k)` for `k = 0..horizon`.
    pub zeta0: Vec<f64>,
}

/// Runs the leader from steady cruise at the profile's base speed.
///
/// For `k <= 0` the reference is `r_0(k) = v_0 k` and the leader sits on
/// the matching steady-state trajectory, so `zeta_0` is zero until the
/// first speed change.
pub fn simulate_leader(vehicle: &VehicleLoop, profile: &LeaderProfile, horizon: usize) -> Result<LeaderTrajectory> {
    let ss = &vehicle.t_ss;
    let h = vehicle.headway;
    let n = ss.order();
    let v0 = profile.base_speed();
    let i_minus_a = DMatrix::<f64>::identity(n, n) - &ss.a;
    let lu = i_minus_a.lu();
    let rate = lu
        .solve(&(&ss.b * v0))
        .ok_or_else(|| Error::InvalidInput("I - A is singular; no steady cruise exists".into()))?;
    let offset = lu
        .solve(&(-&rate))
        .ok_or_else(|| Error::InvalidInput("I - A is singular; no steady cruise exists".into()))?;
    let state_prev = &offset - &rate;
    let mut x = offset;
    let mut r = 0.0;
    let mut y_prev = (&ss.c * &state_prev)[(0, 0)];
    let position_prev = y_prev;
    let mut states = Vec::with_capacity(horizon + 1);
    let mut positions = Vec::with_capacity(horizon);
    let mut zeta0 = Vec::with_capacity(horizon);
    for k in 0..horizon {
        let y = (&ss.c * &x)[(0, 0)];
        zeta0.push(r - y - h * (y - y_prev));
        positions.push(y);
        let next = &ss.a * &x + &ss.b * r;
        states.push(std::mem::replace(&mut x, next));
        r += profile.speed_at(k);
        y_prev = y;
    }
    states.push(x);
    Ok(LeaderTrajectory {
        state_prev,
        states,
        positions,
        position_prev,
        zeta0,
    })
}

/// Physical states `(x_i(-1), x_i(0))` of every follower reproducing a
/// given stacked `xi(0)`.
///
/// Noise starts at `k = 0`, so `x_i(0) = A x_i(-1) + B y_{i-1}(-1)` and the
/// definition of `xi_i(0)` is solved for `x_i(-1)` vehicle by vehicle.
pub fn physical_initial_states(
    vehicle: &VehicleLoop,
    leader_prev: &DVector<f64>,
    leader_now: &DVector<f64>,
    xi0: &DVector<f64>,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let ss = &vehicle.t_ss;
    let h = vehicle.headway;
    let n = ss.order();
    if n == 0 || !xi0.len().is_multiple_of(n) {
        return Err(Error::ShapeMismatch {
            expected: format!("multiple of {n}"),
            got: format!("{}", xi0.len()),
        });
    }
    let m = DMatrix::<f64>::identity(n, n) * h - &ss.a * (1.0 + h);
    let lu = m.lu();
    let bc = &ss.b * &ss.c;
    let mut out = Vec::with_capacity(xi0.len() / n);
    let (mut up_prev, mut up_now) = (leader_prev.clone(), leader_now.clone());
    for i in 0..xi0.len() / n {
        let rhs = xi0.rows(i * n, n) - &up_now + &bc * &up_prev * (1.0 + h);
        let prev = lu.solve(&rhs).ok_or_else(|| {
            Error::InvalidInput("h I - (1+h) A is singular; cannot map xi(0) to vehicle states".into())
        })?;
        let now = &ss.a * &prev + &bc * &up_prev;
        out.push((prev.clone(), now.clone()));
        up_prev = prev;
        up_now = now;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    pub(crate) fn paper_spec(h: f64, followers: usize) -> PlatoonSpec {
        let g = TransferFunction::from_coeffs(&[1.0], &[1.0, -2.0, 1.0]).unwrap();
        let k = TransferFunction::from_coeffs(&[1.35 / (1.0 + h), 0.0], &[1.0, 0.89]).unwrap();
        PlatoonSpec::new(g, k, h, followers, 0.6).unwrap()
    }

    #[test]
    fn paper_loop_order_and_radius() {
        let spec = paper_spec(3.2, 3);
        assert_eq!(spec.order(), 3);
        assert!(spec.vehicle_loop().t.is_strictly_proper());
        let rho = spec.vehicle_loop().t_ss.spectral_radius();
        assert!(rho < 1.0);
    }

    #[test]
    fn single_integrator_rejected() {
        let g = TransferFunction::from_coeffs(&[1.0], &[1.0, -1.0]).unwrap();
        let k = TransferFunction::constant(0.5);
        let err = PlatoonSpec::new(g, k, 1.0, 2, 0.1).unwrap_err();
        assert!(matches!(
            err,
            Error::AssumptionViolation {
                which: Assumption::DoubleIntegrator,
                ..
            }
        ));
    }

    #[test]
    fn biproper_loop_rejected() {
        // K G = (z^2) / (z-1)^2 gives a biproper T.
        let g = TransferFunction::from_coeffs(&[1.0, 0.0, 0.0], &[1.0, -2.0, 1.0]).unwrap();
        let err = PlatoonSpec::new(g, TransferFunction::one(), 1.0, 2, 0.1).unwrap_err();
        assert!(matches!(
            err,
            Error::AssumptionViolation {
                which: Assumption::StrictlyProper,
                ..
            }
        ));
    }

    #[test]
    fn nonpositive_headway_rejected() {
        let g = TransferFunction::from_coeffs(&[1.0], &[1.0, -2.0, 1.0]).unwrap();
        let k = TransferFunction::from_coeffs(&[1.0, 0.0], &[1.0, 0.89]).unwrap();
        let err = PlatoonSpec::new(g, k, 0.0, 2, 0.1).unwrap_err();
        assert!(err.to_string().contains("h > 0 is the time headway constant"));
    }

    #[test]
    fn single_follower_blocks() {
        let spec = paper_spec(3.2, 1);
        let sys = spec.concatenated().unwrap();
        let ss = &spec.vehicle_loop().t_ss;
        assert_eq!(sys.a, ss.a);
        assert_eq!(sys.b_o, ss.b);
        assert_eq!(sys.b_a.column(0), &ss.b * -(1.0 + 3.2));
        assert_eq!(sys.b_b.column(0), &ss.b * 3.2);
        assert_eq!(sys.c.row(0), ss.c.row(0));
    }

    #[test]
    fn three_follower_structure() {
        let spec = paper_spec(3.2, 3);
        let sys = spec.concatenated().unwrap();
        assert_eq!(sys.a.shape(), (9, 9));
        let ss = &spec.vehicle_loop().t_ss;
        let bc = &ss.b * &ss.c;
        let mut nonzero_sub = 0;
        for bi in 0..3 {
            for bj in 0..3 {
                let blk = sys.a.view((bi * 3, bj * 3), (3, 3)).into_owned();
                if bi == bj {
                    assert_eq!(blk, ss.a);
                } else if bi == bj + 1 {
                    assert_eq!(blk, bc);
                    nonzero_sub += (blk.amax() > 0.0) as usize;
                } else {
                    assert_eq!(blk.amax(), 0.0);
                }
            }
        }
        assert_eq!(nonzero_sub, 2);
    }

    #[test]
    fn structured_product_matches_dense() {
        let sys = paper_spec(2.4, 4).concatenated().unwrap();
        let x = DVector::from_fn(sys.dim(), |i, _| (i as f64 * 0.37).sin());
        let dense = &sys.a * &x;
        assert!((sys.apply_a(&x) - dense).amax() < 1e-14);
    }

    #[test]
    fn error_chain_small_cases() {
        let spec = paper_spec(3.2, 3);
        let vl = spec.vehicle_loop();
        let c1 = error_chain_tf(&vl.t, &vl.s, &vl.h, 1).unwrap();
        assert_eq!(c1.from_leader, vl.t);
        assert_eq!(c1.from_noise.len(), 1);
        let c2 = error_chain_tf(&vl.t, &vl.s, &vl.h, 2).unwrap();
        let ts = vl.t.series(&vl.s);
        let z = Complex64::from_polar(1.0, 0.7);
        let a = c2.from_noise[0].evaluate(z).unwrap();
        let b = ts.evaluate(z).unwrap();
        assert!((a - b).norm() < 1e-12);
        assert!(error_chain_tf(&vl.t, &vl.s, &vl.h, 0).is_err());
    }

    #[test]
    fn leader_at_cruise_has_zero_error() {
        let spec = paper_spec(3.2, 2);
        let lt = simulate_leader(spec.vehicle_loop(), &LeaderProfile::ConstantSpeed { speed: 1.3 }, 50).unwrap();
        assert!(lt.zeta0.iter().all(|z| z.abs() < 1e-12));
        // Position advances at the cruise speed.
        assert_abs_diff_eq!(lt.positions[10] - lt.positions[9], 1.3, epsilon = 1e-12);
    }

    #[test]
    fn leader_speed_change_decays() {
        let spec = paper_spec(3.2, 2);
        let profile = LeaderProfile::PiecewiseSpeed {
            base_speed: 1.0,
            changes: vec![SpeedChange { at: 5, speed: 1.5 }],
        };
        let lt = simulate_leader(spec.vehicle_loop(), &profile, 300).unwrap();
        assert!(lt.zeta0[..6].iter().all(|z| z.abs() < 1e-12));
        assert!(lt.zeta0[6..20].iter().any(|z| z.abs() > 1e-3));
        assert!(lt.zeta0[299].abs() < 1e-9);
    }

    #[test]
    fn physical_states_reproduce_xi() {
        let spec = paper_spec(3.2, 3);
        let vl = spec.vehicle_loop();
        let lt = simulate_leader(vl, &LeaderProfile::default(), 2).unwrap();
        let xi0 = DVector::from_fn(9, |i, _| 0.1 * i as f64 - 0.3);
        let states = physical_initial_states(vl, &lt.state_prev, &lt.states[0], &xi0).unwrap();
        let h = spec.headway;
        let mut up = lt.states[0].clone();
        for (i, (prev, now)) in states.iter().enumerate() {
            let xi = &up - now * (1.0 + h) + prev * h;
            assert!((xi - xi0.rows(i * 3, 3)).amax() < 1e-12);
            up = now.clone();
        }
    }

    #[test]
    fn initial_condition_validation() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(
            InitialCondition::new(DVector::zeros(2), p),
            Err(Error::NotPsd { .. })
        ));
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
        assert!(InitialCondition::new(DVector::zeros(2), asym).is_err());
        assert!(InitialCondition::new(DVector::zeros(2), DMatrix::identity(2, 2)).is_ok());
    }
}
