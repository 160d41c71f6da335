//! Monte Carlo simulation of the platoon in physical coordinates and
//! streaming ensemble statistics.
//!
//! Realization `r` draws from a ChaCha8 generator keyed by
//! `(master_seed, r)`; vehicle `i` uses stream `i` of that key (stream 0
//! samples the random initial state). Results therefore depend only on the
//! seed and realization index, never on scheduling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::moments::MomentTrajectory;
use crate::platoon::{physical_initial_states, simulate_leader, LeaderTrajectory, NoiseDistribution, PlatoonSpec};

/// Realizations per accumulation block; blocks are merged in index order.
const BLOCK: usize = 256;
/// Blocks held in memory at once.
const BLOCKS_IN_FLIGHT: usize = 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub enum Record {
    #[default]
    ErrorsOnly,
    FullState,
}

#[derive(Clone, Debug)]
pub struct SimulationPlan {
    pub spec: PlatoonSpec,
    pub realizations: usize,
    pub horizon: usize,
    pub master_seed: u64,
    pub record: Record,
    /// Worker threads; `None` uses the global rayon pool.
    pub threads: Option<usize>,
}

impl SimulationPlan {
    pub fn new(spec: PlatoonSpec, realizations: usize, horizon: usize, master_seed: u64) -> Result<Self> {
        if realizations == 0 || horizon == 0 {
            return Err(Error::InvalidInput(
                "a simulation needs at least one realization and one sample".into(),
            ));
        }
        Ok(SimulationPlan {
            spec,
            realizations,
            horizon,
            master_seed,
            record: Record::ErrorsOnly,
            threads: None,
        })
    }
}

/// One realization; indices are `[vehicle - 1][k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub y: Vec<Vec<f64>>,
    pub zeta: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub d: Vec<Vec<f64>>,
}

/// Generator for realization `index` of `master_seed`, positioned on `stream`.
pub fn realization_rng(master_seed: u64, index: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(stream);
    rng
}

enum NoiseSampler {
    Zero,
    Gaussian(f64),
    Uniform(Uniform<f64>),
    Rademacher(f64),
}

impl NoiseSampler {
    fn new(kind: NoiseDistribution, variance: f64) -> Result<Self> {
        if variance == 0.0 {
            return Ok(NoiseSampler::Zero);
        }
        Ok(match kind {
            NoiseDistribution::Gaussian => NoiseSampler::Gaussian(variance.sqrt()),
            NoiseDistribution::Uniform => {
                let a = (3.0 * variance).sqrt();
                NoiseSampler::Uniform(Uniform::new_inclusive(-a, a).map_err(|e| Error::InvalidInput(e.to_string()))?)
            }
            NoiseDistribution::Rademacher => NoiseSampler::Rademacher(variance.sqrt()),
        })
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            NoiseSampler::Zero => 0.0,
            NoiseSampler::Gaussian(sd) => sd * rng.sample::<f64, _>(StandardNormal),
            NoiseSampler::Uniform(u) => u.sample(rng),
            NoiseSampler::Rademacher(a) => {
                if rng.random::<bool>() {
                    *a
                } else {
                    -*a
                }
            }
        }
    }
}

/// Precomputed pieces shared by all realizations of a spec.
pub struct Simulator {
    spec: PlatoonSpec,
    horizon: usize,
    leader: LeaderTrajectory,
    noise: NoiseSampler,
    mu_xi0: DVector<f64>,
    /// Symmetric square root of `P_xi(0)`, absent when it is zero.
    sqrt_p0: Option<DMatrix<f64>>,
}

impl Simulator {
    pub fn new(spec: &PlatoonSpec, horizon: usize) -> Result<Self> {
        let leader = simulate_leader(spec.vehicle_loop(), &spec.leader, horizon)?;
        let noise = NoiseSampler::new(spec.noise, spec.noise_variance)?;
        let ic = spec.initial_condition();
        let sqrt_p0 = if ic.p_xi0.amax() == 0.0 {
            None
        } else {
            let eig = ic.p_xi0.clone().symmetric_eigen();
            let root = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
            Some(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose())
        };
        Ok(Simulator {
            spec: spec.clone(),
            horizon,
            leader,
            noise,
            mu_xi0: ic.mu_xi0,
            sqrt_p0,
        })
    }

    pub fn leader(&self) -> &LeaderTrajectory {
        &self.leader
    }

    /// `xi(0)` drawn for realization `index`.
    pub fn initial_xi(&self, master_seed: u64, index: u64) -> DVector<f64> {
        match &self.sqrt_p0 {
            None => self.mu_xi0.clone(),
            Some(l) => {
                let mut rng = realization_rng(master_seed, index, 0);
                let z = DVector::from_fn(self.mu_xi0.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
                &self.mu_xi0 + l * z
            }
        }
    }

    /// Runs realization `index`, calling `sink(k, i, zeta, y, e, d)` for
    /// every sample (vehicles 1-based).
    fn run<F: FnMut(usize, usize, f64, f64, f64, f64)>(&self, master_seed: u64, index: u64, mut sink: F) -> Result<()> {
        let vl = self.spec.vehicle_loop();
        let ss = &vl.t_ss;
        let h = self.spec.headway;
        let n_f = self.spec.followers;
        let xi0 = self.initial_xi(master_seed, index);
        let init = physical_initial_states(vl, &self.leader.state_prev, &self.leader.states[0], &xi0)?;
        let mut x: Vec<DVector<f64>> = init.iter().map(|(_, now)| now.clone()).collect();
        let mut y_prev: Vec<f64> = init.iter().map(|(prev, _)| (&ss.c * prev)[(0, 0)]).collect();
        let mut rngs: Vec<ChaCha8Rng> = (1..=n_f as u64)
            .map(|v| realization_rng(master_seed, index, v))
            .collect();
        let ct = ss.c.transpose();
        let mut y = vec![0.0; n_f];
        let mut next = DVector::zeros(ss.order());
        for k in 0..self.horizon {
            for i in 0..n_f {
                y[i] = ct.dot(&x[i]);
            }
            for i in 0..n_f {
                let up = if i == 0 { self.leader.positions[k] } else { y[i - 1] };
                let zeta = up - (1.0 + h) * y[i] + h * y_prev[i];
                let d = self.noise.sample(&mut rngs[i]);
                sink(k, i + 1, zeta, y[i], zeta + d, d);
                next.gemv(1.0, &ss.a, &x[i], 0.0);
                next.axpy(up + d, &ss.b, 1.0);
                std::mem::swap(&mut x[i], &mut next);
            }
            y_prev.copy_from_slice(&y);
        }
        Ok(())
    }
}

pub fn simulate_realization(spec: &PlatoonSpec, horizon: usize, master_seed: u64, index: u64) -> Result<Realization> {
    let sim = Simulator::new(spec, horizon)?;
    simulate_with(&sim, master_seed, index)
}

pub fn simulate_with(sim: &Simulator, master_seed: u64, index: u64) -> Result<Realization> {
    let n = sim.spec.followers;
    let blank = || vec![vec![0.0; sim.horizon]; n];
    let mut out = Realization {
        y: blank(),
        zeta: blank(),
        e: blank(),
        d: blank(),
    };
    sim.run(master_seed, index, |k, i, zeta, y, e, d| {
        out.zeta[i - 1][k] = zeta;
        out.y[i - 1][k] = y;
        out.e[i - 1][k] = e;
        out.d[i - 1][k] = d;
    })?;
    Ok(out)
}

/// Streaming central moments up to order four.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Moments4 {
    pub n: u64,
    pub mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments4 {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let delta = x - self.mean;
        let dn = delta / n;
        let dn2 = dn * dn;
        let term1 = delta * dn * n1;
        self.mean += dn;
        self.m4 += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += term1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += term1;
    }

    pub fn merge(&mut self, other: &Moments4) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let (na, nb) = (self.n as f64, other.n as f64);
        let n = na + nb;
        let delta = other.mean - self.mean;
        let d2 = delta * delta;
        let m2 = self.m2 + other.m2 + d2 * na * nb / n;
        let m3 = self.m3
            + other.m3
            + delta * d2 * na * nb * (na - nb) / (n * n)
            + 3.0 * delta * (na * other.m2 - nb * self.m2) / n;
        let m4 = self.m4
            + other.m4
            + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n)
            + 6.0 * d2 * (na * na * other.m2 + nb * nb * self.m2) / (n * n)
            + 4.0 * delta * (na * other.m3 - nb * self.m3) / n;
        self.mean += delta * nb / n;
        self.m2 = m2;
        self.m3 = m3;
        self.m4 = m4;
        self.n += other.n;
    }

    /// Unbiased sample variance; zero for fewer than two samples.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 - 1.0)).max(0.0)
        }
    }

    pub fn stderr_mean(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }

    /// Standard error of the sample variance from the fourth central moment.
    pub fn stderr_variance(&self) -> f64 {
        if self.n < 4 {
            return 0.0;
        }
        let r = self.n as f64;
        let s2 = self.variance();
        let m4 = self.m4 / r;
        ((m4 - s2 * s2 * (r - 3.0) / (r - 1.0)) / r).max(0.0).sqrt()
    }
}

/// Accumulates `zeta_i(k)` over realizations.
#[derive(Clone, Debug)]
pub struct EnsembleAccumulator {
    horizon: usize,
    followers: usize,
    cells: Vec<Moments4>,
}

impl EnsembleAccumulator {
    pub fn new(horizon: usize, followers: usize) -> Self {
        EnsembleAccumulator {
            horizon,
            followers,
            cells: vec![Moments4::default(); horizon * followers],
        }
    }

    /// Adds sample `x` of `zeta_i(k)` (1-based `i`).
    pub fn push(&mut self, k: usize, i: usize, x: f64) {
        self.cells[k * self.followers + i - 1].push(x);
    }

    pub fn merge(&mut self, other: &EnsembleAccumulator) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.merge(b);
        }
    }

    pub fn finish(&self) -> EnsembleStats {
        let (kk, nn) = (self.horizon, self.followers);
        let get = |f: fn(&Moments4) -> f64| DMatrix::from_fn(kk, nn, |k, i| f(&self.cells[k * nn + i]));
        let realizations = self.cells.first().map_or(0, |c| c.n as usize);
        EnsembleStats {
            realizations,
            mu_hat: get(|c| c.mean),
            p_hat: get(Moments4::variance),
            stderr_mu: get(Moments4::stderr_mean),
            stderr_p: get(Moments4::stderr_variance),
            variance_undefined: realizations < 2,
        }
    }
}

/// Rows are samples `k`, columns vehicles.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleStats {
    pub realizations: usize,
    pub mu_hat: DMatrix<f64>,
    pub p_hat: DMatrix<f64>,
    pub stderr_mu: DMatrix<f64>,
    pub stderr_p: DMatrix<f64>,
    /// Set for a single realization, where `p_hat` is reported as zero.
    pub variance_undefined: bool,
}

impl EnsembleStats {
    pub fn horizon(&self) -> usize {
        self.mu_hat.nrows()
    }

    pub fn followers(&self) -> usize {
        self.mu_hat.ncols()
    }
}

fn run_block(sim: &Simulator, plan: &SimulationPlan, block: usize) -> Result<EnsembleAccumulator> {
    let mut acc = EnsembleAccumulator::new(plan.horizon, plan.spec.followers);
    let start = block * BLOCK;
    let end = (start + BLOCK).min(plan.realizations);
    for r in start..end {
        sim.run(plan.master_seed, r as u64, |k, i, zeta, _, _, _| acc.push(k, i, zeta))?;
    }
    Ok(acc)
}

/// Ensemble statistics of `zeta`. Blocks of realizations run in parallel
/// and are merged in block order, so the result is bit-identical for any
/// thread count.
pub fn run_ensemble(plan: &SimulationPlan) -> Result<EnsembleStats> {
    let sim = Simulator::new(&plan.spec, plan.horizon)?;
    let blocks = plan.realizations.div_ceil(BLOCK);
    let work = || -> Result<EnsembleStats> {
        let mut total = EnsembleAccumulator::new(plan.horizon, plan.spec.followers);
        for chunk_start in (0..blocks).step_by(BLOCKS_IN_FLIGHT) {
            let chunk_end = (chunk_start + BLOCKS_IN_FLIGHT).min(blocks);
            let partial: Vec<Result<EnsembleAccumulator>> = (chunk_start..chunk_end)
                .into_par_iter()
                .map(|b| run_block(&sim, plan, b))
                .collect();
            for acc in partial {
                total.merge(&acc?);
            }
        }
        Ok(total.finish())
    };
    match plan.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Band settings for comparing an ensemble with exact moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ValidationBands {
    /// Mean cells pass within this many standard errors.
    pub mean_sigmas: f64,
    /// Required fraction of passing mean cells.
    pub mean_fraction: f64,
    /// Allowed relative error of the final-sample variances.
    pub variance_rel: f64,
}

impl Default for ValidationBands {
    fn default() -> Self {
        ValidationBands {
            mean_sigmas: 4.0,
            mean_fraction: 0.99,
            variance_rel: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub cells: usize,
    pub mean_fraction_within: f64,
    pub max_abs_z: f64,
    /// Relative variance error per vehicle at the last sample.
    pub variance_rel_error: Vec<f64>,
    /// Mean of `P_hat / P` over vehicles at the last sample.
    pub variance_ratio: f64,
    pub mean_pass: bool,
    pub variance_pass: bool,
    pub pass: bool,
    pub bands: ValidationBands,
}

pub fn validate_against_analytics(
    stats: &EnsembleStats,
    traj: &MomentTrajectory,
    bands: ValidationBands,
) -> Result<ValidationReport> {
    let (kk, nn) = (stats.horizon(), stats.followers());
    let tk = traj.mu_zeta.len();
    let tn = traj.mu_zeta.first().map_or(0, |m| m.len());
    if (kk, nn) != (tk, tn) || traj.p_zeta.len() != tk {
        return Err(Error::ShapeMismatch {
            expected: format!("{kk} samples x {nn} vehicles"),
            got: format!("{tk} samples x {tn} vehicles"),
        });
    }
    let mut within = 0usize;
    let mut max_abs_z: f64 = 0.0;
    for k in 0..kk {
        for i in 0..nn {
            let diff = (stats.mu_hat[(k, i)] - traj.mu_zeta[k][i]).abs();
            let se = stats.stderr_mu[(k, i)];
            if diff <= bands.mean_sigmas * se + 1e-9 {
                within += 1;
            }
            if se > 0.0 {
                max_abs_z = max_abs_z.max(diff / se);
            }
        }
    }
    let cells = kk * nn;
    let mean_fraction_within = if cells == 0 { 1.0 } else { within as f64 / cells as f64 };
    let mut variance_rel_error = Vec::with_capacity(nn);
    let mut ratio_sum = 0.0;
    if kk > 0 {
        for i in 0..nn {
            let exact = traj.p_zeta[kk - 1][(i, i)];
            let est = stats.p_hat[(kk - 1, i)];
            if exact > 0.0 {
                variance_rel_error.push((est - exact).abs() / exact);
                ratio_sum += est / exact;
            } else {
                variance_rel_error.push(if est.abs() <= 1e-12 { 0.0 } else { f64::INFINITY });
                ratio_sum += 1.0;
            }
        }
    }
    let mean_pass = mean_fraction_within >= bands.mean_fraction;
    let variance_pass = !stats.variance_undefined && variance_rel_error.iter().all(|e| *e <= bands.variance_rel);
    Ok(ValidationReport {
        cells,
        mean_fraction_within,
        max_abs_z,
        variance_ratio: if nn == 0 { 1.0 } else { ratio_sum / nn as f64 },
        variance_rel_error,
        mean_pass,
        variance_pass,
        pass: mean_pass && variance_pass,
        bands,
    })
}
