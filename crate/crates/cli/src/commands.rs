use std::io::Write;
use std::path::PathBuf;

use platoon_core::certify::{check_definition1, mean_bound, variance_bound};
use platoon_core::export::{write_ensemble_csv, write_spectrum_csv, write_trajectory_csv, FullStateWriter};
use platoon_core::moments::{moment_trajectory, stationary_covariance};
use platoon_core::montecarlo::{run_ensemble, simulate_with, validate_against_analytics, Simulator, ValidationBands};
use platoon_core::platoon::simulate_leader;
use platoon_core::spectral::{limiting_variance_series, psd_ladder, spectral_factorize, variance_ladder};
use platoon_core::{
    certify, Error, FrequencyGrid, MomentTrajectory, NormReport, PlatoonSpec, Record, SimulationPlan, ValidationReport,
    Verdict,
};
use serde::Serialize;

use crate::config::{ConfigDocument, GivenInitial, InitialConfig, RecordConfig};
use crate::output::{write_atomic, Bounds, CaseSummary, ResultDocument};
use crate::{CliError, EXIT_ERROR, EXIT_OK, EXIT_UNSTABLE};

/// Settings shared by every command.
#[derive(Clone, Debug)]
pub struct Context {
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub grid_size: Option<usize>,
    /// Monte Carlo worker threads; `None` uses all cores.
    pub threads: Option<usize>,
}

impl Context {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Context {
            out: out.into(),
            seed: None,
            grid_size: None,
            threads: None,
        }
    }

    /// Applies the command-line overrides to a loaded config.
    pub fn apply(&self, cfg: &ConfigDocument) -> Result<ConfigDocument, CliError> {
        let mut cfg = cfg.clone();
        if let Some(seed) = self.seed {
            cfg.monte_carlo.seed = seed;
        }
        if let Some(g) = self.grid_size {
            cfg.analysis.grid_size = g;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn write<F>(&self, doc: &mut ResultDocument, name: &str, fill: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
    {
        write_atomic(&self.out, name, fill)?;
        doc.outputs.push(name.into());
        Ok(())
    }

    fn finish(&self, mut doc: ResultDocument, exit_code: i32) -> Result<Outcome, CliError> {
        let name = format!("{}.json", doc.command);
        doc.outputs.push(name.clone());
        let json = doc.to_json();
        write_atomic(&self.out, &name, |w| {
            w.write_all(json.as_bytes()).map_err(io_error(&name))
        })?;
        Ok(Outcome {
            document: doc,
            exit_code,
        })
    }
}

#[derive(Clone, Debug)]
pub struct Outcome {
    pub document: ResultDocument,
    pub exit_code: i32,
}

fn io_error(name: &str) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Output {
        path: name.into(),
        message: e.to_string(),
    }
}

fn grid(cfg: &ConfigDocument) -> Result<FrequencyGrid, CliError> {
    Ok(FrequencyGrid::uniform(cfg.analysis.grid_size)?)
}

fn trajectory(spec: &PlatoonSpec, horizon: usize) -> Result<(MomentTrajectory, Vec<f64>), CliError> {
    let sys = spec.concatenated()?;
    let leader = simulate_leader(spec.vehicle_loop(), &spec.leader, horizon)?;
    let traj = moment_trajectory(
        &sys,
        &leader.zeta0,
        &spec.initial_condition(),
        spec.noise_variance,
        horizon,
        false,
    )?;
    Ok((traj, leader.zeta0))
}

/// Bound constants of the mean and variance norms; needs string stability.
fn bounds(spec: &PlatoonSpec, zeta0: &[f64], grid: &FrequencyGrid) -> Result<Bounds, CliError> {
    let sys = spec.concatenated()?;
    let factor = spectral_factorize(&spec.vehicle_loop().t)?;
    Ok(Bounds {
        mean: mean_bound(spec, &sys, zeta0, grid)?,
        variance: variance_bound(spec, &sys, &factor)?,
    })
}

pub fn cmd_certify(cfg: &ConfigDocument, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.apply(cfg)?;
    let spec = cfg.to_spec()?;
    let verdict = certify(&spec, &grid(&cfg)?)?;
    let mut doc = ResultDocument::new("certify", cfg.hash());
    let code = if verdict.string_stable { EXIT_OK } else { EXIT_UNSTABLE };
    if !verdict.string_stable {
        doc.notes.push(instability_note(&verdict));
    }
    doc.limiting_variance = verdict.limiting_variance;
    doc.verdict = Some(verdict);
    ctx.finish(doc, code)
}

fn instability_note(v: &Verdict) -> String {
    if !v.mss {
        format!("not mean-square stable: rho(A) = {}", v.rho_a)
    } else {
        format!(
            "mean-square stable but not string stable: |T| = {} > 1 at omega = {}",
            v.max_gain, v.worst_frequency
        )
    }
}

/// Exact moments, variance ladders, spectra and bound constants.
///
/// Trajectories are written even when the platoon is not mean-square
/// stable; the stationary outputs are then skipped and the exit code is 1.
pub fn cmd_analyze(cfg: &ConfigDocument, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.apply(cfg)?;
    let spec = cfg.to_spec()?;
    let grid = grid(&cfg)?;
    let mut doc = ResultDocument::new("analyze", cfg.hash());
    let (traj, zeta0) = trajectory(&spec, cfg.analysis.horizon)?;
    ctx.write(&mut doc, "trajectories.csv", |w| Ok(write_trajectory_csv(w, &traj)?))?;

    let verdict = certify(&spec, &grid)?;
    if !verdict.mss {
        doc.notes.push(format!(
            "{}; stationary outputs skipped",
            CliError::from(Error::NotMss { rho: verdict.rho_a })
        ));
        doc.verdict = Some(verdict);
        return ctx.finish(doc, EXIT_ERROR);
    }

    let vl = spec.vehicle_loop();
    let sys = spec.concatenated()?;
    let stationary = stationary_covariance(&sys, spec.noise_variance)?;
    let ladder = variance_ladder(&vl.t, &vl.s, &vl.h, spec.noise_variance, spec.followers)?;
    ctx.write(&mut doc, "ladder.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["i", "ladder", "lyapunov"]).map_err(core_io)?;
        for (i, (l, p)) in ladder.iter().zip(&stationary.per_vehicle_variance).enumerate() {
            csv.serialize((i + 1, l, p)).map_err(core_io)?;
        }
        csv.flush().map_err(io_error("ladder.csv"))
    })?;
    let spectrum_grid = FrequencyGrid::uniform(cfg.analysis.spectrum_points)?;
    let spectrum = psd_ladder(&vl.t, &vl.s, &vl.h, spec.noise_variance, spec.followers, &spectrum_grid)?;
    ctx.write(&mut doc, "spectrum.csv", |w| Ok(write_spectrum_csv(w, &spectrum)?))?;

    let bound = if verdict.string_stable {
        doc.limiting_variance_series = Some(limiting_variance_series(
            &vl.t,
            &vl.s,
            &vl.h,
            spec.noise_variance,
            cfg.analysis.series_rel_tol,
        )?);
        Some(bounds(&spec, &zeta0, &grid)?)
    } else {
        doc.notes.push(format!(
            "{}; the variance ladder grows without bound in i and the limiting variance is undefined",
            instability_note(&verdict)
        ));
        None
    };
    match check_definition1(&traj, sys.spectral_radius(), bound.map(|b| (b.mean, b.variance))) {
        Ok(norms) => doc.norms = Some(norms),
        Err(e @ Error::HorizonTooShort { .. }) => doc.notes.push(format!("norms skipped: {e}")),
        Err(e) => return Err(e.into()),
    }
    doc.bounds = bound;
    doc.limiting_variance = verdict.limiting_variance;
    doc.ladder = Some(ladder);
    doc.stationary_variance = Some(stationary.per_vehicle_variance);
    doc.verdict = Some(verdict);
    ctx.finish(doc, EXIT_OK)
}

fn core_io(e: csv::Error) -> CliError {
    CliError::Core(e.into())
}

fn plan(cfg: &ConfigDocument, spec: PlatoonSpec, ctx: &Context) -> Result<SimulationPlan, CliError> {
    let mut plan = SimulationPlan::new(
        spec,
        cfg.monte_carlo.realizations,
        cfg.analysis.horizon,
        cfg.monte_carlo.seed,
    )?;
    plan.threads = ctx.threads;
    plan.record = match cfg.monte_carlo.record {
        RecordConfig::ErrorsOnly => Record::ErrorsOnly,
        RecordConfig::FullState => Record::FullState,
    };
    Ok(plan)
}

fn bands(cfg: &ConfigDocument) -> ValidationBands {
    ValidationBands {
        mean_sigmas: cfg.monte_carlo.mean_sigmas,
        mean_fraction: cfg.monte_carlo.mean_fraction,
        variance_rel: cfg.monte_carlo.variance_rel,
    }
}

/// Runs the ensemble, writes `csv_name`, and validates against the exact
/// moments when the platoon is mean-square stable.
fn simulate_into(
    cfg: &ConfigDocument,
    ctx: &Context,
    doc: &mut ResultDocument,
    csv_name: &str,
) -> Result<Option<ValidationReport>, CliError> {
    let spec = cfg.to_spec()?;
    let plan = plan(cfg, spec.clone(), ctx)?;
    let stats = run_ensemble(&plan)?;
    ctx.write(doc, csv_name, |w| Ok(write_ensemble_csv(w, &stats)?))?;
    if plan.record == Record::FullState {
        let sim = Simulator::new(&spec, plan.horizon)?;
        let count = cfg.monte_carlo.dump_realizations.min(plan.realizations) as u64;
        ctx.write(doc, "realizations.csv", |w| {
            let mut fw = FullStateWriter::new(w)?;
            for r in 0..count {
                fw.write(r, &simulate_with(&sim, plan.master_seed, r)?)?;
            }
            Ok(fw.finish()?)
        })?;
    }
    if spec.concatenated()?.spectral_radius() >= 1.0 - platoon_core::tf::STABILITY_TOL {
        doc.notes.push("not mean-square stable: validation skipped".into());
        return Ok(None);
    }
    let (traj, _) = trajectory(&spec, plan.horizon)?;
    Ok(Some(validate_against_analytics(&stats, &traj, bands(cfg))?))
}

pub fn cmd_simulate(cfg: &ConfigDocument, ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.apply(cfg)?;
    let mut doc = ResultDocument::new("simulate", cfg.hash());
    doc.seed = Some(cfg.monte_carlo.seed);
    let validation = simulate_into(&cfg, ctx, &mut doc, "ensemble.csv")?;
    if let Some(v) = &validation {
        if !v.pass {
            doc.notes.push(format!(
                "validation failed: {:.4} of mean cells within {} standard errors, max variance error {:.4}",
                v.mean_fraction_within,
                v.bands.mean_sigmas,
                v.variance_rel_error.iter().copied().fold(0.0, f64::max)
            ));
        }
    }
    doc.validation = validation;
    ctx.finish(doc, EXIT_OK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    /// Time headway `h`; coefficient expressions are re-evaluated.
    H,
    /// Noise variance.
    #[value(name = "p_d", alias = "P_d")]
    Pd,
    /// Number of followers.
    #[value(alias = "N")]
    N,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    #[serde(rename = "rho_A")]
    pub rho_a: f64,
    pub max_gain: f64,
    pub margin: f64,
    pub string_stable: bool,
    pub limiting_variance: Option<f64>,
    pub last_vehicle_variance: Option<f64>,
}

/// `start:stop:step`, inclusive of `stop` up to rounding.
pub fn parse_range(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("range \"{text}\" must be start:stop:step with step > 0"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let [start, stop, step] = parts[..] else {
        return Err(bad());
    };
    if !(start.is_finite() && stop.is_finite() && step.is_finite() && step > 0.0 && stop >= start) {
        return Err(bad());
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|j| start + j as f64 * step).collect())
}

pub fn parse_values(text: &str) -> Result<Vec<f64>, CliError> {
    let values: Vec<f64> = text
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("sweep value \"{}\" is not a number", p.trim())))
        })
        .collect::<Result<_, _>>()?;
    if values.is_empty() {
        return Err(CliError::Usage("the sweep needs at least one value".into()));
    }
    Ok(values)
}

pub fn sweep_rows(cfg: &ConfigDocument, param: SweepParam, values: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let grid = grid(cfg)?;
    values
        .iter()
        .map(|&value| {
            let mut c = cfg.clone();
            match param {
                SweepParam::H => c.headway = value,
                SweepParam::Pd => c.noise.variance = value,
                SweepParam::N => {
                    if !(value >= 1.0 && value.fract() == 0.0) {
                        return Err(CliError::Usage(format!(
                            "sweep value {value}: followers must be a positive integer"
                        )));
                    }
                    c.followers = value as usize;
                }
            }
            c.validate()?;
            let spec = c.to_spec()?;
            let v = certify(&spec, &grid)?;
            let last_vehicle_variance = if v.mss {
                let vl = spec.vehicle_loop();
                variance_ladder(&vl.t, &vl.s, &vl.h, spec.noise_variance, spec.followers)?
                    .last()
                    .copied()
            } else {
                None
            };
            Ok(SweepRow {
                value,
                rho_a: v.rho_a,
                max_gain: v.max_gain,
                margin: v.margin,
                string_stable: v.string_stable,
                limiting_variance: v.limiting_variance,
                last_vehicle_variance,
            })
        })
        .collect()
}

pub fn cmd_sweep(cfg: &ConfigDocument, param: SweepParam, values: &[f64], ctx: &Context) -> Result<Outcome, CliError> {
    let cfg = ctx.apply(cfg)?;
    let rows = sweep_rows(&cfg, param, values)?;
    let mut doc = ResultDocument::new("sweep", cfg.hash());
    ctx.write(&mut doc, "sweep.csv", |w| {
        let mut csv = csv::Writer::from_writer(w);
        for row in &rows {
            csv.serialize(row).map_err(core_io)?;
        }
        csv.flush().map_err(io_error("sweep.csv"))
    })?;
    doc.sweep = rows;
    ctx.finish(doc, EXIT_OK)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Scale {
    Desk,
    Full,
}

/// Vehicles in the analytic figure data.
pub const FIGURE_FOLLOWERS: usize = 20;
/// Samples of the analytic figure data; long enough for the mean
/// transients to die out at both headways.
pub const FIGURE_HORIZON: usize = 2000;
pub const FULL_REALIZATIONS: usize = 1_000_000;

/// Mean and covariance of `xi(0)` for the nonzero initial-condition case:
/// the first follower starts displaced, every state is uncertain.
pub fn nonzero_initial(dim: usize) -> GivenInitial {
    GivenInitial {
        mu: (0..dim).map(|j| if j < 3 { 1.0 } else { 0.0 }).collect(),
        p: (0..dim)
            .map(|r| (0..dim).map(|c| if r == c { 0.1 } else { 0.0 }).collect())
            .collect(),
    }
}

/// Successive differences of `v` shrink in magnitude from index `from`
/// (1-based) onward.
pub fn differences_shrink(v: &[f64], from: usize) -> bool {
    let d: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    d.get(from.saturating_sub(1)..)
        .is_some_and(|tail| tail.windows(2).all(|w| w[1] <= w[0]))
}

fn write_norms(ctx: &Context, doc: &mut ResultDocument, name: &str, norms: &NormReport) -> Result<(), CliError> {
    ctx.write(doc, name, |w| {
        let mut csv = csv::Writer::from_writer(w);
        csv.write_record(["i", "mean_l2", "mean_l2_bound", "variance_linf", "variance_linf_bound"])
            .map_err(core_io)?;
        for i in 0..norms.mean_l2.len() {
            csv.serialize((
                i + 1,
                norms.mean_l2[i],
                norms.bound_mean,
                norms.variance_linf[i],
                norms.bound_variance,
            ))
            .map_err(core_io)?;
        }
        csv.flush().map_err(io_error(name))
    })
}

/// Estimated vehicle-samples of a full-scale run, for the refusal message.
pub fn full_scale_cost() -> u128 {
    2 * FULL_REALIZATIONS as u128 * FIGURE_FOLLOWERS as u128 * 400
}

/// Data behind the reference figures for `h = 3.2` and `h = 2.4`:
/// mean/variance trajectories with zero and nonzero initial conditions,
/// per-vehicle norms against their bounds, and a Monte Carlo ensemble
/// validated against the exact moments.
pub fn cmd_reproduce_paper(scale: Scale, yes_expensive: bool, ctx: &Context) -> Result<Outcome, CliError> {
    if scale == Scale::Full && !yes_expensive {
        return Err(CliError::Usage(format!(
            "full scale simulates {FULL_REALIZATIONS} realizations of {FIGURE_FOLLOWERS} vehicles over \
             400 samples for each headway ({} vehicle-samples, hours of CPU time); \
             pass --yes-expensive to run it",
            full_scale_cost()
        )));
    }
    let configs: Vec<ConfigDocument> = ["paper_h3.2", "paper_h2.4"]
        .iter()
        .map(|n| ctx.apply(&ConfigDocument::load(n)?))
        .collect::<Result<_, _>>()?;
    let hash_input: String = configs.iter().map(|c| c.hash()).collect::<Vec<_>>().join(",");
    let mut doc = ResultDocument::new("reproduce-paper", {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(hash_input.as_bytes()))
    });
    doc.seed = Some(configs[0].monte_carlo.seed);
    for base in &configs {
        let label = format!("h{}", base.headway);
        let grid = grid(base)?;
        for (case, nonzero) in [("zero", false), ("nonzero", true)] {
            let mut cfg = base.clone();
            cfg.followers = FIGURE_FOLLOWERS;
            if nonzero {
                let dim = cfg.to_spec()?.state_dim();
                cfg.initial_condition = InitialConfig::Given(nonzero_initial(dim));
            }
            let spec = cfg.to_spec()?;
            let (traj, zeta0) = trajectory(&spec, FIGURE_HORIZON)?;
            let fig = if nonzero { "fig5" } else { "fig3" };
            ctx.write(&mut doc, &format!("{fig}_{label}.csv"), |w| {
                Ok(write_trajectory_csv(w, &traj)?)
            })?;
            let verdict = certify(&spec, &grid)?;
            let bound = if verdict.string_stable {
                Some(bounds(&spec, &zeta0, &grid)?)
            } else {
                None
            };
            let rho = spec.concatenated()?.spectral_radius();
            let norms = check_definition1(&traj, rho, bound.map(|b| (b.mean, b.variance)))?;
            write_norms(ctx, &mut doc, &format!("fig4_{label}_{case}.csv"), &norms)?;

            let validation = if !nonzero {
                let mut mc = base.clone();
                if scale == Scale::Full {
                    mc.followers = FIGURE_FOLLOWERS;
                    mc.monte_carlo.realizations = FULL_REALIZATIONS;
                }
                simulate_into(&mc, ctx, &mut doc, &format!("montecarlo_{label}.csv"))?
            } else {
                None
            };
            doc.cases.push(CaseSummary {
                name: format!("{label}_{case}"),
                headway: base.headway,
                followers: FIGURE_FOLLOWERS,
                bounds_dominate: norms.all_satisfied(),
                convergent: differences_shrink(&norms.mean_l2, 10) && differences_shrink(&norms.variance_linf, 10),
                increasing: norms.increasing_in_i(),
                verdict,
                bounds: bound,
                norms,
                validation,
            });
        }
    }
    ctx.finish(doc, EXIT_OK)
}
