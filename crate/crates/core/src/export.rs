//! CSV writers. Column order is fixed; floats use the shortest
//! round-trip representation, so equal inputs give equal bytes.

use std::io::Write;

use crate::error::Result;
use crate::moments::MomentTrajectory;
use crate::montecarlo::{EnsembleStats, Realization};
use crate::spectral::SpectrumLadder;

/// `k,i,mu_zeta_i,P_zeta_ii`
pub fn write_trajectory_csv<W: Write>(out: W, traj: &MomentTrajectory) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "i", "mu_zeta_i", "P_zeta_ii"])?;
    for (k, (mu, p)) in traj.mu_zeta.iter().zip(&traj.p_zeta).enumerate() {
        for i in 0..mu.len() {
            w.serialize((k, i + 1, mu[i], p[(i, i)]))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `omega,i,phi`
pub fn write_spectrum_csv<W: Write>(out: W, ladder: &SpectrumLadder) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["omega", "i", "phi"])?;
    for (j, omega) in ladder.grid.points().iter().enumerate() {
        for (i, phi) in ladder.phi.iter().enumerate() {
            w.serialize((omega, i + 1, phi[j]))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `k,i,mu_hat,P_hat,stderr_mu,stderr_P`
pub fn write_ensemble_csv<W: Write>(out: W, stats: &EnsembleStats) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["k", "i", "mu_hat", "P_hat", "stderr_mu", "stderr_P"])?;
    for k in 0..stats.horizon() {
        for i in 0..stats.followers() {
            w.serialize((
                k,
                i + 1,
                stats.mu_hat[(k, i)],
                stats.p_hat[(k, i)],
                stats.stderr_mu[(k, i)],
                stats.stderr_p[(k, i)],
            ))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `realization,k,i,y,zeta,e`, one block of rows per realization.
pub struct FullStateWriter<W: Write> {
    w: csv::Writer<W>,
}

impl<W: Write> FullStateWriter<W> {
    pub fn new(out: W) -> Result<Self> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["realization", "k", "i", "y", "zeta", "e"])?;
        Ok(FullStateWriter { w })
    }

    pub fn write(&mut self, index: u64, r: &Realization) -> Result<()> {
        let horizon = r.zeta.first().map_or(0, |v| v.len());
        for k in 0..horizon {
            for i in 0..r.zeta.len() {
                self.w
                    .serialize((index, k, i + 1, r.y[i][k], r.zeta[i][k], r.e[i][k]))?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.w.flush()?;
        Ok(())
    }
}
