//! Config-driven front end: certification, exact moments, spectra,
//! Monte Carlo validation, parameter sweeps and the data behind the
//! reference figures.

pub mod commands;
pub mod config;
pub mod output;

use platoon_core::{Assumption, Error};
use thiserror::Error;

pub use commands::{Context, Outcome, Scale, SweepParam};
pub use config::{ConfigDocument, ConfigError};
pub use output::ResultDocument;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{}", describe_core(.0))]
    Core(#[from] Error),
    #[error("cannot write {path}: {message}")]
    Output { path: String, message: String },
    #[error("{0}")]
    Usage(String),
}

fn describe_core(e: &Error) -> String {
    match e {
        Error::AssumptionViolation { which, .. } => {
            let hint = match which {
                Assumption::StrictlyProper => {
                    "give the plant or the controller a relative degree of at least one \
                     (numerator shorter than denominator)"
                }
                Assumption::DoubleIntegrator => {
                    "the open loop K*G needs two poles at z = 1, e.g. plant den = [1, -2, 1]"
                }
            };
            format!("{e}; hint: {hint}")
        }
        Error::NotMss { .. } => format!("{e}; stationary outputs need every closed-loop pole inside the unit circle"),
        _ => e.to_string(),
    }
}
