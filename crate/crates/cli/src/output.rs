use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use platoon_core::{MeanBound, NormReport, ValidationReport, VarianceBound, Verdict};
use serde::Serialize;

use crate::commands::SweepRow;
use crate::CliError;

/// JSON summary of one command. Carries no timestamps, so identical
/// inputs give identical bytes.
#[derive(Clone, Debug, Serialize)]
pub struct ResultDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub config_hash: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verdict: Option<Verdict>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ladder: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stationary_variance: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limiting_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limiting_variance_series: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub norms: Option<NormReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<SweepRow>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub cases: Vec<CaseSummary>,
    /// Emitted files, relative to the output directory.
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

impl ResultDocument {
    pub fn new(command: &str, config_hash: String) -> Self {
        ResultDocument {
            tool: "platoon",
            version: env!("CARGO_PKG_VERSION"),
            command: command.into(),
            config_hash,
            seed: None,
            verdict: None,
            ladder: None,
            stationary_variance: None,
            limiting_variance: None,
            limiting_variance_series: None,
            bounds: None,
            norms: None,
            validation: None,
            sweep: Vec::new(),
            cases: Vec::new(),
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result documents always serialize") + "\n"
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Bounds {
    pub mean: MeanBound,
    pub variance: VarianceBound,
}

/// One headway / initial-condition case of the figure reproduction.
#[derive(Clone, Debug, Serialize)]
pub struct CaseSummary {
    pub name: String,
    pub headway: f64,
    pub followers: usize,
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    pub norms: NormReport,
    /// Stable case: every norm under its bound.
    pub bounds_dominate: bool,
    /// Successive differences of both norm sequences shrink beyond i = 10.
    pub convergent: bool,
    /// Both norm sequences strictly increase in i.
    pub increasing: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub validation: Option<ValidationReport>,
}

/// Writes `dir/name` through a temporary file in the same directory and
/// a rename, so readers never see a partial file.
pub fn write_atomic<F>(dir: &Path, name: &str, fill: F) -> Result<(), CliError>
where
    F: FnOnce(&mut dyn Write) -> Result<(), CliError>,
{
    let target = dir.join(name);
    let fail = |e: &dyn std::fmt::Display| CliError::Output {
        path: target.display().to_string(),
        message: e.to_string(),
    };
    fs::create_dir_all(dir).map_err(|e| fail(&e))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| fail(&e))?;
    {
        let mut w = BufWriter::new(tmp.as_file());
        fill(&mut w)?;
        w.flush().map_err(|e| fail(&e))?;
    }
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        fs::set_permissions(tmp.path(), fs::Permissions::from_mode(0o644)).map_err(|e| fail(&e))?;
    }
    tmp.persist(&target).map_err(|e| fail(&e.error))?;
    Ok(())
}
