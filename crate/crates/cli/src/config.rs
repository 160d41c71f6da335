//! TOML run configuration.
//!
//! Transfer-function coefficients are listed in descending powers of `z`.
//! Each coefficient is either a number or an arithmetic expression in the
//! token `h`, which is replaced by the configured headway, so an
//! h-scheduled controller is rebuilt whenever `h` changes.

use std::path::Path;

use exmex::prelude::*;
use nalgebra::{DMatrix, DVector};
use platoon_core::platoon::{LeaderProfile, NoiseDistribution, SpeedChange};
use platoon_core::{InitialCondition, PlatoonSpec, TransferFunction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Token substituted by the headway inside coefficient expressions.
pub const HEADWAY_TOKEN: &str = "h";

pub const BUNDLED: [(&str, &str); 2] = [
    ("paper_h3.2", include_str!("../configs/paper_h3.2.toml")),
    ("paper_h2.4", include_str!("../configs/paper_h2.4.toml")),
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("cannot read config {path}: {message}")]
    Read { path: String, message: String },
    #[error("config not found: {0} (bundled configs: paper_h3.2, paper_h2.4)")]
    NotFound(String),
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("{key}: {constraint}")]
    Invalid { key: String, constraint: String },
}

fn invalid(key: impl Into<String>, constraint: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        constraint: constraint.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigDocument {
    pub headway: f64,
    pub followers: usize,
    #[serde(default)]
    pub initial_condition: InitialConfig,
    pub plant: TfConfig,
    pub controller: TfConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub leader: LeaderConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficient {
    Value(f64),
    Expr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TfConfig {
    pub num: Vec<Coefficient>,
    pub den: Vec<Coefficient>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub variance: f64,
    #[serde(default)]
    pub distribution: NoiseDistribution,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderKind {
    #[default]
    ConstantSpeed,
    PiecewiseSpeed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChangeConfig {
    pub at: usize,
    pub speed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderConfig {
    #[serde(default)]
    pub kind: LeaderKind,
    #[serde(default = "one")]
    pub base_speed: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub changes: Vec<ChangeConfig>,
}

impl Default for LeaderConfig {
    fn default() -> Self {
        LeaderConfig {
            kind: LeaderKind::ConstantSpeed,
            base_speed: 1.0,
            changes: Vec::new(),
        }
    }
}

/// `"zero"` or an explicit mean and covariance of the stacked state `xi(0)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialConfig {
    Keyword(String),
    Given(GivenInitial),
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Keyword("zero".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GivenInitial {
    pub mu: Vec<f64>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisConfig {
    /// Positive frequencies of the certification grid.
    pub grid_size: usize,
    /// Samples `k = 0..horizon` of trajectories and simulations.
    pub horizon: usize,
    /// Positive frequencies of the emitted spectrum CSV.
    pub spectrum_points: usize,
    /// Relative tolerance of the series cross-check of the limiting variance.
    pub series_rel_tol: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            grid_size: platoon_core::grid::DEFAULT_GRID_SIZE,
            horizon: 400,
            spectrum_points: 512,
            series_rel_tol: 1e-8,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordConfig {
    #[default]
    ErrorsOnly,
    FullState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloConfig {
    pub realizations: usize,
    pub seed: u64,
    pub record: RecordConfig,
    /// Realizations written out when `record = "full_state"`.
    pub dump_realizations: usize,
    pub mean_sigmas: f64,
    pub mean_fraction: f64,
    pub variance_rel: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        MonteCarloConfig {
            realizations: 20_000,
            seed: 1,
            record: RecordConfig::ErrorsOnly,
            dump_realizations: 10,
            mean_sigmas: 4.0,
            mean_fraction: 0.99,
            variance_rel: 0.05,
        }
    }
}

fn one() -> f64 {
    1.0
}

impl ConfigDocument {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let doc: ConfigDocument = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        doc.validate()?;
        Ok(doc)
    }

    /// A filesystem path, or the name of a bundled config.
    pub fn load(source: &str) -> Result<Self, ConfigError> {
        let path = Path::new(source);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
                path: source.into(),
                message: e.to_string(),
            })?;
            return Self::parse(&text);
        }
        match bundled(source) {
            Some(text) => Self::parse(text),
            None => Err(ConfigError::NotFound(source.into())),
        }
    }

    /// Canonical TOML text: parsing it gives back an equal document.
    pub fn normalized(&self) -> String {
        toml::to_string(self).expect("config documents always serialize")
    }

    /// SHA-256 of [`normalized`](Self::normalized).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.normalized().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.headway.is_finite() && self.headway > 0.0) {
            return Err(invalid("headway", "h > 0 is the time headway constant"));
        }
        if self.followers == 0 {
            return Err(invalid("followers", "at least one follower is required"));
        }
        for (name, tf) in [("plant", &self.plant), ("controller", &self.controller)] {
            self.evaluate(&format!("{name}.num"), &tf.num)?;
            let den = self.evaluate(&format!("{name}.den"), &tf.den)?;
            if den.first().is_none_or(|d| *d == 0.0) {
                return Err(invalid(format!("{name}.den"), "leading coefficient must be nonzero"));
            }
        }
        if !(self.noise.variance.is_finite() && self.noise.variance >= 0.0) {
            return Err(invalid("noise.variance", "must be finite and nonnegative"));
        }
        if !self.leader.base_speed.is_finite() {
            return Err(invalid("leader.base_speed", "must be finite"));
        }
        match self.leader.kind {
            LeaderKind::ConstantSpeed if !self.leader.changes.is_empty() => {
                return Err(invalid("leader.changes", "must be empty for kind = \"constant_speed\""));
            }
            _ => {}
        }
        for (j, c) in self.leader.changes.iter().enumerate() {
            if !c.speed.is_finite() {
                return Err(invalid(format!("leader.changes[{j}].speed"), "must be finite"));
            }
            if j > 0 && c.at <= self.leader.changes[j - 1].at {
                return Err(invalid(format!("leader.changes[{j}].at"), "change times must increase"));
            }
        }
        match &self.initial_condition {
            InitialConfig::Keyword(k) if k != "zero" => {
                return Err(invalid(
                    "initial_condition",
                    "must be \"zero\" or a table with mu and P",
                ));
            }
            InitialConfig::Given(g) => {
                if g.mu.iter().chain(g.p.iter().flatten()).any(|v| !v.is_finite()) {
                    return Err(invalid("initial_condition", "mu and P must be finite"));
                }
                if g.p.len() != g.mu.len() || g.p.iter().any(|row| row.len() != g.mu.len()) {
                    return Err(invalid(
                        "initial_condition.P",
                        format!("must be {0} x {0} to match mu", g.mu.len()),
                    ));
                }
            }
            _ => {}
        }
        let a = &self.analysis;
        if a.grid_size < 16 {
            return Err(invalid("analysis.grid_size", "must be at least 16"));
        }
        if a.horizon == 0 {
            return Err(invalid("analysis.horizon", "must be at least 1"));
        }
        if a.spectrum_points < 2 {
            return Err(invalid("analysis.spectrum_points", "must be at least 2"));
        }
        if !(a.series_rel_tol > 0.0 && a.series_rel_tol < 1.0) {
            return Err(invalid("analysis.series_rel_tol", "must lie in (0, 1)"));
        }
        let mc = &self.monte_carlo;
        if mc.realizations == 0 {
            return Err(invalid("monte_carlo.realizations", "must be at least 1"));
        }
        if !(mc.mean_sigmas.is_finite() && mc.mean_sigmas > 0.0) {
            return Err(invalid("monte_carlo.mean_sigmas", "must be positive"));
        }
        if !(mc.mean_fraction > 0.0 && mc.mean_fraction <= 1.0) {
            return Err(invalid("monte_carlo.mean_fraction", "must lie in (0, 1]"));
        }
        if !(mc.variance_rel.is_finite() && mc.variance_rel > 0.0) {
            return Err(invalid("monte_carlo.variance_rel", "must be positive"));
        }
        Ok(())
    }

    fn evaluate(&self, key: &str, coeffs: &[Coefficient]) -> Result<Vec<f64>, ConfigError> {
        if coeffs.is_empty() {
            return Err(invalid(key, "needs at least one coefficient"));
        }
        coeffs
            .iter()
            .enumerate()
            .map(|(j, c)| {
                let key = format!("{key}[{j}]");
                let v = match c {
                    Coefficient::Value(v) => *v,
                    Coefficient::Expr(e) => eval_coefficient(e, self.headway).map_err(|m| invalid(&key, m))?,
                };
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(invalid(key, "must be finite"))
                }
            })
            .collect()
    }

    pub fn plant_tf(&self) -> Result<TransferFunction, ConfigError> {
        self.tf("plant", &self.plant)
    }

    pub fn controller_tf(&self) -> Result<TransferFunction, ConfigError> {
        self.tf("controller", &self.controller)
    }

    fn tf(&self, name: &str, tf: &TfConfig) -> Result<TransferFunction, ConfigError> {
        let num = self.evaluate(&format!("{name}.num"), &tf.num)?;
        let den = self.evaluate(&format!("{name}.den"), &tf.den)?;
        TransferFunction::from_coeffs(&num, &den).map_err(|e| invalid(name, e.to_string()))
    }

    pub fn leader_profile(&self) -> LeaderProfile {
        match self.leader.kind {
            LeaderKind::ConstantSpeed => LeaderProfile::ConstantSpeed {
                speed: self.leader.base_speed,
            },
            LeaderKind::PiecewiseSpeed => LeaderProfile::PiecewiseSpeed {
                base_speed: self.leader.base_speed,
                changes: self
                    .leader
                    .changes
                    .iter()
                    .map(|c| SpeedChange {
                        at: c.at,
                        speed: c.speed,
                    })
                    .collect(),
            },
        }
    }

    /// Builds the platoon. Core failures (assumptions, shapes) are returned
    /// unchanged so the caller can attach remediation hints.
    pub fn to_spec(&self) -> Result<PlatoonSpec, crate::CliError> {
        self.validate()?;
        let spec = PlatoonSpec::new(
            self.plant_tf()?,
            self.controller_tf()?,
            self.headway,
            self.followers,
            self.noise.variance,
        )?
        .with_noise(self.noise.distribution)
        .with_leader(self.leader_profile())?;
        match &self.initial_condition {
            InitialConfig::Given(g) => {
                let dim = spec.state_dim();
                if g.mu.len() != dim {
                    return Err(invalid(
                        "initial_condition.mu",
                        format!(
                            "expected length {dim} (followers {} x loop order {}), got {}",
                            self.followers,
                            spec.order(),
                            g.mu.len()
                        ),
                    )
                    .into());
                }
                let mu = DVector::from_vec(g.mu.clone());
                let p = DMatrix::from_fn(dim, dim, |r, c| g.p[r][c]);
                let ic = InitialCondition::new(mu, p).map_err(|e| invalid("initial_condition.P", e.to_string()))?;
                Ok(spec.with_initial(ic)?)
            }
            InitialConfig::Keyword(_) => Ok(spec),
        }
    }
}

pub fn bundled(name: &str) -> Option<&'static str> {
    let name = name.strip_suffix(".toml").unwrap_or(name);
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| *text)
}

/// Evaluates a coefficient expression with `h` bound to `headway`.
pub fn eval_coefficient(expr: &str, headway: f64) -> Result<f64, String> {
    let parsed = exmex::parse::<f64>(expr).map_err(|e| format!("cannot parse \"{expr}\": {e}"))?;
    let vars = parsed.var_names();
    if let Some(other) = vars.iter().find(|v| v.as_str() != HEADWAY_TOKEN) {
        return Err(format!(
            "unknown symbol \"{other}\" in \"{expr}\" (only \"{HEADWAY_TOKEN}\" is defined)"
        ));
    }
    let args = if vars.is_empty() { vec![] } else { vec![headway] };
    parsed
        .eval(&args)
        .map_err(|e| format!("cannot evaluate \"{expr}\": {e}"))
}
