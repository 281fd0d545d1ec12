//! Run configuration: one JSON document, validated before any work starts.

use std::fs;
use std::path::{Path, PathBuf};

use optospring::spectra::{ModelFlags, SpectrumOptions, SweepAxis};
use optospring::SystemParams;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

/// Environment variable that may supply the output path.
pub const OUTPUT_ENV: &str = "OPTOSPRING_OUT";

/// Coupling used when neither `mass` nor `lambda` is given.
pub const DEFAULT_LAMBDA: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Mirror mass; mutually exclusive with `lambda`.
    pub mass: Option<f64>,
    /// Single-photon coupling; sets the mass.
    pub lambda: Option<f64>,
    pub omega: f64,
    pub length: f64,
    pub modes: usize,
    pub per_mode_max: usize,
    pub total_cap: Option<usize>,
    pub mirror_max: usize,
    /// Defaults to `K π / length`, the highest retained mode.
    pub omega_pl: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            mass: None,
            lambda: None,
            omega: 1.0,
            length: std::f64::consts::PI,
            modes: 3,
            per_mode_max: 3,
            total_cap: Some(6),
            mirror_max: 6,
            omega_pl: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub format: Format,
    pub path: Option<PathBuf>,
    /// Significant digits of emitted floats.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            format: Format::Csv,
            path: None,
            precision: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub system: SystemConfig,
    pub model: ModelFlags,
    pub spectrum: SpectrumOptions,
    pub output: OutputConfig,
    pub sweep: Vec<SweepAxis<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            model: ModelFlags::LINEAR,
            spectrum: SpectrumOptions::default(),
            output: OutputConfig::default(),
            sweep: Vec::new(),
        }
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub modes: Option<usize>,
    pub per_mode_max: Option<usize>,
    pub total_cap: Option<usize>,
    pub format: Option<Format>,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid configuration: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Applies overrides; the output path comes from the flag, then the
    /// environment, then the file.
    pub fn apply(
        mut self,
        overrides: &Overrides,
        env_out: Option<PathBuf>,
    ) -> Result<Self, CliError> {
        if let Some(k) = overrides.modes {
            self.system.modes = k;
        }
        if let Some(n) = overrides.per_mode_max {
            self.system.per_mode_max = n;
        }
        if let Some(c) = overrides.total_cap {
            self.system.total_cap = Some(c);
        }
        if let Some(f) = overrides.format {
            self.output.format = f;
        }
        if let Some(p) = overrides.out.clone().or(env_out) {
            self.output.path = Some(p);
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.system;
        let positive = [
            ("system.omega", Some(s.omega)),
            ("system.length", Some(s.length)),
            ("system.mass", s.mass),
            ("system.lambda", s.lambda),
            ("system.omega_pl", s.omega_pl),
        ];
        for (name, value) in positive {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::Config(format!(
                        "{name} must be positive and finite, got {v}"
                    )));
                }
            }
        }
        if s.mass.is_some() && s.lambda.is_some() {
            return Err(CliError::Config(
                "system.mass and system.lambda are mutually exclusive".into(),
            ));
        }
        for (name, value) in [
            ("system.modes", s.modes),
            ("system.per_mode_max", s.per_mode_max),
            ("system.mirror_max", s.mirror_max),
            ("system.total_cap", s.total_cap.unwrap_or(1)),
            ("spectrum.levels", self.spectrum.levels),
            ("spectrum.dimension_guard", self.spectrum.dimension_guard),
        ] {
            if value == 0 {
                return Err(CliError::Config(format!("{name} must be positive")));
            }
        }
        let solver = &self.spectrum.solver;
        if !(solver.tolerance.is_finite() && solver.tolerance > 0.0) || solver.krylov_dim < 2 {
            return Err(CliError::Config(
                "spectrum.solver needs tolerance > 0 and krylov_dim >= 2".into(),
            ));
        }
        if !(1..=17).contains(&self.output.precision) {
            return Err(CliError::Config(format!(
                "output.precision must be within 1..=17, got {}",
                self.output.precision
            )));
        }
        for (i, axis) in self.sweep.iter().enumerate() {
            if axis.count == 0 {
                return Err(CliError::Config(format!(
                    "sweep[{i}] ({}) has no points",
                    axis.parameter
                )));
            }
            axis.validate()
                .map_err(|e| CliError::Config(format!("sweep[{i}]: {e}")))?;
        }
        Ok(())
    }

    /// Physical parameters with the defaults filled in.
    pub fn params(&self) -> Result<SystemParams<f64>, CliError> {
        let s = &self.system;
        let omega_pl = s
            .omega_pl
            .unwrap_or(s.modes as f64 * std::f64::consts::PI / s.length);
        let base = SystemParams::new(
            s.mass.unwrap_or(1.0),
            s.omega,
            s.length,
            s.modes,
            s.per_mode_max,
        )
        .map_err(|e| CliError::Config(e.to_string()))?
        .with_total_cap(s.total_cap)
        .with_mirror_max(s.mirror_max)
        .with_omega_pl(omega_pl);
        if s.mass.is_some() {
            base.validate()
                .map_err(|e| CliError::Config(e.to_string()))?;
            return Ok(base);
        }
        base.with_lambda(s.lambda.unwrap_or(DEFAULT_LAMBDA))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON of the resolved configuration,
    /// excluding the output path.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.path = None;
        let text = serde_json::to_string(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
