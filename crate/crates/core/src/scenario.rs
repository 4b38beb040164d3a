//! TOML scenario files.
//!
//! Only `[reference]` is required. Every other section falls back to the
//! case-study setup, so a case study fits in a handful of lines:
//!
//! ```toml
//! [reference]
//! mu = [0.3, -0.5]
//! sigma = [0.05, 0.05]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::finger::{substeps, FingerGeometry, ShapeTable};
use crate::fpe::{gaussian_pdf, Grid2D};
use crate::mpc::{EpisodeSpec, MpcConfig, ReferenceSpec, SWEEP_MU_VALUES};

/// Monte-Carlo validation settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub samples: usize,
    pub seed: u64,
    /// RK4 step of the full model, seconds.
    pub dt_fine: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            samples: 200,
            seed: 1,
            dt_fine: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Reference means tried on each joint.
    pub mu_values: Vec<f64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            mu_values: SWEEP_MU_VALUES.to_vec(),
        }
    }
}

fn default_initial() -> ReferenceSpec {
    ReferenceSpec::initial()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// Output directory used when the command line does not give one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub reference: ReferenceSpec,
    #[serde(default = "default_initial")]
    pub initial: ReferenceSpec,
    #[serde(default)]
    pub grid: Grid2D,
    #[serde(default)]
    pub mpc: MpcConfig,
    #[serde(default)]
    pub geometry: FingerGeometry,
    #[serde(default)]
    pub shapes: ShapeTable,
    #[serde(default)]
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn keyed(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidArgument(msg) => Error::InvalidArgument(format!("{key}: {msg}")),
        other => Error::InvalidArgument(format!("{key}: {other}")),
    }
}

fn check_density(key: &str, spec: &ReferenceSpec, grid: &Grid2D) -> Result<()> {
    for d in 0..2 {
        if !(spec.sigma[d] > 0.0 && spec.sigma[d].is_finite()) {
            return Err(Error::invalid(format!(
                "{key}.sigma[{d}] must be positive (got {})",
                spec.sigma[d]
            )));
        }
        if !spec.mu[d].is_finite() {
            return Err(Error::invalid(format!("{key}.mu[{d}] must be finite")));
        }
    }
    gaussian_pdf(grid, spec.mu, spec.sigma).map(|_| ()).map_err(keyed(key))
}

impl Scenario {
    /// Case-study defaults around the given reference.
    pub fn with_reference(reference: ReferenceSpec) -> Self {
        Self {
            output_dir: None,
            reference,
            initial: ReferenceSpec::initial(),
            grid: Grid2D::default(),
            mpc: MpcConfig::default(),
            geometry: FingerGeometry::default(),
            shapes: ShapeTable::default(),
            ensemble: EnsembleConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Range checks. Each error names the offending key.
    pub fn validate(&self) -> Result<()> {
        self.grid.validate().map_err(keyed("grid"))?;
        check_density("reference", &self.reference, &self.grid)?;
        check_density("initial", &self.initial, &self.grid)?;
        self.mpc.validate().map_err(keyed("mpc"))?;
        self.geometry.validate().map_err(keyed("geometry"))?;
        self.shapes.validate().map_err(keyed("shapes"))?;
        if self.ensemble.samples == 0 {
            return Err(Error::invalid("ensemble.samples must be at least 1"));
        }
        substeps(self.mpc.dt, self.ensemble.dt_fine).map_err(keyed("ensemble.dt_fine"))?;
        if self.sweep.mu_values.is_empty() || self.sweep.mu_values.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("sweep.mu_values must be a nonempty list of finite numbers"));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Self = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn episode_spec(&self) -> EpisodeSpec {
        EpisodeSpec {
            grid: self.grid,
            geometry: self.geometry,
            shapes: self.shapes,
            config: self.mpc,
            reference: self.reference,
            initial: self.initial,
        }
    }
}

/// Reads, parses and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Scenario::from_toml_str(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}
