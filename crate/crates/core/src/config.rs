//! Run configuration: a sectioned `key = value` file (TOML syntax).
//!
//! ```toml
//! seed = 20180101
//! output_dir = "out"
//!
//! [species.first]
//! isotope = "Rb87"
//! F = 1
//! mF = 0
//!
//! [species.second]
//! isotope = "Rb85"
//! F = 2
//! mF = 0
//!
//! [sequence]
//! free_evolution = 0.203
//! # ...
//! ```
//!
//! Every section except `[species]` has defaults; `seed` is mandatory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::TrajectoryOffsets;
use crate::estimation::PhaseModel;
use crate::physics::{EnvironmentModel, SpeciesState, SpeciesTable, StateSelector, ViolationModel};
use crate::sequence::{Experiment, NoiseConfig, SequenceConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{origin}: {message}")]
    Syntax { origin: String, message: String },
    #[error("{origin}: field `{field}`: {message}")]
    Invalid {
        origin: String,
        field: String,
        message: String,
    },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesPair {
    pub first: StateSelector,
    pub second: StateSelector,
}

impl Default for SpeciesPair {
    fn default() -> Self {
        Self {
            first: StateSelector::new("Rb87", 1, 0),
            second: StateSelector::new("Rb85", 2, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViolationPair {
    pub first: ViolationModel,
    pub second: ViolationModel,
}

impl ViolationPair {
    pub fn as_array(&self) -> [ViolationModel; 2] {
        [self.first, self.second]
    }

    pub fn from_array([first, second]: [ViolationModel; 2]) -> Self {
        Self { first, second }
    }
}

/// Inputs of the derived budget rows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetConfig {
    /// Uncertainty of the local g used to normalise phases, m/s².
    pub g_uncertainty: f64,
    /// Gradient used for the gradient row, 1/s². Separate from the simulated
    /// environment so the row can be evaluated without simulating it.
    pub gravity_gradient: f64,
    pub trajectory: TrajectoryOffsets,
}

impl Default for BudgetConfig {
    fn default() -> Self {
        Self {
            g_uncertainty: 1.0e-4,
            gravity_gradient: 3.086e-6,
            trajectory: TrajectoryOffsets::calibrated_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Species table override; the built-in table is used when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub species_table: Option<PathBuf>,
    #[serde(default)]
    pub species: SpeciesPair,
    #[serde(default)]
    pub sequence: SequenceConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub violation: ViolationPair,
    #[serde(default)]
    pub environment: EnvironmentModel,
    #[serde(default)]
    pub budget: BudgetConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Default sequence and species, noiseless and violation-free.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            output_dir: default_output_dir(),
            species_table: None,
            species: SpeciesPair::default(),
            sequence: SequenceConfig::default(),
            noise: NoiseConfig::default(),
            violation: ViolationPair::default(),
            environment: EnvironmentModel::default(),
            budget: BudgetConfig::default(),
        }
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax {
            origin: origin.to_string(),
            message: e.to_string(),
        })?;
        cfg.validate(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text, &path.display().to_string())?;
        // relative table paths are relative to the config file
        if let (Some(table), Some(dir)) = (&cfg.species_table, path.parent()) {
            if table.is_relative() {
                cfg.species_table = Some(dir.join(table));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn validate(&self, origin: &str) -> Result<(), ConfigError> {
        let invalid = |field: &str, message: String| ConfigError::Invalid {
            origin: origin.to_string(),
            field: field.to_string(),
            message,
        };
        self.sequence
            .validate()
            .map_err(|e| invalid("sequence", e.to_string()))?;
        self.noise
            .validate()
            .map_err(|e| invalid("noise", e.to_string()))?;
        self.environment
            .validate()
            .map_err(|m| invalid("environment", m))?;
        self.violation
            .first
            .validate()
            .map_err(|m| invalid("violation.first", m))?;
        self.violation
            .second
            .validate()
            .map_err(|m| invalid("violation.second", m))?;
        if !(self.budget.g_uncertainty >= 0.0) {
            return Err(invalid("budget.g_uncertainty", "must be non-negative".into()));
        }
        let t = &self.budget.trajectory;
        if [t.sigma_delta_z0, t.sigma_delta_v0, t.sigma_gradient]
            .iter()
            .any(|s| !(*s >= 0.0))
        {
            return Err(invalid("budget.trajectory", "sigmas must be non-negative".into()));
        }
        if !self.budget.gravity_gradient.is_finite() {
            return Err(invalid("budget.gravity_gradient", "must be finite".into()));
        }
        if self.species.first == self.species.second {
            return Err(invalid("species", "the two species must differ".into()));
        }
        Ok(())
    }

    pub fn species_table(&self) -> Result<SpeciesTable, ConfigError> {
        match &self.species_table {
            None => Ok(SpeciesTable::builtin()),
            Some(path) => SpeciesTable::load(path).map_err(|e| ConfigError::Invalid {
                origin: path.display().to_string(),
                field: "species_table".into(),
                message: e.to_string(),
            }),
        }
    }

    pub fn resolve_species(&self) -> Result<[SpeciesState; 2], ConfigError> {
        let table = self.species_table()?;
        let resolve = |field: &str, sel: &StateSelector| {
            table.resolve(sel).map_err(|e| ConfigError::Invalid {
                origin: "config".into(),
                field: field.into(),
                message: e.to_string(),
            })
        };
        Ok([
            resolve("species.first", &self.species.first)?,
            resolve("species.second", &self.species.second)?,
        ])
    }

    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        let table = self.species_table()?;
        let species = self.resolve_species()?;
        Ok(Experiment {
            levels: [
                table.levels(&self.species.first.isotope),
                table.levels(&self.species.second.isotope),
            ],
            species,
            violation: self.violation.as_array(),
            environment: self.environment,
            sequence: self.sequence,
            noise: self.noise,
        })
    }

    pub fn phase_model(&self) -> Result<PhaseModel, ConfigError> {
        let exp = self.experiment()?;
        PhaseModel::new(
            [&exp.species[0], &exp.species[1]],
            self.sequence.free_evolution,
            self.sequence.diffraction_order,
            self.environment.local_g,
            exp.differential_chirp(),
        )
        .map_err(|e| ConfigError::Invalid {
            origin: "config".into(),
            field: "sequence".into(),
            message: e.to_string(),
        })
    }
}
