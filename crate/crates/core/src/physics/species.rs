//! The species table: per-isotope, per-hyperfine-level constants loaded from
//! a small TOML data file. A copy of `data/species.toml` is built in.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PhysicsError, SpeciesState};

const BUILTIN: &str = include_str!("../../data/species.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesRecord {
    pub isotope: String,
    #[serde(rename = "F")]
    pub f: u8,
    pub mass_kg: f64,
    #[serde(rename = "hyperfine_energy_J")]
    pub hyperfine_energy_j: f64,
    pub k_eff_rad_per_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesTable {
    #[serde(rename = "state")]
    pub states: Vec<SpeciesRecord>,
}

/// Isotope + hyperfine level + Zeeman sublevel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSelector {
    pub isotope: String,
    #[serde(rename = "F")]
    pub f: u8,
    #[serde(rename = "mF", default)]
    pub mf: i8,
}

impl StateSelector {
    pub fn new(isotope: &str, f: u8, mf: i8) -> Self {
        Self {
            isotope: isotope.to_string(),
            f,
            mf,
        }
    }
}

impl std::fmt::Display for StateSelector {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}|F={},mF={}>", self.isotope, self.f, self.mf)
    }
}

impl SpeciesTable {
    pub fn builtin() -> Self {
        Self::parse(BUILTIN).expect("built-in species table is valid")
    }

    pub fn builtin_source() -> &'static str {
        BUILTIN
    }

    pub fn parse(text: &str) -> Result<Self, PhysicsError> {
        let table: SpeciesTable =
            toml::from_str(text).map_err(|e| PhysicsError::Table(e.to_string()))?;
        table.validate()?;
        Ok(table)
    }

    pub fn load(path: &Path) -> Result<Self, PhysicsError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PhysicsError::Table(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            PhysicsError::Table(msg) => PhysicsError::Table(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("species table serialises")
    }

    fn validate(&self) -> Result<(), PhysicsError> {
        for (i, r) in self.states.iter().enumerate() {
            let bad = |reason: &str| PhysicsError::Table(format!("record {i} ({}): {reason}", r.isotope));
            if !(r.mass_kg > 0.0 && r.mass_kg.is_finite()) {
                return Err(bad("mass_kg must be positive"));
            }
            if !(r.k_eff_rad_per_m > 0.0 && r.k_eff_rad_per_m.is_finite()) {
                return Err(bad("k_eff_rad_per_m must be positive"));
            }
            if !(r.hyperfine_energy_j >= 0.0 && r.hyperfine_energy_j.is_finite()) {
                return Err(bad("hyperfine_energy_J must be non-negative"));
            }
            if self.states[..i]
                .iter()
                .any(|o| o.isotope == r.isotope && o.f == r.f)
            {
                return Err(bad("duplicate isotope/F record"));
            }
        }
        for r in &self.states {
            let lowest = self
                .levels(&r.isotope)
                .into_iter()
                .min()
                .expect("isotope has at least this record");
            if r.f == lowest && r.hyperfine_energy_j != 0.0 {
                return Err(PhysicsError::Table(format!(
                    "{} F={}: the lower hyperfine level must have zero internal energy",
                    r.isotope, r.f
                )));
            }
        }
        Ok(())
    }

    /// Hyperfine levels listed for `isotope`, ascending.
    pub fn levels(&self, isotope: &str) -> Vec<u8> {
        let mut v: Vec<u8> = self
            .states
            .iter()
            .filter(|r| r.isotope == isotope)
            .map(|r| r.f)
            .collect();
        v.sort_unstable();
        v
    }

    pub fn resolve(&self, sel: &StateSelector) -> Result<SpeciesState, PhysicsError> {
        let rec = self
            .states
            .iter()
            .find(|r| r.isotope == sel.isotope && r.f == sel.f)
            .ok_or_else(|| PhysicsError::UnknownState(sel.to_string()))?;
        let state = SpeciesState {
            isotope_label: rec.isotope.clone(),
            inertial_mass: rec.mass_kg,
            hyperfine_f: rec.f,
            magnetic_mf: sel.mf,
            internal_energy: rec.hyperfine_energy_j,
            effective_wave_vector: rec.k_eff_rad_per_m,
        };
        state.validate()?;
        Ok(state)
    }
}
