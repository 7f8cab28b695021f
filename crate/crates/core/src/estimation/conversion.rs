//! Fitted ellipse phase → signed Eötvös parameter.

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::EllipseFit;
use crate::physics::{DiffractionOrder, SpeciesState};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConversionError {
    #[error(
        "branch ambiguity: fitted phase {fitted:.6} rad is {distance:.3} rad from the nearest \
         branch of the predicted {predicted:.6} rad (limit π/2)"
    )]
    BranchAmbiguity {
        fitted: f64,
        predicted: f64,
        distance: f64,
    },
    #[error("invalid phase model: {0}")]
    InvalidModel(String),
}

/// What the analysis knows about the interferometer geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseModel {
    /// `[k₁, k₂]`, rad/m.
    pub wave_vectors: [f64; 2],
    pub free_evolution: f64,
    pub order: DiffractionOrder,
    /// Nominal gravity used for branch prediction and normalisation, m/s².
    pub mean_g: f64,
    /// Chirp applied to the second species only, rad/s².
    pub differential_chirp: f64,
}

impl PhaseModel {
    pub fn new(
        pair: [&SpeciesState; 2],
        free_evolution: f64,
        order: DiffractionOrder,
        mean_g: f64,
        differential_chirp: f64,
    ) -> Result<Self, ConversionError> {
        let model = Self {
            wave_vectors: [pair[0].effective_wave_vector, pair[1].effective_wave_vector],
            free_evolution,
            order,
            mean_g,
            differential_chirp,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), ConversionError> {
        let bad = |m: &str| Err(ConversionError::InvalidModel(m.into()));
        if !(self.free_evolution > 0.0) {
            return bad("free evolution time must be positive");
        }
        if !(self.mean_g > 0.0) {
            return bad("mean_g must be positive");
        }
        if !self.wave_vectors.iter().all(|k| *k > 0.0 && k.is_finite()) {
            return bad("wave vectors must be positive");
        }
        if !self.differential_chirp.is_finite() {
            return bad("differential chirp must be finite");
        }
        Ok(())
    }

    /// `n·T²`, s².
    fn phase_scale(&self) -> f64 {
        self.order.factor() * self.free_evolution * self.free_evolution
    }

    pub fn mean_wave_vector(&self) -> f64 {
        0.5 * (self.wave_vectors[0] + self.wave_vectors[1])
    }

    /// Apparent η produced by the wave-vector mismatch alone, `(k₁ − k₂)/k̄`.
    pub fn wave_vector_term(&self) -> f64 {
        (self.wave_vectors[0] - self.wave_vectors[1]) / self.mean_wave_vector()
    }

    /// Differential phase `Φ₁ − Φ₂` expected with no violation, rad.
    pub fn predicted_phase(&self) -> f64 {
        let [k1, k2] = self.wave_vectors;
        self.phase_scale() * ((k1 - k2) * self.mean_g + self.differential_chirp)
    }

    /// Lift a fitted phase in (0, π) onto the branch `±φ + 2πn` nearest the
    /// prediction.
    pub fn resolve_phase(&self, fitted: f64) -> Result<f64, ConversionError> {
        let predicted = self.predicted_phase();
        let lifted = [fitted, -fitted]
            .map(|p| p + TAU * ((predicted - p) / TAU).round());
        let best = if (lifted[0] - predicted).abs() <= (lifted[1] - predicted).abs() {
            lifted[0]
        } else {
            lifted[1]
        };
        let distance = (best - predicted).abs();
        if distance > FRAC_PI_2 {
            return Err(ConversionError::BranchAmbiguity {
                fitted,
                predicted,
                distance,
            });
        }
        Ok(best)
    }

    /// Raw signed η (wave-vector term included) for a resolved phase.
    pub fn eta_from_resolved(&self, resolved: f64) -> f64 {
        let differential_acceleration =
            (resolved / self.phase_scale() - self.differential_chirp) / self.mean_wave_vector();
        differential_acceleration / self.mean_g
    }
}

/// Raw signed η of one ellipse. The wave-vector term `(k₁ − k₂)/k̄` is still
/// included; it is removed as a budget correction.
pub fn phase_to_eta(fit: &EllipseFit, model: &PhaseModel) -> Result<f64, ConversionError> {
    model.validate()?;
    let resolved = model.resolve_phase(fit.differential_phase)?;
    Ok(model.eta_from_resolved(resolved))
}
