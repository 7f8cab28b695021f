//! Species constants, the equivalence-principle violation model and the
//! Mach–Zehnder phase model that ties acceleration to measured phase.
//!
//! Everything here is a pure function of its arguments.

pub mod constants;
pub mod species;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use constants::SPEED_OF_LIGHT;

pub use species::{SpeciesTable, StateSelector};

/// Default guard for the `a1 + a2` denominator of the Eötvös ratio, m/s².
pub const DEFAULT_DENOMINATOR_EPSILON: f64 = 1e-30;

/// Velocity at which the kinetic and mass–potential coupling channels reach
/// their nominal strength, m/s.
pub const REFERENCE_VELOCITY: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhysicsError {
    #[error("degenerate Eötvös denominator: |a1 + a2| = {0:e} is below epsilon")]
    DegenerateDenominator(f64),
    #[error("invalid species state `{label}`: {reason}")]
    InvalidState { label: String, reason: String },
    #[error("unknown species state `{0}`")]
    UnknownState(String),
    #[error("species table: {0}")]
    Table(String),
}

/// One isotope prepared in one hyperfine level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesState {
    pub isotope_label: String,
    /// kg
    pub inertial_mass: f64,
    pub hyperfine_f: u8,
    pub magnetic_mf: i8,
    /// Energy of this F level above the isotope's lower ground level, J.
    pub internal_energy: f64,
    /// Two-photon Raman effective wave vector, rad/m.
    pub effective_wave_vector: f64,
}

impl SpeciesState {
    pub fn validate(&self) -> Result<(), PhysicsError> {
        let fail = |reason: &str| {
            Err(PhysicsError::InvalidState {
                label: self.label(),
                reason: reason.to_string(),
            })
        };
        if !(self.inertial_mass.is_finite() && self.inertial_mass > 0.0) {
            return fail("inertial mass must be positive");
        }
        if !(self.effective_wave_vector.is_finite() && self.effective_wave_vector > 0.0) {
            return fail("effective wave vector must be positive");
        }
        if !(self.internal_energy.is_finite() && self.internal_energy >= 0.0) {
            return fail("internal energy must be non-negative");
        }
        if i16::from(self.magnetic_mf).unsigned_abs() > u16::from(self.hyperfine_f) {
            return fail("|mF| exceeds F");
        }
        Ok(())
    }

    /// `Rb87|F=1,mF=0>` style label.
    pub fn label(&self) -> String {
        format!(
            "{}|F={},mF={}>",
            self.isotope_label, self.hyperfine_f, self.magnetic_mf
        )
    }

    /// Internal energy expressed as a fraction of the rest energy, `E/(m c²)`.
    pub fn internal_energy_fraction(&self) -> f64 {
        self.internal_energy / (self.inertial_mass * SPEED_OF_LIGHT * SPEED_OF_LIGHT)
    }
}

/// Anomalous couplings of one species to gravity. All-zero means the
/// equivalence principle holds exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViolationModel {
    /// Fractional anomaly on the rest-mass energy.
    pub eta_mass: f64,
    /// Anomaly coefficient multiplying the internal energy.
    pub eta_internal: f64,
    /// Internal-energy / kinetic-energy cross term. Strength 1 gives a
    /// fractional acceleration of `E/(m c²)` at [`REFERENCE_VELOCITY`].
    pub coupling_kinetic: f64,
    /// Internal-energy / potential (time dilation) term. Strength 1 gives a
    /// fractional acceleration of `E/(m c²)`.
    pub coupling_dilation: f64,
    /// Potential / kinetic-energy cross term. Strength 1 gives a fractional
    /// acceleration of `φ/c²` at [`REFERENCE_VELOCITY`].
    pub coupling_mass_potential: f64,
}

impl ViolationModel {
    /// A model that shifts the free-fall rate by `fraction` through the
    /// rest-mass channel alone.
    pub fn mass_anomaly(fraction: f64) -> Self {
        Self {
            eta_mass: fraction,
            ..Self::default()
        }
    }

    pub fn is_null(&self) -> bool {
        *self == Self::default()
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [
            self.eta_mass,
            self.eta_internal,
            self.coupling_kinetic,
            self.coupling_dilation,
            self.coupling_mass_potential,
        ];
        if all.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err("violation coefficients must be finite".into())
        }
    }
}

/// Per-species violation models that realise a target signed Eötvös value
/// `η = 2(a₁ − a₂)/(a₁ + a₂)` exactly: `+η/2` on the first species and
/// `−η/2` on the second.
pub fn injected_violation_pair(eta: f64) -> [ViolationModel; 2] {
    [
        ViolationModel::mass_anomaly(0.5 * eta),
        ViolationModel::mass_anomaly(-0.5 * eta),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentModel {
    /// m/s²
    pub local_g: f64,
    /// Vertical gravity gradient, 1/s².
    #[serde(default)]
    pub gravity_gradient: f64,
    /// Rotation component relevant to the Coriolis phase, rad/s. Not used by
    /// the dynamics; the Coriolis budget row is a static entry.
    #[serde(default)]
    pub rotation_rate: f64,
}

impl Default for EnvironmentModel {
    fn default() -> Self {
        Self {
            // Wuhan
            local_g: 9.7936,
            gravity_gradient: 0.0,
            rotation_rate: 0.0,
        }
    }
}

impl EnvironmentModel {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.local_g.is_finite() && self.local_g > 0.0) {
            return Err("local_g must be positive".into());
        }
        if !self.gravity_gradient.is_finite() || !self.rotation_rate.is_finite() {
            return Err("gravity_gradient and rotation_rate must be finite".into());
        }
        Ok(())
    }
}

/// Gravitational mass `m_i + η_mass·m_i + η_internal·E/c²`, kg.
pub fn gravitational_mass(state: &SpeciesState, model: &ViolationModel) -> f64 {
    let m = state.inertial_mass;
    m + model.eta_mass * m + model.eta_internal * state.internal_energy / (SPEED_OF_LIGHT * SPEED_OF_LIGHT)
}

/// Free-fall acceleration of `state` at `height` above the launch point
/// while moving at `velocity`, m/s².
///
/// The local field is `g + Γ·height`. It is scaled by `m_g/m_i` and by the
/// three coupling channels of [`ViolationModel`]; the potential entering the
/// mass–potential channel is `φ = g·height`.
pub fn free_fall_acceleration(
    state: &SpeciesState,
    model: &ViolationModel,
    env: &EnvironmentModel,
    velocity: f64,
    height: f64,
) -> f64 {
    debug_assert!(velocity.abs() < 1e3);
    let field = env.local_g + env.gravity_gradient * height;
    let internal = state.internal_energy_fraction();
    let speed2 = (velocity / REFERENCE_VELOCITY).powi(2);
    let potential = env.local_g * height;

    let anomaly = model.eta_mass
        + model.eta_internal * internal
        + model.coupling_kinetic * internal * speed2
        + model.coupling_dilation * internal
        + model.coupling_mass_potential * potential / (SPEED_OF_LIGHT * SPEED_OF_LIGHT) * speed2;
    if anomaly == 0.0 {
        field
    } else {
        field * (1.0 + anomaly)
    }
}

/// Signed Eötvös parameter `2(a₁ − a₂)/(a₁ + a₂)`.
pub fn eta_signed(a1: f64, a2: f64) -> Result<f64, PhysicsError> {
    eta_signed_with_epsilon(a1, a2, DEFAULT_DENOMINATOR_EPSILON)
}

pub fn eta_signed_with_epsilon(a1: f64, a2: f64, epsilon: f64) -> Result<f64, PhysicsError> {
    let sum = a1 + a2;
    if !(sum.abs() >= epsilon) {
        return Err(PhysicsError::DegenerateDenominator(sum.abs()));
    }
    Ok(2.0 * (a1 - a2) / sum)
}

/// Unsigned Eötvös parameter `2|a₁ − a₂|/|a₁ + a₂|`.
pub fn eta_unsigned(a1: f64, a2: f64) -> Result<f64, PhysicsError> {
    eta_signed(a1, a2).map(f64::abs)
}

/// Number of photon-momentum pairs transferred per beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum DiffractionOrder {
    Single,
    /// Double diffraction, as used by the four-wave scheme.
    Double,
}

impl DiffractionOrder {
    pub fn factor(self) -> f64 {
        match self {
            Self::Single => 1.0,
            Self::Double => 2.0,
        }
    }
}

impl TryFrom<u8> for DiffractionOrder {
    type Error = String;
    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            1 => Ok(Self::Single),
            2 => Ok(Self::Double),
            other => Err(format!("diffraction order must be 1 or 2, got {other}")),
        }
    }
}

impl From<DiffractionOrder> for u8 {
    fn from(o: DiffractionOrder) -> u8 {
        match o {
            DiffractionOrder::Single => 1,
            DiffractionOrder::Double => 2,
        }
    }
}

/// Mach–Zehnder phase `n·(k_eff·a − α)·T²` for a π/2–π–π/2 sequence.
///
/// `k_eff·a − α` is formed with a single rounding so that Doppler-compensated
/// phases (where the two terms nearly cancel) keep their absolute precision.
pub fn interferometer_phase(
    state: &SpeciesState,
    acceleration: f64,
    chirp_rate: f64,
    free_evolution: f64,
    order: DiffractionOrder,
) -> f64 {
    debug_assert!(free_evolution > 0.0);
    let residual = state.effective_wave_vector.mul_add(acceleration, -chirp_rate);
    order.factor() * residual * free_evolution * free_evolution
}

#[cfg(test)]
mod tests {
    use super::*;
    use constants::*;

    fn rb87_f2() -> SpeciesState {
        SpeciesState {
            isotope_label: "Rb87".into(),
            inertial_mass: rb87_mass(),
            hyperfine_f: 2,
            magnetic_mf: 0,
            internal_energy: PLANCK * RB87_HYPERFINE_HZ,
            effective_wave_vector: 1.6e7,
        }
    }

    #[test]
    fn null_model_keeps_inertial_mass() {
        let s = rb87_f2();
        assert_eq!(gravitational_mass(&s, &ViolationModel::default()), s.inertial_mass);
    }

    #[test]
    fn internal_channel_adds_hyperfine_mass() {
        let s = rb87_f2();
        let model = ViolationModel {
            eta_internal: 1e9,
            ..Default::default()
        };
        // the excess is far below one ulp of the mass at unit coupling
        let dm = (gravitational_mass(&s, &model) - s.inertial_mass) / 1e9;
        // h·6.834 GHz / c²
        assert!((dm / 5.038_868e-41 - 1.0).abs() < 1e-6, "{dm:e}");
    }

    #[test]
    fn mass_channel_scales() {
        let s = rb87_f2();
        let m = gravitational_mass(&s, &ViolationModel::mass_anomaly(1e-9));
        assert!((m / s.inertial_mass - (1.0 + 1e-9)).abs() < 1e-15);
    }

    #[test]
    fn free_fall_examples() {
        let s = rb87_f2();
        let null = ViolationModel::default();
        let env = EnvironmentModel::default();
        assert_eq!(free_fall_acceleration(&s, &null, &env, 0.0, 0.0), env.local_g);

        let grad = EnvironmentModel {
            gravity_gradient: 3.1e-6,
            ..env
        };
        assert_eq!(
            free_fall_acceleration(&s, &null, &grad, 0.0, 1.0),
            env.local_g + 3.1e-6
        );

        let a = free_fall_acceleration(&s, &ViolationModel::mass_anomaly(1e-9), &env, 0.3, 0.5);
        assert_eq!(a, env.local_g * (1.0 + 1e-9));
    }

    #[test]
    fn coupling_channels_normalisation() {
        let s = rb87_f2();
        let env = EnvironmentModel::default();
        let frac = s.internal_energy_fraction();
        let dilation = ViolationModel {
            coupling_dilation: 1.0,
            ..Default::default()
        };
        let a = free_fall_acceleration(&s, &dilation, &env, 0.0, 0.0);
        assert!((a / env.local_g - 1.0 - frac).abs() < 1e-15);

        let kinetic = ViolationModel {
            coupling_kinetic: 1.0,
            ..Default::default()
        };
        assert_eq!(free_fall_acceleration(&s, &kinetic, &env, 0.0, 0.0), env.local_g);
        let a = free_fall_acceleration(&s, &kinetic, &env, REFERENCE_VELOCITY, 0.0);
        assert!((a / env.local_g - 1.0 - frac).abs() < 1e-15);

        let mp = ViolationModel {
            coupling_mass_potential: 1.0,
            ..Default::default()
        };
        let h = 0.8;
        let a = free_fall_acceleration(&s, &mp, &env, REFERENCE_VELOCITY, h);
        let expect = env.local_g * h / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);
        assert!((a / env.local_g - 1.0 - expect).abs() < 1e-15);
    }

    #[test]
    fn eta_examples() {
        assert_eq!(eta_signed(9.8, 9.8).unwrap(), 0.0);
        let e = eta_signed(9.8 * (1.0 + 5e-10), 9.8).unwrap();
        // 1 + 5e-10 itself carries a relative error of ~2e-7 in the excess
        assert!((e - 5e-10).abs() < 1e-15, "{e:e}");
        assert_eq!(eta_signed(3.0, 1.0).unwrap(), 1.0);
        assert_eq!(eta_unsigned(1.0, 3.0).unwrap(), 1.0);
        assert_eq!(eta_signed(1.0, 3.0).unwrap(), -1.0);
        assert!(matches!(
            eta_signed(1.0, -1.0),
            Err(PhysicsError::DegenerateDenominator(_))
        ));
        assert!(eta_signed_with_epsilon(1e-3, 1e-3, 1.0).is_err());
    }

    #[test]
    fn phase_examples() {
        let s = rb87_f2();
        let k = s.effective_wave_vector;
        let p = interferometer_phase(&s, 9.8, 0.0, 0.203, DiffractionOrder::Double);
        assert!((p - 12_923_142.4).abs() < 1e-6);
        // the chirp k·a is rounded; the phase keeps that rounding error
        let p0 = interferometer_phase(&s, 9.8, k * 9.8, 0.203, DiffractionOrder::Double);
        assert!(p0.abs() < 1e-8, "{p0:e}");
        let p1 = interferometer_phase(&s, 9.8, 1e8, 0.203, DiffractionOrder::Single);
        let p2 = interferometer_phase(&s, 9.8, 1e8, 0.203, DiffractionOrder::Double);
        assert_eq!(p2 / p1, 2.0);
    }

    #[test]
    fn diffraction_order_parsing() {
        assert_eq!(DiffractionOrder::try_from(2).unwrap(), DiffractionOrder::Double);
        assert!(DiffractionOrder::try_from(3).is_err());
    }

    #[test]
    fn injected_pair_is_exact() {
        let env = EnvironmentModel::default();
        let s = rb87_f2();
        for eta in [0.0, 5e-9, -5e-9, -8.9e-10] {
            let [m1, m2] = injected_violation_pair(eta);
            let a1 = free_fall_acceleration(&s, &m1, &env, 0.0, 0.0);
            let a2 = free_fall_acceleration(&s, &m2, &env, 0.0, 0.0);
            assert!((eta_signed(a1, a2).unwrap() - eta).abs() < 1e-15);
        }
    }

    #[test]
    fn state_validation() {
        let mut s = rb87_f2();
        assert!(s.validate().is_ok());
        s.magnetic_mf = 3;
        assert!(s.validate().is_err());
        s.magnetic_mf = 0;
        s.inertial_mass = 0.0;
        assert!(s.validate().is_err());
    }
}
