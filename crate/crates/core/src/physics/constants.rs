//! Physical constants and rubidium atomic data.
//!
//! SI-exact constants follow the 2019 SI redefinition; CODATA 2018 for the
//! rest. Rubidium data is from D. A. Steck, "Rubidium 87 D Line Data" and
//! "Rubidium 85 D Line Data" (rev. 2.2), which are the usual references for
//! cold-atom work.

use std::f64::consts::PI;

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Planck constant, J·s (exact).
pub const PLANCK: f64 = 6.626_070_15e-34;

/// Unified atomic mass unit, kg (CODATA 2018).
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

/// ⁸⁷Rb atomic mass in u.
pub const RB87_MASS_U: f64 = 86.909_180_520;
/// ⁸⁵Rb atomic mass in u.
pub const RB85_MASS_U: f64 = 84.911_789_732;

/// ⁸⁷Rb 5²S₁/₂ ground-state hyperfine splitting (F=1 ↔ F=2), Hz.
pub const RB87_HYPERFINE_HZ: f64 = 6.834_682_610_904_29e9;
/// ⁸⁵Rb 5²S₁/₂ ground-state hyperfine splitting (F=2 ↔ F=3), Hz.
pub const RB85_HYPERFINE_HZ: f64 = 3.035_732_439_0e9;

/// ⁸⁷Rb D2 line (5²S₁/₂ → 5²P₃/₂) centre frequency, Hz.
pub const RB87_D2_HZ: f64 = 384.230_484_468_5e12;

/// Frequency of the Raman laser shared by both species, Hz.
///
/// Each species is driven by this common beam plus a partner beam blue-shifted
/// by that species' ground hyperfine splitting, so the counter-propagating
/// pair transfers `2π(2ν + ν_hf)/c`. Only the hyperfine splittings differ
/// between the isotopes, which is where the differential wave vector comes
/// from. The exact detuning of the common beam changes the result at the
/// 10⁻¹⁶ level and is not modelled.
pub const RAMAN_COMMON_HZ: f64 = RB87_D2_HZ;

/// Two-photon effective wave vector for a counter-propagating Raman pair made
/// of `common_hz` and `common_hz + hyperfine_hz`, rad/m.
pub fn raman_effective_wave_vector(common_hz: f64, hyperfine_hz: f64) -> f64 {
    2.0 * PI * (2.0 * common_hz + hyperfine_hz) / SPEED_OF_LIGHT
}

/// ⁸⁷Rb inertial mass, kg.
pub fn rb87_mass() -> f64 {
    RB87_MASS_U * ATOMIC_MASS_UNIT
}

/// ⁸⁵Rb inertial mass, kg.
pub fn rb85_mass() -> f64 {
    RB85_MASS_U * ATOMIC_MASS_UNIT
}

/// ⁸⁷Rb effective Raman wave vector, rad/m.
pub fn rb87_k_eff() -> f64 {
    raman_effective_wave_vector(RAMAN_COMMON_HZ, RB87_HYPERFINE_HZ)
}

/// ⁸⁵Rb effective Raman wave vector, rad/m.
pub fn rb85_k_eff() -> f64 {
    raman_effective_wave_vector(RAMAN_COMMON_HZ, RB85_HYPERFINE_HZ)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_eff_magnitudes() {
        // 2 × 2π/780 nm
        assert!((rb87_k_eff() - 1.610_589_42e7).abs() < 1.0);
        assert!((rb85_k_eff() - 1.610_581_46e7).abs() < 1.0);
        assert!(rb87_k_eff() > rb85_k_eff());
    }

    #[test]
    fn hyperfine_energy_as_mass() {
        let m = PLANCK * RB87_HYPERFINE_HZ / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);
        assert!((m - 5.038_867_93e-41).abs() < 1e-49);
    }
}
