use proptest::prelude::*;

use wep_core::physics::constants::SPEED_OF_LIGHT;
use wep_core::physics::{
    eta_signed, eta_unsigned, free_fall_acceleration, gravitational_mass, interferometer_phase,
    DiffractionOrder, EnvironmentModel, SpeciesState, SpeciesTable, StateSelector, ViolationModel,
};

fn rb87_upper() -> SpeciesState {
    SpeciesTable::builtin()
        .resolve(&StateSelector::new("Rb87", 2, 0))
        .unwrap()
}

proptest! {
    #[test]
    fn eta_is_antisymmetric(a1 in 1.0f64..20.0, a2 in 1.0f64..20.0) {
        let forward = eta_signed(a1, a2).unwrap();
        let back = eta_signed(a2, a1).unwrap();
        prop_assert_eq!(forward, -back);
        prop_assert_eq!(eta_unsigned(a1, a2).unwrap(), eta_unsigned(a2, a1).unwrap());
        prop_assert_eq!(eta_unsigned(a1, a2).unwrap(), forward.abs());
    }

    #[test]
    fn eta_vanishes_for_equal_accelerations(a in -50.0f64..50.0) {
        prop_assume!(a.abs() > 1e-3);
        prop_assert_eq!(eta_signed(a, a).unwrap(), 0.0);
    }

    // m_g is affine in the internal-energy coefficient with slope E/c²
    #[test]
    fn internal_energy_slope(h in 1e12f64..1e14) {
        let s = rb87_upper();
        let at = |eta_internal: f64| gravitational_mass(&s, &ViolationModel { eta_internal, ..Default::default() });
        let slope = (at(h) - at(0.0)) / h;
        let expect = s.internal_energy / (SPEED_OF_LIGHT * SPEED_OF_LIGHT);
        prop_assert!((slope / expect - 1.0).abs() < 1e-10, "{} vs {}", slope, expect);
    }

    #[test]
    fn phase_is_linear_in_acceleration(a in 9.0f64..10.5, da in -1e-3f64..1e-3, chirp in 1.5e8f64..1.6e8) {
        let s = rb87_upper();
        let t = 0.203;
        let p = |acc: f64| interferometer_phase(&s, acc, chirp, t, DiffractionOrder::Double);
        let lhs = p(a + da) - p(a);
        let rhs = 2.0 * s.effective_wave_vector * da * t * t;
        prop_assert!((lhs - rhs).abs() <= 1e-9 * p(a).abs().max(1.0), "{} vs {}", lhs, rhs);
    }

    #[test]
    fn phase_scales_with_t_squared(a in 9.0f64..10.5, t in 0.01f64..0.5) {
        let s = rb87_upper();
        let p1 = interferometer_phase(&s, a, 0.0, t, DiffractionOrder::Single);
        let p2 = interferometer_phase(&s, a, 0.0, 2.0 * t, DiffractionOrder::Single);
        prop_assert!((p2 / p1 - 4.0).abs() < 1e-14);
    }

    #[test]
    fn mass_anomaly_is_common_to_all_states(eta in -1e-8f64..1e-8, v in -5.0f64..5.0, h in 0.0f64..1.0) {
        let env = EnvironmentModel::default();
        let table = SpeciesTable::builtin();
        let model = ViolationModel::mass_anomaly(eta);
        let reference = free_fall_acceleration(&rb87_upper(), &model, &env, v, h);
        for rec in &table.states {
            let s = table.resolve(&StateSelector::new(&rec.isotope, rec.f, 0)).unwrap();
            prop_assert_eq!(free_fall_acceleration(&s, &model, &env, v, h), reference);
        }
    }
}

#[test]
fn null_model_is_universal() {
    let env = EnvironmentModel::default();
    let table = SpeciesTable::builtin();
    let null = ViolationModel::default();
    for rec in &table.states {
        let s = table.resolve(&StateSelector::new(&rec.isotope, rec.f, 0)).unwrap();
        assert_eq!(free_fall_acceleration(&s, &null, &env, 1.3, 0.7), env.local_g + env.gravity_gradient * 0.7);
    }
}
