//! Fountain sequence simulation: state selection, the dual-species
//! π/2–π–π/2 interferometer, common-mode vibration, detection noise and
//! readout.
//!
//! Randomness is derived per shot from `(root seed, ellipse index, shot
//! index)`, so a campaign is bitwise identical however it is scheduled.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, PI, TAU};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{
    free_fall_acceleration, interferometer_phase, DiffractionOrder, EnvironmentModel, SpeciesState,
    ViolationModel,
};

/// Fewest points that determine a conic.
pub const MIN_SHOTS_PER_ELLIPSE: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SequenceError {
    #[error("unknown hyperfine state F={0} for state selection")]
    UnknownState(u8),
    #[error("invalid populations: {0}")]
    InvalidPopulations(String),
    #[error("invalid sequence configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequenceConfig {
    /// m/s
    pub launch_velocity: f64,
    /// Pulse separation `T`, s.
    pub free_evolution: f64,
    /// Launch to first π/2 pulse, s.
    pub pulse_timing_offset: f64,
    pub shots_per_ellipse: usize,
    /// s
    pub ellipse_period: f64,
    pub num_ellipses: usize,
    /// Increment of the second π/2 pulse phase between shots. Defaults to a
    /// uniform sweep of one turn per ellipse.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan_phase_step: Option<f64>,
    pub diffraction_order: DiffractionOrder,
    /// Common Doppler-compensation chirp, rad/s². Defaults to `k₁·g`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chirp_rate: Option<f64>,
    /// Extra chirp on the second species only, rad/s². Defaults to the value
    /// that puts the differential phase at π/2 (mod 2π).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub differential_chirp: Option<f64>,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            launch_velocity: 4.0,
            free_evolution: 0.203,
            pulse_timing_offset: 0.205,
            shots_per_ellipse: 40,
            ellipse_period: 140.0,
            num_ellipses: 520,
            scan_phase_step: None,
            diffraction_order: DiffractionOrder::Double,
            chirp_rate: None,
            differential_chirp: None,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<(), SequenceError> {
        let bad = |m: String| Err(SequenceError::InvalidConfig(m));
        if !(self.free_evolution > 0.0 && self.free_evolution.is_finite()) {
            return bad("free_evolution must be positive".into());
        }
        if !(self.launch_velocity.abs() < 1e3) {
            return bad("launch_velocity must be below 1000 m/s".into());
        }
        if !(self.pulse_timing_offset >= 0.0 && self.pulse_timing_offset.is_finite()) {
            return bad("pulse_timing_offset must be non-negative".into());
        }
        if self.shots_per_ellipse < MIN_SHOTS_PER_ELLIPSE {
            return bad(format!(
                "shots_per_ellipse must be at least {MIN_SHOTS_PER_ELLIPSE}, got {}",
                self.shots_per_ellipse
            ));
        }
        if self.num_ellipses == 0 {
            return bad("num_ellipses must be at least 1".into());
        }
        let needed = self.shots_per_ellipse as f64 * self.cycle_time();
        if !(self.ellipse_period >= needed) {
            return bad(format!(
                "ellipse_period {} s is shorter than {} shots × {:.3} s cycle",
                self.ellipse_period,
                self.shots_per_ellipse,
                self.cycle_time()
            ));
        }
        for (name, v) in [
            ("scan_phase_step", self.scan_phase_step),
            ("chirp_rate", self.chirp_rate),
            ("differential_chirp", self.differential_chirp),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return bad(format!("{name} must be finite"));
            }
        }
        Ok(())
    }

    /// Shortest possible shot: launch to the last pulse.
    pub fn cycle_time(&self) -> f64 {
        self.pulse_timing_offset + 2.0 * self.free_evolution
    }

    pub fn shot_spacing(&self) -> f64 {
        self.ellipse_period / self.shots_per_ellipse as f64
    }

    pub fn scan_step(&self) -> f64 {
        self.scan_phase_step
            .unwrap_or(TAU / self.shots_per_ellipse as f64)
    }

    pub fn total_shots(&self) -> usize {
        self.shots_per_ellipse * self.num_ellipses
    }

    /// Time of the central π pulse after launch, s.
    pub fn mirror_pulse_time(&self) -> f64 {
        self.pulse_timing_offset + self.free_evolution
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    /// Common mirror-vibration phase noise on the first species, rad.
    pub vibration_phase_sigma: f64,
    /// Additive population noise per species per shot.
    pub detection_sigma: f64,
    pub contrast_87: f64,
    pub contrast_85: f64,
    pub offset_87: f64,
    pub offset_85: f64,
    /// Fraction of wrong-state atoms surviving the blow-away pulse.
    pub state_prep_leakage: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            vibration_phase_sigma: 0.0,
            detection_sigma: 0.0,
            contrast_87: 0.6,
            contrast_85: 0.5,
            offset_87: 0.5,
            offset_85: 0.5,
            state_prep_leakage: 0.0,
        }
    }

    /// Noise levels giving a per-ellipse η scatter of about 1.44×10⁻⁹ with
    /// the default sequence; the detection level was calibrated by Monte
    /// Carlo with this vibration level.
    pub fn calibrated() -> Self {
        Self {
            vibration_phase_sigma: 1.0,
            detection_sigma: 0.0109,
            ..Self::noiseless()
        }
    }

    pub fn validate(&self) -> Result<(), SequenceError> {
        let bad = |m: &str| Err(SequenceError::InvalidConfig(m.to_string()));
        if !(self.vibration_phase_sigma >= 0.0 && self.detection_sigma >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        if !self.vibration_phase_sigma.is_finite() || !self.detection_sigma.is_finite() {
            return bad("noise sigmas must be finite");
        }
        for c in [self.contrast_87, self.contrast_85] {
            if !(c > 0.0 && c <= 1.0) {
                return bad("contrasts must lie in (0, 1]");
            }
        }
        for o in [self.offset_87, self.offset_85] {
            if !(0.0..=1.0).contains(&o) {
                return bad("offsets must lie in [0, 1]");
            }
        }
        if !(0.0..1.0).contains(&self.state_prep_leakage) {
            return bad("state_prep_leakage must lie in [0, 1)");
        }
        Ok(())
    }

    fn contrasts(&self) -> [f64; 2] {
        [self.contrast_87, self.contrast_85]
    }

    fn offsets(&self) -> [f64; 2] {
        [self.offset_87, self.offset_85]
    }
}

/// The π–blow-away–π–repump preparation addressed at one hyperfine level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateSelection {
    pub target_f: u8,
    pub leakage: f64,
}

/// Populations after state selection, renormalised to the detected atoms.
///
/// The first π pulse moves the velocity class in `target_f` out of the way,
/// the blow-away clears everything else down to `leakage` of its population,
/// and the second π pulse plus repump return the survivors. Atoms outside the
/// velocity class are not detected and drop out of the normalisation.
pub fn select_state(
    initial: &BTreeMap<u8, f64>,
    selection: &StateSelection,
) -> Result<BTreeMap<u8, f64>, SequenceError> {
    if initial.is_empty() {
        return Ok(BTreeMap::new());
    }
    if initial.values().any(|p| !(*p >= 0.0)) {
        return Err(SequenceError::InvalidPopulations(
            "fractions must be non-negative".into(),
        ));
    }
    let sum: f64 = initial.values().sum();
    if sum > 1.0 + 1e-12 {
        return Err(SequenceError::InvalidPopulations(format!(
            "fractions sum to {sum} > 1"
        )));
    }
    if !initial.contains_key(&selection.target_f) {
        return Err(SequenceError::UnknownState(selection.target_f));
    }
    if !(0.0..1.0).contains(&selection.leakage) {
        return Err(SequenceError::InvalidPopulations(
            "leakage must lie in [0, 1)".into(),
        ));
    }

    let survived: BTreeMap<u8, f64> = initial
        .iter()
        .map(|(&f, &p)| {
            let kept = if f == selection.target_f {
                p
            } else {
                p * selection.leakage
            };
            (f, kept)
        })
        .collect();
    let detected: f64 = survived.values().sum();
    if detected == 0.0 {
        return Err(SequenceError::InvalidPopulations(
            "no atoms survive state selection".into(),
        ));
    }
    Ok(survived.into_iter().map(|(f, p)| (f, p / detected)).collect())
}

/// Thermal `(2F+1)` weights over the listed hyperfine levels.
pub fn degeneracy_populations(levels: &[u8]) -> BTreeMap<u8, f64> {
    let total: f64 = levels.iter().map(|&f| 2.0 * f as f64 + 1.0).sum();
    levels
        .iter()
        .map(|&f| (f, (2.0 * f as f64 + 1.0) / total))
        .collect()
}

/// Two-port readout `offset + (contrast/2)·cos(phase)`, clamped to [0, 1].
pub fn fringe_population(total_phase: f64, contrast: f64, offset: f64) -> f64 {
    (offset + 0.5 * contrast * total_phase.cos()).clamp(0.0, 1.0)
}

/// One shot's detected populations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub ellipse_index: usize,
    /// Global shot counter across the campaign.
    pub shot_index: usize,
    /// s since the start of the campaign.
    pub timestamp: f64,
    pub scan_phase: f64,
    pub pop_87: f64,
    pub pop_85: f64,
}

impl ShotRecord {
    pub fn point(&self) -> [f64; 2] {
        [self.pop_87, self.pop_85]
    }
}

/// Everything needed to simulate the dual-species interferometer.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub species: [SpeciesState; 2],
    pub violation: [ViolationModel; 2],
    pub environment: EnvironmentModel,
    pub sequence: SequenceConfig,
    pub noise: NoiseConfig,
    /// Hyperfine levels of each isotope, used for state-selection purity.
    /// An empty list means perfect selection.
    pub levels: [Vec<u8>; 2],
}

/// Per-shot constants derived once from an [`Experiment`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreparedExperiment {
    /// Interferometer phase of each species without scan or noise, rad.
    pub base_phase: [f64; 2],
    pub contrast: [f64; 2],
    pub offset: [f64; 2],
    /// Vibration scaling `k₂/k₁` applied to the second species.
    pub vibration_ratio: f64,
    pub accelerations: [f64; 2],
    pub chirp_rate: f64,
    pub differential_chirp: f64,
    noise_vibration: f64,
    noise_detection: f64,
    scan_step: f64,
    shots_per_ellipse: usize,
    shot_spacing: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Shot {
    pub record: ShotRecord,
    /// Populations clamped into [0, 1] in this shot (0–2).
    pub clamp_events: u32,
}

impl Experiment {
    pub fn validate(&self) -> Result<(), SequenceError> {
        for s in &self.species {
            s.validate()
                .map_err(|e| SequenceError::InvalidConfig(e.to_string()))?;
        }
        for v in &self.violation {
            v.validate().map_err(SequenceError::InvalidConfig)?;
        }
        self.environment
            .validate()
            .map_err(SequenceError::InvalidConfig)?;
        self.sequence.validate()?;
        self.noise.validate()
    }

    /// Velocity and height above launch at the central π pulse.
    pub fn mirror_pulse_kinematics(&self) -> (f64, f64) {
        let g = self.environment.local_g;
        let t = self.sequence.mirror_pulse_time();
        let v0 = self.sequence.launch_velocity;
        (v0 - g * t, v0 * t - 0.5 * g * t * t)
    }

    /// Common chirp actually applied, rad/s².
    pub fn chirp_rate(&self) -> f64 {
        self.sequence
            .chirp_rate
            .unwrap_or(self.species[0].effective_wave_vector * self.environment.local_g)
    }

    /// Differential phase `Φ₁ − Φ₂` expected for a violation-free world at the
    /// nominal `g`, before any differential chirp, rad.
    pub fn wave_vector_phase(&self) -> f64 {
        let [s1, s2] = &self.species;
        let t = self.sequence.free_evolution;
        self.sequence.diffraction_order.factor()
            * (s1.effective_wave_vector - s2.effective_wave_vector)
            * self.environment.local_g
            * t
            * t
    }

    /// Differential chirp applied to the second species, rad/s².
    pub fn differential_chirp(&self) -> f64 {
        self.sequence
            .differential_chirp
            .unwrap_or_else(|| self.operating_point_chirp())
    }

    /// Smallest differential chirp placing the differential phase at π/2
    /// (mod 2π), where ellipse fitting is least biased.
    pub fn operating_point_chirp(&self) -> f64 {
        let t = self.sequence.free_evolution;
        let scale = self.sequence.diffraction_order.factor() * t * t;
        let base = self.wave_vector_phase();
        let turns = ((base - FRAC_PI_2) / TAU).round();
        let target = FRAC_PI_2 + TAU * turns;
        (target - base) / scale
    }

    pub fn selection_purity(&self, which: usize) -> f64 {
        let levels = &self.levels[which];
        if levels.is_empty() {
            return 1.0;
        }
        let sel = StateSelection {
            target_f: self.species[which].hyperfine_f,
            leakage: self.noise.state_prep_leakage,
        };
        select_state(&degeneracy_populations(levels), &sel)
            .ok()
            .and_then(|m| m.get(&sel.target_f).copied())
            .unwrap_or(1.0)
    }

    pub fn prepare(&self) -> Result<PreparedExperiment, SequenceError> {
        self.validate()?;
        let (velocity, height) = self.mirror_pulse_kinematics();
        let order = self.sequence.diffraction_order;
        let t = self.sequence.free_evolution;
        let chirp = self.chirp_rate();
        let dchirp = self.differential_chirp();

        let accel = |i: usize| {
            free_fall_acceleration(
                &self.species[i],
                &self.violation[i],
                &self.environment,
                velocity,
                height,
            )
        };
        let accelerations = [accel(0), accel(1)];
        let phase = |i: usize| {
            interferometer_phase(&self.species[i], accelerations[i], chirp, t, order)
        };
        let base_phase = [phase(0), phase(1) - order.factor() * dchirp * t * t];

        let contrasts = self.noise.contrasts();
        Ok(PreparedExperiment {
            base_phase,
            contrast: [
                contrasts[0] * self.selection_purity(0),
                contrasts[1] * self.selection_purity(1),
            ],
            offset: self.noise.offsets(),
            vibration_ratio: self.species[1].effective_wave_vector
                / self.species[0].effective_wave_vector,
            accelerations,
            chirp_rate: chirp,
            differential_chirp: dchirp,
            noise_vibration: self.noise.vibration_phase_sigma,
            noise_detection: self.noise.detection_sigma,
            scan_step: self.sequence.scan_step(),
            shots_per_ellipse: self.sequence.shots_per_ellipse,
            shot_spacing: self.sequence.shot_spacing(),
        })
    }
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the generator for one shot: `mix(mix(mix(root) ^ ellipse) ^ shot)`.
pub fn shot_seed(root: u64, ellipse_index: u64, shot_in_ellipse: u64) -> u64 {
    mix64(mix64(mix64(root) ^ ellipse_index) ^ shot_in_ellipse)
}

impl PreparedExperiment {
    /// Simulate shot `shot_in_ellipse` of ellipse `ellipse_index`.
    pub fn shot(&self, root_seed: u64, ellipse_index: usize, shot_in_ellipse: usize) -> Shot {
        let mut rng = ChaCha8Rng::seed_from_u64(shot_seed(
            root_seed,
            ellipse_index as u64,
            shot_in_ellipse as u64,
        ));
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        // fixed draw order: vibration, detector 1, detector 2
        let vib = normal() * self.noise_vibration;
        let det = [
            normal() * self.noise_detection,
            normal() * self.noise_detection,
        ];

        let scan = wrap_phase(shot_in_ellipse as f64 * self.scan_step);
        let vib_phase = [vib, vib * self.vibration_ratio];
        let mut clamp_events = 0;
        let mut pops = [0.0; 2];
        for i in 0..2 {
            let phase = self.base_phase[i] + scan + vib_phase[i];
            let raw = self.offset[i] + 0.5 * self.contrast[i] * phase.cos() + det[i];
            if !(0.0..=1.0).contains(&raw) {
                clamp_events += 1;
            }
            pops[i] = raw.clamp(0.0, 1.0);
        }

        let shot_index = ellipse_index * self.shots_per_ellipse + shot_in_ellipse;
        Shot {
            record: ShotRecord {
                ellipse_index,
                shot_index,
                timestamp: shot_index as f64 * self.shot_spacing,
                scan_phase: scan,
                pop_87: pops[0],
                pop_85: pops[1],
            },
            clamp_events,
        }
    }
}

/// Fold a phase into [0, 2π).
fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Simulate a single shot addressed by its global index.
pub fn simulate_shot(
    experiment: &Experiment,
    root_seed: u64,
    shot_index: usize,
) -> Result<Shot, SequenceError> {
    let prepared = experiment.prepare()?;
    let n = experiment.sequence.shots_per_ellipse;
    Ok(prepared.shot(root_seed, shot_index / n, shot_index % n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CampaignWarning {
    /// Ellipses carry only the minimum number of points for a conic.
    MinimalGroupSize,
    /// Some populations were clamped into [0, 1].
    PopulationsClamped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseGroup {
    pub ellipse_index: usize,
    pub shots: Vec<ShotRecord>,
}

impl EllipseGroup {
    pub fn points(&self) -> Vec<[f64; 2]> {
        self.shots.iter().map(ShotRecord::point).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Campaign {
    pub ellipses: Vec<EllipseGroup>,
    pub clamp_events: u64,
    pub warnings: Vec<CampaignWarning>,
}

impl Campaign {
    pub fn records(&self) -> impl Iterator<Item = &ShotRecord> + '_ {
        self.ellipses.iter().flat_map(|e| e.shots.iter())
    }

    pub fn len(&self) -> usize {
        self.ellipses.iter().map(|e| e.shots.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Simulate `num_ellipses × shots_per_ellipse` shots. Ellipses are generated
/// in parallel; output order and contents depend only on the seed.
pub fn simulate_campaign(experiment: &Experiment, root_seed: u64) -> Result<Campaign, SequenceError> {
    let prepared = experiment.prepare()?;
    let seq = &experiment.sequence;
    let per = seq.shots_per_ellipse;

    let groups: Vec<(EllipseGroup, u64)> = (0..seq.num_ellipses)
        .into_par_iter()
        .map(|e| {
            let mut clamps = 0u64;
            let shots = (0..per)
                .map(|s| {
                    let shot = prepared.shot(root_seed, e, s);
                    clamps += u64::from(shot.clamp_events);
                    shot.record
                })
                .collect();
            (
                EllipseGroup {
                    ellipse_index: e,
                    shots,
                },
                clamps,
            )
        })
        .collect();

    let clamp_events = groups.iter().map(|(_, c)| c).sum();
    let mut warnings = Vec::new();
    if per == MIN_SHOTS_PER_ELLIPSE {
        warnings.push(CampaignWarning::MinimalGroupSize);
    }
    if clamp_events > 0 {
        warnings.push(CampaignWarning::PopulationsClamped);
    }
    Ok(Campaign {
        ellipses: groups.into_iter().map(|(g, _)| g).collect(),
        clamp_events,
        warnings,
    })
}

/// Closed-form point on the noiseless ellipse at scan phase `scan`.
pub fn ideal_point(prepared: &PreparedExperiment, scan: f64) -> [f64; 2] {
    let p = |i: usize| prepared.offset[i] + 0.5 * prepared.contrast[i] * (prepared.base_phase[i] + scan).cos();
    [p(0), p(1)]
}

/// Differential phase `Φ₁ − Φ₂` of the noiseless readout, rad.
pub fn differential_phase(prepared: &PreparedExperiment) -> f64 {
    prepared.base_phase[0] - prepared.base_phase[1]
}

/// Differential phase folded into [0, π], which is all an ellipse can show.
pub fn folded_phase(phase: f64) -> f64 {
    let w = phase.rem_euclid(TAU);
    if w > PI {
        TAU - w
    } else {
        w
    }
}
