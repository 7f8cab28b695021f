//! Stage orchestration: simulate, analyze, budget and end-to-end runs, with
//! their persisted artefacts.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budget::{
    self, combine_budget, gravity_gradient_correction, replace_entry, wave_vector_correction,
    with_raw, BudgetEntry, EtaEstimate,
};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::estimation::{
    allan_deviation, fit_ellipse, fit_tau_slope, phase_to_eta, AllanPoint, EllipseFit, EtaSeries,
    PhaseModel, TauSlope,
};
use crate::io::{self, EtaRow};
use crate::sequence::{simulate_campaign, CampaignWarning, EllipseGroup, ShotRecord};

pub const SHOTS_FILE: &str = "shots.csv";
pub const FITS_FILE: &str = "fits.json";
pub const ETA_FILE: &str = "eta_series.csv";
pub const ALLAN_FILE: &str = "allan.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ANALYSIS_FILE: &str = "analysis.json";
pub const REPORT_JSON_FILE: &str = "report.json";
pub const REPORT_TEXT_FILE: &str = "report.txt";
pub const FRINGE_PLOT_FILE: &str = "fringe_points.csv";
pub const ALLAN_PLOT_FILE: &str = "allan_loglog.csv";

/// The statistical uncertainty is read off the Allan curve at the longest
/// octave τ still averaged over at least this many independent clusters.
pub const MIN_CLUSTERS_FOR_UNCERTAINTY: usize = 8;

/// Population samples on the plotted fit curve.
const PLOT_CURVE_SAMPLES: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseResult {
    pub ellipse_index: usize,
    /// Timestamp of the group's first shot, s.
    pub time: f64,
    pub fit: EllipseFit,
    pub eta_raw: f64,
    pub eta_corrected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailedEllipse {
    pub ellipse_index: usize,
    pub reason: String,
}

/// Everything derived from a set of ellipse groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Analysis {
    pub ellipses: Vec<EllipseResult>,
    pub failed: Vec<FailedEllipse>,
    pub allan: Vec<AllanPoint>,
    pub slope: Option<TauSlope>,
    pub wave_vector_term: f64,
    pub mean_eta_raw: f64,
    pub mean_eta_corrected: f64,
    pub standard_error: f64,
    /// Allan deviation at `statistical_tau`, or the standard error when the
    /// series is too short for any Allan point to qualify.
    pub statistical_uncertainty: f64,
    pub statistical_tau: Option<f64>,
}

impl Analysis {
    pub fn eta_rows(&self) -> Vec<EtaRow> {
        self.ellipses
            .iter()
            .map(|e| EtaRow {
                ellipse_index: e.ellipse_index,
                time: e.time,
                eta_raw: e.eta_raw,
                eta_corrected: e.eta_corrected,
            })
            .collect()
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n_ellipses": self.ellipses.len() + self.failed.len(),
            "n_fitted": self.ellipses.len(),
            "failed": self.failed,
            "wave_vector_term": self.wave_vector_term,
            "mean_eta_raw": self.mean_eta_raw,
            "mean_eta_corrected": self.mean_eta_corrected,
            "standard_error": self.standard_error,
            "statistical_uncertainty": self.statistical_uncertainty,
            "statistical_tau_s": self.statistical_tau,
            "allan_slope": self.slope,
        })
    }
}

fn fit_group(group: &EllipseGroup, model: &PhaseModel) -> std::result::Result<EllipseResult, String> {
    let first = group.shots.first().ok_or("empty group")?;
    let fit = fit_ellipse(&group.points()).map_err(|e| e.to_string())?;
    let eta_raw = phase_to_eta(&fit, model).map_err(|e| e.to_string())?;
    Ok(EllipseResult {
        ellipse_index: group.ellipse_index,
        time: first.timestamp,
        fit,
        eta_raw,
        eta_corrected: eta_raw - model.wave_vector_term(),
    })
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Fit every group, convert to η and characterise the series. Groups that
/// cannot be fitted are dropped and listed in [`Analysis::failed`]; the
/// remaining values are treated as a uniformly spaced series.
pub fn analyze_groups(
    groups: &[EllipseGroup],
    model: &PhaseModel,
    sample_interval: f64,
) -> Result<Analysis> {
    let outcomes: Vec<_> = groups.par_iter().map(|g| (g.ellipse_index, fit_group(g, model))).collect();
    let mut ellipses = Vec::new();
    let mut failed = Vec::new();
    for (ellipse_index, outcome) in outcomes {
        match outcome {
            Ok(r) => ellipses.push(r),
            Err(reason) => {
                log::warn!("ellipse {ellipse_index} skipped: {reason}");
                failed.push(FailedEllipse {
                    ellipse_index,
                    reason,
                });
            }
        }
    }
    if ellipses.is_empty() {
        return Err(match failed.first() {
            Some(f) => Error::Data(format!("no ellipse could be fitted (first failure: {})", f.reason)),
            None => Error::Data("no shot data".into()),
        });
    }

    let raw: Vec<f64> = ellipses.iter().map(|e| e.eta_raw).collect();
    let corrected: Vec<f64> = ellipses.iter().map(|e| e.eta_corrected).collect();
    let series = EtaSeries::new(raw.clone(), sample_interval)?;
    let allan = allan_deviation(&series, &series.octave_taus()).points;
    let slope = if allan.len() >= 2 {
        fit_tau_slope(&allan).ok()
    } else {
        None
    };
    let standard_error = if raw.len() > 1 { series.standard_error() } else { 0.0 };
    let qualified = allan
        .iter()
        .rfind(|p| {
            let m = (p.tau / sample_interval).round() as usize;
            raw.len() >= MIN_CLUSTERS_FOR_UNCERTAINTY * m
        });
    let (statistical_uncertainty, statistical_tau) = match qualified {
        Some(p) => (p.deviation, Some(p.tau)),
        None => (standard_error, None),
    };
    Ok(Analysis {
        wave_vector_term: model.wave_vector_term(),
        mean_eta_raw: mean(&raw),
        mean_eta_corrected: mean(&corrected),
        standard_error,
        statistical_uncertainty,
        statistical_tau,
        ellipses,
        failed,
        allan,
        slope,
    })
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(path)
}

fn json_text(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serialisable");
    s.push('\n');
    s
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

/// Outputs of [`run_simulate`].
#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub groups: Vec<EllipseGroup>,
    pub analysis: Analysis,
    pub warnings: Vec<CampaignWarning>,
    pub clamp_events: u64,
}

/// Simulate the campaign and persist shots, per-ellipse fits, the η series
/// and a summary. The analysis runs on the populations as stored in the CSV,
/// so re-analysing the file reproduces these outputs.
pub fn simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    cfg.validate("config")?;
    let experiment = cfg.experiment()?;
    let campaign = simulate_campaign(&experiment, cfg.seed)?;
    for w in &campaign.warnings {
        log::warn!("campaign: {w:?}");
    }
    let groups: Vec<EllipseGroup> = campaign
        .ellipses
        .iter()
        .map(|g| EllipseGroup {
            ellipse_index: g.ellipse_index,
            shots: g.shots.iter().map(io::quantize_record).collect(),
        })
        .collect();
    let model = cfg.phase_model()?;
    let analysis = analyze_groups(&groups, &model, cfg.sequence.ellipse_period)?;
    Ok(SimulateOutput {
        groups,
        analysis,
        warnings: campaign.warnings,
        clamp_events: campaign.clamp_events,
    })
}

fn simulate_summary(cfg: &RunConfig, out: &SimulateOutput) -> serde_json::Value {
    let mut v = out.analysis.summary_json();
    let obj = v.as_object_mut().expect("object");
    obj.insert("seed".into(), cfg.seed.into());
    obj.insert("n_shots".into(), out.groups.iter().map(|g| g.shots.len()).sum::<usize>().into());
    obj.insert("clamp_events".into(), out.clamp_events.into());
    obj.insert("warnings".into(), serde_json::json!(out.warnings));
    v
}

fn write_simulation(dir: &Path, cfg: &RunConfig, out: &SimulateOutput) -> Result<()> {
    let records: Vec<&ShotRecord> = out.groups.iter().flat_map(|g| g.shots.iter()).collect();
    write(dir, SHOTS_FILE, &io::shots_to_csv(records))?;
    write(dir, FITS_FILE, &json_text(&out.analysis.ellipses))?;
    write(dir, ETA_FILE, &io::eta_to_csv(&out.analysis.eta_rows()))?;
    write(dir, SUMMARY_FILE, &json_text(&simulate_summary(cfg, out)))?;
    Ok(())
}

/// `simulate` stage: writes shots, fits, η series and summary to `output_dir`.
pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    let out = simulate(cfg)?;
    ensure_dir(&cfg.output_dir)?;
    write_simulation(&cfg.output_dir, cfg, &out)?;
    Ok(out)
}

/// `analyze` stage on a shot CSV: writes the η series, Allan curve and
/// analysis report to `output_dir`.
pub fn run_analyze(shot_csv: &Path, cfg: &RunConfig) -> Result<Analysis> {
    cfg.validate("config")?;
    let records = io::read_shots(shot_csv)?;
    if records.is_empty() {
        return Err(Error::Data(format!("{}: no shot records", shot_csv.display())));
    }
    let groups = io::group_shots(&records);
    let model = cfg.phase_model()?;
    let analysis = analyze_groups(&groups, &model, cfg.sequence.ellipse_period)?;
    ensure_dir(&cfg.output_dir)?;
    write(&cfg.output_dir, ETA_FILE, &io::eta_to_csv(&analysis.eta_rows()))?;
    write(&cfg.output_dir, ALLAN_FILE, &io::allan_to_csv(&analysis.allan))?;
    write(&cfg.output_dir, ANALYSIS_FILE, &json_text(&analysis.summary_json()))?;
    Ok(analysis)
}

/// Raw measurement row supplied on the command line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawOverride {
    pub value: f64,
    pub uncertainty: f64,
}

/// `budget` stage: combine a budget file (shipped table when `None`),
/// optionally replacing its raw row.
pub fn run_budget(budget_file: Option<&Path>, raw: Option<RawOverride>) -> Result<EtaEstimate> {
    let mut entries = match budget_file {
        Some(p) => budget::load_budget(p)?,
        None => budget::shipped_budget(),
    };
    if let Some(r) = raw {
        let name = entries
            .iter()
            .find(|e| e.is_raw())
            .map_or(budget::RAW_ENTRY.to_string(), |e| e.name.clone());
        entries = with_raw(&entries, BudgetEntry::raw(name, r.value, r.uncertainty)?);
    }
    Ok(combine_budget(&entries)?)
}

/// Outputs of [`run_e2e`].
#[derive(Debug, Clone, PartialEq)]
pub struct E2eOutput {
    pub simulation: SimulateOutput,
    pub estimate: EtaEstimate,
}

/// Budget rows the pipeline derives itself, replacing file rows of the same
/// name when present.
fn derived_rows(cfg: &RunConfig, analysis: &Analysis) -> Result<Vec<BudgetEntry>> {
    let exp = cfg.experiment()?;
    let wave = wave_vector_correction(
        [&exp.species[0], &exp.species[1]],
        cfg.environment.local_g,
        cfg.budget.g_uncertainty,
    )?;
    let mut env = cfg.environment;
    env.gravity_gradient = cfg.budget.gravity_gradient;
    let gradient = gravity_gradient_correction(&env, &cfg.budget.trajectory, cfg.sequence.free_evolution)?;
    debug_assert!((wave.correction - analysis.wave_vector_term).abs() <= 1e-15);
    Ok(vec![wave, gradient])
}

/// Combine the campaign's mean raw η and statistical uncertainty with a
/// budget (shipped table when `None`).
pub fn estimate_from_analysis(
    cfg: &RunConfig,
    analysis: &Analysis,
    budget_file: Option<&Path>,
) -> Result<EtaEstimate> {
    let base = match budget_file {
        Some(p) => budget::load_budget(p)?,
        None => budget::shipped_budget(),
    };
    let name = base
        .iter()
        .find(|e| e.is_raw())
        .map_or(budget::RAW_ENTRY.to_string(), |e| e.name.clone());
    let raw = BudgetEntry::raw(name, analysis.mean_eta_raw, analysis.statistical_uncertainty)?;
    let mut entries = with_raw(&base, raw);
    for row in derived_rows(cfg, analysis)? {
        if entries.iter().any(|e| e.name == row.name) {
            replace_entry(&mut entries, row);
        }
    }
    Ok(combine_budget(&entries)?)
}

/// Simulate, fit, build the η series, combine with the budget and write the
/// final report and plot data.
pub fn run_e2e(cfg: &RunConfig, budget_file: Option<&Path>) -> Result<E2eOutput> {
    let simulation = simulate(cfg)?;
    let estimate = estimate_from_analysis(cfg, &simulation.analysis, budget_file)?;
    let dir = &cfg.output_dir;
    ensure_dir(dir)?;
    write_simulation(dir, cfg, &simulation)?;
    let analysis = &simulation.analysis;
    write(dir, ALLAN_FILE, &io::allan_to_csv(&analysis.allan))?;
    write(dir, ALLAN_PLOT_FILE, &io::allan_loglog_csv(&analysis.allan))?;
    if let (Some(group), Some(first)) = (simulation.groups.first(), analysis.ellipses.first()) {
        let group = simulation
            .groups
            .iter()
            .find(|g| g.ellipse_index == first.ellipse_index)
            .unwrap_or(group);
        write(
            dir,
            FRINGE_PLOT_FILE,
            &io::fringe_plot_csv(&group.points(), &first.fit, PLOT_CURVE_SAMPLES),
        )?;
    }
    let mut report = estimate.json_report();
    report
        .as_object_mut()
        .expect("object")
        .insert("analysis".into(), analysis.summary_json());
    write(dir, REPORT_JSON_FILE, &json_text(&report))?;
    write(dir, REPORT_TEXT_FILE, &estimate.text_report())?;
    Ok(E2eOutput {
        simulation,
        estimate,
    })
}

/// Detection noise giving a per-ellipse η scatter of `target_sigma`, found
/// from a pilot campaign at `pilot_sigma` by linear scaling (valid while the
/// phase noise stays well below a radian).
pub fn calibrate_detection_sigma(
    cfg: &RunConfig,
    target_sigma: f64,
    pilot_sigma: f64,
) -> Result<f64> {
    let mut pilot = cfg.clone();
    pilot.noise.detection_sigma = pilot_sigma;
    let out = simulate(&pilot)?;
    let values: Vec<f64> = out.analysis.ellipses.iter().map(|e| e.eta_raw).collect();
    let series = EtaSeries::new(values, cfg.sequence.ellipse_period)?;
    let observed = series.std_dev();
    if !(observed > 0.0) {
        return Err(Error::Data("pilot campaign shows no η scatter".into()));
    }
    Ok(pilot_sigma * target_sigma / observed)
}
