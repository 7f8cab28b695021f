//! Systematic-error budget: corrections with uncertainties, combined into the
//! final η.
//!
//! Values are plain dimensionless η at full precision. The budget file and
//! the reports use units of 10⁻¹⁰; rounding to one decimal happens only when
//! a report is rendered.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::physics::{EnvironmentModel, SpeciesState};

/// One budget unit.
pub const E10: f64 = 1e-10;

pub const WAVE_VECTOR_ENTRY: &str = "Effective wave vector";
pub const GRAVITY_GRADIENT_ENTRY: &str = "Gravity gradient";
pub const RAW_ENTRY: &str = "Experimental data";

const SHIPPED_TABLE: &str = include_str!("../data/rb87_rb85.budget");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BudgetError {
    #[error("budget has no raw_measurement entry")]
    MissingRaw,
    #[error("budget has more than one raw_measurement entry ({0} and {1})")]
    DuplicateRaw(String, String),
    #[error("entry `{name}`: uncertainty must be a non-negative number, got {value}")]
    InvalidUncertainty { name: String, value: f64 },
    #[error("entry `{name}`: correction must be finite")]
    InvalidCorrection { name: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    RawMeasurement,
    CorrectionTerm,
}

impl EntryKind {
    fn as_str(self) -> &'static str {
        match self {
            Self::RawMeasurement => "raw_measurement",
            Self::CorrectionTerm => "correction_term",
        }
    }
}

impl std::str::FromStr for EntryKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw_measurement" => Ok(Self::RawMeasurement),
            "correction_term" => Ok(Self::CorrectionTerm),
            other => Err(format!(
                "unknown kind `{other}` (expected raw_measurement or correction_term)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetEntry {
    pub name: String,
    pub correction: f64,
    pub uncertainty: f64,
    pub kind: EntryKind,
}

impl BudgetEntry {
    fn new(
        name: impl Into<String>,
        correction: f64,
        uncertainty: f64,
        kind: EntryKind,
    ) -> Result<Self, BudgetError> {
        let name = name.into();
        if !(uncertainty >= 0.0 && uncertainty.is_finite()) {
            return Err(BudgetError::InvalidUncertainty {
                name,
                value: uncertainty,
            });
        }
        if !correction.is_finite() {
            return Err(BudgetError::InvalidCorrection { name });
        }
        Ok(Self {
            name,
            correction,
            uncertainty,
            kind,
        })
    }

    /// The measured value itself (its "correction" column holds the value).
    pub fn raw(name: impl Into<String>, value: f64, uncertainty: f64) -> Result<Self, BudgetError> {
        Self::new(name, value, uncertainty, EntryKind::RawMeasurement)
    }

    pub fn is_raw(&self) -> bool {
        self.kind == EntryKind::RawMeasurement
    }
}

/// A correction the analysis cannot derive and takes as given.
pub fn static_entry(
    name: impl Into<String>,
    correction: f64,
    uncertainty: f64,
) -> Result<BudgetEntry, BudgetError> {
    BudgetEntry::new(name, correction, uncertainty, EntryKind::CorrectionTerm)
}

/// Final corrected η with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub value: f64,
    pub uncertainty: f64,
    pub entries: Vec<BudgetEntry>,
}

/// Sum in ascending order so the result does not depend on entry order.
fn ordered_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

/// `value = raw − Σ corrections`, `uncertainty = √(Σ uᵢ²)` over every entry
/// including the raw one.
pub fn combine_budget(entries: &[BudgetEntry]) -> Result<EtaEstimate, BudgetError> {
    let mut raws = entries.iter().filter(|e| e.is_raw());
    let raw = raws.next().ok_or(BudgetError::MissingRaw)?;
    if let Some(second) = raws.next() {
        return Err(BudgetError::DuplicateRaw(raw.name.clone(), second.name.clone()));
    }
    for e in entries {
        if !(e.uncertainty >= 0.0 && e.uncertainty.is_finite()) {
            return Err(BudgetError::InvalidUncertainty {
                name: e.name.clone(),
                value: e.uncertainty,
            });
        }
    }
    let corrections = ordered_sum(
        entries
            .iter()
            .filter(|e| !e.is_raw())
            .map(|e| e.correction)
            .collect(),
    );
    let variance = ordered_sum(entries.iter().map(|e| e.uncertainty * e.uncertainty).collect());
    Ok(EtaEstimate {
        value: raw.correction - corrections,
        uncertainty: variance.sqrt(),
        entries: entries.to_vec(),
    })
}

/// Apparent η of a violation-free pair caused by `k₁ ≠ k₂`: `(k₁ − k₂)/k̄`.
///
/// The uncertainty follows from the local-g uncertainty: the wave-vector
/// phase scales with true g but is normalised by the assumed one.
pub fn wave_vector_correction(
    pair: [&SpeciesState; 2],
    g: f64,
    g_uncertainty: f64,
) -> Result<BudgetEntry, BudgetError> {
    let [k1, k2] = [pair[0].effective_wave_vector, pair[1].effective_wave_vector];
    let term = (k1 - k2) / (0.5 * (k1 + k2));
    static_entry(WAVE_VECTOR_ENTRY, term, (term * g_uncertainty / g).abs())
}

/// Initial-position and velocity mismatch between the two clouds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryOffsets {
    /// z₁ − z₂ at the first pulse, m.
    pub delta_z0: f64,
    /// v₁ − v₂ at the first pulse, m/s.
    pub delta_v0: f64,
    pub sigma_delta_z0: f64,
    pub sigma_delta_v0: f64,
    /// Uncertainty of the gradient itself, 1/s².
    pub sigma_gradient: f64,
}

impl TrajectoryOffsets {
    /// Offsets that reproduce the ⁸⁷Rb/⁸⁵Rb gradient row, −5.5(1.2)×10⁻¹⁰,
    /// for a 3.086×10⁻⁶ s⁻² free-air gradient at g = 9.7936 m/s².
    /// These are calibration inputs rather than derived quantities.
    pub fn calibrated_default() -> Self {
        Self {
            delta_z0: -1.745_456_902_138_69e-3,
            delta_v0: 0.0,
            sigma_delta_z0: 3.808_269_604_666_23e-4,
            sigma_delta_v0: 0.0,
            sigma_gradient: 0.0,
        }
    }
}

/// Leading gradient term `Γ(Δz₀ + Δv₀·T)/g` of the differential phase,
/// expressed as η.
pub fn gravity_gradient_correction(
    env: &EnvironmentModel,
    offsets: &TrajectoryOffsets,
    free_evolution: f64,
) -> Result<BudgetEntry, BudgetError> {
    let gamma = env.gravity_gradient;
    let g = env.local_g;
    let lever = offsets.delta_z0 + offsets.delta_v0 * free_evolution;
    let correction = gamma * lever / g;
    let u_z = gamma * offsets.sigma_delta_z0 / g;
    let u_v = gamma * free_evolution * offsets.sigma_delta_v0 / g;
    let u_gamma = lever * offsets.sigma_gradient / g;
    let uncertainty = (u_z * u_z + u_v * u_v + u_gamma * u_gamma).sqrt();
    static_entry(GRAVITY_GRADIENT_ENTRY, correction, uncertainty)
}

// ── file format ─────────────────────────────────────────────────────────────

/// Parse `name | correction_e-10 | uncertainty_e-10 | kind` lines. `#` starts
/// a comment.
pub fn parse_budget(text: &str) -> Result<Vec<BudgetEntry>, BudgetError> {
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<&str> = content.split('|').map(str::trim).collect();
        let fail = |message: String| BudgetError::Parse {
            line: line_no,
            message,
        };
        if fields.len() != 4 {
            return Err(fail(format!("expected 4 `|`-separated fields, found {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(fail("empty entry name".into()));
        }
        let number = |s: &str, what: &str| {
            s.parse::<f64>()
                .map_err(|e| fail(format!("{what} `{s}`: {e}")))
        };
        let correction = number(fields[1], "correction")?;
        let uncertainty = number(fields[2], "uncertainty")?;
        let kind: EntryKind = fields[3].parse().map_err(fail)?;
        let entry = BudgetEntry::new(fields[0], from_e10(correction), from_e10(uncertainty), kind)
            .map_err(|e| fail(e.to_string()))?;
        entries.push(entry);
    }
    Ok(entries)
}

pub fn load_budget(path: &Path) -> Result<Vec<BudgetEntry>, BudgetError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| BudgetError::Io(format!("{}: {e}", path.display())))?;
    parse_budget(&text)
}

/// The shipped ⁸⁷Rb|F=1⟩–⁸⁵Rb|F=2⟩ budget.
pub fn shipped_budget() -> Vec<BudgetEntry> {
    parse_budget(SHIPPED_TABLE).expect("shipped budget parses")
}

pub fn shipped_budget_source() -> &'static str {
    SHIPPED_TABLE
}

fn from_e10(v: f64) -> f64 {
    v * E10
}

/// Shortest decimal in units of 10⁻¹⁰ that parses back to exactly `value`.
fn to_e10_exact(value: f64) -> String {
    let scaled = value / E10;
    for digits in 1..=17 {
        let s = format!("{:.*e}", digits - 1, scaled);
        if let Ok(parsed) = s.parse::<f64>() {
            if from_e10(parsed) == value {
                return format!("{}", parsed);
            }
        }
    }
    // walk neighbours of the scaled value
    let mut candidate = scaled;
    for _ in 0..8 {
        if from_e10(candidate) == value {
            return format!("{candidate}");
        }
        candidate = if from_e10(candidate) < value {
            candidate.next_up()
        } else {
            candidate.next_down()
        };
    }
    format!("{scaled}")
}

/// Render entries in the budget file format. Values written here reparse to
/// the same bits whenever such a decimal exists, which is always the case for
/// entries that were themselves parsed from a budget file.
pub fn write_budget(entries: &[BudgetEntry]) -> String {
    let width = entries.iter().map(|e| e.name.len()).max().unwrap_or(0);
    let mut out = String::from("# name | correction (1e-10) | uncertainty (1e-10) | kind\n");
    for e in entries {
        let _ = writeln!(
            out,
            "{:<width$} | {} | {} | {}",
            e.name,
            to_e10_exact(e.correction),
            to_e10_exact(e.uncertainty),
            e.kind.as_str()
        );
    }
    out
}

/// Replace (or insert, first) the raw measurement.
pub fn with_raw(entries: &[BudgetEntry], raw: BudgetEntry) -> Vec<BudgetEntry> {
    let mut out = vec![raw];
    out.extend(entries.iter().filter(|e| !e.is_raw()).cloned());
    out
}

/// Replace the entry with the same name, keeping its position, or append it.
pub fn replace_entry(entries: &mut Vec<BudgetEntry>, entry: BudgetEntry) {
    match entries.iter_mut().find(|e| e.name == entry.name) {
        Some(slot) => *slot = entry,
        None => entries.push(entry),
    }
}

// ── reports ─────────────────────────────────────────────────────────────────

/// One decimal in units of 10⁻¹⁰, without a negative zero.
pub fn present_e10(value: f64) -> String {
    let s = format!("{:.1}", value / E10);
    if s == "-0.0" {
        "0.0".to_string()
    } else {
        s
    }
}

impl EtaEstimate {
    pub fn value_e10(&self) -> String {
        present_e10(self.value)
    }

    pub fn uncertainty_e10(&self) -> String {
        present_e10(self.uncertainty)
    }

    /// Aligned text table: raw row, correction rows, total.
    pub fn text_report(&self) -> String {
        let header = ["Parameters", "η (×1e-10)", "Uncertainty (×1e-10)"];
        let mut rows: Vec<[String; 3]> = Vec::new();
        let raw = self.entries.iter().filter(|e| e.is_raw());
        let corrections = self.entries.iter().filter(|e| !e.is_raw());
        for e in raw.chain(corrections) {
            rows.push([e.name.clone(), present_e10(e.correction), present_e10(e.uncertainty)]);
        }
        let total = ["Total".to_string(), self.value_e10(), self.uncertainty_e10()];
        let w0 = rows
            .iter()
            .chain(std::iter::once(&total))
            .map(|r| r[0].chars().count())
            .chain(std::iter::once(header[0].chars().count()))
            .max()
            .unwrap_or(0);
        let w1 = rows
            .iter()
            .chain(std::iter::once(&total))
            .map(|r| r[1].len())
            .chain(std::iter::once(header[1].chars().count()))
            .max()
            .unwrap_or(0);
        let w2 = header[2].chars().count();
        let rule = "-".repeat(w0 + w1 + w2 + 4);

        let mut out = String::new();
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", header[0], header[1], header[2]);
        let _ = writeln!(out, "{rule}");
        for (i, r) in rows.iter().enumerate() {
            let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", r[0], r[1], r[2]);
            if i == 0 {
                let _ = writeln!(out, "{rule}");
            }
        }
        let _ = writeln!(out, "{rule}");
        let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", total[0], total[1], total[2]);
        out
    }

    pub fn json_report(&self) -> serde_json::Value {
        let entries: Vec<serde_json::Value> = self
            .entries
            .iter()
            .map(|e| {
                serde_json::json!({
                    "name": e.name,
                    "kind": e.kind,
                    "correction": e.correction,
                    "uncertainty": e.uncertainty,
                    "correction_e10": present_e10(e.correction),
                    "uncertainty_e10": present_e10(e.uncertainty),
                })
            })
            .collect();
        serde_json::json!({
            "entries": entries,
            "total": {
                "value": self.value,
                "uncertainty": self.uncertainty,
                "value_e10": self.value_e10(),
                "uncertainty_e10": self.uncertainty_e10(),
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_table_totals() {
        let est = combine_budget(&shipped_budget()).unwrap();
        assert!((est.value / E10 + 4.4).abs() < 1e-9, "{}", est.value / E10);
        assert!((est.uncertainty / E10 - 6.748_333).abs() < 1e-5);
        assert_eq!(est.value_e10(), "-4.4");
        assert_eq!(est.uncertainty_e10(), "6.7");
    }

    #[test]
    fn raw_only() {
        let raw = BudgetEntry::raw(RAW_ENTRY, 3e-10, 1e-10).unwrap();
        let est = combine_budget(std::slice::from_ref(&raw)).unwrap();
        assert_eq!(est.value, 3e-10);
        assert_eq!(est.uncertainty, 1e-10);
    }

    #[test]
    fn single_wave_vector_correction() {
        let entries = vec![
            BudgetEntry::raw(RAW_ENTRY, 49426.6 * E10, 0.0).unwrap(),
            static_entry(WAVE_VECTOR_ENTRY, 49435.5 * E10, 0.0).unwrap(),
        ];
        let est = combine_budget(&entries).unwrap();
        assert_eq!(est.value_e10(), "-8.9");
        assert!((est.value + 8.9e-10).abs() < 1e-20);
    }

    #[test]
    fn raw_errors() {
        let c = static_entry("x", 0.0, 1.0).unwrap();
        assert_eq!(combine_budget(std::slice::from_ref(&c)), Err(BudgetError::MissingRaw));
        let r = BudgetEntry::raw("a", 0.0, 0.0).unwrap();
        let r2 = BudgetEntry::raw("b", 0.0, 0.0).unwrap();
        assert!(matches!(
            combine_budget(&[r, c, r2]),
            Err(BudgetError::DuplicateRaw(..))
        ));
    }

    #[test]
    fn static_entries() {
        let e = static_entry("Wave-front aberration", 0.0, 5.0 * E10).unwrap();
        assert_eq!(e.correction, 0.0);
        assert_eq!(e.uncertainty, 5.0 * E10);
        assert_eq!(e.kind, EntryKind::CorrectionTerm);
        let o = static_entry("Others", 0.0, 1.0 * E10).unwrap();
        assert_eq!(o.name, "Others");
        assert!(matches!(
            static_entry("bad", 0.0, -1.0),
            Err(BudgetError::InvalidUncertainty { .. })
        ));
        assert!(static_entry("bad", 0.0, f64::NAN).is_err());
    }

    #[test]
    fn gradient_entry() {
        let env = EnvironmentModel {
            gravity_gradient: 3.086e-6,
            ..EnvironmentModel::default()
        };
        let e = gravity_gradient_correction(&env, &TrajectoryOffsets::calibrated_default(), 0.203)
            .unwrap();
        assert_eq!(present_e10(e.correction), "-5.5");
        assert_eq!(present_e10(e.uncertainty), "1.2");
        assert!((e.correction / E10 + 5.5).abs() < 1e-9);

        let flat = EnvironmentModel::default();
        let zero = gravity_gradient_correction(&flat, &TrajectoryOffsets::calibrated_default(), 0.2)
            .unwrap();
        assert_eq!(zero.correction, 0.0);
        let aligned = gravity_gradient_correction(&env, &TrajectoryOffsets::default(), 0.2).unwrap();
        assert_eq!(aligned.correction, 0.0);
    }

    #[test]
    fn velocity_offset_enters_with_t() {
        let env = EnvironmentModel {
            gravity_gradient: 3e-6,
            local_g: 10.0,
            ..EnvironmentModel::default()
        };
        let off = TrajectoryOffsets {
            delta_v0: 1e-3,
            ..Default::default()
        };
        let e = gravity_gradient_correction(&env, &off, 0.2).unwrap();
        assert!((e.correction - 3e-6 * 1e-3 * 0.2 / 10.0).abs() < 1e-24);
    }

    #[test]
    fn parse_errors_carry_line() {
        let text = "# c\nraw | 1 | 1 | raw_measurement\nbad | x | 1 | correction_term\n";
        match parse_budget(text) {
            Err(BudgetError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            parse_budget("a | 1 | 1\n"),
            Err(BudgetError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_budget("a | 1 | 1 | other\n"),
            Err(BudgetError::Parse { line: 1, .. })
        ));
        assert!(matches!(
            parse_budget("a | 1 | -1 | correction_term\n"),
            Err(BudgetError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn write_then_parse_is_exact() {
        let entries = shipped_budget();
        let again = parse_budget(&write_budget(&entries)).unwrap();
        assert_eq!(entries, again);
    }

    #[test]
    fn text_report_layout() {
        let est = combine_budget(&shipped_budget()).unwrap();
        let text = est.text_report();
        let total = text.lines().last().unwrap();
        assert!(total.starts_with("Total"));
        assert!(total.contains("-4.4") && total.contains("6.7"));
        assert!(text.contains("Experimental data"));
        assert!(text.contains("49435.5"));
        let json = est.json_report();
        assert_eq!(json["total"]["value_e10"], "-4.4");
        assert_eq!(json["entries"].as_array().unwrap().len(), 9);
    }

    #[test]
    fn negative_zero_is_hidden() {
        assert_eq!(present_e10(-1e-13), "0.0");
    }
}
