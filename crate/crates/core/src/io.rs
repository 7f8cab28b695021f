//! Plain-text persistence: shot CSV, η series, Allan curves and plot data.

use std::path::Path;

use thiserror::Error;

use crate::estimation::{AllanPoint, EllipseFit};
use crate::sequence::{EllipseGroup, ShotRecord};

pub const SHOT_HEADER: [&str; 6] = [
    "ellipse_index",
    "shot_index",
    "timestamp_s",
    "scan_phase_rad",
    "pop_87",
    "pop_85",
];
pub const ALLAN_HEADER: [&str; 3] = ["tau_s", "adev", "n_clusters"];
pub const ETA_HEADER: [&str; 4] = ["ellipse_index", "time_s", "eta_raw", "eta_corrected"];

/// Significant digits used for every float written to CSV.
pub const CSV_DIGITS: usize = 12;

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("{path}: header mismatch: expected `{expected}`, found `{found}`")]
    Header {
        path: String,
        expected: String,
        found: String,
    },
    #[error("{path}: line {line}: {message}")]
    Record {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
}

/// `%.{digits}g`-style formatting.
pub fn format_sig(value: f64, digits: usize) -> String {
    if value == 0.0 {
        return "0".to_string();
    }
    if !value.is_finite() {
        return format!("{value}");
    }
    let sci = format!("{:.*e}", digits - 1, value);
    let (mantissa, exp) = sci.split_once('e').expect("exponent marker");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -5 || exp >= digits as i32 {
        let m = trim_zeros(mantissa);
        format!("{m}e{exp}")
    } else {
        let decimals = (digits as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, value)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn fmt12(v: f64) -> String {
    format_sig(v, CSV_DIGITS)
}

/// What the CSV will hold for `v`: the 12-significant-digit rounding.
pub fn quantize(v: f64) -> f64 {
    fmt12(v).parse().expect("formatted float parses")
}

/// Round a record's floats to what survives a CSV round trip.
pub fn quantize_record(r: &ShotRecord) -> ShotRecord {
    ShotRecord {
        timestamp: quantize(r.timestamp),
        scan_phase: quantize(r.scan_phase),
        pop_87: quantize(r.pop_87),
        pop_85: quantize(r.pop_85),
        ..*r
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CsvError + '_ {
    move |source| CsvError::Csv {
        path: path.display().to_string(),
        source,
    }
}

pub fn shots_to_csv<'a>(records: impl IntoIterator<Item = &'a ShotRecord>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(SHOT_HEADER).expect("in-memory write");
    for r in records {
        w.write_record([
            r.ellipse_index.to_string(),
            r.shot_index.to_string(),
            fmt12(r.timestamp),
            fmt12(r.scan_phase),
            fmt12(r.pop_87),
            fmt12(r.pop_85),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}

/// Parse shot CSV text; `origin` labels errors.
pub fn shots_from_csv(text: &str, origin: &Path) -> Result<Vec<ShotRecord>, CsvError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let header = rdr.headers().map_err(csv_err(origin))?.clone();
    let found: Vec<&str> = header.iter().collect();
    if found != SHOT_HEADER {
        return Err(CsvError::Header {
            path: origin.display().to_string(),
            expected: SHOT_HEADER.join(","),
            found: found.join(","),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err(origin))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let fail = |message: String| CsvError::Record {
            path: origin.display().to_string(),
            line,
            message,
        };
        let int = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|e| fail(format!("{}: {e}", SHOT_HEADER[i])))
        };
        let float = |i: usize| {
            rec[i]
                .parse::<f64>()
                .map_err(|e| fail(format!("{}: {e}", SHOT_HEADER[i])))
        };
        let r = ShotRecord {
            ellipse_index: int(0)?,
            shot_index: int(1)?,
            timestamp: float(2)?,
            scan_phase: float(3)?,
            pop_87: float(4)?,
            pop_85: float(5)?,
        };
        if !(0.0..=1.0).contains(&r.pop_87) || !(0.0..=1.0).contains(&r.pop_85) {
            return Err(fail("population outside [0, 1]".into()));
        }
        out.push(r);
    }
    Ok(out)
}

pub fn read_shots(path: &Path) -> Result<Vec<ShotRecord>, crate::Error> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| crate::Error::io(path.display().to_string(), e))?;
    Ok(shots_from_csv(&text, path)?)
}

/// Group records by ellipse index, ordered by shot index within each group.
pub fn group_shots(records: &[ShotRecord]) -> Vec<EllipseGroup> {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.ellipse_index, r.shot_index));
    let mut groups: Vec<EllipseGroup> = Vec::new();
    for r in sorted {
        match groups.last_mut() {
            Some(g) if g.ellipse_index == r.ellipse_index => g.shots.push(r),
            _ => groups.push(EllipseGroup {
                ellipse_index: r.ellipse_index,
                shots: vec![r],
            }),
        }
    }
    groups
}

pub fn allan_to_csv(points: &[AllanPoint]) -> String {
    let mut out = ALLAN_HEADER.join(",");
    out.push('\n');
    for p in points {
        out.push_str(&format!("{},{},{}\n", fmt12(p.tau), fmt12(p.deviation), p.n_clusters));
    }
    out
}

/// One η row per fitted ellipse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaRow {
    pub ellipse_index: usize,
    pub time: f64,
    pub eta_raw: f64,
    pub eta_corrected: f64,
}

pub fn eta_to_csv(rows: &[EtaRow]) -> String {
    let mut out = ETA_HEADER.join(",");
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.ellipse_index,
            fmt12(r.time),
            fmt12(r.eta_raw),
            fmt12(r.eta_corrected)
        ));
    }
    out
}

/// Data points of one ellipse plus a sampled curve of its fit.
pub fn fringe_plot_csv(points: &[[f64; 2]], fit: &EllipseFit, samples: usize) -> String {
    let mut out = String::from("kind,x,y\n");
    for p in points {
        out.push_str(&format!("data,{},{}\n", fmt12(p[0]), fmt12(p[1])));
    }
    let ax = 0.5 * fit.contrast_x;
    let ay = 0.5 * fit.contrast_y;
    for i in 0..samples {
        let t = std::f64::consts::TAU * i as f64 / samples as f64;
        let x = fit.center_x + ax * t.cos();
        let y = fit.center_y + ay * (t + fit.differential_phase).cos();
        out.push_str(&format!("fit,{},{}\n", fmt12(x), fmt12(y)));
    }
    out
}

pub fn allan_loglog_csv(points: &[AllanPoint]) -> String {
    let mut out = String::from("log10_tau_s,log10_adev\n");
    for p in points.iter().filter(|p| p.deviation > 0.0) {
        out.push_str(&format!("{},{}\n", fmt12(p.tau.log10()), fmt12(p.deviation.log10())));
    }
    out
}
