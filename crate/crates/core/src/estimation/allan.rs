//! Overlapping Allan deviation of the per-ellipse η series and the power-law
//! fit of σ(τ).

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AllanError {
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("τ = {tau} s is not a positive integer multiple of the {interval} s sample interval")]
    InvalidTau { tau: f64, interval: f64 },
    #[error("insufficient data for τ = {tau} s: need {needed} samples, have {have}")]
    InsufficientData { tau: f64, needed: usize, have: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

/// One η value per ellipse at a uniform interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EtaSeries {
    pub values: Vec<f64>,
    /// s
    pub sample_interval: f64,
}

impl EtaSeries {
    pub fn new(values: Vec<f64>, sample_interval: f64) -> Result<Self, AllanError> {
        if values.is_empty() {
            return Err(AllanError::InvalidSeries("series is empty".into()));
        }
        if !(sample_interval > 0.0 && sample_interval.is_finite()) {
            return Err(AllanError::InvalidSeries(
                "sample interval must be positive".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(AllanError::InvalidSeries("non-finite value".into()));
        }
        Ok(Self {
            values,
            sample_interval,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Sample standard deviation (n − 1).
    pub fn std_dev(&self) -> f64 {
        let n = self.values.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let ss: f64 = self.values.iter().map(|v| (v - m) * (v - m)).sum();
        (ss / (n - 1) as f64).sqrt()
    }

    /// Standard error of the mean.
    pub fn standard_error(&self) -> f64 {
        self.std_dev() / (self.values.len() as f64).sqrt()
    }

    /// τ values `interval·{1, 2, 4, …}` that the series can support.
    pub fn octave_taus(&self) -> Vec<f64> {
        std::iter::successors(Some(1usize), |m| m.checked_mul(2))
            .take_while(|m| 2 * m <= self.values.len())
            .map(|m| m as f64 * self.sample_interval)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllanPoint {
    /// s
    pub tau: f64,
    pub deviation: f64,
    /// Number of overlapping cluster differences averaged.
    pub n_clusters: usize,
}

/// Points that could be computed plus the τ values that were skipped.
#[derive(Debug, Clone, PartialEq)]
pub struct AllanResult {
    pub points: Vec<AllanPoint>,
    pub skipped: Vec<AllanError>,
}

fn averaging_factor(tau: f64, interval: f64) -> Result<usize, AllanError> {
    let m = (tau / interval).round();
    if !(m >= 1.0) || (m * interval - tau).abs() > 1e-9 * tau.abs().max(interval) {
        return Err(AllanError::InvalidTau { tau, interval });
    }
    Ok(m as usize)
}

/// Overlapping Allan deviation at averaging factor `m`.
///
/// `σ²(mτ₀) = 1/(2(N−2m+1)) · Σⱼ (ȳⱼ₊ₘ − ȳⱼ)²` over all `N − 2m + 1`
/// overlapping pairs of adjacent `m`-sample means.
fn overlapping(values: &[f64], m: usize) -> (f64, usize) {
    let n = values.len();
    let window: Vec<f64> = (0..=n - m)
        .map(|j| values[j..j + m].iter().sum::<f64>())
        .collect();
    let pairs = n - 2 * m + 1;
    let m_f = m as f64;
    let ss: f64 = (0..pairs)
        .map(|j| {
            let d = (window[j + m] - window[j]) / m_f;
            d * d
        })
        .sum();
    ((ss / (2.0 * pairs as f64)).sqrt(), pairs)
}

/// Overlapping Allan deviation at each τ. τ values the series cannot support
/// are skipped and reported in [`AllanResult::skipped`].
pub fn allan_deviation(series: &EtaSeries, taus: &[f64]) -> AllanResult {
    let mut points = Vec::with_capacity(taus.len());
    let mut skipped = Vec::new();
    for &tau in taus {
        let m = match averaging_factor(tau, series.sample_interval) {
            Ok(m) => m,
            Err(e) => {
                skipped.push(e);
                continue;
            }
        };
        if series.len() < 2 * m {
            log::warn!("allan: skipping τ = {tau} s, series too short");
            skipped.push(AllanError::InsufficientData {
                tau,
                needed: 2 * m,
                have: series.len(),
            });
            continue;
        }
        let (deviation, n_clusters) = overlapping(&series.values, m);
        points.push(AllanPoint {
            tau,
            deviation,
            n_clusters,
        });
    }
    AllanResult { points, skipped }
}

/// `σ(τ) = coefficient · τ^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSlope {
    pub exponent: f64,
    pub coefficient: f64,
}

impl TauSlope {
    pub fn at(&self, tau: f64) -> f64 {
        self.coefficient * tau.powf(self.exponent)
    }
}

/// Least-squares line through `(ln τ, ln σ)`.
pub fn fit_tau_slope(points: &[AllanPoint]) -> Result<TauSlope, AllanError> {
    if points.len() < 3 {
        return Err(AllanError::DegenerateInput(format!(
            "need at least 3 points, got {}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.tau > 0.0 && p.deviation > 0.0)) {
        return Err(AllanError::DegenerateInput(
            "τ and deviation must be positive".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.tau.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.deviation.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if !(sxx > 0.0) {
        return Err(AllanError::DegenerateInput("all τ values coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let exponent = sxy / sxx;
    Ok(TauSlope {
        exponent,
        coefficient: (my - exponent * mx).exp(),
    })
}
