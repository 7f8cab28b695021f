//! Direct least-squares ellipse fitting of the two-species population cloud.
//!
//! The conic `ax² + bxy + cy² + dx + ey + f = 0` is fitted under the
//! constraint `4ac − b² = 1` (Fitzgibbon, Pilu & Fisher 1999) using the
//! partitioned scatter-matrix form of Halíř & Flusser (1998). Data are
//! centred and scaled per axis first; the constraint is affine-covariant so
//! this changes nothing but the conditioning.

use nalgebra::{Matrix3, Matrix6, SymmetricEigen, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitWarning {
    /// The unconstrained algebraic best fit is a hyperbola or parabola; the
    /// returned ellipse is the constrained optimum and may be unreliable.
    NotAnEllipse,
    /// Exactly the minimum number of points.
    MinimalPointCount,
}

/// Conic coefficients `[a, b, c, d, e, f]`.
pub type Conic = [f64; 6];

/// Result of fitting one population cloud.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipseFit {
    /// Normalised so that `4ac − b² = 1` and `a > 0`.
    pub conic_coefficients: Conic,
    /// Phase between the two fringes, in (0, π).
    pub differential_phase: f64,
    pub contrast_x: f64,
    pub contrast_y: f64,
    pub center_x: f64,
    pub center_y: f64,
    /// RMS Sampson distance of the points to the fitted ellipse.
    pub rms_residual: f64,
    pub n_points: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<FitWarning>,
}

pub const MIN_POINTS: usize = 5;

struct AxisScale {
    mean: f64,
    scale: f64,
}

impl AxisScale {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            scale: var.sqrt(),
        }
    }

    fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.scale
    }
}

fn check_input(points: &[[f64; 2]]) -> Result<(), FitError> {
    if points.len() < MIN_POINTS {
        return Err(FitError::DegenerateInput(format!(
            "need at least {MIN_POINTS} points, got {}",
            points.len()
        )));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(FitError::DegenerateInput("non-finite coordinate".into()));
    }
    let mut distinct: Vec<[f64; 2]> = Vec::with_capacity(points.len());
    for p in points {
        if !distinct.contains(p) {
            distinct.push(*p);
        }
    }
    if distinct.len() < MIN_POINTS {
        return Err(FitError::DegenerateInput(format!(
            "need at least {MIN_POINTS} distinct points, got {}",
            distinct.len()
        )));
    }
    Ok(())
}

/// Reject point sets whose spread is (numerically) one-dimensional.
fn check_collinear(xn: &[f64], yn: &[f64]) -> Result<(), FitError> {
    let n = xn.len() as f64;
    // per-axis variance is 1 after scaling
    let cov = xn.iter().zip(yn).map(|(x, y)| x * y).sum::<f64>() / n;
    let smallest = 1.0 - cov.abs();
    if smallest < 1e-12 {
        return Err(FitError::DegenerateInput("points are collinear".into()));
    }
    Ok(())
}

/// Fit an ellipse to `points` (`[x, y]` pairs, at least five distinct).
pub fn fit_ellipse(points: &[[f64; 2]]) -> Result<EllipseFit, FitError> {
    check_input(points)?;
    let sx = AxisScale::of(points.iter().map(|p| p[0]));
    let sy = AxisScale::of(points.iter().map(|p| p[1]));
    if !(sx.scale > 0.0 && sy.scale > 0.0) {
        return Err(FitError::DegenerateInput(
            "points have no spread along one axis".into(),
        ));
    }
    let xn: Vec<f64> = points.iter().map(|p| sx.apply(p[0])).collect();
    let yn: Vec<f64> = points.iter().map(|p| sy.apply(p[1])).collect();
    check_collinear(&xn, &yn)?;

    let normalized = constrained_fit(&xn, &yn)?;
    let conic = normalize(denormalize(&normalized, &sx, &sy))
        .ok_or_else(|| FitError::Numerical("fitted conic is not an ellipse".into()))?;

    let mut warnings = Vec::new();
    if points.len() == MIN_POINTS {
        warnings.push(FitWarning::MinimalPointCount);
    }
    if !unconstrained_is_ellipse(&xn, &yn) {
        warnings.push(FitWarning::NotAnEllipse);
    }

    let geometry = Geometry::of(&conic)
        .ok_or_else(|| FitError::Numerical("degenerate ellipse (zero area)".into()))?;
    let rms_residual = rms_sampson(&conic, points);

    Ok(EllipseFit {
        conic_coefficients: conic,
        differential_phase: geometry.phase,
        contrast_x: 2.0 * geometry.amplitude_x,
        contrast_y: 2.0 * geometry.amplitude_y,
        center_x: geometry.center_x,
        center_y: geometry.center_y,
        rms_residual,
        n_points: points.len(),
        warnings,
    })
}

/// Halíř–Flusser reduced eigenproblem on normalised coordinates.
fn constrained_fit(xn: &[f64], yn: &[f64]) -> Result<Vector6<f64>, FitError> {
    let mut s1 = Matrix3::zeros();
    let mut s2 = Matrix3::zeros();
    let mut s3 = Matrix3::zeros();
    for (&x, &y) in xn.iter().zip(yn) {
        let quad = Vector3::new(x * x, x * y, y * y);
        let lin = Vector3::new(x, y, 1.0);
        s1 += quad * quad.transpose();
        s2 += quad * lin.transpose();
        s3 += lin * lin.transpose();
    }
    let s3_inv = s3
        .try_inverse()
        .ok_or_else(|| FitError::DegenerateInput("singular linear scatter matrix".into()))?;
    let t = -(s3_inv * s2.transpose());
    let m = s1 + s2 * t;
    // C₁⁻¹·M with C₁ = [[0,0,2],[0,-1,0],[2,0,0]]
    let reduced = Matrix3::from_rows(&[
        m.row(2) * 0.5,
        -m.row(1),
        m.row(0) * 0.5,
    ]);

    let eigenvalues = reduced.complex_eigenvalues();
    let mut best: Option<(f64, Vector3<f64>)> = None;
    for lambda in eigenvalues.iter() {
        let shifted = reduced - Matrix3::identity() * lambda.re;
        let v = null_vector(&shifted);
        let cond = 4.0 * v[0] * v[2] - v[1] * v[1];
        if cond > 0.0 && best.as_ref().is_none_or(|(c, _)| cond > *c) {
            best = Some((cond, v));
        }
    }
    let (_, a1) = best.ok_or_else(|| {
        FitError::Numerical("no eigenvector satisfies the ellipse constraint".into())
    })?;
    let a2 = t * a1;
    Ok(Vector6::new(a1[0], a1[1], a1[2], a2[0], a2[1], a2[2]))
}

/// Unit vector spanning the (numerical) null space of a 3×3 matrix.
fn null_vector(m: &Matrix3<f64>) -> Vector3<f64> {
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (idx, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("three singular values");
    v_t.row(idx).transpose()
}

/// Whether the unconstrained algebraic least-squares conic is an ellipse.
fn unconstrained_is_ellipse(xn: &[f64], yn: &[f64]) -> bool {
    let mut scatter = Matrix6::zeros();
    for (&x, &y) in xn.iter().zip(yn) {
        let row = Vector6::new(x * x, x * y, y * y, x, y, 1.0);
        scatter += row * row.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("six eigenvalues");
    let v = eig.eigenvectors.column(idx);
    v[1] * v[1] - 4.0 * v[0] * v[2] < 0.0
}

/// Map a conic fitted on `((x−mx)/sx, (y−my)/sy)` back to raw coordinates.
fn denormalize(n: &Vector6<f64>, sx: &AxisScale, sy: &AxisScale) -> Conic {
    let (a, b, c, d, e, f) = (n[0], n[1], n[2], n[3], n[4], n[5]);
    let (mx, my) = (sx.mean, sy.mean);
    let (kx, ky) = (1.0 / sx.scale, 1.0 / sy.scale);
    let aa = a * kx * kx;
    let bb = b * kx * ky;
    let cc = c * ky * ky;
    let dd = d * kx - 2.0 * aa * mx - bb * my;
    let ee = e * ky - 2.0 * cc * my - bb * mx;
    let ff = f + aa * mx * mx + bb * mx * my + cc * my * my - d * kx * mx - e * ky * my;
    [aa, bb, cc, dd, ee, ff]
}

/// Scale to `4ac − b² = 1`, `a > 0`. `None` if the conic is not an ellipse.
pub fn normalize(conic: Conic) -> Option<Conic> {
    let [a, b, c, ..] = conic;
    let disc = 4.0 * a * c - b * b;
    if !(disc > 0.0) || !disc.is_finite() {
        return None;
    }
    let s = disc.sqrt().recip() * a.signum();
    Some(conic.map(|v| v * s))
}

/// Centre, per-axis fringe amplitudes and phase of an ellipse conic.
struct Geometry {
    center_x: f64,
    center_y: f64,
    amplitude_x: f64,
    amplitude_y: f64,
    phase: f64,
}

impl Geometry {
    /// Reads the parametrisation `x = x₀ + Aₓcos θ`, `y = y₀ + A_y cos(θ + φ)`
    /// off a normalised conic.
    fn of(conic: &Conic) -> Option<Self> {
        let [a, b, c, d, e, f] = *conic;
        let det = 4.0 * a * c - b * b;
        let center_x = (b * e - 2.0 * c * d) / det;
        let center_y = (b * d - 2.0 * a * e) / det;
        let at_center = f + 0.5 * (d * center_x + e * center_y);
        if !(at_center < 0.0) {
            return None;
        }
        let cos_phase = (-b / (2.0 * (a * c).sqrt())).clamp(-1.0, 1.0);
        let phase = cos_phase.acos();
        let sin_phase = phase.sin();
        let scale = -at_center;
        Some(Self {
            center_x,
            center_y,
            amplitude_x: (scale / a).sqrt() / sin_phase,
            amplitude_y: (scale / c).sqrt() / sin_phase,
            phase,
        })
    }
}

pub fn algebraic_distance(conic: &Conic, x: f64, y: f64) -> f64 {
    let [a, b, c, d, e, f] = *conic;
    a * x * x + b * x * y + c * y * y + d * x + e * y + f
}

/// First-order geometric distance `|Q| / |∇Q|`.
pub fn sampson_distance(conic: &Conic, x: f64, y: f64) -> f64 {
    let [a, b, c, d, e, _] = *conic;
    let gx = 2.0 * a * x + b * y + d;
    let gy = b * x + 2.0 * c * y + e;
    let g = gx.hypot(gy);
    let q = algebraic_distance(conic, x, y);
    if g > 0.0 {
        q.abs() / g
    } else {
        q.abs()
    }
}

fn rms_sampson(conic: &Conic, points: &[[f64; 2]]) -> f64 {
    let ss: f64 = points
        .iter()
        .map(|p| sampson_distance(conic, p[0], p[1]).powi(2))
        .sum();
    (ss / points.len() as f64).sqrt()
}

/// Conic of the Lissajous ellipse `x = x₀ + Aₓcos θ`, `y = y₀ + A_y cos(θ + φ)`.
pub fn lissajous_conic(center: [f64; 2], amplitude: [f64; 2], phase: f64) -> Conic {
    let [x0, y0] = center;
    let [ax, ay] = amplitude;
    let a = 1.0 / (ax * ax);
    let c = 1.0 / (ay * ay);
    let b = -2.0 * phase.cos() / (ax * ay);
    let d = -2.0 * a * x0 - b * y0;
    let e = -2.0 * c * y0 - b * x0;
    let f = a * x0 * x0 + b * x0 * y0 + c * y0 * y0 - phase.sin().powi(2);
    normalize([a, b, c, d, e, f]).expect("Lissajous figure with 0 < φ < π is an ellipse")
}
