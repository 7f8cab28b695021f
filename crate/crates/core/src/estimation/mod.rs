//! Differential-phase extraction, conversion to η and Allan statistics.

pub mod allan;
pub mod conversion;
pub mod ellipse;

pub use allan::{allan_deviation, fit_tau_slope, AllanError, AllanPoint, EtaSeries, TauSlope};
pub use conversion::{phase_to_eta, ConversionError, PhaseModel};
pub use ellipse::{fit_ellipse, EllipseFit, FitError, FitWarning};
