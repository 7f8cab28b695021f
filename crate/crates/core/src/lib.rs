//! Simulation and analysis chain for a dual-species atom-interferometer test
//! of the equivalence principle: free-fall physics with optional violation
//! couplings, shot-level campaign simulation, ellipse fitting, Allan
//! statistics and the systematic-error budget.

// range checks are written so that NaN fails them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod budget;
pub mod config;
pub mod error;
pub mod estimation;
pub mod io;
pub mod physics;
pub mod pipeline;
pub mod sequence;

pub use config::RunConfig;
pub use error::{Error, ErrorClass, Result};
