use thiserror::Error;

use crate::budget::BudgetError;
use crate::config::ConfigError;
use crate::estimation::{AllanError, ConversionError, FitError};
use crate::io::CsvError;
use crate::physics::PhysicsError;
use crate::sequence::SequenceError;

/// Failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Config => 3,
            Self::Data => 4,
            Self::Numerical => 5,
            Self::Io => 6,
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Physics(#[from] PhysicsError),
    #[error(transparent)]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Conversion(#[from] ConversionError),
    #[error(transparent)]
    Allan(#[from] AllanError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Csv(#[from] CsvError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error("{0}")]
    Data(String),
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Self::Config(ConfigError::Io(_)) => ErrorClass::Io,
            Self::Config(_) | Self::Physics(_) | Self::Sequence(_) => ErrorClass::Config,
            Self::Fit(FitError::DegenerateInput(_)) => ErrorClass::Data,
            Self::Fit(_) | Self::Conversion(_) => ErrorClass::Numerical,
            Self::Allan(AllanError::DegenerateInput(_)) => ErrorClass::Numerical,
            Self::Allan(_) | Self::Csv(_) | Self::Data(_) => ErrorClass::Data,
            Self::Budget(BudgetError::Io(_)) => ErrorClass::Io,
            Self::Budget(_) => ErrorClass::Data,
            Self::Io { .. } => ErrorClass::Io,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class().exit_code()
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
