use std::fmt;
use std::path::Path;

use inertial_odometry::Error;

/// Process exit status per failure class.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Other = 1,
    Config = 2,
    Data = 3,
    Numeric = 4,
    Training = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Config,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Data,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            class: ExitClass::Other,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn code(&self) -> u8 {
        self.class as u8
    }

    /// Prefixes the message with what was being done.
    pub fn context(mut self, what: impl fmt::Display) -> Self {
        self.message = format!("{what}: {}", self.message);
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub fn class_of(e: &Error) -> ExitClass {
    match e {
        Error::InvalidInput(_) | Error::OutOfRange(_) | Error::ModelContract(_) => ExitClass::Config,
        Error::DegenerateInput(_)
        | Error::DegenerateHeading { .. }
        | Error::EmptyInput(_)
        | Error::InsufficientData { .. }
        | Error::Alignment(_)
        | Error::UnsupportedRate { .. }
        | Error::VersionMismatch { .. }
        | Error::CorruptFile { .. }
        | Error::Io { .. } => ExitClass::Data,
        Error::NumericOverflow { .. } | Error::Aliasing { .. } => ExitClass::Numeric,
        Error::TrainingDiverged { .. } => ExitClass::Training,
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self {
            class: class_of(&e),
            message: e.to_string(),
        }
    }
}
