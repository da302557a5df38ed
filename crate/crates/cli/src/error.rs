use std::fmt;

use distforest::Error;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitClass {
    Config = 2,
    Data = 3,
    Fit = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
    broken_pipe: bool,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Config,
            message: message.into(),
            broken_pipe: false,
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Data,
            message: message.into(),
            broken_pipe: false,
        }
    }

    pub fn fit(message: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Fit,
            message: message.into(),
            broken_pipe: false,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.class as i32
    }

    /// The reader of our output went away (`distforest predict ... | head`).
    pub fn is_broken_pipe(&self) -> bool {
        self.broken_pipe
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::Config(_) | Error::Toml(_) => ExitClass::Config,
            Error::SchemaMismatch(_)
            | Error::Parse { .. }
            | Error::UnknownCategory { .. }
            | Error::NegativeUnderTransform { .. }
            | Error::MissingInput(_)
            | Error::UnsupportedVersion { .. }
            | Error::Io(_)
            | Error::Json(_)
            | Error::Csv(_) => ExitClass::Data,
            Error::InvalidParameter(_)
            | Error::Domain(_)
            | Error::DegenerateSample(_)
            | Error::NonConvergence { .. }
            | Error::NoAdmissibleSplit { .. }
            | Error::Collinear(_)
            | Error::ZeroReference => ExitClass::Fit,
        };
        Self {
            class,
            message: e.to_string(),
            broken_pipe: false,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        let mut err = CliError::data(e.to_string());
        err.broken_pipe = e.kind() == std::io::ErrorKind::BrokenPipe;
        err
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        if let csv::ErrorKind::Io(io) = e.kind() {
            if io.kind() == std::io::ErrorKind::BrokenPipe {
                return std::io::Error::from(std::io::ErrorKind::BrokenPipe).into();
            }
        }
        CliError::data(e.to_string())
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
