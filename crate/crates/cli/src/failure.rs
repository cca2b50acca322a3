use std::fmt;
use std::path::Path;
use std::process::ExitCode;

use wincel_core::CoreError;
use wincel_datapipe::DataError;

/// A command failure paired with its exit status: 2 for invalid input or
/// configuration, 1 for errors while running.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

pub type CmdResult<T = ()> = Result<T, Failure>;

impl Failure {
    pub fn validation(msg: impl fmt::Display) -> Self {
        Failure::Validation(anyhow::anyhow!("{msg}"))
    }

    pub fn exit_code(&self) -> ExitCode {
        match self {
            Failure::Validation(_) => ExitCode::from(2),
            Failure::Runtime(_) => ExitCode::from(1),
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Validation(e) | Failure::Runtime(e) => e,
        }
    }
}

fn core_is_validation(e: &CoreError) -> bool {
    matches!(
        e,
        CoreError::InvalidConfig(_)
            | CoreError::TemperatureNonPositive(_)
            | CoreError::BetaOutOfRange(_)
            | CoreError::BadTemplate(_)
            | CoreError::InvalidPrompts(_)
    )
}

impl From<CoreError> for Failure {
    fn from(e: CoreError) -> Self {
        if core_is_validation(&e) {
            Failure::Validation(e.into())
        } else {
            Failure::Runtime(e.into())
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        match &e {
            DataError::InvalidConfig(_) => Failure::Validation(e.into()),
            DataError::Core(c) if core_is_validation(c) => Failure::Validation(e.into()),
            _ => Failure::Runtime(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

pub fn require_file(path: &Path, what: &str) -> CmdResult {
    if path.exists() {
        Ok(())
    } else {
        Err(Failure::validation(format!("{what} not found: {}", path.display())))
    }
}
