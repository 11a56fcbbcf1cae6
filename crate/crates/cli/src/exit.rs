use std::fmt;

use shrinktube::lifted::LiftedError;
use shrinktube::plant::PlantError;
use shrinktube::wrapper::WrapperError;

/// Process exit codes. The numbering is stable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Internal = 1,
    Usage = 2,
    Config = 3,
    Io = 4,
    /// No verified seed, or the tube is not certified (state constraints
    /// active, or it leaves the wrapper's region).
    Seed = 5,
    NotConverged = 6,
    AuditFailed = 7,
    Numerical = 8,
}

#[derive(Debug)]
pub struct CliError {
    pub code: Exit,
    pub message: String,
}

impl CliError {
    pub fn new(code: Exit, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new(Exit::Io, e.to_string())
    }
}

fn lifted_code(e: &LiftedError) -> Exit {
    match e {
        LiftedError::InvalidArgument(_) | LiftedError::NotSchur(_) => Exit::Config,
        LiftedError::NoInvariantSeed { .. } => Exit::Seed,
        LiftedError::NotConverged { .. } => Exit::NotConverged,
        LiftedError::Wrapper(w) => wrapper_code(w),
        LiftedError::Format(_) => Exit::Io,
        _ => Exit::Numerical,
    }
}

fn wrapper_code(e: &WrapperError) -> Exit {
    match e {
        WrapperError::InvalidArgument(_) | WrapperError::GridTooFine { .. } | WrapperError::Incompatible(_) => {
            Exit::Config
        }
        WrapperError::Format(_) => Exit::Io,
        _ => Exit::Numerical,
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        let code = match &e {
            PlantError::Config(_) => Exit::Config,
            PlantError::ConstraintActive { .. } | PlantError::TubeOutsideRegion { .. } => Exit::Seed,
            PlantError::Lifted(l) => lifted_code(l),
            PlantError::Wrapper(w) => wrapper_code(w),
            PlantError::Diverged { .. } | PlantError::Gp(_) | PlantError::Geom(_) => Exit::Numerical,
        };
        Self::new(code, e.to_string())
    }
}

impl From<LiftedError> for CliError {
    fn from(e: LiftedError) -> Self {
        Self::new(lifted_code(&e), e.to_string())
    }
}
