use lmscale::alloc::AllocError;
use lmscale::artifact::ArtifactError;
use lmscale::lawfit::LawFitError;
use lmscale::linkage::LinkageError;
use lmscale::runstore::RunStoreError;
use lmscale::scalecurves::CurveError;
use lmscale::synthgen::SynthError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Data(_) => EXIT_DATA,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

impl From<RunStoreError> for CliError {
    fn from(e: RunStoreError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LawFitError> for CliError {
    fn from(e: LawFitError) -> Self {
        match e {
            LawFitError::AllStartsFailed(_) | LawFitError::Opt(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<AllocError> for CliError {
    fn from(e: AllocError) -> Self {
        match e {
            AllocError::Mismatch { .. } | AllocError::NoBracket(_) => CliError::Numerical(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<CurveError> for CliError {
    fn from(e: CurveError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<LinkageError> for CliError {
    fn from(e: LinkageError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Data(e.to_string())
    }
}

pub fn io_error(path: &std::path::Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}
