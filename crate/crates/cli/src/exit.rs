//! Exit-code contract and the mapping from library errors onto it.

use std::fmt;
use std::process::ExitCode;

use goosewatch_core::capture::CaptureError;
use goosewatch_core::detector::{DetectError, VerdictFileError};
use goosewatch_core::evt::EvtError;
use goosewatch_core::features::MatrixFileError;
use goosewatch_core::pipeline::PipelineError;
use goosewatch_core::synth::SynthError;
use goosewatch_core::window::LabelFileError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Code {
    /// Runtime failure outside the documented classes (e.g. diverged training).
    Failure = 1,
    Config = 2,
    Purity = 3,
    Schema = 4,
    Io = 5,
}

impl From<Code> for ExitCode {
    fn from(c: Code) -> Self {
        ExitCode::from(c as u8)
    }
}

/// An error bound to the exit code it should produce.
pub struct CliError {
    pub code: Code,
    pub error: anyhow::Error,
}

impl fmt::Debug for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} ({:?})", self.error, self.code)
    }
}

impl CliError {
    pub fn new(code: Code, error: impl Into<anyhow::Error>) -> Self {
        CliError { code, error: error.into() }
    }

    pub fn context(self, msg: impl fmt::Display + Send + Sync + 'static) -> Self {
        CliError {
            code: self.code,
            error: self.error.context(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches a path (or other context) to a classified error.
pub trait Context<T> {
    fn at(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<CliError>> Context<T> for Result<T, E> {
    fn at(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| e.into().context(what.to_string()))
    }
}

fn csv_code(e: &csv::Error) -> Code {
    if e.is_io_error() {
        Code::Io
    } else {
        Code::Schema
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::new(Code::Io, e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::new(csv_code(&e), e)
    }
}

impl From<CaptureError> for CliError {
    fn from(e: CaptureError) -> Self {
        let code = match e {
            CaptureError::Io(_) => Code::Io,
            CaptureError::UnsortedInput { .. } | CaptureError::Encode { .. } => Code::Failure,
            _ => Code::Schema,
        };
        CliError::new(code, e)
    }
}

impl From<MatrixFileError> for CliError {
    fn from(e: MatrixFileError) -> Self {
        let code = match &e {
            MatrixFileError::Io(_) => Code::Io,
            MatrixFileError::Csv(c) => csv_code(c),
            MatrixFileError::Schema { .. } | MatrixFileError::Value { .. } => Code::Schema,
        };
        CliError::new(code, e)
    }
}

impl From<VerdictFileError> for CliError {
    fn from(e: VerdictFileError) -> Self {
        let code = match &e {
            VerdictFileError::Io(_) => Code::Io,
            VerdictFileError::Csv(c) => csv_code(c),
            _ => Code::Schema,
        };
        CliError::new(code, e)
    }
}

impl From<LabelFileError> for CliError {
    fn from(e: LabelFileError) -> Self {
        let code = match &e {
            LabelFileError::Csv(c) => csv_code(c),
            LabelFileError::Row { .. } => Code::Schema,
        };
        CliError::new(code, e)
    }
}

impl From<DetectError> for CliError {
    fn from(e: DetectError) -> Self {
        let code = match &e {
            DetectError::Json(j) if j.is_io() => Code::Io,
            _ => Code::Schema,
        };
        CliError::new(code, e)
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let code = match &e {
            SynthError::Invalid(_) | SynthError::UnknownTarget(_) | SynthError::Json(_) => Code::Config,
            SynthError::Io(_) => Code::Io,
            SynthError::Capture(CaptureError::Io(_)) => Code::Io,
            SynthError::Labels(LabelFileError::Csv(c)) => csv_code(c),
            _ => Code::Failure,
        };
        CliError::new(code, e)
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        let code = match &e {
            PipelineError::Config(_) | PipelineError::Window(_) | PipelineError::NoRows => Code::Config,
            PipelineError::Purity { .. } => Code::Purity,
            PipelineError::Detect(_) => Code::Schema,
            // Too few exceedances is fixed by more data or a lower u_quantile.
            PipelineError::Threshold {
                source: EvtError::TooFewExceedances { .. } | EvtError::InvalidParams(_),
                ..
            } => Code::Config,
            PipelineError::Threshold { .. } | PipelineError::Train { .. } => Code::Failure,
        };
        CliError::new(code, e)
    }
}
