use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong while building, compiling or evaluating an
/// interferometer.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("incompatible bases")]
    IncompatibleBases,

    #[error("unknown arm `{0}`")]
    UnknownArm(String),

    #[error("unknown stage `{0}`")]
    UnknownStage(String),

    #[error("unknown element `{0}`")]
    UnknownElement(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("element `{element}`: {message}")]
    Validation { element: String, message: String },

    #[error("no source")]
    NoSource,

    #[error("network has a cycle through `{0}`")]
    Cycle(String),

    #[error("stage `{stage}`: {message}")]
    InvalidStage { stage: String, message: String },

    #[error("null post-selection (|<Phi|Psi>| = {0:e})")]
    NullPostselection(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("duplicate pointer id `{0}`")]
    DuplicatePointer(String),

    #[error("unknown pointer `{0}`")]
    UnknownPointer(String),

    #[error("pointer `{id}` has the wrong kind: {message}")]
    WrongPointerKind { id: String, message: String },

    #[error("expected exactly two qubit probes, found {0}")]
    ProbeCount(usize),
}

impl Error {
    pub(crate) fn validation(element: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation {
            element: element.into(),
            message: message.into(),
        }
    }

    /// Errors caused by a malformed description rather than by the physics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation { .. }
                | Error::NoSource
                | Error::Cycle(_)
                | Error::InvalidStage { .. }
                | Error::InvalidParameter(_)
                | Error::UnknownArm(_)
                | Error::UnknownStage(_)
                | Error::UnknownElement(_)
                | Error::DuplicatePointer(_)
                | Error::UnknownPointer(_)
        )
    }
}
