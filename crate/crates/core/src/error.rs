use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("label of the wrong kind for this prediction set or score")]
    TaskMismatch,
    #[error("malformed prediction set: {0}")]
    MalformedSet(&'static str),
    #[error("class index {index} outside label space of size {classes}")]
    ClassOutOfRange { index: usize, classes: usize },
    #[error("level {0} outside [0, 1]")]
    LevelOutOfRange(f64),
    #[error("target level {0} outside (0, 1)")]
    InvalidAlpha(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("length mismatch: {0}")]
    LengthMismatch(&'static str),
    #[error("prediction set is not informative under the active constraint")]
    NotInformative,
    #[error("no closed-form breakpoint for this constraint and score combination")]
    UnsupportedBreakpoint,
    #[error("operation not supported: {0}")]
    Unsupported(&'static str),
    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },
    #[error("training labels are all in one class")]
    DegenerateLabels,
    #[error("no calibration unit is covered by its informative set")]
    NoPositiveUnits,
    #[error("missing label for reported unit {0}")]
    MissingTruth(usize),
    #[error("no replication selected any unit")]
    NoSelections,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("cannot parse scorer record: {0}")]
    Parse(String),
}
