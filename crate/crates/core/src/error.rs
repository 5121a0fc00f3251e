use thiserror::Error;

/// Errors raised across the toolkit.
///
/// Every variant has a stable machine-readable name (see [`Error::name`]) that
/// the command-line front end prints next to the human-readable message.
#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate electrode label `{0}`")]
    DuplicateLabel(String),

    #[error("electrode `{0}` has a non-finite coordinate")]
    NonFiniteCoordinate(String),

    #[error("electrodes `{0}` and `{1}` are at the same position")]
    CoincidentElectrodes(String, String),

    #[error("montage needs at least 2 channels, got {0}")]
    TooFewChannels(usize),

    #[error("neighbor count {k} out of range for {channels} channels")]
    NeighborCountOutOfRange { k: usize, channels: usize },

    #[error("channel index {index} out of range for {channels} channels")]
    ChannelOutOfRange { index: usize, channels: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite input sample")]
    NonFiniteInput,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("trial has {samples} samples, shorter than the {window}-sample smoothing window")]
    TrialTooShort { samples: usize, window: usize },

    #[error("channel {0} has zero variance during calibration")]
    DeadChannel(usize),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("calibration model was built for a different montage (model {model}, montage {montage})")]
    FingerprintMismatch { model: String, montage: String },

    #[error("calibration model has no montage fingerprint")]
    MissingFingerprint,

    #[error("reference variance of channel {0} is not positive")]
    NonPositiveReference(usize),

    #[error("onset {onset} s lies outside the {length} s trial")]
    OnsetOutsideTrial { onset: f64, length: f64 },

    #[error("invalid frequency band [{low}, {high}] Hz for sampling rate {f_s} Hz")]
    InvalidBand { low: f64, high: f64, f_s: f64 },

    #[error("contamination mask selects no elements")]
    EmptyMask,

    #[error("shape mismatch: {0:?} vs {1:?}")]
    ShapeMismatch(Vec<usize>, Vec<usize>),

    #[error("smoothing window of {window} samples is longer than the {samples}-sample signal")]
    WindowTooLong { window: usize, samples: usize },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("payload truncated: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("header and payload disagree: {0}")]
    Inconsistency(String),

    #[error("malformed stream: {0}")]
    MalformedStream(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable identifier of the error kind.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DuplicateLabel(_) => "DuplicateLabel",
            Error::NonFiniteCoordinate(_) => "NonFiniteCoordinate",
            Error::CoincidentElectrodes(..) => "CoincidentElectrodes",
            Error::TooFewChannels(_) => "TooFewChannels",
            Error::NeighborCountOutOfRange { .. } => "NeighborCountOutOfRange",
            Error::ChannelOutOfRange { .. } => "ChannelOutOfRange",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteInput => "NonFiniteInput",
            Error::EmptyInput(_) => "EmptyInput",
            Error::TrialTooShort { .. } => "TrialTooShort",
            Error::DeadChannel(_) => "DeadChannel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::FingerprintMismatch { .. } => "FingerprintMismatch",
            Error::MissingFingerprint => "MissingFingerprint",
            Error::NonPositiveReference(_) => "NonPositiveReference",
            Error::OnsetOutsideTrial { .. } => "OnsetOutsideTrial",
            Error::InvalidBand { .. } => "InvalidBand",
            Error::EmptyMask => "EmptyMask",
            Error::ShapeMismatch(..) => "ShapeMismatch",
            Error::WindowTooLong { .. } => "WindowTooLong",
            Error::VersionMismatch { .. } => "VersionMismatch",
            Error::TruncatedPayload { .. } => "TruncatedPayload",
            Error::Inconsistency(_) => "Inconsistency",
            Error::MalformedStream(_) => "MalformedStream",
            Error::Parse { .. } => "ParseError",
            Error::Json(_) => "JsonError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
