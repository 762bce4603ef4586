use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
///
/// Each variant carries a stable machine-readable code (see [`Error::code`])
/// which the command-line front end emits verbatim in its error JSON.
#[derive(Debug, Error)]
pub enum Error {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: malformed record: {message}", .file.display())]
    MalformedRecord {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("span [{start}, {end}) out of bounds for article {article_id} (length {len})")]
    SpanOutOfBounds {
        article_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("invalid corpus: {0}")]
    InvalidCorpus(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("no verification-stage annotations to score against")]
    NoVerificationData,

    #[error("article {0} has empty text")]
    EmptyText(String),
    #[error("span [{start}, {end}) lies outside every sentence of article {article_id}")]
    SpanOutsideSentencedText {
        article_id: String,
        start: usize,
        end: usize,
    },
    #[error("segmenter returned invalid sentences for article {article_id}: {message}")]
    BadSegmentation { article_id: String, message: String },

    #[error("empty input text")]
    EmptyInput,
    #[error("encoder adapter failure: {0}")]
    Adapter(String),

    #[error("empty dataset")]
    EmptyDataset,
    #[error("degenerate dataset: {0}")]
    DegenerateDataset(String),
    #[error("prompt {0} has no gold evidence")]
    MissingGoldEvidence(String),
    #[error("no sentences to decode for prompt {0}")]
    NoSentences(String),
    #[error("encoder mismatch: model expects {expected}, got {actual}")]
    EncoderMismatch { expected: String, actual: String },
    #[error("mode/model mismatch: {0}")]
    ModeModelMismatch(String),
    #[error("no prompts to evaluate")]
    EmptyEval,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("bad model file: {0}")]
    BadModelFile(String),

    #[error("length mismatch: {0} gold vs {1} predicted")]
    LengthMismatch(usize, usize),
    #[error("empty class: {0}")]
    EmptyClass(&'static str),
    #[error("prompt {0} has no sentence labeling")]
    MissingLabeling(String),
    #[error("score {0} is not a finite number")]
    NonFiniteScore(f64),

    #[error("no unit carries two or more pairable values")]
    InsufficientPairableValues,

    #[error("article {0} has no abstract boundary")]
    MissingAbstractBoundary(String),

    #[error("I/O error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::MissingFile(_) => "MISSING_FILE",
            Error::MalformedRecord { .. } => "MALFORMED_RECORD",
            Error::DanglingReference(_) => "DANGLING_REFERENCE",
            Error::SpanOutOfBounds { .. } => "SPAN_OUT_OF_BOUNDS",
            Error::InvalidCorpus(_) => "INVALID_CORPUS",
            Error::EmptyCorpus => "EMPTY_CORPUS",
            Error::NoVerificationData => "NO_VERIFICATION_DATA",
            Error::EmptyText(_) => "EMPTY_TEXT",
            Error::SpanOutsideSentencedText { .. } => "SPAN_OUTSIDE_SENTENCED_TEXT",
            Error::BadSegmentation { .. } => "BAD_SEGMENTATION",
            Error::EmptyInput => "EMPTY_INPUT",
            Error::Adapter(_) => "ADAPTER_FAILURE",
            Error::EmptyDataset => "EMPTY_DATASET",
            Error::DegenerateDataset(_) => "DEGENERATE_DATASET",
            Error::MissingGoldEvidence(_) => "MISSING_GOLD_EVIDENCE",
            Error::NoSentences(_) => "NO_SENTENCES",
            Error::EncoderMismatch { .. } => "ENCODER_MISMATCH",
            Error::ModeModelMismatch(_) => "MODE_MODEL_MISMATCH",
            Error::EmptyEval => "EMPTY_EVAL",
            Error::InvalidConfig(_) => "INVALID_CONFIG",
            Error::BadModelFile(_) => "BAD_MODEL_FILE",
            Error::LengthMismatch(..) => "LENGTH_MISMATCH",
            Error::EmptyClass(_) => "EMPTY_CLASS",
            Error::MissingLabeling(_) => "MISSING_LABELING",
            Error::NonFiniteScore(_) => "NON_FINITE_SCORE",
            Error::InsufficientPairableValues => "INSUFFICIENT_PAIRABLE_VALUES",
            Error::MissingAbstractBoundary(_) => "MISSING_ABSTRACT_BOUNDARY",
            Error::Io { .. } => "IO_ERROR",
            Error::Json(_) => "SERIALIZATION_ERROR",
        }
    }

    /// Internal failures (I/O, serialization) as opposed to bad user input.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Json(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::MissingFile(path)
        } else {
            Error::Io { path, source }
        }
    }
}
