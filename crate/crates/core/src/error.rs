use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unknown mount component `{0}`")]
    UnknownMount(String),

    #[error("latitude {0}° is outside the UTM band (|lat| <= 84)")]
    UnsupportedRegion(f64),

    #[error("UTM coordinate out of range: {0}")]
    UtmRange(String),

    #[error("UTM zone mismatch: point in zone {point}, anchor in zone {anchor}")]
    ZoneMismatch { point: u8, anchor: u8 },

    #[error("pose ({x:.3}, {y:.3}) lies outside the grid")]
    OutsideGrid { x: f64, y: f64 },

    #[error("map has no occupied cells")]
    EmptyMap,

    #[error("particle filter degenerated: all weights vanished")]
    DegenerateFilter,

    #[error("no path between start and goal")]
    NoPath,

    #[error("path endpoint {0} lies on a lethal cell")]
    InvalidEndpoint(&'static str),

    #[error("farm needs at least two rows to form a corridor")]
    NoCorridor,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    /// Tags the error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Exit status for the command-line runner: 2 for configuration problems,
    /// 1 for everything that goes wrong at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Parse { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 1,
        }
    }
}
