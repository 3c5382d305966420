use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: expected {expected} bytes of payload, found {found}")]
    Length { expected: usize, found: usize },
    #[error("data error: {0}")]
    Data(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("lookup error: {0}")]
    Lookup(String),
    #[error("probe error: {0}")]
    Probe(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("coverage error: {0}")]
    Coverage(String),
    #[error("selection error: {0}")]
    Selection(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("report error: missing {}", .0.join(", "))]
    Report(Vec<String>),
    #[error("cell ({i}, {j}): {source}")]
    Cell {
        i: usize,
        j: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_cell(self, i: usize, j: usize) -> Self {
        Error::Cell {
            i,
            j,
            source: Box::new(self),
        }
    }

    /// Short machine-readable name of the innermost error.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Format(_) => "format",
            Error::Length { .. } => "length",
            Error::Data(_) => "data",
            Error::Argument(_) => "argument",
            Error::Lookup(_) => "lookup",
            Error::Probe(_) => "probe",
            Error::Protocol(_) => "protocol",
            Error::Numeric(_) => "numeric",
            Error::Training(_) => "training",
            Error::Coverage(_) => "coverage",
            Error::Selection(_) => "selection",
            Error::Config(_) => "config",
            Error::Report(_) => "report",
            Error::Cell { source, .. } => source.kind(),
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 config, 3 training, 4 selection, 5 probe; everything else that is a
    /// malformed input is reported as a config error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Training(_) => 3,
            Error::Selection(_) => 4,
            Error::Probe(_) | Error::Protocol(_) | Error::Lookup(_) => 5,
            Error::Cell { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
