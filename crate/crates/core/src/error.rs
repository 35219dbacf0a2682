use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("schema error in {location}: {message}")]
    Schema { location: String, message: String },

    #[error("parse error at byte offset {offset} (line {line}, column {column}): {message}")]
    Parse {
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("conic solver failed: {0}")]
    Solver(String),

    #[error("polytope is unbounded")]
    Unbounded,

    #[error("relative degree assumption violated: M*B is zero, the control input does not enter dV/dt")]
    RelativeDegree,

    #[error("cell {cell}: synthesis infeasible ({diagnosis})")]
    Infeasible { cell: String, diagnosis: String },

    #[error("integration produced a non-finite state at t = {time}")]
    Integration { time: f64 },

    #[error("initial state lies in no cell")]
    NoContainingCell,

    #[error("no gain for cell {0}")]
    MissingGain(String),

    #[error("segment in cell {cell} timed out at t = {time} with state {state:?}")]
    Timeout {
        cell: String,
        time: f64,
        state: Vec<f64>,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn schema(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            location: location.into(),
            message: message.into(),
        }
    }
}
