//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("parse error in {path} line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("missing cell (subject={subject}, variable={variable}, time={time}) in {path}")]
    MissingCell {
        path: PathBuf,
        subject: String,
        variable: String,
        time: f64,
    },

    #[error("duplicate cell (subject={subject}, variable={variable}, time={time}) in {path}")]
    DuplicateCell {
        path: PathBuf,
        subject: String,
        variable: String,
        time: f64,
    },

    #[error("subject {subject} in {path} does not appear in the labels file")]
    UnknownSubject { subject: String, path: PathBuf },

    #[error("subject {subject} has no data in the first window group")]
    EmptyFirstGroup { subject: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("all variables removed by {filter} filter")]
    AllVariablesRemoved { filter: String },

    #[error("variable {variable} is constant; correlation undefined")]
    ConstantVariable { variable: String },

    #[error("singular matrix in {context}")]
    SingularMatrix { context: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Divergence { epoch: usize },

    #[error("fold {fold} has a single class in its training split")]
    SingleClassFold { fold: usize },

    #[error("class {class} has no subjects")]
    EmptyClass { class: usize },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
