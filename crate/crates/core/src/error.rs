use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("toml error: {0}")]
    TomlDe(#[from] toml::de::Error),

    #[error("mr syntax error{}: {msg}", fmt_line(*.line))]
    MrSyntax { line: Option<u64>, msg: String },

    #[error("schema violation{}: {msg}", fmt_line(*.line))]
    SchemaViolation { line: Option<u64>, msg: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("delexicalization miss: value of `{attribute}` not found in utterance")]
    DelexMiss { attribute: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("token not in vocabulary: `{0}`")]
    TokenNotInVocab(String),

    #[error("shape mismatch in {op}: {msg}")]
    Shape { op: &'static str, msg: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{0}")]
    Invalid(String),
}

fn fmt_line(line: Option<u64>) -> String {
    match line {
        Some(n) => format!(" at line {n}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn mr_syntax(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::MrSyntax { line, msg: msg.into() }
    }

    pub fn schema_violation(line: Option<u64>, msg: impl Into<String>) -> Self {
        Error::SchemaViolation { line, msg: msg.into() }
    }
}
