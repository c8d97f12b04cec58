use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A geometric primitive or scene violates its construction invariants.
    #[error("invalid geometry: {0}")]
    Geometry(String),

    /// Density, ray, camera or sampler parameters out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A caller broke an operation's precondition.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(
        "oracle self-check failed at resolution {resolution}: doubling changed opacity by {change:e} (limit {limit:e})"
    )]
    OracleRichardson {
        resolution: usize,
        change: f64,
        limit: f64,
    },

    #[error("{}", format_parse(file, *line, key, message))]
    Parse {
        file: PathBuf,
        line: usize,
        key: String,
        message: String,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_parse(file: &std::path::Path, line: usize, key: &str, message: &str) -> String {
    let mut s = format!("{}", file.display());
    if line > 0 {
        s.push_str(&format!(":{line}"));
    }
    if !key.is_empty() {
        s.push_str(&format!(": `{key}`"));
    }
    s.push_str(": ");
    s.push_str(message);
    s
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn param(msg: impl Into<String>) -> Error {
    Error::Parameter(msg.into())
}

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
