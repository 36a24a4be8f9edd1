use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by configuration, calibration and I/O paths.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("attenuation profile: {0}")]
    Attenuation(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error(
        "insufficient calibration samples: {provided} provided, {required} required; offending (n,k,r): {}",
        format_triples(offending)
    )]
    InsufficientSamples {
        provided: usize,
        required: usize,
        offending: Vec<(usize, usize, usize)>,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for errors caused by a malformed or inconsistent configuration.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::InvalidConfig { .. } | Error::Toml(_) | Error::Attenuation(_)
        )
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

fn format_triples(t: &[(usize, usize, usize)]) -> String {
    const SHOWN: usize = 8;
    let mut s = t
        .iter()
        .take(SHOWN)
        .map(|(n, k, r)| format!("({n},{k},{r})"))
        .collect::<Vec<_>>()
        .join(" ");
    if t.len() > SHOWN {
        s.push_str(&format!(" ... and {} more", t.len() - SHOWN));
    }
    s
}
