use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Bad input: a field is missing, negative, out of range or inconsistent.
    #[error("invalid {field}: {reason}")]
    Validation { field: String, reason: String },

    /// Argument outside the domain of a mathematical function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The requested spectral grid cannot resolve the model.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// A numerical procedure produced an unusable answer.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A modelling assumption was contradicted by the data.
    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    /// Exit-code class used by the CLI: input problems versus numeric trouble.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation { .. } | Error::Io(_) | Error::Json(_) | Error::Format(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Validation { .. } => "validation",
            Error::Domain(_) => "domain",
            Error::Resolution(_) => "resolution",
            Error::Numeric(_) => "numeric",
            Error::Assumption(_) => "assumption",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
            Error::Format(_) => "format",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
