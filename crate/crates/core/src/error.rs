use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numerical error: {0}")]
    Numerical(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("spec error: {0}")]
    Spec(String),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("graph error: {0}")]
    Graph(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-parsable tag used by the CLI and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "InvalidInput",
            Error::Shape(_) => "ShapeError",
            Error::Numerical(_) => "NumericalError",
            Error::Format(_) => "FormatError",
            Error::Spec(_) => "SpecError",
            Error::DegenerateGeometry(_) => "DegenerateGeometry",
            Error::Config(_) => "ConfigError",
            Error::Graph(_) => "GraphError",
            Error::Io(_) => "IoError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
