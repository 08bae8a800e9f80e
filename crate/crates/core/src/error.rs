use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter {coordinate} = {value} outside the open interval ({lo}, {hi})")]
    ParameterDomain {
        coordinate: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("parameter vector has length {got}, model expects {expected}")]
    ParameterLength { expected: usize, got: usize },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("potential is not confining: {0}")]
    NotConfining(String),

    #[error("cannot compose models: {0}")]
    Composition(String),

    #[error("invalid input: {0}")]
    InvalidConfig(String),

    #[error("weight underflows on truncation window [{lo}, {hi}]; try a window of half-width at least {suggested}")]
    Truncation { lo: f64, hi: f64, suggested: f64 },

    #[error("matrix size n = {n} exceeds the exact-engine cap {cap}; use the Monte-Carlo path")]
    CapExceeded { n: usize, cap: usize },

    #[error("finite-difference stencil of step {step} leaves the parameter box along coordinate {coordinate}")]
    StepSize { coordinate: usize, step: f64 },

    #[error("sampler diagnostics: {0}")]
    Sampler(String),

    #[error("equilibrium measure is not one-cut: density {min_density:e} at x = {at}")]
    MultiCut { min_density: f64, at: f64 },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("support [{a}, {b}] escapes [-{radius}, {radius}]")]
    SupportEscapes { a: f64, b: f64, radius: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("estimator: {0}")]
    Estimator(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status: 2 for usage and validation errors, 3 for solver
    /// and convergence failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ParameterDomain { .. }
            | Error::ParameterLength { .. }
            | Error::InvalidModel(_)
            | Error::NotConfining(_)
            | Error::Composition(_)
            | Error::InvalidConfig(_)
            | Error::CapExceeded { .. }
            | Error::Estimator(_)
            | Error::Config { .. }
            | Error::Json(_) => 2,
            Error::Truncation { .. }
            | Error::StepSize { .. }
            | Error::Sampler(_)
            | Error::MultiCut { .. }
            | Error::Solver(_)
            | Error::SupportEscapes { .. }
            | Error::Unsupported(_) => 3,
            Error::Io(_) => 4,
        }
    }

    pub(crate) fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
