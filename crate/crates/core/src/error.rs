use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("unknown electrode group `{0}`")]
    UnknownGroup(String),

    #[error("evaluation point must lie above the electrode plane (z = {0} m)")]
    BelowPlane(f64),

    #[error("`{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("stage `{stage}` cannot be applied to a {kind} spectrum")]
    IncompatibleKind { stage: &'static str, kind: &'static str },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("singular design: {0}")]
    Singular(String),

    #[error("no trap minimum found: {0}")]
    NoMinimum(String),

    #[error("unstable trap: {0}")]
    Unstable(String),

    #[error("did not converge: {0}")]
    NotConverged(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Singular(_) | Error::NoMinimum(_) | Error::Unstable(_) | Error::NotConverged(_)
        )
    }

    pub(crate) fn non_positive(name: &'static str, value: impl Into<f64>) -> Self {
        Error::NonPositive { name, value: value.into() }
    }
}
