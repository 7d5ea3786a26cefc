use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what}: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("fusion training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },

    #[error("identity {identity} has no gallery instances")]
    EmptyGallery { identity: usize },

    #[error("identity distribution of event {event} is zero at identity {identity} (smoothing missing)")]
    ZeroProbability { event: usize, identity: usize },

    #[error("exact inference too large ({nodes} nodes, ~{states:.0} joint states); use max-product")]
    ExactSolveTooLarge { nodes: usize, states: f64 },

    #[error("infeasible event bounds: {events} events x nu_min {nu_min} exceeds {photos} photos")]
    InfeasibleEventBounds {
        events: usize,
        nu_min: usize,
        photos: usize,
    },

    #[error("event assignment network is infeasible")]
    FlowInfeasible,

    #[error("configuration error: {0}")]
    InvalidConfig(String),

    #[error("collection validation failed:\n{}", format_violations(.0))]
    Validation(Vec<Violation>),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("missing prediction for query instance {instance}")]
    MissingPrediction { instance: usize },

    #[error("solver iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_iteration(self, iteration: usize) -> Error {
        Error::Solver {
            iteration,
            source: Box::new(self),
        }
    }

    /// CLI exit code: 2 for configuration errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidConfig(_) | Error::InfeasibleEventBounds { .. } => 2,
            _ => 1,
        }
    }
}

fn format_violations(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(|v| format!("  {v}"))
        .collect::<Vec<_>>()
        .join("\n")
}
