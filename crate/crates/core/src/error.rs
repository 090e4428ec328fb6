use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    Domain(String),
    #[error("simulation produced a non-finite value at t={t}")]
    Simulation { t: usize },
    #[error("rare-event filter infeasible after {rejections} consecutive rejections")]
    FilterInfeasible { rejections: usize },
    #[error("degenerate particle weights at t={t}")]
    DegenerateWeights { t: usize },
    #[error("numerical inconsistency: {0}")]
    Numerical(String),
    #[error("interface mismatch: {0}")]
    Interface(String),
    #[error("training diverged at epoch {epoch}")]
    TrainingDiverged { epoch: usize },
    #[error("filter step t={t} failed: {source}")]
    Step {
        t: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("training of map `{map}` failed: {source}")]
    MapTraining {
        map: String,
        #[source]
        source: Box<Error>,
    },
    #[error("degenerate summary: {0}")]
    DegenerateSummary(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("empty sample")]
    EmptySample,
    #[error("checksum mismatch in {0}")]
    Checksum(String),
    #[error("incompatible format version: {0}")]
    Version(String),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_step(self, t: usize) -> Self {
        Error::Step {
            t,
            source: Box::new(self),
        }
    }
}
