use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("initial packet is not normalizable on the grid (norm {norm:.3e})")]
    NonNormalizable { norm: f64 },

    #[error("longitudinal domain too small: {mass:.3e} of probability reached the far wall at t = {time}")]
    DomainTooSmall { time: f64, mass: f64 },

    #[error("node singularity: density {rho:.3e} below floor {floor:.3e}")]
    NodeSingularity { rho: f64, floor: f64 },

    #[error("step limit of {limit} exceeded")]
    StepLimit { limit: usize },

    #[error("{aborted} of {total} trajectories aborted (limit 1%)")]
    TooManyAborts { aborted: usize, total: usize },

    #[error("distributions do not share a binning")]
    BinningMismatch,

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("missing direction {0}")]
    MissingDirection(String),

    #[error("unitary check failed: max |U^dagger U - I| = {deviation:.3e}")]
    NonUnitary { deviation: f64 },

    #[error("interaction does not decouple from spin: max commutator {deviation:.3e}")]
    NotDecoupled { deviation: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
