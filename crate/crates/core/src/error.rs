use thiserror::Error;

/// Errors produced by shape validation, protocol construction, and the
/// theory/ensemble evaluators.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("invalid protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    /// The control parameter ratio nu(t) never decreases, so no particle is
    /// ever transferred into the trapped component.
    #[error("protocol has no capture interval: nu(t) never decreases")]
    NoCaptureInterval,

    /// Distribution-level predictions assume a single contiguous capture
    /// interval per cycle; protocols that dip more than once are rejected.
    #[error("protocol has {0} capture intervals per cycle; distribution predictions support exactly one")]
    MultipleCaptureIntervals(usize),

    /// Too many trajectories hit a solver failure (corner hit, penetration,
    /// wall overtake) for the ensemble statistics to be trustworthy.
    #[error("{aborted} of {total} trajectories aborted, above the {limit} quality threshold")]
    AbortRateExceeded {
        aborted: usize,
        total: usize,
        limit: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
