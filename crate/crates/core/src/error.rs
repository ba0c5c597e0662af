//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input failed validation (bad ICC ordering, bad dimensions, bad flag value, ...).
    #[error("invalid input: {0}")]
    Validation(String),

    /// The design gives the requested estimand no information (e.g. every
    /// cluster-period under the same condition, or treatment confounded with
    /// period effects).
    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    /// No cell size up to `m_max` reaches the target power. `variance_floor`
    /// is the limiting variance as the cell size grows without bound, and
    /// `min_detectable_delta` the smallest effect reachable at that floor.
    #[error(
        "infeasible: no cell size up to {m_max} reaches the target power \
         (variance floor {variance_floor:e} as m -> inf; smallest detectable \
         effect at the floor is {min_detectable_delta:e})"
    )]
    Infeasible {
        m_max: u64,
        variance_floor: f64,
        min_detectable_delta: f64,
    },

    /// A closed-form V_LCRT was requested for a plan with unequal cell sizes.
    #[error("V_LCRT unavailable for unequal cells: no closed form exists; use the collapsed-GLS route")]
    VLcrtUnavailable,

    /// The GLS information matrix is singular; the message names the
    /// near-null-space direction over the fixed effects.
    #[error("inestimable effect: {0}")]
    Inestimable(String),

    #[error("design file: {0}")]
    DesignFile(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for invalid input, 3 for an
    /// infeasible or degenerate request. (Verification failures exit 1 but
    /// are reported, not raised as errors.)
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::DesignFile(_) | Error::Io(_) => 2,
            Error::DegenerateDesign(_)
            | Error::Infeasible { .. }
            | Error::VLcrtUnavailable
            | Error::Inestimable(_) => 3,
        }
    }
}
