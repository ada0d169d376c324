use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("time {t} outside the cycle [0, {tau}]")]
    TimeOutOfRange { t: f64, tau: f64 },

    #[error("band gap closes: gap {gap:.3e} at k = {k:.6}, t = {t:.6}")]
    GapClosed { gap: f64, k: f64, t: f64 },

    #[error(
        "band {band} is degenerate with a neighbour (splitting {splitting:.3e}) at k = {k:.6}, t = {t:.6}"
    )]
    DegenerateBand { band: usize, splitting: f64, k: f64, t: f64 },

    #[error("matrix is not Hermitian (defect {defect:.3e})")]
    NotHermitian { defect: f64 },

    #[error("Wilson loop is ill-conditioned: link overlap {overlap:.3e} at link {link}")]
    IllConditionedLoop { overlap: f64, link: usize },

    #[error("plaquette link overlap {overlap:.3e} at (k index {ik}, t index {it}); refine the grid")]
    RefineGrid { overlap: f64, ik: usize, it: usize },

    #[error("smooth gauge broken: |<psi(k_j)|psi(k_j+1)>| = {overlap:.3e} at j = {link}")]
    GaugeDiscontinuity { overlap: f64, link: usize },

    #[error("unitarity defect {defect:.3e} exceeds tolerance {tol:.1e}")]
    Unitarity { defect: f64, tol: f64 },

    #[error("trace drift {drift:.3e} exceeds tolerance")]
    TraceDrift { drift: f64 },

    #[error("propagation failed at k = {k:.6}: {source}")]
    AtMomentum {
        k: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(
        "distribution has weight {edge_weight:.3} at the window edges; lattice too small for the spread"
    )]
    Wraparound { edge_weight: f64 },

    #[error("distribution is nearly uniform (1 - L*offset = {residual:.3}); no peak to track")]
    NoPeak { residual: f64 },

    #[error("zero-temperature ground state is degenerate (splitting {splitting:.3e})")]
    DegenerateGroundState { splitting: f64 },

    #[error("invalid argument: {0}")]
    Invalid(String),
}

/// Coarse classification used by front ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A physical precondition failed (gap closed, wraparound, no peak, ...).
    Physics,
    /// The numerics drifted (unitarity, trace).
    Numerical,
    /// Bad input values.
    Input,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::GapClosed { .. }
            | Error::DegenerateBand { .. }
            | Error::IllConditionedLoop { .. }
            | Error::RefineGrid { .. }
            | Error::GaugeDiscontinuity { .. }
            | Error::Wraparound { .. }
            | Error::NoPeak { .. }
            | Error::DegenerateGroundState { .. } => ErrorKind::Physics,
            Error::Unitarity { .. } | Error::TraceDrift { .. } | Error::NotHermitian { .. } => {
                ErrorKind::Numerical
            }
            Error::AtMomentum { source, .. } => source.kind(),
            Error::TimeOutOfRange { .. } | Error::Invalid(_) => ErrorKind::Input,
        }
    }

    pub(crate) fn at_momentum(self, k: f64) -> Error {
        Error::AtMomentum { k, source: Box::new(self) }
    }
}
