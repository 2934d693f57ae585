use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    /// `d_inf` queried against an empty (or conceptually full) set.
    #[error("distance undefined: {0}")]
    DistanceUndefined(String),

    /// Dissipation evaluated against an empty reference set.
    #[error("reference set empty")]
    ReferenceSetEmpty,

    /// Brute-force enumeration requested on a window above the cap.
    #[error("brute-force cap exceeded: window has {cells} cells, cap is {cap}")]
    BruteForceCapExceeded { cells: usize, cap: usize },

    /// A field spec whose support can violate `|c| < 1/(4 gamma)`.
    #[error("perturbation bound violated: {0}")]
    PerturbationBound(String),

    /// Column means requested for a spec whose effective means are not
    /// determined by a residue class.
    #[error("means not column-periodic: {0}")]
    MeansNotColumnPeriodic(String),

    /// The orbit hit a side length where the step minimizer is not unique.
    #[error("singular length: {0}")]
    SingularLength(String),

    /// Monte Carlo orbit hit a tie for the supplied finite value set.
    #[error("singular length for value set: {0}")]
    SingularLengthForValueSet(String),

    /// Degenerate distribution where a non-constant one is required.
    #[error("degenerate: {0}")]
    Degenerate(String),

    /// Invalid argument / configuration for an operation.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}
