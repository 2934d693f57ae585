//! Simulation and analysis of the discrete-in-time minimizing-movement
//! evolution of square-lattice interfaces whose perimeter carries small
//! random bond weights `1 + eps * c_xi`.
//!
//! The crate is organized around the pipeline
//!
//! * [`lattice`] — exact integer geometry of cells, coordinate rectangles and
//!   dual boundary points,
//! * [`field`] — deterministic, seeded coefficient fields `c_xi`,
//! * [`energy`] — random perimeter, dissipation and the total step energy,
//! * [`flow`] — the minimizing-movement stepper (rectangle fast path and a
//!   brute-force oracle) and trajectory generation,
//! * [`effective`] — exact-rational effective velocities, singular lengths
//!   and pinning thresholds for column-periodic mean structures,
//! * [`limit_ode`] — event-driven integration of the continuum limit laws,
//! * [`homog`] — statistical experiments (side-sum convergence, the
//!   column-constant non-convergence demo, Monte Carlo orbit velocities).

pub mod effective;
pub mod energy;
pub mod error;
pub mod field;
pub mod flow;
pub mod homog;
pub mod lattice;
pub mod limit_ode;
pub mod rational;

pub use error::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
