//! Numerical laboratory for one-frequency-class quasi-periodic Schrödinger
//! cocycles and their Aubry-dual long-range operators.
//!
//! The modules build on each other in this order:
//!
//! * [`arithmetic`]: continued fractions, Diophantine scans, homogeneity.
//! * [`cocycle`]: iterates, Lyapunov exponent, rotation number, degree.
//! * [`operators`]: truncated operators, eigensolves, IDS.
//! * [`reducibility`]: the KAM engine and explicit diagonalization.
//! * [`duality`]: dual eigenfunctions, Bloch waves, decay diagnostics.
//! * [`rmeasure`]: energy inversion, the R-measure and its criteria.

pub mod arithmetic;
pub mod cocycle;
pub mod duality;
pub mod error;
pub mod fourier;
pub mod linalg;
pub mod operators;
mod par;
pub mod reducibility;
pub mod rmeasure;

pub use arithmetic::{DiophantineFreqParams, DiophantinePhaseParams, Frequency};
pub use cocycle::Cocycle;
pub use error::{Error, Result};
pub use linalg::{CMat2, Sl2Matrix};
pub use operators::PotentialFourier;

/// Library version string recorded in result provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
