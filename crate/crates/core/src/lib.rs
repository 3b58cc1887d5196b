//! Open-system simulation of microwave-to-spin transduction through a
//! piezoelectric phonon mode.
//!
//! The three modes are a transmon (`SC`), a single mechanical mode (`PHONON`)
//! truncated at `n_ph` levels, and a group-IV color-center spin transition
//! (`SPIN`). Interchange values are ordinary frequencies in Hz; factors of 2π
//! appear only inside the propagators.

pub mod device;
pub mod dynamics;
pub mod error;
pub mod protocols;
pub mod qops;
pub mod spin;

pub use error::{Error, Result};
pub use qops::{DensityMatrix, Operator, SpaceLayout};
