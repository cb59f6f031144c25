//! Real minimum variational principles for time-harmonic elastodynamics,
//! acoustics and electromagnetism in lossy media.

pub mod error;
pub mod fields;
pub mod hs;
pub mod functional;
pub mod greens;
pub mod linalg;
pub mod moduli;
pub mod solver;

pub use error::{Error, Result};
