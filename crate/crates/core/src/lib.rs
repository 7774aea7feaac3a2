//! Simulation and verification of four-mode continuous-variable entangled
//! states with total three-party correlation.
//!
//! The crate builds the two-amplifier / one-beam-splitter network as a
//! Gaussian state, evaluates the three full-inseparability inequalities with
//! optimised electronic gains, samples homodyne records, and reconstructs
//! verdicts from measured noise powers.

pub mod circuit;
pub mod criteria;
pub mod error;
pub mod experiment;
pub mod gaussian;
pub mod homodyne;

pub use error::{Error, Result};
pub use gaussian::{Convention, GaussianState, QuadCombination, Quadrature, SymplecticOp, ValidationReport};
