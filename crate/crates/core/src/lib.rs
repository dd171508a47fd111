//! Hybrid quantum residual networks on a density-matrix simulator.
//!
//! The crate provides
//! - exact simulation of quantum residual blocks and their classical reduction ([`blocks`]),
//! - the reconstruction of trained classical weights into block unitaries
//!   through sign splitting, Halmos dilation and Trotter–Suzuki compilation ([`reconstruct`]),
//! - finite-shot measurement simulation ([`sampling`]),
//! - two-qubit entanglement datasets with a PPT oracle ([`entangle`]),
//! - training of classical cascades and greedy training of quantum blocks ([`training`]),
//! - the experiment runner behind the `hqrn` binary ([`experiment`]).
//!
//! The numerical core is generic over [`Real`]; the aliases below fix the
//! scalar to `f64`, which every tolerance in the test-suite assumes.

pub mod blocks;
pub mod entangle;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod mnist;
pub mod reconstruct;
pub mod sampling;
pub mod scalar;
pub mod training;

pub use error::{HqrnError, Result};
pub use scalar::Real;

pub type ComplexMatrix = linalg::ComplexMatrix<f64>;
pub type RealMatrix = linalg::RealMatrix<f64>;
pub type DensityMatrix = linalg::DensityMatrix<f64>;
pub type SimplexVector = linalg::SimplexVector<f64>;
pub type QrbParams = blocks::QrbParams<f64>;
pub type CrbParams = blocks::CrbParams<f64>;
pub type SignSplit = reconstruct::SignSplit<f64>;
pub type ContractionPair = reconstruct::ContractionPair<f64>;
