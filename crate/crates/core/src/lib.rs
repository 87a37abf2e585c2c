//! Translation-invariant splitting Gibbs measures of the three-state p-SOS
//! model on the Cayley tree.
//!
//! * [`law`]: closed-form boundary laws and the region classification for
//!   the binary tree.
//! * [`recursion`]: the general fixed-point recursion on any `(k, m)`.
//! * [`spectral`]: transition kernels, their spectra and the
//!   Kesten-Stigum test.
//! * [`extremality`]: Dobrushin-type contraction bounds and the combined
//!   extremality verdict.
//! * [`thresholds`]: bisection for the parameter values where the
//!   above quantities change sign.

pub mod cubic;
pub mod error;
pub mod extremality;
pub mod law;
pub mod logspace;
pub mod params;
pub mod recursion;
pub mod spectral;
pub mod thresholds;

pub use error::{Error, Result};
pub use law::{classify, classify_with, LawPoint, Region, SolutionSet, SolverOptions};
pub use params::ModelParams;
