//! Empirical estimation of the concentration of measure of a dataset's
//! underlying distribution, under ℓ∞ and ℓ2 perturbation metrics.
//!
//! The central question: among all error regions of empirical mass at least
//! `alpha`, how small can the mass of the region's ε-expansion be? The answer
//! upper-bounds the restricted concentration function and, through it, yields
//! a lower bound on the adversarial risk of any classifier with risk ≥ alpha.
//!
//! The search is restricted to two tractable set families:
//!
//! * complements of unions of `T` axis-aligned hyperrectangles (ℓ∞), found by
//!   density ordering + ℓ1 clustering + binary search over the covered mass;
//! * unions of `T` Euclidean balls centered at data points (ℓ2), found by a
//!   greedy sequential placement minimizing expansion overhead.
//!
//! The [`theory`] module provides the VC-style complexity penalty, the
//! generalization certificate bracketing the empirical estimate, and the
//! `(T⁴, 1/T)` schedule under which the estimate converges. The [`oracle`]
//! module provides exhaustive and closed-form ground truth at desk scale.

pub mod cluster;
pub mod data;
pub mod error;
pub mod metric;
pub mod oracle;
pub mod regions;
pub mod report;
pub mod search_l2;
pub mod search_linf;
pub mod theory;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
