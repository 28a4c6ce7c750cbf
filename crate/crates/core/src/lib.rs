//! Spatially aware functional registration by local variation analysis.
//!
//! Curves observed at spatial locations are smoothed, summarized by their
//! local variation distributions, and registered to a common clock using a
//! best-linear-unbiased weighted mean whose weights come from a fitted Matérn
//! variogram. Non-Euclidean distances (travel times, say) are approximated by
//! Euclidean ones through a spectral embedding before any covariance model is
//! applied.

pub mod embed;
pub mod error;
pub mod optim;
pub mod quad;
pub mod registration;
pub mod simulation;
pub mod smoothing;
pub mod special;
pub mod variogram;
pub mod warp;

pub use error::{Error, Result};
