//! Feature-effect curves (PDP, d-PDP, ICE, ALE, RHALE, SHAP-DP) with
//! heterogeneity indices, and a search for subspaces where regional effects
//! are less heterogeneous, for any model exposed as a prediction oracle.
//!
//! With the default `parallel` feature, oracle batches, ICE grids, Shapley
//! instances and split candidates run on rayon; without it the same code runs
//! sequentially and produces identical results.

pub mod binning;
pub mod bridge;
pub mod curve;
pub mod dataset;
pub mod error;
pub mod global;
pub mod method;
pub mod oracle;
mod par;
pub mod regional;
pub mod shap;
pub mod synthetic;

pub use error::{EffectError, Result};
