use thiserror::Error;

use crate::bridge::BridgeError;

pub type Result<T, E = EffectError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EffectError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    /// The feature axis collapses to a point, so no bins or grid can be built.
    #[error("feature {feature} has a degenerate range (min = max = {value}); a single bin cannot carry a local effect")]
    DegenerateRange { feature: usize, value: f64 },

    #[error("binning constraint violated: {0}")]
    Constraint(String),

    #[error("too few instances: {found} available, at least {required} needed ({context})")]
    TooFewInstances {
        found: usize,
        required: usize,
        context: String,
    },

    #[error("spline fit is degenerate: {0}")]
    FitDegenerate(String),

    #[error("model oracle failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Bridge(#[from] BridgeError),
}

impl EffectError {
    /// True for failures that only mean "this data subset cannot support the
    /// method", as opposed to a broken oracle or bad arguments.
    pub fn is_degenerate_subset(&self) -> bool {
        matches!(
            self,
            EffectError::DegenerateRange { .. }
                | EffectError::Constraint(_)
                | EffectError::TooFewInstances { .. }
                | EffectError::FitDegenerate(_)
        )
    }

    pub fn is_oracle(&self) -> bool {
        matches!(self, EffectError::Oracle(_) | EffectError::Bridge(_))
    }
}
