use serde::{Deserialize, Serialize};

use crate::binning::{BinningConfig, BinningMode};
use crate::curve::{EffectCurve, Method};
use crate::dataset::Dataset;
use crate::error::{EffectError, Result};
use crate::global::{ale, d_pdp, pdp, rhale, PdpConfig};
use crate::oracle::ModelOracle;
use crate::shap::{shap_dp, ShapConfig};

/// Smallest cell the regional search will evaluate a method on.
pub const MIN_CELL_ROWS: usize = 10;

/// A global-effect method together with its settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params")]
pub enum MethodConfig {
    #[serde(rename = "ALE")]
    Ale(BinningConfig),
    #[serde(rename = "RHALE")]
    Rhale(BinningConfig),
    #[serde(rename = "PDP")]
    Pdp(PdpConfig),
    #[serde(rename = "dPDP")]
    DPdp(PdpConfig),
    #[serde(rename = "SHAPDP")]
    ShapDp(ShapConfig),
}

impl MethodConfig {
    /// The method with its default settings.
    pub fn default_for(method: Method) -> Self {
        match method {
            Method::Ale => MethodConfig::Ale(BinningConfig::fixed(20)),
            Method::Rhale => MethodConfig::Rhale(BinningConfig::default()),
            Method::Pdp => MethodConfig::Pdp(PdpConfig::default()),
            Method::DPdp => MethodConfig::DPdp(PdpConfig::default()),
            Method::ShapDp => MethodConfig::ShapDp(ShapConfig::default()),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            MethodConfig::Ale(_) => Method::Ale,
            MethodConfig::Rhale(_) => Method::Rhale,
            MethodConfig::Pdp(_) => Method::Pdp,
            MethodConfig::DPdp(_) => Method::DPdp,
            MethodConfig::ShapDp(_) => Method::ShapDp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodConfig::Ale(b) => {
                if b.mode != BinningMode::Fixed {
                    return Err(EffectError::InvalidArgument(
                        "ALE uses fixed-width bins; variable-width binning is RHALE-only".into(),
                    ));
                }
                b.validate()
            }
            MethodConfig::Rhale(b) => b.validate(),
            MethodConfig::Pdp(p) | MethodConfig::DPdp(p) => {
                if p.grid_size < 2 {
                    return Err(EffectError::InvalidArgument(format!(
                        "grid size must be >= 2, got {}",
                        p.grid_size
                    )));
                }
                Ok(())
            }
            MethodConfig::ShapDp(s) => {
                if s.n_permutations == 0 || s.grid_size < 2 {
                    return Err(EffectError::InvalidArgument(
                        "SHAP-DP needs n_permutations >= 1 and grid size >= 2".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Fewest rows a regional cell needs before this method is evaluated on it.
    pub fn min_cell_rows(&self) -> usize {
        match self {
            MethodConfig::Ale(b) | MethodConfig::Rhale(b) => MIN_CELL_ROWS.max(2 * b.min_points_per_bin),
            _ => MIN_CELL_ROWS,
        }
    }

    /// Computes the effect curve of `feature` on `dataset`.
    pub fn effect(
        &self,
        dataset: &Dataset,
        oracle: &dyn ModelOracle,
        feature: usize,
    ) -> Result<EffectCurve> {
        match self {
            MethodConfig::Ale(b) => ale(dataset, oracle, feature, b),
            MethodConfig::Rhale(b) => rhale(dataset, oracle, feature, b),
            MethodConfig::Pdp(p) => pdp(dataset, oracle, feature, p),
            MethodConfig::DPdp(p) => d_pdp(dataset, oracle, feature, p),
            MethodConfig::ShapDp(s) => shap_dp(dataset, oracle, feature, s),
        }
    }
}
