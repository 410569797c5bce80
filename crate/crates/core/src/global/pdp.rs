use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{chunked, require_numeric, with_context};
use crate::curve::{grid_average, linspace, Centering, EffectCurve, Method};
use crate::dataset::Dataset;
use crate::error::{EffectError, Result};
use crate::oracle::{self, Differentiator, ModelOracle};
use crate::par;

pub const DEFAULT_GRID_SIZE: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdpConfig {
    /// Number of grid points T (both range endpoints included).
    pub grid_size: usize,
    /// Evaluate ICE curves on a seeded subsample of this many instances.
    pub nof_instances: Option<usize>,
    pub seed: u64,
}

impl Default for PdpConfig {
    fn default() -> Self {
        Self {
            grid_size: DEFAULT_GRID_SIZE,
            nof_instances: None,
            seed: 0,
        }
    }
}

/// One ICE (or d-ICE) curve per instance on a shared grid: `values` is N x T.
#[derive(Debug, Clone, PartialEq)]
pub struct IceBundle {
    pub feature: usize,
    pub grid: Vec<f64>,
    pub values: Array2<f64>,
    pub derivative: bool,
    pub centered: bool,
}

impl IceBundle {
    /// Subtracts each curve's trapezoidal grid-average.
    pub fn center(&self) -> IceBundle {
        let mut out = self.clone();
        for mut row in out.values.rows_mut() {
            let avg = grid_average(&self.grid, row.as_slice().expect("standard layout"));
            row.mapv_inplace(|v| v - avg);
        }
        out.centered = true;
        out
    }

    /// Pointwise average over instances.
    pub fn mean_curve(&self) -> Vec<f64> {
        let n = self.values.nrows() as f64;
        self.values
            .columns()
            .into_iter()
            .map(|c| c.iter().sum::<f64>() / n)
            .collect()
    }

    /// Pointwise std of curves around `mean`, and the root of its squared
    /// grid-average.
    fn spread(&self, mean: &[f64]) -> (Vec<f64>, f64) {
        let n = self.values.nrows() as f64;
        let band: Vec<f64> = self
            .values
            .columns()
            .into_iter()
            .zip(mean)
            .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        let h = (band.iter().map(|b| b * b).sum::<f64>() / band.len() as f64).sqrt();
        (band, h)
    }
}

fn check(dataset: &Dataset, feature: usize, config: &PdpConfig) -> Result<()> {
    require_numeric(dataset, feature)?;
    let (lo, hi) = dataset.range(feature);
    if hi <= lo {
        return Err(EffectError::DegenerateRange { feature, value: lo });
    }
    if config.grid_size < 2 {
        return Err(EffectError::InvalidArgument(format!(
            "grid size must be >= 2, got {}",
            config.grid_size
        )));
    }
    if config.nof_instances == Some(0) {
        return Err(EffectError::InvalidArgument("nof_instances must be >= 1".into()));
    }
    Ok(())
}

/// ICE (or d-ICE with `derivative`) curves on a uniform grid over the
/// feature range. The grid spans the full dataset even when instances are
/// subsampled.
pub fn ice_bundle(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &PdpConfig,
    derivative: bool,
) -> Result<IceBundle> {
    check(dataset, feature, config)?;
    let (lo, hi) = dataset.range(feature);
    let grid = linspace(lo, hi, config.grid_size);
    let instances = match config.nof_instances {
        Some(n) => dataset.subsample(n, config.seed),
        None => dataset.clone(),
    };
    let diff = Differentiator::new(dataset.ranges());
    let base = instances.values();

    let columns: Vec<Array1<f64>> = par::try_map(grid.len(), |t| {
        let mut x = base.to_owned();
        x.column_mut(feature).fill(grid[t]);
        let out = if derivative {
            chunked(x.view(), |c| diff.partial(oracle, c, feature))
        } else {
            chunked(x.view(), |c| oracle::predict(oracle, c))
        };
        out.map_err(|e| with_context(e, &format!("grid point {t} (x = {})", grid[t])))
    })?;

    let mut values = Array2::zeros((instances.n_rows(), grid.len()));
    for (t, col) in columns.iter().enumerate() {
        values.column_mut(t).assign(col);
    }
    Ok(IceBundle {
        feature,
        grid,
        values,
        derivative,
        centered: false,
    })
}

/// Partial dependence: the average ICE curve.
///
/// The index is the root of the grid- and instance-averaged squared gap
/// between centered ICE curves and the centered PDP; the band is its
/// pointwise counterpart, so `h_index^2` equals the grid-average of `band^2`.
pub fn pdp(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &PdpConfig,
) -> Result<EffectCurve> {
    let ice = ice_bundle(dataset, oracle, feature, config, false)?;
    let mean = ice.mean_curve();
    let centered = ice.center();
    let (band, h_index) = centered.spread(&centered.mean_curve());
    Ok(EffectCurve {
        feature,
        method: Method::Pdp,
        grid: ice.grid,
        mean,
        band: Some(band),
        h_index,
        centering: Centering::None,
        bins: None,
    })
}

/// Derivative partial dependence. d-ICE curves are compared with the d-PDP
/// directly, without centering.
pub fn d_pdp(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &PdpConfig,
) -> Result<EffectCurve> {
    let ice = ice_bundle(dataset, oracle, feature, config, true)?;
    let mean = ice.mean_curve();
    let (band, h_index) = ice.spread(&mean);
    Ok(EffectCurve {
        feature,
        method: Method::DPdp,
        grid: ice.grid,
        mean,
        band: Some(band),
        h_index,
        centering: Centering::None,
        bins: None,
    })
}
