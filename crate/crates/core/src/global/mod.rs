//! Global effect curves and their heterogeneity indices.

mod ale;
mod pdp;

pub use ale::{ale, rhale};
pub use pdp::{d_pdp, ice_bundle, pdp, IceBundle, PdpConfig, DEFAULT_GRID_SIZE};

use ndarray::{concatenate, Array1, ArrayView2, Axis};

use crate::dataset::{ColumnKind, Dataset};
use crate::error::{EffectError, Result};
use crate::par;

/// Rows per oracle call when a matrix is split for parallel evaluation.
pub(crate) const CHUNK_ROWS: usize = 2048;

/// Applies `f` to row chunks of `x` (possibly in parallel) and stitches the
/// outputs back together in row order.
pub(crate) fn chunked<F>(x: ArrayView2<'_, f64>, f: F) -> Result<Array1<f64>>
where
    F: Fn(ArrayView2<'_, f64>) -> Result<Array1<f64>> + Sync + Send,
{
    let n = x.nrows();
    if n <= CHUNK_ROWS {
        return f(x);
    }
    let n_chunks = n.div_ceil(CHUNK_ROWS);
    let parts = par::try_map(n_chunks, |c| {
        let lo = c * CHUNK_ROWS;
        let hi = (lo + CHUNK_ROWS).min(n);
        f(x.slice(ndarray::s![lo..hi, ..])).map_err(|e| with_context(e, &format!("rows {lo}..{hi}")))
    })?;
    let views: Vec<_> = parts.iter().map(|p| p.view()).collect();
    concatenate(Axis(0), &views).map_err(|e| EffectError::Oracle(e.to_string()))
}

/// Prefixes oracle failures with where they happened; other errors pass through.
pub(crate) fn with_context(err: EffectError, context: &str) -> EffectError {
    match err {
        EffectError::Oracle(msg) => EffectError::Oracle(format!("{context}: {msg}")),
        EffectError::Bridge(b) => EffectError::Oracle(format!("{context}: {b}")),
        other => other,
    }
}

pub(crate) fn require_numeric(dataset: &Dataset, feature: usize) -> Result<()> {
    dataset.check_feature(feature)?;
    if dataset.kind(feature) != ColumnKind::Numeric {
        return Err(EffectError::InvalidArgument(format!(
            "feature {feature} is categorical; effect curves are only defined for numeric features"
        )));
    }
    Ok(())
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    (mean, var.sqrt())
}
