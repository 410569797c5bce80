//! Black-box model access: predictions, optional analytic jacobians, and the
//! central-difference fallback used when a model exposes predictions only.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{EffectError, Result};

/// Default relative step for finite differences.
pub const DEFAULT_H_REL: f64 = 1e-4;

/// Smallest step scale, used for constant columns.
const RANGE_FLOOR: f64 = 1e-8;

/// A deterministic, thread-safe prediction function over feature matrices.
pub trait ModelOracle: Send + Sync {
    /// One output per input row.
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>>;

    /// `d f / d x_j` per row and column, when the model can provide it.
    fn jacobian(&self, _x: ArrayView2<'_, f64>) -> Option<Result<Array2<f64>>> {
        None
    }
}

impl<O: ModelOracle + ?Sized> ModelOracle for Arc<O> {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        (**self).predict(x)
    }

    fn jacobian(&self, x: ArrayView2<'_, f64>) -> Option<Result<Array2<f64>>> {
        (**self).jacobian(x)
    }
}

impl<O: ModelOracle + ?Sized> ModelOracle for &O {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        (**self).predict(x)
    }

    fn jacobian(&self, x: ArrayView2<'_, f64>) -> Option<Result<Array2<f64>>> {
        (**self).jacobian(x)
    }
}

type RowFn = dyn Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync;
type RowGradFn = dyn Fn(ArrayView1<'_, f64>) -> Vec<f64> + Send + Sync;

/// Oracle built from per-row closures.
#[derive(Clone)]
pub struct FnOracle {
    f: Arc<RowFn>,
    grad: Option<Arc<RowGradFn>>,
}

impl FnOracle {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(ArrayView1<'_, f64>) -> f64 + Send + Sync + 'static,
    {
        Self {
            f: Arc::new(f),
            grad: None,
        }
    }

    pub fn with_gradient<G>(mut self, grad: G) -> Self
    where
        G: Fn(ArrayView1<'_, f64>) -> Vec<f64> + Send + Sync + 'static,
    {
        self.grad = Some(Arc::new(grad));
        self
    }

    /// Drops the analytic gradient so derivative users fall back to finite differences.
    pub fn without_gradient(&self) -> Self {
        Self {
            f: self.f.clone(),
            grad: None,
        }
    }
}

impl std::fmt::Debug for FnOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnOracle")
            .field("has_gradient", &self.grad.is_some())
            .finish()
    }
}

impl ModelOracle for FnOracle {
    fn predict(&self, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
        Ok(x.rows().into_iter().map(|r| (self.f)(r)).collect())
    }

    fn jacobian(&self, x: ArrayView2<'_, f64>) -> Option<Result<Array2<f64>>> {
        let grad = self.grad.as_ref()?;
        let (m, d) = x.dim();
        let mut out = Array2::zeros((m, d));
        for (i, row) in x.rows().into_iter().enumerate() {
            let g = grad(row);
            if g.len() != d {
                return Some(Err(EffectError::Oracle(format!(
                    "gradient returned {} entries for {d} columns",
                    g.len()
                ))));
            }
            out.row_mut(i).assign(&ArrayView1::from(&g));
        }
        Some(Ok(out))
    }
}

/// Calls `predict` and checks the output shape and finiteness.
pub fn predict(oracle: &dyn ModelOracle, x: ArrayView2<'_, f64>) -> Result<Array1<f64>> {
    let y = oracle.predict(x)?;
    if y.len() != x.nrows() {
        return Err(EffectError::Oracle(format!(
            "predict returned {} values for {} rows",
            y.len(),
            x.nrows()
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(EffectError::Oracle(format!(
            "predict returned non-finite value {} at row {i}",
            y[i]
        )));
    }
    Ok(y)
}

/// Per-column central-difference steps `h_rel * range_j`, floored at 1e-8.
pub fn fd_steps(ranges: &[(f64, f64)], h_rel: f64) -> Vec<f64> {
    ranges
        .iter()
        .map(|(lo, hi)| h_rel * (hi - lo).max(RANGE_FLOOR))
        .collect()
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(EffectError::InvalidArgument(format!(
            "finite-difference step must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Central difference of column `feature` with absolute step `h`, one
/// batched oracle call over `2M` rows.
pub fn fd_partial(
    oracle: &dyn ModelOracle,
    x: ArrayView2<'_, f64>,
    feature: usize,
    h: f64,
) -> Result<Array1<f64>> {
    check_step(h)?;
    let m = x.nrows();
    let mut shifted = ndarray::concatenate(Axis(0), &[x, x])
        .map_err(|e| EffectError::InvalidArgument(e.to_string()))?;
    {
        let mut col = shifted.column_mut(feature);
        for i in 0..m {
            col[i] += h;
            col[m + i] -= h;
        }
    }
    let y = predict(oracle, shifted.view())?;
    Ok((0..m).map(|i| (y[i] - y[m + i]) / (2.0 * h)).collect())
}

/// Central-difference jacobian; `steps[j]` is the absolute step for column j.
pub fn fd_jacobian(
    oracle: &dyn ModelOracle,
    x: ArrayView2<'_, f64>,
    steps: &[f64],
) -> Result<Array2<f64>> {
    let (m, d) = x.dim();
    if steps.len() != d {
        return Err(EffectError::InvalidArgument(format!(
            "{} steps given for {d} columns",
            steps.len()
        )));
    }
    let mut out = Array2::zeros((m, d));
    for (j, &h) in steps.iter().enumerate() {
        out.column_mut(j).assign(&fd_partial(oracle, x, j, h)?);
    }
    Ok(out)
}

/// Derivative source for derivative-based methods.
#[derive(Debug, Clone, PartialEq)]
pub struct Differentiator {
    /// Relative step for the finite-difference fallback.
    pub h_rel: f64,
    /// Column ranges that scale the fallback step.
    pub ranges: Vec<(f64, f64)>,
}

impl Differentiator {
    pub fn new(ranges: &[(f64, f64)]) -> Self {
        Self {
            h_rel: DEFAULT_H_REL,
            ranges: ranges.to_vec(),
        }
    }

    /// Column `feature` of the jacobian: analytic when available, otherwise
    /// central differences.
    pub fn partial(
        &self,
        oracle: &dyn ModelOracle,
        x: ArrayView2<'_, f64>,
        feature: usize,
    ) -> Result<Array1<f64>> {
        match oracle.jacobian(x) {
            Some(jac) => {
                let jac = check_jacobian(jac?, x)?;
                Ok(jac.column(feature).to_owned())
            }
            None => {
                let steps = fd_steps(&self.ranges, self.h_rel);
                fd_partial(oracle, x, feature, steps[feature])
            }
        }
    }

    pub fn jacobian(&self, oracle: &dyn ModelOracle, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match oracle.jacobian(x) {
            Some(jac) => check_jacobian(jac?, x),
            None => fd_jacobian(oracle, x, &fd_steps(&self.ranges, self.h_rel)),
        }
    }
}

fn check_jacobian(jac: Array2<f64>, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if jac.dim() != x.dim() {
        return Err(EffectError::Oracle(format!(
            "jacobian has shape {:?}, expected {:?}",
            jac.dim(),
            x.dim()
        )));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(EffectError::Oracle("jacobian contains non-finite values".into()));
    }
    Ok(jac)
}
