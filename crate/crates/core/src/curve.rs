use serde::{Deserialize, Serialize};

use crate::binning::BinPartition;
use crate::error::{EffectError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "ALE")]
    Ale,
    #[serde(rename = "RHALE")]
    Rhale,
    #[serde(rename = "PDP")]
    Pdp,
    #[serde(rename = "dPDP")]
    DPdp,
    #[serde(rename = "SHAPDP")]
    ShapDp,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ale => "ALE",
            Method::Rhale => "RHALE",
            Method::Pdp => "PDP",
            Method::DPdp => "dPDP",
            Method::ShapDp => "SHAPDP",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Centering {
    None,
    MeanCentered,
}

/// Scalar heterogeneity plus its optional pointwise profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub index: f64,
    pub pointwise: Option<Vec<f64>>,
}

/// A feature-effect curve sampled on an increasing grid.
///
/// `band` is a pointwise spread in the units of `mean` (a standard
/// deviation); for binned methods it is the std of the bin to the right of
/// each edge. Between grid points the curve is linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectCurve {
    pub feature: usize,
    pub method: Method,
    pub grid: Vec<f64>,
    pub mean: Vec<f64>,
    pub band: Option<Vec<f64>>,
    pub h_index: f64,
    pub centering: Centering,
    /// Bin layout for ALE/RHALE.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bins: Option<BinPartition>,
}

impl EffectCurve {
    pub fn heterogeneity(&self) -> HeterogeneityReport {
        HeterogeneityReport {
            index: self.h_index,
            pointwise: self.band.clone(),
        }
    }

    /// Piecewise-linear evaluation; clamps outside the grid.
    pub fn eval(&self, x: f64) -> f64 {
        interp(&self.grid, &self.mean, x)
    }

    /// Band value at `x`, stepwise from the left grid point.
    pub fn band_at(&self, x: f64) -> Option<f64> {
        let band = self.band.as_ref()?;
        let k = self.grid.partition_point(|&g| g <= x).saturating_sub(1);
        Some(band[k.min(band.len() - 1)])
    }

    pub fn centered(&self) -> Result<EffectCurve> {
        center_curve(self)
    }
}

/// Linear interpolation of `(xs, ys)` at `x`, clamped to the end values.
pub fn interp(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if n == 1 || x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&g| g <= x);
    let (x0, x1) = (xs[k - 1], xs[k]);
    if x == x0 {
        return ys[k - 1];
    }
    let t = (x - x0) / (x1 - x0);
    ys[k - 1] + t * (ys[k] - ys[k - 1])
}

/// Trapezoidal average of `ys` over `xs`. A single point averages to itself.
pub fn grid_average(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    if n == 1 {
        return ys[0];
    }
    let span = xs[n - 1] - xs[0];
    if span <= 0.0 {
        return ys.iter().sum::<f64>() / n as f64;
    }
    let area: f64 = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum();
    area / span
}

/// Shifts the mean curve so its trapezoidal grid-average is zero. Band and
/// index are untouched.
pub fn center_curve(curve: &EffectCurve) -> Result<EffectCurve> {
    if curve.grid.is_empty() {
        return Err(EffectError::InvalidArgument(
            "cannot center a curve with an empty grid".into(),
        ));
    }
    let avg = grid_average(&curve.grid, &curve.mean);
    let mut out = curve.clone();
    out.mean.iter_mut().for_each(|m| *m -= avg);
    out.centering = Centering::MeanCentered;
    Ok(out)
}

/// `n` points from `lo` to `hi` inclusive; the last point is exactly `hi`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (n - 1) as f64;
            let mut v: Vec<f64> = (0..n).map(|i| lo + step * i as f64).collect();
            v[n - 1] = hi;
            v
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn curve(grid: Vec<f64>, mean: Vec<f64>) -> EffectCurve {
        EffectCurve {
            feature: 0,
            method: Method::Pdp,
            band: None,
            h_index: 0.0,
            centering: Centering::None,
            bins: None,
            grid,
            mean,
        }
    }

    #[test]
    fn constant_centers_to_zero() {
        let c = center_curve(&curve(vec![0.0, 1.0, 2.0], vec![1.0; 3])).unwrap();
        assert_eq!(c.mean, vec![0.0; 3]);
        assert_eq!(c.centering, Centering::MeanCentered);
    }

    #[test]
    fn two_point_symmetry() {
        let c = center_curve(&curve(vec![0.0, 1.0], vec![0.0, 2.0])).unwrap();
        assert_eq!(c.mean, vec![-1.0, 1.0]);
    }

    #[test]
    fn empty_grid_rejected() {
        assert!(center_curve(&curve(vec![], vec![])).is_err());
    }

    #[test]
    fn sine_pdp_shape_centers_to_zero() {
        let grid = linspace(-0.5, 0.5, 10_000);
        let mean: Vec<f64> = grid
            .iter()
            .map(|&x| (2.0 * PI * x).sin() * (if x < 0.0 { 1.0 } else { 0.0 } - 5.0 / 3.0))
            .collect();
        let c = center_curve(&curve(grid.clone(), mean)).unwrap();
        // Independent check: midpoint quadrature on the interpolated curve.
        let n = 200_000;
        let avg: f64 = (0..n)
            .map(|i| c.eval(-0.5 + (i as f64 + 0.5) / n as f64))
            .sum::<f64>()
            / n as f64;
        assert!(avg.abs() < 1e-9, "average after centering {avg}");
    }

    #[test]
    fn eval_reproduces_grid_values() {
        let c = curve(vec![0.0, 0.5, 2.0], vec![1.0, -3.0, 7.5]);
        for (g, m) in c.grid.iter().zip(&c.mean) {
            assert_eq!(c.eval(*g), *m);
        }
        assert_eq!(c.eval(0.25), -1.0);
        assert_eq!(c.eval(-1.0), 1.0);
        assert_eq!(c.eval(3.0), 7.5);
    }

    #[test]
    fn linspace_endpoints() {
        let g = linspace(-1.0, 1.0, 5);
        assert_eq!(g, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    proptest! {
        #[test]
        fn centering_is_idempotent(
            mean in prop::collection::vec(-100.0f64..100.0, 2..40),
            steps in prop::collection::vec(0.01f64..3.0, 40),
        ) {
            let mut grid = vec![0.0];
            for s in steps.iter().take(mean.len() - 1) {
                grid.push(grid.last().unwrap() + s);
            }
            let once = center_curve(&curve(grid, mean)).unwrap();
            let twice = center_curve(&once).unwrap();
            for (a, b) in once.mean.iter().zip(&twice.mean) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            prop_assert!(grid_average(&once.grid, &once.mean).abs() <= 1e-9);
        }
    }
}
