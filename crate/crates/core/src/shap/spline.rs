use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{EffectError, Result};

const DEGREE: usize = 3;

/// Least-squares cubic B-spline, clamped at the data range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineFit {
    /// Full knot vector: four copies of each end plus the interior knots.
    pub knots: Vec<f64>,
    pub coefficients: Vec<f64>,
}

impl SplineFit {
    /// Fits `y ~ spline(x)` with `n_interior` knots at equally spaced
    /// quantiles of `x`. Coinciding knots are merged.
    pub fn fit(x: &[f64], y: &[f64], n_interior: usize) -> Result<Self> {
        if x.len() != y.len() {
            return Err(EffectError::InvalidArgument(format!(
                "spline fit got {} abscissae and {} values",
                x.len(),
                y.len()
            )));
        }
        let mut sorted = x.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut distinct = sorted.clone();
        distinct.dedup();
        if distinct.len() < DEGREE + 1 {
            return Err(EffectError::FitDegenerate(format!(
                "a cubic fit needs at least 4 distinct abscissae, got {}",
                distinct.len()
            )));
        }
        let (a, b) = (sorted[0], sorted[sorted.len() - 1]);

        let mut interior: Vec<f64> = (1..=n_interior)
            .map(|k| quantile(&sorted, k as f64 / (n_interior + 1) as f64))
            .filter(|&q| q > a && q < b)
            .collect();
        interior.dedup();

        let mut knots = vec![a; DEGREE + 1];
        knots.extend(&interior);
        knots.extend([b; DEGREE + 1]);
        let nb = knots.len() - DEGREE - 1;

        let mut design = DMatrix::zeros(x.len(), nb);
        for (i, &xi) in x.iter().enumerate() {
            let (span, basis) = basis(&knots, xi);
            for (r, v) in basis.iter().enumerate() {
                design[(i, span - DEGREE + r)] = *v;
            }
        }
        let svd = design.svd(true, true);
        let tol = 1e-12 * svd.singular_values.max();
        let coef = svd
            .solve(&DVector::from_column_slice(y), tol)
            .map_err(|e| EffectError::FitDegenerate(e.to_string()))?;
        Ok(Self {
            knots,
            coefficients: coef.iter().copied().collect(),
        })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }

    /// Value at `x`, clamped to the fitted range.
    pub fn eval(&self, x: f64) -> f64 {
        let (span, basis) = basis(&self.knots, x);
        basis
            .iter()
            .enumerate()
            .map(|(r, v)| v * self.coefficients[span - DEGREE + r])
            .sum()
    }
}

/// Linear-interpolated quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Knot span and the four nonzero cubic basis values at `x` (Cox-de Boor).
fn basis(knots: &[f64], x: f64) -> (usize, [f64; DEGREE + 1]) {
    let nb = knots.len() - DEGREE - 1;
    let x = x.clamp(knots[0], knots[knots.len() - 1]);
    let span = knots
        .partition_point(|&t| t <= x)
        .saturating_sub(1)
        .clamp(DEGREE, nb - 1);

    let mut n = [0.0; DEGREE + 1];
    let mut left = [0.0; DEGREE + 1];
    let mut right = [0.0; DEGREE + 1];
    n[0] = 1.0;
    for j in 1..=DEGREE {
        left[j] = x - knots[span + 1 - j];
        right[j] = knots[span + j] - x;
        let mut saved = 0.0;
        for r in 0..j {
            let temp = n[r] / (right[r + 1] + left[j - r]);
            n[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        n[j] = saved;
    }
    (span, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curve::linspace;

    #[test]
    fn reproduces_cubic_polynomials() {
        let x = linspace(-1.0, 2.0, 80);
        let p = |v: f64| 0.5 * v.powi(3) - v * v + 2.0 * v - 7.0;
        let y: Vec<f64> = x.iter().map(|&v| p(v)).collect();
        let s = SplineFit::fit(&x, &y, 5).unwrap();
        for v in linspace(-1.0, 2.0, 333) {
            assert!((s.eval(v) - p(v)).abs() < 1e-9);
        }
    }

    #[test]
    fn partition_of_unity() {
        let x = linspace(0.0, 1.0, 50);
        let y = vec![0.0; 50];
        let s = SplineFit::fit(&x, &y, 5).unwrap();
        for v in linspace(0.0, 1.0, 101) {
            let (_, b) = basis(&s.knots, v);
            assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn smooth_across_knots() {
        let x = linspace(-1.0, 1.0, 200);
        let y: Vec<f64> = x.iter().map(|v| (3.0 * v).sin() + v.abs()).collect();
        let s = SplineFit::fit(&x, &y, 5).unwrap();
        let h = 1e-6;
        for &k in &s.knots[4..s.knots.len() - 4] {
            assert!((s.eval(k - h) - s.eval(k + h)).abs() < 1e-5);
            let dl = (s.eval(k - h) - s.eval(k - 2.0 * h)) / h;
            let dr = (s.eval(k + 2.0 * h) - s.eval(k + h)) / h;
            assert!((dl - dr).abs() < 1e-3);
        }
    }

    #[test]
    fn too_few_points() {
        let err = SplineFit::fit(&[0.0, 1.0, 1.0, 2.0], &[0.0; 4], 5).unwrap_err();
        assert!(matches!(err, EffectError::FitDegenerate(_)));
    }

    #[test]
    fn constant_data_gives_flat_spline() {
        let x = linspace(0.0, 3.0, 20);
        let s = SplineFit::fit(&x, &[4.5; 20], 5).unwrap();
        assert!(linspace(0.0, 3.0, 17).iter().all(|&v| (s.eval(v) - 4.5).abs() < 1e-12));
    }

    #[test]
    fn knots_at_quantiles() {
        let x: Vec<f64> = (0..=60).map(f64::from).collect();
        let s = SplineFit::fit(&x, &x, 5).unwrap();
        assert_eq!(&s.knots[4..9], &[10.0, 20.0, 30.0, 40.0, 50.0]);
    }
}
