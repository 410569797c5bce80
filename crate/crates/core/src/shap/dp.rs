use serde::{Deserialize, Serialize};

use super::{shap_exact, shap_permutation, ShapValues, SplineFit, MAX_EXACT_FEATURES};
use crate::curve::{linspace, Centering, EffectCurve, Method};
use crate::dataset::Dataset;
use crate::error::Result;
use crate::global::{require_numeric, DEFAULT_GRID_SIZE};
use crate::oracle::ModelOracle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    /// Explain a seeded subsample of this many instances; `None` uses all.
    pub nof_instances: Option<usize>,
    pub seed: u64,
    pub n_permutations: usize,
    /// Exact enumeration when the feature count is below this.
    pub exact_below: usize,
    pub n_knots: usize,
    pub grid_size: usize,
    /// Half-width of the residual window for the band, as a fraction of the
    /// feature range.
    pub band_window: f64,
}

impl Default for ShapConfig {
    fn default() -> Self {
        Self {
            nof_instances: Some(100),
            seed: 0,
            n_permutations: 100,
            exact_below: 10,
            n_knots: 5,
            grid_size: DEFAULT_GRID_SIZE,
            band_window: 0.1,
        }
    }
}

/// Shapley values of `feature` for the configured instances. The explained
/// instances also serve as the background sample, so a subsampled run is the
/// same as a full run on the subsample.
pub fn shap_values(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &ShapConfig,
) -> Result<(Dataset, ShapValues)> {
    let instances = match config.nof_instances {
        Some(n) => dataset.subsample(n, config.seed),
        None => dataset.clone(),
    };
    let d = dataset.n_cols();
    let mut phi = if d < config.exact_below && d <= MAX_EXACT_FEATURES {
        shap_exact(&instances, oracle, feature, instances.values())?
    } else {
        shap_permutation(
            &instances,
            oracle,
            feature,
            instances.values(),
            config.n_permutations,
            config.seed,
        )?
    };
    if config.nof_instances.is_some_and(|n| n < dataset.n_rows()) {
        phi.subsample_seed = Some(config.seed);
    }
    Ok((instances, phi))
}

/// SHAP dependence curve: a least-squares cubic spline through
/// `(x_s^i, phi_s^i)`.
///
/// The index is the root mean squared residual of the fit. The band at a
/// grid point is the RMS residual of instances within `band_window * range`
/// of it (the nearest instance when the window is empty).
pub fn shap_dp(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &ShapConfig,
) -> Result<EffectCurve> {
    require_numeric(dataset, feature)?;
    let (instances, phi) = shap_values(dataset, oracle, feature, config)?;
    let x = instances.column(feature).to_vec();
    let fit = SplineFit::fit(&x, &phi.values, config.n_knots)?;
    let residuals: Vec<f64> = x
        .iter()
        .zip(&phi.values)
        .map(|(&xi, &p)| p - fit.eval(xi))
        .collect();
    let h_index = (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt();

    let (lo, hi) = instances.range(feature);
    let grid = linspace(lo, hi, config.grid_size.max(2));
    let half = config.band_window * (hi - lo);
    let band = grid
        .iter()
        .map(|&g| {
            let (sum, n) = x
                .iter()
                .zip(&residuals)
                .filter(|(&xi, _)| (xi - g).abs() <= half)
                .fold((0.0, 0usize), |(s, n), (_, r)| (s + r * r, n + 1));
            if n > 0 {
                (sum / n as f64).sqrt()
            } else {
                let nearest = x
                    .iter()
                    .enumerate()
                    .min_by(|a, b| (a.1 - g).abs().total_cmp(&(b.1 - g).abs()))
                    .map(|(i, _)| i)
                    .expect("at least four instances");
                residuals[nearest].abs()
            }
        })
        .collect();
    let mean = grid.iter().map(|&g| fit.eval(g)).collect();
    Ok(EffectCurve {
        feature,
        method: Method::ShapDp,
        grid,
        mean,
        band: Some(band),
        h_index,
        centering: Centering::None,
        bins: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::FnOracle;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    #[test]
    fn additive_cubic_model_fits_exactly() {
        let ds = random(150, 3, 1);
        let f = FnOracle::new(|r| r[0].powi(3) - r[0] + r[1].sin() + r[2]);
        let c = shap_dp(&ds, &f, 0, &ShapConfig::default()).unwrap();
        assert!(c.h_index < 1e-9, "h = {}", c.h_index);
    }

    #[test]
    fn ignored_feature_has_flat_curve() {
        let ds = random(80, 2, 2);
        let f = FnOracle::new(|r| r[1]);
        let cfg = ShapConfig {
            nof_instances: None,
            ..ShapConfig::default()
        };
        let c = shap_dp(&ds, &f, 0, &cfg).unwrap();
        assert!(c.mean.iter().all(|m| m.abs() < 1e-12));
        assert!(c.h_index < 1e-12);
    }

    #[test]
    fn index_is_rms_residual() {
        let ds = random(120, 3, 3);
        let f = FnOracle::new(|r| r[0] * r[1] + r[2]);
        let cfg = ShapConfig::default();
        let c = shap_dp(&ds, &f, 0, &cfg).unwrap();
        let (inst, phi) = shap_values(&ds, &f, 0, &cfg).unwrap();
        let x = inst.column(0).to_vec();
        let fit = SplineFit::fit(&x, &phi.values, cfg.n_knots).unwrap();
        let ms = x
            .iter()
            .zip(&phi.values)
            .map(|(&a, &p)| (p - fit.eval(a)).powi(2))
            .sum::<f64>()
            / x.len() as f64;
        assert!((c.h_index.powi(2) - ms).abs() < 1e-12);
        assert!(c.h_index > 0.05);
    }

    #[test]
    fn wide_models_use_permutations() {
        let ds = random(30, 11, 4);
        let f = FnOracle::new(|r| r.iter().sum());
        let cfg = ShapConfig {
            n_permutations: 3,
            ..ShapConfig::default()
        };
        let (_, phi) = shap_values(&ds, &f, 0, &cfg).unwrap();
        assert!(phi.std_errors.is_some());
    }
}
