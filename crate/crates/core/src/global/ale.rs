use ndarray::Array2;

use super::{chunked, require_numeric, with_context};
use crate::binning::{bins, BinPartition, BinningConfig, BinningMode};
use crate::curve::{linspace, Centering, EffectCurve, Method};
use crate::dataset::Dataset;
use crate::error::{EffectError, Result};
use crate::oracle::{self, Differentiator, ModelOracle};

/// Accumulated local effects with fixed equal-width bins.
///
/// Each instance contributes `f(z_k, x_c) - f(z_{k-1}, x_c)` for the bin it
/// falls in. The curve accumulates per-bin means at the edges; empty bins add
/// nothing. The index is the sum over bins of the std of those differences.
pub fn ale(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    binning: &BinningConfig,
) -> Result<EffectCurve> {
    require_numeric(dataset, feature)?;
    if binning.mode != BinningMode::Fixed {
        return Err(EffectError::InvalidArgument(
            "ALE uses fixed-width bins; variable-width binning is RHALE-only".into(),
        ));
    }
    binning.validate()?;
    let k = binning.nof_bins;
    let (lo, hi) = dataset.range(feature);
    if hi <= lo {
        return Err(EffectError::DegenerateRange { feature, value: lo });
    }
    let edges = linspace(lo, hi, k + 1);
    let x = dataset.column(feature).to_vec();

    let n = dataset.n_rows();
    let mut left = dataset.values().to_owned();
    let mut right = left.clone();
    for i in 0..n {
        let b = crate::binning::bin_index(&edges, x[i]).expect("row inside its own range");
        left[[i, feature]] = edges[b];
        right[[i, feature]] = edges[b + 1];
    }
    let predict = |m: &Array2<f64>, side: &str| {
        chunked(m.view(), |c| oracle::predict(oracle, c))
            .map_err(|e| with_context(e, &format!("ALE {side} bin edges")))
    };
    let f_left = predict(&left, "lower")?;
    let f_right = predict(&right, "upper")?;
    let diffs: Vec<f64> = f_right.iter().zip(f_left.iter()).map(|(r, l)| r - l).collect();

    let partition = BinPartition::from_edges(&x, &diffs, edges);
    let mut mean = Vec::with_capacity(k + 1);
    mean.push(0.0);
    for b in 0..k {
        let step = if partition.empty[b] { 0.0 } else { partition.means[b] };
        mean.push(mean[b] + step);
    }
    let stds = partition.stds();
    let h_index = stds.iter().sum();
    Ok(EffectCurve {
        feature,
        method: Method::Ale,
        grid: partition.edges.clone(),
        mean,
        band: Some(edge_band(&stds)),
        h_index,
        centering: Centering::None,
        bins: Some(partition),
    })
}

/// Derivative-based ALE over bins chosen by `binning` (any mode).
///
/// Local effects are `d f / d x_s` at the data points. The curve accumulates
/// `width_k * mean_k`; the index is `sum_k width_k * std_k`.
pub fn rhale(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    binning: &BinningConfig,
) -> Result<EffectCurve> {
    require_numeric(dataset, feature)?;
    let diff = Differentiator::new(dataset.ranges());
    let derivs = chunked(dataset.values(), |c| diff.partial(oracle, c, feature))
        .map_err(|e| with_context(e, "RHALE derivatives"))?;
    let partition = bins(dataset, feature, derivs.as_slice().expect("contiguous"), binning)?;
    Ok(rhale_from_bins(feature, partition))
}

pub(crate) fn rhale_from_bins(feature: usize, partition: BinPartition) -> EffectCurve {
    let widths = partition.widths();
    let stds = partition.stds();
    let mut mean = Vec::with_capacity(widths.len() + 1);
    mean.push(0.0);
    for (b, w) in widths.iter().enumerate() {
        mean.push(mean[b] + w * partition.means[b]);
    }
    let h_index = widths.iter().zip(&stds).map(|(w, s)| w * s).sum();
    EffectCurve {
        feature,
        method: Method::Rhale,
        grid: partition.edges.clone(),
        mean,
        band: Some(edge_band(&stds)),
        h_index,
        centering: Centering::None,
        bins: Some(partition),
    }
}

/// Band at each edge: the std of the bin to its right (last edge: last bin).
fn edge_band(stds: &[f64]) -> Vec<f64> {
    let mut band = stds.to_vec();
    band.push(*stds.last().expect("at least one bin"));
    band
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
    fn linear_model_ale() {
        let ds = random(500, 3, 1);
        let f = FnOracle::new(|r| 3.0 * r[0] + r[1] * r[2]);
        let c = ale(&ds, &f, 0, &BinningConfig::fixed(20)).unwrap().centered().unwrap();
        assert!(c.h_index < 1e-10, "h = {}", c.h_index);
        // Slope 3 everywhere.
        for w in c.grid.windows(2).zip(c.mean.windows(2)) {
            let slope = (w.1[1] - w.1[0]) / (w.0[1] - w.0[0]);
            assert!((slope - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn one_bin_is_a_line() {
        let ds = random(200, 2, 2);
        let f = FnOracle::new(|r| r[0].powi(3) + r[1]);
        let c = ale(&ds, &f, 0, &BinningConfig::fixed(1)).unwrap();
        assert_eq!(c.grid.len(), 2);
        let (lo, hi) = ds.range(0);
        assert!((c.mean[1] - (hi.powi(3) - lo.powi(3))).abs() < 1e-12);
        assert!((c.eval(0.5 * (lo + hi)) - 0.5 * c.mean[1]).abs() < 1e-12);
    }

    #[test]
    fn ale_requires_fixed_bins() {
        let ds = random(50, 2, 3);
        let f = FnOracle::new(|r| r[0]);
        assert!(ale(&ds, &f, 0, &BinningConfig::dynamic_programming(5, 2)).is_err());
    }

    #[test]
    fn rhale_additive_model_is_homogeneous() {
        let ds = random(400, 3, 4);
        let f = FnOracle::new(|r| 2.0 * r[0] + r[1].sin() + r[2] * r[2])
            .with_gradient(|r| vec![2.0, r[1].cos(), 2.0 * r[2]]);
        let c = rhale(&ds, &f, 0, &BinningConfig::fixed(10)).unwrap();
        assert!(c.h_index < 1e-10);
        assert!(c.band.unwrap().iter().all(|&b| b < 1e-10));
    }

    #[test]
    fn rhale_with_empty_bins_carries_means() {
        let ds = Dataset::new(ndarray::array![[0.0], [0.05], [0.95], [1.0]]).unwrap();
        let f = FnOracle::new(|r| r[0]).with_gradient(|_| vec![1.0]);
        let c = rhale(&ds, &f, 0, &BinningConfig::fixed(4)).unwrap();
        assert!(c.bins.as_ref().unwrap().has_empty_bins());
        assert!((c.mean[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn curve_eval_hits_grid() {
        let ds = random(300, 2, 5);
        let f = FnOracle::new(|r| r[0] * r[1]).with_gradient(|r| vec![r[1], r[0]]);
        let c = rhale(&ds, &f, 0, &BinningConfig::fixed(8)).unwrap();
        for (g, m) in c.grid.iter().zip(&c.mean) {
            assert_eq!(c.eval(*g), *m);
        }
    }
}
