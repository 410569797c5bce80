//! Shapley values under marginal (interventional) expectations and the
//! SHAP-DP curve fitted through them.

mod dp;
mod spline;

pub use dp::{shap_dp, shap_values, ShapConfig};
pub use spline::SplineFit;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{EffectError, Result};
use crate::global::{chunked, with_context};
use crate::oracle::{self, ModelOracle};
use crate::par;

/// Largest feature count for exact coalition enumeration.
pub const MAX_EXACT_FEATURES: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapValues {
    pub feature: usize,
    pub values: Vec<f64>,
    /// Per-instance standard error of permutation estimates.
    pub std_errors: Option<Vec<f64>>,
    pub subsample_seed: Option<u64>,
}

/// `v(Q)`: mean prediction over `background` with the columns in
/// `coalition` pinned to the instance's values.
pub fn coalition_value(
    background: &Dataset,
    oracle: &dyn ModelOracle,
    instance: ArrayView1<'_, f64>,
    coalition: &[usize],
) -> Result<f64> {
    check_instance(background, instance)?;
    let mut mask = vec![false; background.n_cols()];
    for &j in coalition {
        background.check_feature(j)?;
        mask[j] = true;
    }
    Ok(masked_values(background, oracle, instance, &[mask])?[0])
}

/// `v(Q)` for every mask in one batched oracle pass.
fn masked_values(
    background: &Dataset,
    oracle: &dyn ModelOracle,
    instance: ArrayView1<'_, f64>,
    masks: &[Vec<bool>],
) -> Result<Vec<f64>> {
    let bg = background.values();
    let n = bg.nrows();
    let mut x = Array2::zeros((masks.len() * n, bg.ncols()));
    for (m, mask) in masks.iter().enumerate() {
        let mut block = x.slice_mut(ndarray::s![m * n..(m + 1) * n, ..]);
        block.assign(&bg);
        for (j, _) in mask.iter().enumerate().filter(|(_, on)| **on) {
            block.column_mut(j).fill(instance[j]);
        }
    }
    let y = chunked(x.view(), |c| oracle::predict(oracle, c))?;
    Ok((0..masks.len())
        .map(|m| y.slice(ndarray::s![m * n..(m + 1) * n]).sum() / n as f64)
        .collect())
}

fn check_instance(background: &Dataset, instance: ArrayView1<'_, f64>) -> Result<()> {
    if instance.len() != background.n_cols() {
        return Err(EffectError::InvalidArgument(format!(
            "instance has {} columns, background has {}",
            instance.len(),
            background.n_cols()
        )));
    }
    Ok(())
}

fn check_instances(background: &Dataset, instances: ArrayView2<'_, f64>) -> Result<()> {
    if instances.ncols() != background.n_cols() {
        return Err(EffectError::InvalidArgument(format!(
            "instances have {} columns, background has {}",
            instances.ncols(),
            background.n_cols()
        )));
    }
    Ok(())
}

/// Exact Shapley values of every feature for every instance (rows x features).
///
/// All `2^D` coalition values of an instance are computed once and shared by
/// the features, so the rows satisfy efficiency up to rounding.
pub fn shap_exact_all(
    background: &Dataset,
    oracle: &dyn ModelOracle,
    instances: ArrayView2<'_, f64>,
) -> Result<Array2<f64>> {
    check_instances(background, instances)?;
    let d = background.n_cols();
    if d > MAX_EXACT_FEATURES {
        return Err(EffectError::InvalidArgument(format!(
            "exact Shapley enumeration supports at most {MAX_EXACT_FEATURES} features, got {d}; use shap_permutation"
        )));
    }
    let masks: Vec<Vec<bool>> = (0..1usize << d)
        .map(|bits| (0..d).map(|j| bits >> j & 1 == 1).collect())
        .collect();
    let weights = coalition_weights(d);

    let rows = par::try_map(instances.nrows(), |i| {
        let v = masked_values(background, oracle, instances.row(i), &masks)
            .map_err(|e| with_context(e, &format!("Shapley values of instance {i}")))?;
        let mut phi = vec![0.0; d];
        for (s, p) in phi.iter_mut().enumerate() {
            let bit = 1usize << s;
            // Sum in increasing mask order for a fixed reduction order.
            *p = (0..1usize << d)
                .filter(|q| q & bit == 0)
                .map(|q| weights[q.count_ones() as usize] * (v[q | bit] - v[q]))
                .sum();
        }
        Ok(phi)
    })?;
    let mut out = Array2::zeros((instances.nrows(), d));
    for (i, phi) in rows.iter().enumerate() {
        out.row_mut(i).assign(&Array1::from(phi.clone()));
    }
    Ok(out)
}

/// `|Q|! (D - |Q| - 1)! / D!` indexed by `|Q|`.
fn coalition_weights(d: usize) -> Vec<f64> {
    let fact = |k: usize| (1..=k).map(|v| v as f64).product::<f64>();
    (0..d)
        .map(|q| fact(q) * fact(d - q - 1) / fact(d))
        .collect()
}

/// Exact Shapley values of one feature.
pub fn shap_exact(
    background: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    instances: ArrayView2<'_, f64>,
) -> Result<ShapValues> {
    background.check_feature(feature)?;
    let all = shap_exact_all(background, oracle, instances)?;
    Ok(ShapValues {
        feature,
        values: all.column(feature).to_vec(),
        std_errors: None,
        subsample_seed: None,
    })
}

/// Permutation-sampling Shapley values of one feature.
///
/// Each instance draws `n_permutations` uniform feature orderings from its own
/// stream of a ChaCha8 generator seeded with `seed`, so results do not depend
/// on scheduling.
pub fn shap_permutation(
    background: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    instances: ArrayView2<'_, f64>,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapValues> {
    check_instances(background, instances)?;
    background.check_feature(feature)?;
    if n_permutations == 0 {
        return Err(EffectError::InvalidArgument("n_permutations must be >= 1".into()));
    }
    let d = background.n_cols();

    let per_instance = par::try_map(instances.nrows(), |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut order: Vec<usize> = (0..d).collect();
        let mut masks = Vec::with_capacity(2 * n_permutations);
        for _ in 0..n_permutations {
            order.shuffle(&mut rng);
            let mut before = vec![false; d];
            for &j in order.iter().take_while(|&&j| j != feature) {
                before[j] = true;
            }
            let mut with = before.clone();
            with[feature] = true;
            masks.push(with);
            masks.push(before);
        }
        let v = masked_values(background, oracle, instances.row(i), &masks)
            .map_err(|e| with_context(e, &format!("Shapley values of instance {i}")))?;
        let contrib: Vec<f64> = v.chunks(2).map(|p| p[0] - p[1]).collect();
        let (mean, sd) = crate::global::mean_std(contrib.iter().copied());
        let se = if n_permutations > 1 {
            sd * (n_permutations as f64 / (n_permutations - 1) as f64).sqrt()
                / (n_permutations as f64).sqrt()
        } else {
            f64::NAN
        };
        Ok((mean, se))
    })?;

    let values = per_instance.iter().map(|p| p.0).collect();
    let std_errors = (n_permutations > 1).then(|| per_instance.iter().map(|p| p.1).collect());
    Ok(ShapValues {
        feature,
        values,
        std_errors,
        subsample_seed: Some(seed),
    })
}
