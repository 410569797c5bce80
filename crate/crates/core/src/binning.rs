//! Partitioning of one feature axis into bins of local effects.
//!
//! Three strategies share one cost, the width-weighted within-bin variance
//! `sum_k (z_k - z_{k-1}) * Var(bin k)`: fixed equal-width bins, a greedy
//! left-to-right merge of micro-bins, and an exact dynamic program over a
//! uniform candidate-edge grid.

use serde::{Deserialize, Serialize};

use crate::curve::linspace;
use crate::dataset::Dataset;
use crate::error::{EffectError, Result};

pub const DEFAULT_CANDIDATE_GRID: usize = 100;
pub const DEFAULT_GREEDY_TOLERANCE: f64 = 1.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinningMode {
    Fixed,
    Greedy,
    DynamicProgramming,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinningConfig {
    pub mode: BinningMode,
    /// Bin count for fixed mode.
    pub nof_bins: usize,
    /// Micro-bin count the greedy scan starts from.
    pub init_nof_bins: usize,
    /// Upper bound on bins for the dynamic program.
    pub max_nof_bins: usize,
    pub min_points_per_bin: usize,
    /// Number of uniform candidate intervals for the dynamic program.
    pub candidate_grid_size: usize,
    /// Greedy merges while merged cost <= tolerance * sum of parts.
    pub greedy_tolerance: f64,
}

impl Default for BinningConfig {
    fn default() -> Self {
        Self {
            mode: BinningMode::Fixed,
            nof_bins: 20,
            init_nof_bins: 100,
            max_nof_bins: 20,
            min_points_per_bin: 10,
            candidate_grid_size: DEFAULT_CANDIDATE_GRID,
            greedy_tolerance: DEFAULT_GREEDY_TOLERANCE,
        }
    }
}

impl BinningConfig {
    pub fn fixed(nof_bins: usize) -> Self {
        Self {
            mode: BinningMode::Fixed,
            nof_bins,
            min_points_per_bin: 0,
            ..Self::default()
        }
    }

    pub fn greedy(init_nof_bins: usize, min_points_per_bin: usize) -> Self {
        Self {
            mode: BinningMode::Greedy,
            init_nof_bins,
            min_points_per_bin,
            ..Self::default()
        }
    }

    pub fn dynamic_programming(max_nof_bins: usize, min_points_per_bin: usize) -> Self {
        Self {
            mode: BinningMode::DynamicProgramming,
            max_nof_bins,
            min_points_per_bin,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(EffectError::InvalidArgument(format!("{what} must be >= 1")));
        match self.mode {
            BinningMode::Fixed if self.nof_bins == 0 => bad("nof_bins"),
            BinningMode::Greedy if self.init_nof_bins == 0 => bad("init_nof_bins"),
            BinningMode::DynamicProgramming if self.max_nof_bins == 0 => bad("max_nof_bins"),
            BinningMode::DynamicProgramming if self.candidate_grid_size < self.max_nof_bins => {
                Err(EffectError::InvalidArgument(format!(
                    "candidate_grid_size ({}) must be >= max_nof_bins ({})",
                    self.candidate_grid_size, self.max_nof_bins
                )))
            }
            BinningMode::Greedy if self.greedy_tolerance.is_nan() || self.greedy_tolerance < 1.0 => Err(
                EffectError::InvalidArgument("greedy_tolerance must be >= 1".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Ordered bin edges plus per-bin statistics of the local effects.
///
/// Bins are right-open except the last, which also holds `x == max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinPartition {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
    /// Mean local effect; empty bins carry the nearest preceding non-empty mean.
    pub means: Vec<f64>,
    /// Population variance of local effects; 0 for empty bins.
    pub variances: Vec<f64>,
    /// Bins with no points (mean borrowed from a neighbour).
    pub empty: Vec<bool>,
}

impl BinPartition {
    /// Computes bin statistics for fixed `edges`.
    pub fn from_edges(x: &[f64], effects: &[f64], edges: Vec<f64>) -> Self {
        let k = edges.len() - 1;
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); k];
        for (&xi, &e) in x.iter().zip(effects) {
            if let Some(b) = bin_index(&edges, xi) {
                members[b].push(e);
            }
        }
        let counts: Vec<usize> = members.iter().map(Vec::len).collect();
        let empty: Vec<bool> = counts.iter().map(|&c| c == 0).collect();
        let mut means = vec![0.0; k];
        let mut variances = vec![0.0; k];
        for (b, m) in members.iter().enumerate() {
            if m.is_empty() {
                continue;
            }
            let n = m.len() as f64;
            let mu = m.iter().sum::<f64>() / n;
            means[b] = mu;
            variances[b] = m.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        }
        fill_empty_means(&mut means, &empty);
        Self {
            edges,
            counts,
            means,
            variances,
            empty,
        }
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn stds(&self) -> Vec<f64> {
        self.variances.iter().map(|v| v.sqrt()).collect()
    }

    /// Width-weighted within-bin variance.
    pub fn cost(&self) -> f64 {
        self.widths()
            .iter()
            .zip(&self.variances)
            .map(|(w, v)| w * v)
            .sum()
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        bin_index(&self.edges, x)
    }

    pub fn has_empty_bins(&self) -> bool {
        self.empty.iter().any(|&e| e)
    }
}

/// Index of the bin holding `x`, or `None` outside `[z_0, z_K]`.
pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    let k = edges.len() - 1;
    if x < edges[0] || x > edges[k] {
        return None;
    }
    Some(edges[1..k].partition_point(|&e| e <= x))
}

fn fill_empty_means(means: &mut [f64], empty: &[bool]) {
    let Some(first) = empty.iter().position(|&e| !e) else {
        return;
    };
    let lead = means[first];
    means[..first].iter_mut().for_each(|m| *m = lead);
    for b in first + 1..means.len() {
        if empty[b] {
            means[b] = means[b - 1];
        }
    }
}

fn axis(dataset: &Dataset, feature: usize, effects: &[f64]) -> Result<(Vec<f64>, f64, f64)> {
    dataset.check_feature(feature)?;
    if effects.len() != dataset.n_rows() {
        return Err(EffectError::InvalidArgument(format!(
            "{} local effects for {} rows",
            effects.len(),
            dataset.n_rows()
        )));
    }
    let (lo, hi) = dataset.range(feature);
    if hi <= lo {
        return Err(EffectError::DegenerateRange { feature, value: lo });
    }
    Ok((dataset.column(feature).to_vec(), lo, hi))
}

/// `k` equal-width bins over the feature range.
pub fn fixed_bins(
    dataset: &Dataset,
    feature: usize,
    effects: &[f64],
    k: usize,
) -> Result<BinPartition> {
    if k == 0 {
        return Err(EffectError::InvalidArgument("nof_bins must be >= 1".into()));
    }
    let (x, lo, hi) = axis(dataset, feature, effects)?;
    Ok(BinPartition::from_edges(&x, effects, linspace(lo, hi, k + 1)))
}

/// Dispatches on `config.mode`.
pub fn bins(
    dataset: &Dataset,
    feature: usize,
    effects: &[f64],
    config: &BinningConfig,
) -> Result<BinPartition> {
    config.validate()?;
    match config.mode {
        BinningMode::Fixed => fixed_bins(dataset, feature, effects, config.nof_bins),
        BinningMode::Greedy => greedy_bins(dataset, feature, effects, config),
        BinningMode::DynamicProgramming => dp_bins(dataset, feature, effects, config),
    }
}

/// Running sums of count, sum and sum of squares over micro-intervals,
/// shifted by a reference value to limit cancellation.
struct MicroStats {
    edges: Vec<f64>,
    n: Vec<usize>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

impl MicroStats {
    fn new(x: &[f64], effects: &[f64], edges: Vec<f64>) -> Self {
        let g = edges.len() - 1;
        let shift = effects.iter().sum::<f64>() / effects.len().max(1) as f64;
        let mut n = vec![0usize; g + 1];
        let mut s1 = vec![0.0; g + 1];
        let mut s2 = vec![0.0; g + 1];
        let mut cnt = vec![0usize; g];
        let mut a = vec![0.0; g];
        let mut b = vec![0.0; g];
        for (&xi, &e) in x.iter().zip(effects) {
            if let Some(j) = bin_index(&edges, xi) {
                let d = e - shift;
                cnt[j] += 1;
                a[j] += d;
                b[j] += d * d;
            }
        }
        for j in 0..g {
            n[j + 1] = n[j] + cnt[j];
            s1[j + 1] = s1[j] + a[j];
            s2[j + 1] = s2[j] + b[j];
        }
        Self { edges, n, s1, s2 }
    }

    fn count(&self, a: usize, b: usize) -> usize {
        self.n[b] - self.n[a]
    }

    /// Width-weighted variance of the span `[edges[a], edges[b])`.
    fn cost(&self, a: usize, b: usize) -> f64 {
        let n = self.count(a, b);
        if n == 0 {
            return 0.0;
        }
        let n = n as f64;
        let mean = (self.s1[b] - self.s1[a]) / n;
        let var = ((self.s2[b] - self.s2[a]) / n - mean * mean).max(0.0);
        (self.edges[b] - self.edges[a]) * var
    }
}

/// Exact minimum-cost partition over a uniform candidate grid.
///
/// Among partitions with at most `max_nof_bins` bins and at least
/// `min_points_per_bin` points per bin, returns one of minimum cost; ties go
/// to fewer bins, then to the lexicographically smallest edge sequence.
pub fn dp_bins(
    dataset: &Dataset,
    feature: usize,
    effects: &[f64],
    config: &BinningConfig,
) -> Result<BinPartition> {
    config.validate()?;
    let (x, lo, hi) = axis(dataset, feature, effects)?;
    let g = config.candidate_grid_size;
    let max_bins = config.max_nof_bins.min(g);
    let min_pts = config.min_points_per_bin;
    let candidates = linspace(lo, hi, g + 1);
    let stats = MicroStats::new(&x, effects, candidates.clone());

    let total = stats.cost(0, g);
    let tol = 1e-12 * (total.abs() + f64::MIN_POSITIVE.sqrt());

    // best[m][a]: least cost covering [c_a, c_G] with exactly m bins.
    let mut best = vec![vec![f64::INFINITY; g + 1]; max_bins + 1];
    best[0][g] = 0.0;
    for m in 1..=max_bins {
        for a in (0..g).rev() {
            let mut acc = f64::INFINITY;
            for b in a + 1..=g {
                let rest = best[m - 1][b];
                if rest.is_infinite() || stats.count(a, b) < min_pts {
                    continue;
                }
                acc = acc.min(stats.cost(a, b) + rest);
            }
            best[m][a] = acc;
        }
    }

    let mut chosen: Option<(usize, f64)> = None;
    for (m, row) in best.iter().enumerate().skip(1) {
        let c = row[0];
        if c.is_finite() && chosen.is_none_or(|(_, bc)| c < bc - tol) {
            chosen = Some((m, c));
        }
    }
    let Some((mut m, _)) = chosen else {
        return Err(EffectError::Constraint(format!(
            "no partition of {} points into at most {max_bins} bins keeps min_points_per_bin = {min_pts}",
            x.len()
        )));
    };

    let mut edges = vec![candidates[0]];
    let mut a = 0;
    while m > 0 {
        let target = best[m][a];
        let b = (a + 1..=g)
            .find(|&b| {
                let rest = best[m - 1][b];
                rest.is_finite()
                    && stats.count(a, b) >= min_pts
                    && stats.cost(a, b) + rest <= target + tol
            })
            .expect("reconstruction follows a finite optimum");
        edges.push(candidates[b]);
        a = b;
        m -= 1;
    }
    Ok(BinPartition::from_edges(&x, effects, edges))
}

/// Left-to-right merge of equal-width micro-bins.
///
/// The running bin absorbs the next micro-bin when that micro-bin is empty,
/// when the running bin still has fewer than `min_points_per_bin` points, or
/// when the merged cost stays within `greedy_tolerance` times the summed cost
/// of the two parts. A short trailing bin is folded into its left neighbour.
pub fn greedy_bins(
    dataset: &Dataset,
    feature: usize,
    effects: &[f64],
    config: &BinningConfig,
) -> Result<BinPartition> {
    config.validate()?;
    let (x, lo, hi) = axis(dataset, feature, effects)?;
    let min_pts = config.min_points_per_bin;
    if x.len() < min_pts {
        return Err(EffectError::Constraint(format!(
            "{} points cannot fill a single bin with min_points_per_bin = {min_pts}",
            x.len()
        )));
    }
    let g = config.init_nof_bins;
    let micro = linspace(lo, hi, g + 1);
    let stats = MicroStats::new(&x, effects, micro.clone());

    let mut cuts: Vec<usize> = vec![0];
    let mut start = 0;
    for j in 1..g {
        let merge = if stats.count(j, j + 1) == 0 || stats.count(start, j) < min_pts {
            true
        } else {
            let merged = stats.cost(start, j + 1);
            let parts = stats.cost(start, j) + stats.cost(j, j + 1);
            merged <= config.greedy_tolerance * parts
        };
        if !merge {
            cuts.push(j);
            start = j;
        }
    }
    if cuts.len() > 1 && stats.count(start, g) < min_pts {
        cuts.pop();
    }
    cuts.push(g);
    let edges = cuts.into_iter().map(|c| micro[c]).collect();
    Ok(BinPartition::from_edges(&x, effects, edges))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn uniform(n: usize, lo: f64, hi: f64) -> Dataset {
        Dataset::new(Array2::from_shape_fn((n, 1), |(i, _)| {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }))
        .unwrap()
    }

    #[test]
    fn fixed_edges_are_equal_width() {
        let ds = uniform(101, -1.0, 1.0);
        let p = fixed_bins(&ds, 0, &vec![0.0; 101], 4).unwrap();
        assert_eq!(p.edges, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(p.counts.iter().sum::<usize>(), 101);
    }

    #[test]
    fn fixed_constant_effects() {
        let ds = uniform(50, 0.0, 3.0);
        let p = fixed_bins(&ds, 0, &vec![2.5; 50], 7).unwrap();
        assert!(p.means.iter().all(|&m| m == 2.5));
        assert!(p.variances.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_range() {
        let ds = Dataset::new(Array2::from_elem((5, 1), 1.0)).unwrap();
        let err = fixed_bins(&ds, 0, &[0.0; 5], 3).unwrap_err();
        assert!(matches!(err, EffectError::DegenerateRange { .. }));
        assert!(greedy_bins(&ds, 0, &[0.0; 5], &BinningConfig::greedy(10, 0)).is_err());
    }

    #[test]
    fn empty_bins_carry_previous_mean() {
        let ds = Dataset::new(ndarray::array![[0.0], [0.1], [0.9], [1.0]]).unwrap();
        let p = fixed_bins(&ds, 0, &[1.0, 1.0, 5.0, 5.0], 4).unwrap();
        assert_eq!(p.counts, vec![2, 0, 0, 2]);
        assert_eq!(p.means, vec![1.0, 1.0, 1.0, 5.0]);
        assert!(p.has_empty_bins());
    }

    #[test]
    fn last_bin_is_right_closed() {
        let edges = vec![0.0, 0.5, 1.0];
        assert_eq!(bin_index(&edges, 0.5), Some(1));
        assert_eq!(bin_index(&edges, 1.0), Some(1));
        assert_eq!(bin_index(&edges, 0.0), Some(0));
        assert_eq!(bin_index(&edges, 1.5), None);
    }

    #[test]
    fn dp_constant_is_one_bin() {
        let ds = uniform(200, -1.0, 1.0);
        let p = dp_bins(&ds, 0, &vec![0.7; 200], &BinningConfig::dynamic_programming(20, 10)).unwrap();
        assert_eq!(p.n_bins(), 1);
        assert!(p.cost() < 1e-24);
    }

    #[test]
    fn dp_infeasible() {
        let ds = uniform(15, -1.0, 1.0);
        let err = dp_bins(&ds, 0, &[0.0; 15], &BinningConfig::dynamic_programming(5, 20)).unwrap_err();
        assert!(matches!(err, EffectError::Constraint(_)));
        assert!(err.to_string().contains("min_points_per_bin = 20"));
    }

    #[test]
    fn dp_rejects_small_candidate_grid() {
        let ds = uniform(15, -1.0, 1.0);
        let mut cfg = BinningConfig::dynamic_programming(30, 0);
        cfg.candidate_grid_size = 10;
        assert!(dp_bins(&ds, 0, &[0.0; 15], &cfg).is_err());
    }

    #[test]
    fn greedy_constant_is_one_bin() {
        let ds = uniform(300, -1.0, 1.0);
        let p = greedy_bins(&ds, 0, &vec![1.0; 300], &BinningConfig::greedy(100, 10)).unwrap();
        assert_eq!(p.n_bins(), 1);
    }

    #[test]
    fn greedy_respects_min_points() {
        let ds = uniform(1000, -1.0, 1.0);
        let effects: Vec<f64> = (0..1000).map(|i| ((i * 37) % 11) as f64).collect();
        let p = greedy_bins(&ds, 0, &effects, &BinningConfig::greedy(100, 25)).unwrap();
        assert!(p.counts.iter().all(|&c| c >= 25), "{:?}", p.counts);
        assert_eq!(p.counts.iter().sum::<usize>(), 1000);
    }
}
