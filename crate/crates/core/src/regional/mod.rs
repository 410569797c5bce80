//! Regional effects: level-wise search for splits of the other features that
//! reduce the weighted heterogeneity of one feature's effect.

mod report;

pub use report::render_report;

use serde::{Deserialize, Serialize};

use crate::curve::EffectCurve;
use crate::dataset::{ColumnKind, Dataset, SplitCondition};
use crate::error::{EffectError, Result};
use crate::global::mean_std;
use crate::method::MethodConfig;
use crate::oracle::{self, ModelOracle};
use crate::par;

/// Heterogeneity at or below this fraction of the output std counts as zero.
pub const ZERO_HETEROGENEITY: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionalConfig {
    pub method: MethodConfig,
    pub max_depth: usize,
    /// Minimum relative drop in weighted heterogeneity to accept a level.
    pub heter_pcg_drop_thres: f64,
    pub nof_candidate_splits_for_numerical: usize,
    /// Cells with fewer rows inherit their parent's heterogeneity. `None`
    /// uses the method's own floor.
    pub min_cell_rows: Option<usize>,
}

impl RegionalConfig {
    pub fn new(method: MethodConfig) -> Self {
        Self {
            method,
            max_depth: 3,
            heter_pcg_drop_thres: 0.1,
            nof_candidate_splits_for_numerical: 11,
            min_cell_rows: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.method.validate()?;
        if self.max_depth < 1 {
            return Err(EffectError::InvalidArgument("max_depth must be >= 1".into()));
        }
        if self.nof_candidate_splits_for_numerical < 2 {
            return Err(EffectError::InvalidArgument(
                "nof_candidate_splits_for_numerical must be >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.heter_pcg_drop_thres) {
            return Err(EffectError::InvalidArgument(format!(
                "heter_pcg_drop_thres must lie in [0, 1], got {}",
                self.heter_pcg_drop_thres
            )));
        }
        Ok(())
    }

    pub fn floor(&self) -> usize {
        self.min_cell_rows.unwrap_or_else(|| self.method.min_cell_rows())
    }

    /// The rows the search runs on and the per-cell method settings.
    ///
    /// SHAP-DP subsamples once up front; cells then use all of their rows
    /// as both explained instances and background.
    pub fn prepare(&self, dataset: &Dataset) -> (Dataset, MethodConfig) {
        match &self.method {
            MethodConfig::ShapDp(s) => {
                let data = match s.nof_instances {
                    Some(n) => dataset.subsample(n, s.seed),
                    None => dataset.clone(),
                };
                let mut cell = s.clone();
                cell.nof_instances = None;
                (data, MethodConfig::ShapDp(cell))
            }
            m => (dataset.clone(), m.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub idx: usize,
    pub depth: usize,
    pub parent: Option<usize>,
    pub chain: Vec<SplitCondition>,
    pub heterogeneity: f64,
    pub nof_instances: usize,
    pub weight: f64,
    /// False when the cell was too small or degenerate for the method and
    /// took its parent's heterogeneity.
    pub evaluated: bool,
    /// Row indices into the searched dataset.
    #[serde(skip)]
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelStat {
    pub level: usize,
    pub heterogeneity: f64,
    pub drop: f64,
    pub pct_drop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTree {
    pub feature: usize,
    pub names: Vec<String>,
    /// Breadth-first: node 0 is the root, children of level `l` follow in
    /// parent order, left (`<=` / `==`) before right.
    pub nodes: Vec<TreeNode>,
    pub level_stats: Vec<LevelStat>,
    pub diagnostics: Vec<String>,
}

impl PartitionTree {
    pub fn depth(&self) -> usize {
        self.level_stats.len() - 1
    }

    pub fn level(&self, depth: usize) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(move |n| n.depth == depth)
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.level(self.depth())
    }

    /// Number of leaves, or 0 for a root-only tree.
    pub fn n_regions(&self) -> usize {
        if self.depth() == 0 {
            0
        } else {
            self.leaves().count()
        }
    }
}

/// Split pairs on column `k`: `P` interior thresholds
/// `min + (max - min) t / (P + 1)` for numeric columns, one `== v` / `!= v`
/// pair per distinct value for categorical ones. Constant columns give none.
pub fn candidate_splits(
    dataset: &Dataset,
    k: usize,
    nof_candidate_splits: usize,
) -> Result<Vec<(SplitCondition, SplitCondition)>> {
    dataset.check_feature(k)?;
    let (lo, hi) = dataset.range(k);
    if hi <= lo {
        return Ok(Vec::new());
    }
    Ok(match dataset.kind(k) {
        ColumnKind::Numeric => {
            let p = nof_candidate_splits;
            (1..=p)
                .map(|t| {
                    let v = lo + (hi - lo) * t as f64 / (p + 1) as f64;
                    (SplitCondition::leq(k, v), SplitCondition::gt(k, v))
                })
                .collect()
        }
        ColumnKind::Categorical => dataset
            .distinct_values(k)
            .into_iter()
            .map(|v| (SplitCondition::eq(k, v), SplitCondition::neq(k, v)))
            .collect(),
    })
}

/// A cell's heterogeneity, or `fallback` when the cell cannot support the
/// method. The flag tells whether the method was actually evaluated.
fn cell_heterogeneity(
    dataset: &Dataset,
    rows: &[usize],
    oracle: &dyn ModelOracle,
    feature: usize,
    method: &MethodConfig,
    floor: usize,
    fallback: f64,
) -> Result<(f64, bool)> {
    if rows.len() < floor.max(1) {
        return Ok((fallback, false));
    }
    let cell = dataset.select_rows(rows);
    match method.effect(&cell, oracle, feature) {
        Ok(c) => Ok((c.h_index, true)),
        Err(e) if e.is_degenerate_subset() => Ok((fallback, false)),
        Err(e) => Err(e),
    }
}

/// Weighted heterogeneity `sum_t |D_t| / |D| * H_t` of a partition of
/// `dataset` given as row sets. `fallbacks[t]` is used for cells the method
/// cannot be evaluated on.
pub fn level_heterogeneity(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    method: &MethodConfig,
    cells: &[Vec<usize>],
    fallbacks: &[f64],
    floor: usize,
) -> Result<(f64, Vec<(f64, bool)>)> {
    let n = dataset.n_rows() as f64;
    let per_cell = par::try_map(cells.len(), |t| {
        cell_heterogeneity(dataset, &cells[t], oracle, feature, method, floor, fallbacks[t])
    })?;
    let total = cells
        .iter()
        .zip(&per_cell)
        .map(|(rows, (h, _))| rows.len() as f64 / n * h)
        .sum();
    Ok((total, per_cell))
}

fn split_rows(dataset: &Dataset, rows: &[usize], cond: &SplitCondition) -> (Vec<usize>, Vec<usize>) {
    let col = dataset.column(cond.feature);
    rows.iter().partition(|&&i| cond.matches(col[i]))
}

/// Searches for level-uniform splits: at each depth one (feature, position)
/// split is applied to every current node, chosen to minimise the weighted
/// heterogeneity of the resulting cells. A level is kept only when its
/// relative drop reaches `heter_pcg_drop_thres`; the search also stops once
/// heterogeneity is zero.
pub fn detect_subspaces(
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    feature: usize,
    config: &RegionalConfig,
) -> Result<PartitionTree> {
    config.validate()?;
    dataset.check_feature(feature)?;
    let (data, method) = config.prepare(dataset);
    let floor = config.floor();
    let n = data.n_rows();

    let root_h = method.effect(&data, oracle, feature)?.h_index;
    let y = oracle::predict(oracle, data.values())?;
    let (_, y_std) = mean_std(y.iter().copied());
    let is_zero = |h: f64| h <= ZERO_HETEROGENEITY * y_std;

    let mut tree = PartitionTree {
        feature,
        names: data.names().to_vec(),
        nodes: vec![TreeNode {
            idx: 0,
            depth: 0,
            parent: None,
            chain: Vec::new(),
            heterogeneity: root_h,
            nof_instances: n,
            weight: 1.0,
            evaluated: true,
            rows: (0..n).collect(),
        }],
        level_stats: vec![LevelStat {
            level: 0,
            heterogeneity: root_h,
            drop: 0.0,
            pct_drop: 0.0,
        }],
        diagnostics: Vec::new(),
    };
    if is_zero(root_h) {
        tree.diagnostics
            .push("global heterogeneity is already zero; no split attempted".into());
        return Ok(tree);
    }

    let mut candidates = Vec::new();
    for k in (0..data.n_cols()).filter(|&k| k != feature) {
        candidates.extend(candidate_splits(&data, k, config.nof_candidate_splits_for_numerical)?);
    }
    if candidates.is_empty() {
        tree.diagnostics
            .push("no candidate splits: every other feature is constant".into());
        return Ok(tree);
    }

    let mut current: Vec<usize> = vec![0];
    let mut prev_h = root_h;
    for level in 1..=config.max_depth {
        let parents: Vec<&TreeNode> = current.iter().map(|&i| &tree.nodes[i]).collect();
        let fallbacks: Vec<f64> = parents
            .iter()
            .flat_map(|p| [p.heterogeneity, p.heterogeneity])
            .collect();
        let evaluated = par::try_map(candidates.len(), |c| {
            let (left, _) = &candidates[c];
            let cells: Vec<Vec<usize>> = parents
                .iter()
                .flat_map(|p| {
                    let (l, r) = split_rows(&data, &p.rows, left);
                    [l, r]
                })
                .collect();
            let (h, per_cell) =
                level_heterogeneity(&data, oracle, feature, &method, &cells, &fallbacks, floor)?;
            Ok((h, cells, per_cell))
        })?;

        // First strict minimum in candidate order: lowest feature, then
        // smallest threshold.
        let best = (0..evaluated.len())
            .reduce(|a, b| if evaluated[b].0 < evaluated[a].0 { b } else { a })
            .expect("non-empty candidates");
        let (h, cells, per_cell) = &evaluated[best];
        let drop = prev_h - h;
        let pct = if prev_h > 0.0 { drop / prev_h } else { 0.0 };
        if pct < config.heter_pcg_drop_thres {
            tree.diagnostics.push(format!(
                "level {level} rejected: best split {} drops heterogeneity by {:.2}%",
                candidates[best].0.display(&tree.names),
                100.0 * pct
            ));
            break;
        }

        let (left, right) = candidates[best];
        let mut next = Vec::with_capacity(cells.len());
        for (t, rows) in cells.iter().enumerate() {
            let parent = &tree.nodes[current[t / 2]];
            let mut chain = parent.chain.clone();
            chain.push(if t % 2 == 0 { left } else { right });
            let idx = tree.nodes.len();
            tree.nodes.push(TreeNode {
                idx,
                depth: level,
                parent: Some(parent.idx),
                chain,
                heterogeneity: per_cell[t].0,
                nof_instances: rows.len(),
                weight: rows.len() as f64 / n as f64,
                evaluated: per_cell[t].1,
                rows: rows.clone(),
            });
            next.push(idx);
        }
        tree.level_stats.push(LevelStat {
            level,
            heterogeneity: *h,
            drop,
            pct_drop: 100.0 * pct,
        });
        current = next;
        prev_h = *h;
        if is_zero(*h) {
            break;
        }
    }
    Ok(tree)
}

/// The method's effect curve on one node's rows. Node 0 gives the global
/// curve on the searched data.
pub fn regional_curve(
    tree: &PartitionTree,
    node_idx: usize,
    dataset: &Dataset,
    oracle: &dyn ModelOracle,
    config: &RegionalConfig,
) -> Result<EffectCurve> {
    let node = tree.nodes.get(node_idx).ok_or_else(|| {
        EffectError::InvalidArgument(format!(
            "node {node_idx} does not exist (tree has {} nodes)",
            tree.nodes.len()
        ))
    })?;
    let (data, method) = config.prepare(dataset);
    let rows = data.matching_rows(&node.chain);
    let floor = config.floor();
    if node_idx != 0 && rows.len() < floor {
        return Err(EffectError::TooFewInstances {
            found: rows.len(),
            required: floor,
            context: format!("regional curve of node {node_idx}"),
        });
    }
    let cell = data.select_rows(&rows);
    method.effect(&cell, oracle, tree.feature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binning::BinningConfig;
    use crate::global::PdpConfig;
    use crate::oracle::FnOracle;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, d: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Dataset::new(Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0))).unwrap()
    }

    fn regional_model() -> FnOracle {
        FnOracle::new(|r| if r[2] > 0.0 { 3.0 * r[0] } else { -3.0 * r[0] } + r[2]).with_gradient(|r| {
            vec![if r[2] > 0.0 { 3.0 } else { -3.0 }, 0.0, 1.0]
        })
    }

    #[test]
    fn numeric_candidates_are_interior() {
        let ds = Dataset::new(ndarray::array![[-1.0], [1.0]]).unwrap();
        let c = candidate_splits(&ds, 0, 11).unwrap();
        assert_eq!(c.len(), 11);
        for (t, (l, r)) in c.iter().enumerate() {
            assert!((l.value - (-1.0 + 2.0 * (t + 1) as f64 / 12.0)).abs() < 1e-15);
            assert_eq!(r.value, l.value);
        }
    }

    #[test]
    fn categorical_and_constant_candidates() {
        let x = ndarray::array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0], [2.0, 5.0]];
        let ds = Dataset::with_metadata(x, vec![ColumnKind::Categorical, ColumnKind::Numeric], None).unwrap();
        assert_eq!(candidate_splits(&ds, 0, 11).unwrap().len(), 3);
        assert!(candidate_splits(&ds, 1, 11).unwrap().is_empty());
    }

    #[test]
    fn rhale_splits_on_the_interacting_feature() {
        let ds = random(600, 3, 1);
        let mut cfg = RegionalConfig::new(MethodConfig::Rhale(BinningConfig::fixed(11)));
        cfg.heter_pcg_drop_thres = 0.6;
        let tree = detect_subspaces(&ds, &regional_model(), 0, &cfg).unwrap();
        assert_eq!(tree.depth(), 1);
        assert_eq!(tree.n_regions(), 2);
        assert_eq!(tree.nodes[1].chain[0].feature, 2);
        assert!(tree.level_stats[1].heterogeneity < 1e-9);
        let counts: usize = tree.leaves().map(|n| n.nof_instances).sum();
        assert_eq!(counts, 600);
    }

    #[test]
    fn additive_model_stays_root_only() {
        let ds = random(200, 3, 2);
        let f = FnOracle::new(|r| r[0].powi(2) + r[1] + r[2].sin());
        let cfg = RegionalConfig::new(MethodConfig::Pdp(PdpConfig::default()));
        for s in 0..3 {
            let tree = detect_subspaces(&ds, &f, s, &cfg).unwrap();
            assert_eq!(tree.n_regions(), 0);
            assert_eq!(tree.nodes.len(), 1);
        }
    }

    #[test]
    fn root_curve_is_the_global_curve() {
        let ds = random(300, 3, 3);
        let f = regional_model();
        let cfg = RegionalConfig::new(MethodConfig::Rhale(BinningConfig::fixed(11)));
        let tree = detect_subspaces(&ds, &f, 0, &cfg).unwrap();
        let root = regional_curve(&tree, 0, &ds, &f, &cfg).unwrap();
        let global = cfg.method.effect(&ds, &f, 0).unwrap();
        assert_eq!(root, global);
        assert!(regional_curve(&tree, 99, &ds, &f, &cfg).is_err());
    }

    #[test]
    fn small_cells_inherit_parent_heterogeneity() {
        let ds = random(30, 3, 4);
        let f = regional_model();
        let cells = vec![(0..25).collect::<Vec<_>>(), (25..30).collect()];
        let method = MethodConfig::Rhale(BinningConfig::fixed(3));
        let (_, per_cell) = level_heterogeneity(&ds, &f, 0, &method, &cells, &[7.0, 7.0], 10).unwrap();
        assert!(per_cell[0].1);
        assert_eq!(per_cell[1], (7.0, false));
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = RegionalConfig::new(MethodConfig::Pdp(PdpConfig::default()));
        cfg.heter_pcg_drop_thres = 1.5;
        assert!(cfg.validate().is_err());
        cfg.heter_pcg_drop_thres = 0.1;
        cfg.max_depth = 0;
        assert!(cfg.validate().is_err());
    }
}
