use std::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{EffectError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

/// An N x D numeric feature matrix, the empirical stand-in for the input
/// distribution. Categorical columns hold numeric category codes.
#[derive(Debug, Clone)]
pub struct Dataset {
    values: Array2<f64>,
    kinds: Vec<ColumnKind>,
    names: Vec<String>,
    ranges: Vec<(f64, f64)>,
}

impl Dataset {
    /// Builds a dataset with every column numeric and names `x1..xD`.
    pub fn new(values: Array2<f64>) -> Result<Self> {
        let d = values.ncols();
        Self::with_metadata(values, vec![ColumnKind::Numeric; d], None)
    }

    pub fn with_metadata(
        values: Array2<f64>,
        kinds: Vec<ColumnKind>,
        names: Option<Vec<String>>,
    ) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(EffectError::InvalidData(format!(
                "dataset must have at least one row and one column, got {n}x{d}"
            )));
        }
        if kinds.len() != d {
            return Err(EffectError::InvalidData(format!(
                "{} column kinds given for {d} columns",
                kinds.len()
            )));
        }
        if let Some(((i, j), v)) = values.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(EffectError::InvalidData(format!(
                "non-finite value {v} at row {i}, column {j}"
            )));
        }
        let names = match names {
            Some(names) if names.len() == d => names,
            Some(names) => {
                return Err(EffectError::InvalidData(format!(
                    "{} column names given for {d} columns",
                    names.len()
                )))
            }
            None => (1..=d).map(|j| format!("x{j}")).collect(),
        };
        let ranges = column_ranges(values.view());
        Ok(Self {
            values,
            kinds,
            names,
            ranges,
        })
    }

    /// Same metadata, different rows. Rows are assumed to come from `self`.
    fn derive(&self, values: Array2<f64>) -> Self {
        let ranges = if values.nrows() == 0 {
            self.ranges.clone()
        } else {
            column_ranges(values.view())
        };
        Self {
            values,
            kinds: self.kinds.clone(),
            names: self.names.clone(),
            ranges,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.values.nrows() == 0
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> ArrayView1<'_, f64> {
        self.values.column(j)
    }

    pub fn kind(&self, j: usize) -> ColumnKind {
        self.kinds[j]
    }

    pub fn kinds(&self) -> &[ColumnKind] {
        &self.kinds
    }

    pub fn name(&self, j: usize) -> &str {
        &self.names[j]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// (min, max) of column `j` over the current rows.
    pub fn range(&self, j: usize) -> (f64, f64) {
        self.ranges[j]
    }

    pub fn ranges(&self) -> &[(f64, f64)] {
        &self.ranges
    }

    pub fn check_feature(&self, j: usize) -> Result<()> {
        if j >= self.n_cols() {
            return Err(EffectError::InvalidArgument(format!(
                "feature index {j} out of range for {} columns",
                self.n_cols()
            )));
        }
        Ok(())
    }

    /// Sorted distinct values of a column.
    pub fn distinct_values(&self, j: usize) -> Vec<f64> {
        let mut v: Vec<f64> = self.values.column(j).to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        self.derive(self.values.select(Axis(0), rows))
    }

    /// Rows satisfying every condition of the chain; an empty chain keeps all rows.
    pub fn subset(&self, chain: &[SplitCondition]) -> Self {
        let rows = self.matching_rows(chain);
        if rows.len() == self.n_rows() {
            return self.clone();
        }
        self.select_rows(&rows)
    }

    pub fn matching_rows(&self, chain: &[SplitCondition]) -> Vec<usize> {
        (0..self.n_rows())
            .filter(|&i| {
                let row = self.values.row(i);
                chain.iter().all(|c| c.matches(row[c.feature]))
            })
            .collect()
    }

    /// Deterministic subsample of `n` rows (kept in original order). Returns a
    /// clone when `n >= N`.
    pub fn subsample(&self, n: usize, seed: u64) -> Self {
        if n >= self.n_rows() {
            return self.clone();
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = index::sample(&mut rng, self.n_rows(), n).into_vec();
        rows.sort_unstable();
        self.select_rows(&rows)
    }
}

fn column_ranges(values: ArrayView2<'_, f64>) -> Vec<(f64, f64)> {
    values
        .columns()
        .into_iter()
        .map(|col| {
            col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    NumericLeq,
    NumericGt,
    CategoricalEq,
    CategoricalNeq,
}

/// One side of a binary split on column `feature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitCondition {
    pub feature: usize,
    pub kind: SplitKind,
    pub value: f64,
}

impl SplitCondition {
    pub fn leq(feature: usize, value: f64) -> Self {
        Self {
            feature,
            kind: SplitKind::NumericLeq,
            value,
        }
    }

    pub fn gt(feature: usize, value: f64) -> Self {
        Self {
            feature,
            kind: SplitKind::NumericGt,
            value,
        }
    }

    pub fn eq(feature: usize, value: f64) -> Self {
        Self {
            feature,
            kind: SplitKind::CategoricalEq,
            value,
        }
    }

    pub fn neq(feature: usize, value: f64) -> Self {
        Self {
            feature,
            kind: SplitKind::CategoricalNeq,
            value,
        }
    }

    /// Ties go left: `x <= p` holds at `x == p`.
    pub fn matches(&self, x: f64) -> bool {
        match self.kind {
            SplitKind::NumericLeq => x <= self.value,
            SplitKind::NumericGt => x > self.value,
            SplitKind::CategoricalEq => x == self.value,
            SplitKind::CategoricalNeq => x != self.value,
        }
    }

    /// The condition selecting the complementary rows.
    pub fn complement(&self) -> Self {
        let kind = match self.kind {
            SplitKind::NumericLeq => SplitKind::NumericGt,
            SplitKind::NumericGt => SplitKind::NumericLeq,
            SplitKind::CategoricalEq => SplitKind::CategoricalNeq,
            SplitKind::CategoricalNeq => SplitKind::CategoricalEq,
        };
        Self { kind, ..*self }
    }

    /// Human-readable form using the given column names, e.g. `x3 <= -0.0`.
    pub fn display<'a>(&'a self, names: &'a [String]) -> impl fmt::Display + 'a {
        ConditionDisplay { cond: self, names }
    }
}

struct ConditionDisplay<'a> {
    cond: &'a SplitCondition,
    names: &'a [String],
}

impl fmt::Display for ConditionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = &self.names[self.cond.feature];
        let op = match self.cond.kind {
            SplitKind::NumericLeq => "<=",
            SplitKind::NumericGt => " >",
            SplitKind::CategoricalEq => "==",
            SplitKind::CategoricalNeq => "!=",
        };
        write!(f, "{name} {op} {:.1}", self.cond.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn small() -> Dataset {
        Dataset::new(array![[0.0, -1.0], [1.0, 0.0], [2.0, 0.5], [3.0, 1.0]]).unwrap()
    }

    #[test]
    fn rejects_non_finite() {
        let err = Dataset::new(array![[0.0, f64::NAN]]).unwrap_err();
        assert!(matches!(err, EffectError::InvalidData(_)));
    }

    #[test]
    fn rejects_empty() {
        assert!(Dataset::new(Array2::zeros((0, 3))).is_err());
    }

    #[test]
    fn ranges_and_names() {
        let ds = small();
        assert_eq!(ds.range(0), (0.0, 3.0));
        assert_eq!(ds.range(1), (-1.0, 1.0));
        assert_eq!(ds.names(), &["x1".to_string(), "x2".to_string()]);
    }

    #[test]
    fn empty_chain_is_identity() {
        let ds = small();
        let sub = ds.subset(&[]);
        assert_eq!(sub.values(), ds.values());
    }

    #[test]
    fn contradictory_chain_is_empty() {
        let ds = small();
        let sub = ds.subset(&[SplitCondition::leq(0, 0.0), SplitCondition::gt(0, 0.0)]);
        assert_eq!(sub.n_rows(), 0);
        assert_eq!(sub.n_cols(), 2);
    }

    #[test]
    fn ties_go_left() {
        let ds = small();
        assert_eq!(ds.matching_rows(&[SplitCondition::leq(1, 0.0)]), vec![0, 1]);
        assert_eq!(ds.matching_rows(&[SplitCondition::gt(1, 0.0)]), vec![2, 3]);
    }

    #[test]
    fn categorical_conditions() {
        let ds = Dataset::with_metadata(
            array![[1.0], [2.0], [3.0], [2.0]],
            vec![ColumnKind::Categorical],
            None,
        )
        .unwrap();
        assert_eq!(ds.distinct_values(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(ds.matching_rows(&[SplitCondition::eq(0, 2.0)]), vec![1, 3]);
        assert_eq!(ds.matching_rows(&[SplitCondition::neq(0, 2.0)]), vec![0, 2]);
    }

    #[test]
    fn display_matches_report_style() {
        let names = vec!["x1".to_string(), "x2".to_string(), "x3".to_string()];
        let c = SplitCondition::leq(2, -1e-4);
        assert_eq!(c.display(&names).to_string(), "x3 <= -0.0");
        assert_eq!(c.complement().display(&names).to_string(), "x3  > -0.0");
    }

    #[test]
    fn subsample_is_deterministic() {
        let ds = Dataset::new(Array2::from_shape_fn((50, 2), |(i, j)| (i * 2 + j) as f64)).unwrap();
        let a = ds.subsample(10, 3);
        let b = ds.subsample(10, 3);
        assert_eq!(a.values(), b.values());
        assert_eq!(a.n_rows(), 10);
        assert_eq!(ds.subsample(100, 3).n_rows(), 50);
    }
}
