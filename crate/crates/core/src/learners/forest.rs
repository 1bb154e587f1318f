use alloc::vec;
use alloc::vec::Vec;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{RegressionTree, TreeParams};
use crate::error::{invalid, Result};
use crate::linalg::Matrix;
use crate::rng::derive_seed;

/// Regression-forest hyperparameters. Tree `t` draws from its own stream
/// derived from `(seed, t)`, so the fitted forest is a function of the
/// parameters and data alone.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Fraction of features considered at each split, in `(0, 1]`.
    pub feature_fraction: f64,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 200,
            max_depth: 8,
            min_leaf: 5,
            feature_fraction: 1.0,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_trees == 0 {
            return Err(invalid("forest needs at least one tree"));
        }
        if self.min_leaf == 0 {
            return Err(invalid("min_leaf must be >= 1"));
        }
        if !(self.feature_fraction > 0.0 && self.feature_fraction <= 1.0) {
            return Err(invalid("feature_fraction must lie in (0, 1]"));
        }
        Ok(())
    }

    fn tree_params(&self, n_features: usize) -> TreeParams {
        let m = libm::round(self.feature_fraction * n_features as f64) as usize;
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: m.clamp(1, n_features.max(1)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    n_features: usize,
}

impl Forest {
    pub fn fit(x: &Matrix, y: &[f64], params: &ForestParams) -> Self {
        let n = x.nrows();
        let columns: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j)).collect();
        let tree_params = params.tree_params(x.ncols());
        // Sorted once; each bootstrap ordering is then a counting pass over it.
        let sorted: Vec<Vec<usize>> = columns
            .iter()
            .map(|col| {
                let mut o: Vec<usize> = (0..n).collect();
                o.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
                o
            })
            .collect();
        let mut counts = vec![0usize; n];
        let trees = (0..params.n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
                counts.iter_mut().for_each(|c| *c = 0);
                if params.bootstrap {
                    for _ in 0..n {
                        counts[rng.random_range(0..n)] += 1;
                    }
                } else {
                    counts.iter_mut().for_each(|c| *c = 1);
                }
                if sorted.is_empty() {
                    let samples: Vec<usize> = (0..n).flat_map(|i| core::iter::repeat_n(i, counts[i])).collect();
                    return RegressionTree::fit_columns(&columns, y, &samples, &tree_params, &mut rng);
                }
                let order = sorted
                    .iter()
                    .map(|o| {
                        o.iter()
                            .flat_map(|&i| core::iter::repeat_n(i, counts[i]))
                            .collect()
                    })
                    .collect();
                RegressionTree::fit_sorted(&columns, y, order, &tree_params, &mut rng)
            })
            .collect();
        Forest {
            trees,
            n_features: x.ncols(),
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let total: f64 = self.trees.iter().map(|t| t.predict_row(row)).sum();
        total / self.trees.len() as f64
    }
}
