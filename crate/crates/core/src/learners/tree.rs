//! CART regression tree with variance-reduction splits.
//!
//! Samples are presorted once per feature at the root; each split stably
//! partitions every per-feature ordering, so split search is linear in the
//! node size. Ties between equally good splits go to the lowest feature
//! index, then the lowest threshold.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct TreeParams {
    /// Depth 0 is a single leaf.
    pub max_depth: usize,
    /// Minimum number of (bootstrap) samples in each leaf.
    pub min_leaf: usize,
    /// Features examined at each node; all of them when `>= n_features`.
    pub max_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

impl RegressionTree {
    /// Fits on every row of `x` once (no resampling).
    pub fn fit(x: &Matrix, y: &[f64], params: &TreeParams, seed: u64) -> Self {
        let columns: Vec<Vec<f64>> = (0..x.ncols()).map(|j| x.column(j)).collect();
        let samples: Vec<usize> = (0..x.nrows()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::fit_columns(&columns, y, &samples, params, &mut rng)
    }

    /// Fits on the multiset `samples` of row indices into column-major data.
    pub(crate) fn fit_columns(
        columns: &[Vec<f64>],
        y: &[f64],
        samples: &[usize],
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let p = columns.len();
        if p == 0 || samples.is_empty() {
            let mean = if samples.is_empty() {
                0.0
            } else {
                samples.iter().map(|&i| y[i]).sum::<f64>() / samples.len() as f64
            };
            return RegressionTree {
                nodes: vec![Node::Leaf(mean)],
                n_features: p,
            };
        }
        let order: Vec<Vec<usize>> = columns
            .iter()
            .map(|col| {
                let mut o = samples.to_vec();
                o.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
                o
            })
            .collect();
        Self::fit_sorted(columns, y, order, params, rng)
    }

    /// Fits on presorted per-feature orderings of one sample multiset.
    pub(crate) fn fit_sorted(
        columns: &[Vec<f64>],
        y: &[f64],
        order: Vec<Vec<usize>>,
        params: &TreeParams,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let p = columns.len();
        let n = order.first().map_or(0, Vec::len);
        debug_assert!(p > 0 && n > 0);
        let mut builder = Builder {
            columns,
            y,
            params,
            order,
            goes_left: vec![false; y.len()],
            scratch: Vec::with_capacity(n),
            inv: (0..=n).map(|k| if k == 0 { 0.0 } else { 1.0 / k as f64 }).collect(),
            nodes: Vec::new(),
            rng,
            features: (0..p).collect(),
        };
        builder.build(0, n, 0);
        RegressionTree {
            nodes: builder.nodes,
            n_features: p,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf(v) => return *v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    k = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }
}

struct Builder<'a, 'r> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a TreeParams,
    /// Per feature, the node's samples sorted by that feature; nodes own contiguous ranges.
    order: Vec<Vec<usize>>,
    goes_left: Vec<bool>,
    scratch: Vec<usize>,
    /// `inv[k] = 1/k`.
    inv: Vec<f64>,
    nodes: Vec<Node>,
    rng: &'r mut ChaCha8Rng,
    features: Vec<usize>,
}

impl Builder<'_, '_> {
    fn build(&mut self, start: usize, end: usize, depth: usize) -> usize {
        let n = end - start;
        let ids = &self.order[0][start..end];
        let sum: f64 = ids.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(mean));

        let min_leaf = self.params.min_leaf.max(1);
        if depth >= self.params.max_depth || n < 2 * min_leaf {
            return slot;
        }
        let first = self.y[ids[0]];
        if ids.iter().all(|&i| self.y[i] == first) {
            return slot;
        }

        let candidates = self.candidate_features();
        let parent_score = sum * sum * self.inv[n];
        let mut best: Option<(usize, f64, f64)> = None;
        for &f in &candidates {
            let col = &self.columns[f];
            let ord = &self.order[f][start..end];
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[ord[k]];
                let nl = k + 1;
                let (a, b) = (col[ord[k]], col[ord[k + 1]]);
                if a == b || nl < min_leaf || n - nl < min_leaf {
                    continue;
                }
                let right_sum = sum - left_sum;
                let score = left_sum * left_sum * self.inv[nl] + right_sum * right_sum * self.inv[n - nl];
                if best.is_none_or(|(_, _, s)| score > s) {
                    let mut threshold = 0.5 * (a + b);
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some((f, threshold, score));
                }
            }
        }
        let Some((feature, threshold, score)) = best else {
            return slot;
        };
        if score <= parent_score + 1e-12 * parent_score.abs() {
            return slot;
        }

        let col = &self.columns[feature];
        for &i in &self.order[feature][start..end] {
            self.goes_left[i] = col[i] <= threshold;
        }
        let mut n_left = 0;
        for ord in self.order.iter_mut() {
            self.scratch.clear();
            let seg = &mut ord[start..end];
            let mut w = 0;
            for k in 0..seg.len() {
                let i = seg[k];
                if self.goes_left[i] {
                    seg[w] = i;
                    w += 1;
                } else {
                    self.scratch.push(i);
                }
            }
            seg[w..].copy_from_slice(&self.scratch);
            n_left = w;
        }

        let left = self.build(start, start + n_left, depth + 1);
        let right = self.build(start + n_left, end, depth + 1);
        self.nodes[slot] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        slot
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let p = self.features.len();
        let m = self.params.max_features.clamp(1, p.max(1));
        if m >= p {
            return self.features.clone();
        }
        let mut chosen: Vec<usize> = index::sample(self.rng, p, m).into_iter().collect();
        chosen.sort_unstable();
        chosen
    }
}
