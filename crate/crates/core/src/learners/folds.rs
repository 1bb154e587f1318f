use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{fit, LearnerSpec};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Random partition of `0..n` into `k` folds whose sizes differ by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    n: usize,
    k: usize,
    assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Fold id of every sample.
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    /// Sample indices of fold `fold`, ascending.
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.assignment {
            sizes[f] += 1;
        }
        sizes
    }
}

pub fn kfold(n: usize, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 || k > n {
        return Err(Error::OutOfRange {
            what: alloc::string::String::from("fold count"),
            value: k as f64,
            range: alloc::format!("2..={n}"),
        });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; n];
    for (pos, &i) in perm.iter().enumerate() {
        assignment[i] = pos % k;
    }
    Ok(FoldPlan { n, k, assignment })
}

/// Out-of-fold predictions: sample `i` is predicted by a model trained on
/// every fold except its own.
pub fn cross_fit(spec: &LearnerSpec, x: &Matrix, y: &[f64], plan: &FoldPlan) -> Result<Vec<f64>> {
    if plan.n != x.nrows() || plan.n != y.len() {
        return Err(Error::DimensionMismatch {
            what: "fold plan size vs data rows",
            expected: plan.n,
            found: x.nrows(),
        });
    }
    let mut out = vec![f64::NAN; plan.n];
    for fold in 0..plan.k {
        let train = plan.train_indices(fold);
        let test = plan.test_indices(fold);
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let model = fit(&spec.reseeded(fold as u64), &x.select_rows(&train), &y_train).map_err(|e| Error::Fold {
            fold,
            source: Box::new(e),
        })?;
        let pred = model.predict(&x.select_rows(&test))?;
        for (&i, v) in test.iter().zip(pred) {
            out[i] = v;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fold_sizes_balanced() {
        let mut s = kfold(10, 5, 1).unwrap().fold_sizes();
        assert_eq!(s, vec![2; 5]);
        s = kfold(11, 5, 1).unwrap().fold_sizes();
        s.sort_unstable();
        assert_eq!(s, vec![2, 2, 2, 2, 3]);
    }

    #[test]
    fn fold_plan_deterministic_and_validated() {
        assert_eq!(kfold(50, 5, 9).unwrap(), kfold(50, 5, 9).unwrap());
        assert_ne!(kfold(50, 5, 9).unwrap(), kfold(50, 5, 10).unwrap());
        assert!(kfold(5, 1, 0).is_err());
        assert!(kfold(5, 6, 0).is_err());
    }
}
