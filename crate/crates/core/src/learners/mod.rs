//! Nuisance-function learners behind one fit/predict contract, plus K-fold
//! plans and cross-fitted out-of-fold prediction.

mod folds;
mod forest;
mod linear;
mod tree;

pub use folds::{cross_fit, kfold, FoldPlan};
pub use forest::{Forest, ForestParams};
pub use linear::LinearModel;
pub use tree::{RegressionTree, TreeParams};

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;

/// Which regression learner to use for a nuisance function.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "lowercase"))]
pub enum LearnerSpec {
    /// Least squares with an intercept.
    Ols,
    /// Ridge on standardised features with an unpenalised intercept.
    Ridge { lambda: f64 },
    Forest(ForestParams),
}

impl Default for LearnerSpec {
    fn default() -> Self {
        LearnerSpec::Forest(ForestParams::default())
    }
}

impl LearnerSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            LearnerSpec::Ols => Ok(()),
            LearnerSpec::Ridge { lambda } => {
                if !(lambda.is_finite() && *lambda >= 0.0) {
                    return Err(invalid("ridge penalty must be finite and >= 0"));
                }
                Ok(())
            }
            LearnerSpec::Forest(p) => p.validate(),
        }
    }

    /// Same learner with its randomness re-keyed by `stream` (no-op for linear learners).
    pub fn reseeded(&self, stream: u64) -> LearnerSpec {
        match self {
            LearnerSpec::Forest(p) => LearnerSpec::Forest(ForestParams {
                seed: crate::rng::derive_seed(p.seed, stream),
                ..p.clone()
            }),
            other => other.clone(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LearnerSpec::Ols => "ols",
            LearnerSpec::Ridge { .. } => "ridge",
            LearnerSpec::Forest(_) => "forest",
        }
    }
}

/// A trained learner.
#[derive(Debug, Clone, PartialEq)]
pub enum FittedModel {
    Linear(LinearModel),
    Forest(Forest),
}

impl FittedModel {
    pub fn n_features(&self) -> usize {
        match self {
            FittedModel::Linear(m) => m.coefficients().len(),
            FittedModel::Forest(f) => f.n_features(),
        }
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::DimensionMismatch {
                what: "prediction feature count",
                expected: self.n_features(),
                found: x.ncols(),
            });
        }
        if !x.is_finite() {
            return Err(Error::NonFinite("prediction features"));
        }
        Ok(match self {
            FittedModel::Linear(m) => (0..x.nrows()).map(|i| m.predict_row(x.row(i))).collect(),
            FittedModel::Forest(f) => (0..x.nrows()).map(|i| f.predict_row(x.row(i))).collect(),
        })
    }
}

/// Fits `spec` on `(x, y)`.
pub fn fit(spec: &LearnerSpec, x: &Matrix, y: &[f64]) -> Result<FittedModel> {
    spec.validate()?;
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            what: "response length",
            expected: x.nrows(),
            found: y.len(),
        });
    }
    if x.nrows() < 2 {
        return Err(invalid("learners need at least two training rows"));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data"));
    }
    Ok(match spec {
        LearnerSpec::Ols => FittedModel::Linear(LinearModel::fit_ols(x, y)?),
        LearnerSpec::Ridge { lambda } => FittedModel::Linear(LinearModel::fit_ridge(x, y, *lambda)?),
        LearnerSpec::Forest(p) => FittedModel::Forest(Forest::fit(x, y, p)),
    })
}

pub fn predict(model: &FittedModel, x: &Matrix) -> Result<Vec<f64>> {
    model.predict(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn linear_fixture(n: usize) -> (Matrix, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rows: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>(), rng.random::<f64>() * 10.0])
            .collect();
        let y = rows.iter().map(|r| 1.5 + 2.0 * r[0] - 0.7 * r[1] + 0.05 * r[2]).collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn ols_reproduces_exact_linear_response() {
        let (x, y) = linear_fixture(40);
        let m = fit(&LearnerSpec::Ols, &x, &y).unwrap();
        let p = m.predict(&x).unwrap();
        for (a, b) in p.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
        let r = fit(&LearnerSpec::Ridge { lambda: 0.0 }, &x, &y).unwrap();
        for (a, b) in r.predict(&x).unwrap().iter().zip(&y) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_response_predicted_everywhere() {
        let (x, _) = linear_fixture(30);
        let y = vec![0.3; 30];
        for spec in [
            LearnerSpec::Ols,
            LearnerSpec::Ridge { lambda: 5.0 },
            LearnerSpec::Forest(ForestParams {
                n_trees: 10,
                ..ForestParams::default()
            }),
        ] {
            let m = fit(&spec, &x, &y).unwrap();
            for v in m.predict(&x).unwrap() {
                assert!((v - 0.3).abs() < 1e-12, "{spec:?}: {v}");
            }
        }
    }

    #[test]
    fn predict_contract() {
        let (x, y) = linear_fixture(20);
        let m = fit(&LearnerSpec::Ols, &x, &y).unwrap();
        assert!(m.predict(&Matrix::zeros(0, 3)).unwrap().is_empty());
        assert!(matches!(m.predict(&Matrix::zeros(2, 2)), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn fit_rejects_bad_input() {
        let x = Matrix::from_rows(&[[1.0], [f64::NAN]]).unwrap();
        assert_eq!(fit(&LearnerSpec::Ols, &x, &[1.0, 2.0]).unwrap_err(), Error::NonFinite("training data"));
        let x = Matrix::from_rows(&[[1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).unwrap();
        assert!(matches!(fit(&LearnerSpec::Ols, &x, &[1.0, 2.0, 3.0]), Err(Error::RankDeficient { .. })));
        assert!(fit(&LearnerSpec::Ridge { lambda: -1.0 }, &x, &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn ridge_shrinks_to_mean_as_penalty_grows() {
        let (x, y) = linear_fixture(50);
        let ybar = y.iter().sum::<f64>() / y.len() as f64;
        let FittedModel::Linear(m) = fit(&LearnerSpec::Ridge { lambda: 1e12 }, &x, &y).unwrap() else {
            unreachable!()
        };
        assert!(m.coefficients().iter().all(|b| b.abs() < 1e-8));
        let p = FittedModel::Linear(m).predict(&x).unwrap();
        assert!(p.iter().all(|v| (v - ybar).abs() < 1e-6));
        // continuity in λ
        let a = fit(&LearnerSpec::Ridge { lambda: 1.0 }, &x, &y).unwrap().predict(&x).unwrap();
        let b = fit(&LearnerSpec::Ridge { lambda: 1.0 + 1e-9 }, &x, &y).unwrap().predict(&x).unwrap();
        assert!(a.iter().zip(&b).all(|(u, v)| (u - v).abs() < 1e-7));
    }
}
