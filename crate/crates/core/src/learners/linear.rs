use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{dot, Collinearity, Matrix, QrFactor};

/// `ŷ = intercept + xᵀβ` on the original feature scale.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    intercept: f64,
    coefficients: Vec<f64>,
}

fn feature_name(j: usize) -> String {
    if j == 0 {
        "intercept".to_string()
    } else {
        format!("x{}", j - 1)
    }
}

fn rank_error(c: Collinearity, offset: usize) -> Error {
    let mut columns: Vec<String> = c.partners.iter().map(|&j| feature_name(j + offset)).collect();
    columns.push(feature_name(c.column + offset));
    Error::RankDeficient { columns }
}

impl LinearModel {
    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        self.intercept + dot(&self.coefficients, row)
    }

    pub(crate) fn fit_ols(x: &Matrix, y: &[f64]) -> Result<Self> {
        let n = x.nrows();
        let ones = Matrix::from_vec(n, 1, vec![1.0; n])?;
        let design = ones.hstack(x)?;
        let qr = QrFactor::new(&design).map_err(|c| rank_error(c, 0))?;
        let beta = qr.solve(y)?;
        Ok(LinearModel {
            intercept: beta[0],
            coefficients: beta[1..].to_vec(),
        })
    }

    /// Minimises `‖y − ȳ − Zβ‖² + λ‖β‖²` on training-standardised features `Z`
    /// by least squares on the augmented system `[Z; √λ I]`.
    pub(crate) fn fit_ridge(x: &Matrix, y: &[f64], lambda: f64) -> Result<Self> {
        let n = x.nrows();
        let p = x.ncols();
        let means: Vec<f64> = (0..p).map(|j| (0..n).map(|i| x[(i, j)]).sum::<f64>() / n as f64).collect();
        let scales: Vec<f64> = (0..p)
            .map(|j| {
                let ss: f64 = (0..n).map(|i| (x[(i, j)] - means[j]) * (x[(i, j)] - means[j])).sum();
                libm::sqrt(ss / n as f64)
            })
            .collect();
        let ybar = y.iter().sum::<f64>() / n as f64;
        let root = libm::sqrt(lambda);
        let mut aug = Matrix::zeros(n + p, p);
        for i in 0..n {
            for j in 0..p {
                aug[(i, j)] = if scales[j] > 0.0 {
                    (x[(i, j)] - means[j]) / scales[j]
                } else {
                    0.0
                };
            }
        }
        for j in 0..p {
            aug[(n + j, j)] = root;
        }
        let mut target: Vec<f64> = y.iter().map(|v| v - ybar).collect();
        target.resize(n + p, 0.0);
        let beta_std = match QrFactor::new(&aug) {
            Ok(qr) => qr.solve(&target)?,
            Err(c) => return Err(rank_error(c, 1)),
        };
        let coefficients: Vec<f64> = beta_std
            .iter()
            .zip(&scales)
            .map(|(b, s)| if *s > 0.0 { b / s } else { 0.0 })
            .collect();
        let intercept = ybar - dot(&coefficients, &means);
        Ok(LinearModel {
            intercept,
            coefficients,
        })
    }
}
