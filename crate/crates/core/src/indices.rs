//! Outcome and treatment measures: market-participation flag, risky-asset
//! ratio, portfolio Sharpe ratio, the financial-inclusion (FA) index and its
//! entropy-weighted variant.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{is_positive_semidefinite, Matrix};

/// 1 if the household holds a positive amount of risky financial assets.
pub fn fmp_flag(risky_asset_total: f64) -> Result<u8> {
    if !risky_asset_total.is_finite() {
        return Err(Error::NonFinite("risky asset total"));
    }
    if risky_asset_total < 0.0 {
        return Err(Error::OutOfRange {
            what: "risky asset total".to_string(),
            value: risky_asset_total,
            range: ">= 0".to_string(),
        });
    }
    Ok(u8::from(risky_asset_total > 0.0))
}

/// Share of risky assets in total assets.
pub fn risky_ratio(risky_total: f64, total_assets: f64) -> Result<f64> {
    if !(risky_total.is_finite() && total_assets.is_finite()) {
        return Err(Error::NonFinite("asset amounts"));
    }
    if total_assets <= 0.0 {
        return Err(Error::OutOfRange {
            what: "total assets".to_string(),
            value: total_assets,
            range: "> 0".to_string(),
        });
    }
    if risky_total < 0.0 || risky_total > total_assets {
        return Err(Error::OutOfRange {
            what: "risky assets".to_string(),
            value: risky_total,
            range: format!("[0, {total_assets}]"),
        });
    }
    Ok(risky_total / total_assets)
}

/// Expected annual return and volatility of one risky asset class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RiskyClass {
    pub name: String,
    pub expected_return: f64,
    pub sd: f64,
}

/// Return/risk assumptions for the risk-free asset and the risky classes.
/// All quantities are annual fractions.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetClassParams {
    risk_free_rate: f64,
    classes: Vec<RiskyClass>,
    covariance: Matrix,
}

impl AssetClassParams {
    /// Builds the covariance `σ_jk = ρ_jk·sd_j·sd_k` from a correlation matrix.
    pub fn from_correlation(risk_free_rate: f64, classes: Vec<RiskyClass>, correlation: &Matrix) -> Result<Self> {
        let k = classes.len();
        if correlation.nrows() != k || correlation.ncols() != k {
            return Err(Error::DimensionMismatch {
                what: "correlation matrix size",
                expected: k,
                found: correlation.nrows(),
            });
        }
        for j in 0..k {
            if correlation[(j, j)] != 1.0 {
                return Err(invalid(format!("correlation diagonal entry {j} is not 1")));
            }
        }
        let mut cov = Matrix::zeros(k, k);
        for j in 0..k {
            for l in 0..k {
                cov[(j, l)] = classes[j].sd * classes[l].sd * correlation[(j, l)];
            }
        }
        Self::from_covariance(risk_free_rate, classes, cov)
    }

    pub fn from_covariance(risk_free_rate: f64, classes: Vec<RiskyClass>, covariance: Matrix) -> Result<Self> {
        let k = classes.len();
        if covariance.nrows() != k || covariance.ncols() != k {
            return Err(Error::DimensionMismatch {
                what: "covariance matrix size",
                expected: k,
                found: covariance.nrows(),
            });
        }
        if !risk_free_rate.is_finite() || !covariance.is_finite() {
            return Err(Error::NonFinite("asset-class parameters"));
        }
        for (j, c) in classes.iter().enumerate() {
            if !(c.sd >= 0.0) || !c.expected_return.is_finite() {
                return Err(invalid(format!("asset class `{}` has invalid return/sd", c.name)));
            }
            if (covariance[(j, j)] - c.sd * c.sd).abs() > 1e-12 * (1.0 + c.sd * c.sd) {
                return Err(invalid(format!("covariance diagonal of `{}` differs from sd²", c.name)));
            }
        }
        if !is_positive_semidefinite(&covariance, 1e-12) {
            return Err(invalid("covariance matrix is not symmetric positive semi-definite"));
        }
        Ok(AssetClassParams {
            risk_free_rate,
            classes,
            covariance,
        })
    }

    pub fn risk_free_rate(&self) -> f64 {
        self.risk_free_rate
    }

    pub fn classes(&self) -> &[RiskyClass] {
        &self.classes
    }

    pub fn covariance(&self) -> &Matrix {
        &self.covariance
    }
}

/// Portfolio shares: one risk-free share plus one share per risky class.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioWeights {
    risk_free: f64,
    risky: Vec<f64>,
}

impl PortfolioWeights {
    pub fn new(risk_free: f64, risky: Vec<f64>) -> Result<Self> {
        let all = core::iter::once(risk_free).chain(risky.iter().copied());
        let mut total = 0.0;
        for w in all {
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::OutOfRange {
                    what: "portfolio weight".to_string(),
                    value: w,
                    range: "[0,1]".to_string(),
                });
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::OutOfRange {
                what: "sum of portfolio weights".to_string(),
                value: total,
                range: "1 ± 1e-9".to_string(),
            });
        }
        Ok(PortfolioWeights { risk_free, risky })
    }

    /// Shares from holdings in currency units.
    pub fn from_amounts(risk_free_amount: f64, risky_amounts: &[f64]) -> Result<Self> {
        let total = risk_free_amount + risky_amounts.iter().sum::<f64>();
        if risk_free_amount < 0.0 || risky_amounts.iter().any(|a| *a < 0.0) {
            return Err(invalid("asset amounts must be non-negative"));
        }
        if !(total > 0.0) || !total.is_finite() {
            return Err(invalid("total financial assets must be positive"));
        }
        Self::new(
            risk_free_amount / total,
            risky_amounts.iter().map(|a| a / total).collect(),
        )
    }

    pub fn risk_free(&self) -> f64 {
        self.risk_free
    }

    pub fn risky(&self) -> &[f64] {
        &self.risky
    }

    /// Number of asset classes with a positive share.
    pub fn classes_held(&self) -> usize {
        usize::from(self.risk_free > 0.0) + self.risky.iter().filter(|w| **w > 0.0).count()
    }
}

/// `(E[R_p] − R_f) / δ_p`, or `None` when the portfolio has zero variance.
pub fn sharpe_ratio(weights: &PortfolioWeights, params: &AssetClassParams) -> Result<Option<f64>> {
    let k = params.classes.len();
    if weights.risky.len() != k {
        return Err(Error::DimensionMismatch {
            what: "risky classes in weights vs parameters",
            expected: k,
            found: weights.risky.len(),
        });
    }
    let expected = weights.risk_free * params.risk_free_rate
        + weights
            .risky
            .iter()
            .zip(&params.classes)
            .map(|(w, c)| w * c.expected_return)
            .sum::<f64>();
    let mut variance = 0.0;
    for j in 0..k {
        for l in 0..k {
            variance += weights.risky[j] * weights.risky[l] * params.covariance[(j, l)];
        }
    }
    if !(variance > 0.0) {
        return Ok(None);
    }
    Ok(Some((expected - params.risk_free_rate) / libm::sqrt(variance)))
}

/// The four financial-inclusion service indicators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InclusionFlags {
    pub credit_card: u8,
    pub digital_payment: u8,
    pub bank_account: u8,
    pub insurance: u8,
}

impl InclusionFlags {
    pub fn new(credit_card: u8, digital_payment: u8, bank_account: u8, insurance: u8) -> Result<Self> {
        let f = InclusionFlags {
            credit_card,
            digital_payment,
            bank_account,
            insurance,
        };
        if f.as_array().iter().any(|v| *v > 1.0) {
            return Err(invalid("inclusion flags must be 0 or 1"));
        }
        Ok(f)
    }

    /// Flags in the order credit card, digital payment, bank account, insurance.
    pub fn as_array(&self) -> [f64; 4] {
        [
            f64::from(self.credit_card),
            f64::from(self.digital_payment),
            f64::from(self.bank_account),
            f64::from(self.insurance),
        ]
    }
}

/// Simple average of the four service flags.
pub fn fa_index(flags: &InclusionFlags) -> f64 {
    flags.as_array().iter().sum::<f64>() / 4.0
}

/// Entropy weights of the columns of a non-negative `n × J` indicator matrix.
///
/// `p_ij = x_ij / Σ_i x_ij`, `e_j = −Σ_i p_ij ln p_ij / ln n` (with `0·ln 0 = 0`),
/// `d_j = 1 − e_j`, `w_j = d_j / Σ d`. A constant column (including an
/// all-zero one) carries no information and gets `d_j = 0`.
pub fn entropy_weights(indicators: &Matrix) -> Result<Vec<f64>> {
    let n = indicators.nrows();
    let k = indicators.ncols();
    if n < 2 {
        return Err(invalid("entropy weights need at least two rows"));
    }
    if !indicators.is_finite() {
        return Err(Error::NonFinite("indicator matrix"));
    }
    if indicators.as_slice().iter().any(|v| *v < 0.0) {
        return Err(invalid("indicator matrix must be non-negative"));
    }
    let ln_n = libm::log(n as f64);
    let divergence: Vec<f64> = (0..k)
        .map(|j| {
            let first = indicators[(0, j)];
            if (1..n).all(|i| indicators[(i, j)] == first) {
                return 0.0;
            }
            let total: f64 = (0..n).map(|i| indicators[(i, j)]).sum();
            let h: f64 = (0..n)
                .map(|i| indicators[(i, j)] / total)
                .filter(|p| *p > 0.0)
                .map(|p| p * libm::log(p))
                .sum();
            (1.0 + h / ln_n).max(0.0)
        })
        .collect();
    let sum: f64 = divergence.iter().sum();
    if !(sum > 0.0) {
        return Err(Error::Degenerate("entropy weights undefined: every indicator is constant".to_string()));
    }
    Ok(divergence.iter().map(|d| d / sum).collect())
}

/// Weighted composite `Σ_j w_j · flag_j`.
pub fn fa_score(flags: &InclusionFlags, weights: &[f64]) -> Result<f64> {
    if weights.len() != 4 {
        return Err(Error::DimensionMismatch {
            what: "FA score weight count",
            expected: 4,
            found: weights.len(),
        });
    }
    Ok(flags.as_array().iter().zip(weights).map(|(f, w)| f * w).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn participation_and_ratio() {
        assert_eq!(fmp_flag(0.0).unwrap(), 0);
        assert_eq!(fmp_flag(0.01).unwrap(), 1);
        assert!(fmp_flag(-1.0).is_err());
        assert_eq!(risky_ratio(0.0, 100.0).unwrap(), 0.0);
        assert_eq!(risky_ratio(25.0, 100.0).unwrap(), 0.25);
        assert!(risky_ratio(100.0, 0.0).is_err());
        assert!(risky_ratio(101.0, 100.0).is_err());
    }

    fn three_class_params() -> AssetClassParams {
        let classes = vec![
            RiskyClass {
                name: "bond".into(),
                expected_return: 0.04,
                sd: 0.03,
            },
            RiskyClass {
                name: "stock".into(),
                expected_return: 0.10,
                sd: 0.25,
            },
        ];
        let corr = Matrix::from_rows(&[[1.0, 0.1], [0.1, 1.0]]).unwrap();
        AssetClassParams::from_correlation(0.02, classes, &corr).unwrap()
    }

    #[test]
    fn sharpe_worked_example() {
        let p = three_class_params();
        let w = PortfolioWeights::new(0.5, vec![0.3, 0.2]).unwrap();
        // E(R_p) = 0.5·0.02 + 0.3·0.04 + 0.2·0.10 = 0.042
        let var = 0.09 * 0.0009 + 0.04 * 0.0625 + 2.0 * 0.3 * 0.2 * 0.1 * 0.03 * 0.25;
        let want = 0.022 / libm::sqrt(var);
        let got = sharpe_ratio(&w, &p).unwrap().unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn sharpe_degenerate_cases() {
        let p = three_class_params();
        let all_cash = PortfolioWeights::new(1.0, vec![0.0, 0.0]).unwrap();
        assert_eq!(sharpe_ratio(&all_cash, &p).unwrap(), None);

        let flat = AssetClassParams::from_correlation(
            0.03,
            vec![RiskyClass {
                name: "x".into(),
                expected_return: 0.03,
                sd: 0.2,
            }],
            &Matrix::identity(1),
        )
        .unwrap();
        let w = PortfolioWeights::new(0.0, vec![1.0]).unwrap();
        assert_eq!(sharpe_ratio(&w, &flat).unwrap(), Some(0.0));

        let wrong = PortfolioWeights::new(0.0, vec![1.0]).unwrap();
        assert!(matches!(sharpe_ratio(&wrong, &p), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn params_reject_non_psd_correlation() {
        let classes = vec![
            RiskyClass { name: "a".into(), expected_return: 0.0, sd: 0.1 },
            RiskyClass { name: "b".into(), expected_return: 0.0, sd: 0.1 },
            RiskyClass { name: "c".into(), expected_return: 0.0, sd: 0.1 },
        ];
        let corr = Matrix::from_rows(&[[1.0, 0.9, -0.9], [0.9, 1.0, 0.9], [-0.9, 0.9, 1.0]]).unwrap();
        assert!(AssetClassParams::from_correlation(0.0, classes, &corr).is_err());
    }

    #[test]
    fn weights_validation() {
        assert!(PortfolioWeights::new(0.5, vec![0.6]).is_err());
        assert!(PortfolioWeights::new(-0.1, vec![1.1]).is_err());
        let w = PortfolioWeights::from_amounts(50.0, &[30.0, 20.0]).unwrap();
        assert_eq!(w.risky(), &[0.3, 0.2]);
        assert_eq!(w.classes_held(), 3);
    }

    #[test]
    fn fa_index_values() {
        assert_eq!(fa_index(&InclusionFlags::new(0, 0, 0, 0).unwrap()), 0.0);
        assert_eq!(fa_index(&InclusionFlags::new(1, 1, 1, 1).unwrap()), 1.0);
        assert_eq!(fa_index(&InclusionFlags::new(1, 0, 1, 0).unwrap()), 0.5);
        assert!(InclusionFlags::new(2, 0, 0, 0).is_err());
    }

    #[test]
    fn entropy_weights_hand_example() {
        // Column A: p = (1,0,0,0) → e = 0, d = 1.
        // Column B: p = (½,½,0,0) → e = ln2/ln4 = ½, d = ½.
        let x = Matrix::from_rows(&[[1.0, 1.0], [0.0, 1.0], [0.0, 0.0], [0.0, 0.0]]).unwrap();
        let w = entropy_weights(&x).unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn entropy_weights_constant_columns() {
        let twin = Matrix::from_rows(&[[1.0, 1.0], [0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(entropy_weights(&twin).unwrap(), vec![0.5, 0.5]);
        let mixed = Matrix::from_rows(&[[2.0, 1.0], [2.0, 0.0], [2.0, 1.0]]).unwrap();
        assert_eq!(entropy_weights(&mixed).unwrap(), vec![0.0, 1.0]);
        let flat = Matrix::from_rows(&[[2.0, 0.0], [2.0, 0.0]]).unwrap();
        let err = entropy_weights(&flat).unwrap_err();
        assert!(err.to_string().contains("entropy weights undefined"));
    }

    #[test]
    fn fa_score_values() {
        let w = [0.4, 0.3, 0.2, 0.1];
        assert!((fa_score(&InclusionFlags::new(1, 1, 1, 1).unwrap(), &w).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(fa_score(&InclusionFlags::default(), &w).unwrap(), 0.0);
        assert_eq!(fa_score(&InclusionFlags::new(1, 0, 0, 0).unwrap(), &w).unwrap(), 0.4);
        assert!(fa_score(&InclusionFlags::default(), &[0.5, 0.5]).is_err());
    }
}
