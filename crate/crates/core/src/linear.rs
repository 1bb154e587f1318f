//! Baseline least-squares estimators on a [`PanelDataset`]: pooled OLS with
//! fixed-effect dummies (LSDV), the linear probability model, two-stage least
//! squares, and the leave-one-out group-mean instrument.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, Collinearity, Matrix, QrFactor};
use crate::panel::{fields, Column, PanelDataset};

/// First-stage F below which an instrument is flagged as weak.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum SeType {
    Classical,
    /// HC1 heteroskedasticity-robust sandwich.
    #[default]
    Robust,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionSpec {
    pub outcome: String,
    pub treatments: Vec<String>,
    pub controls: Vec<String>,
    /// Categorical (or `year`) fields expanded into dummies, first level omitted.
    pub fixed_effects: Vec<String>,
    pub instruments: Vec<String>,
    pub se_type: SeType,
}

impl RegressionSpec {
    fn validate(&self) -> Result<()> {
        let mut seen: Vec<&str> = vec![self.outcome.as_str()];
        let roles = self
            .treatments
            .iter()
            .chain(&self.controls)
            .chain(&self.fixed_effects)
            .chain(&self.instruments);
        for f in roles {
            if seen.contains(&f.as_str()) {
                return Err(invalid(format!("field `{f}` appears in more than one role")));
            }
            seen.push(f);
        }
        if self.treatments.is_empty() {
            return Err(invalid("regression needs at least one treatment"));
        }
        if !self.instruments.is_empty() && self.treatments.len() != 1 {
            return Err(invalid("instrumental variables need exactly one endogenous treatment"));
        }
        Ok(())
    }

    fn referenced(&self) -> Vec<&str> {
        core::iter::once(&self.outcome)
            .chain(&self.treatments)
            .chain(&self.controls)
            .chain(self.fixed_effects.iter().filter(|f| *f != fields::YEAR))
            .chain(&self.instruments)
            .map(String::as_str)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    /// `estimate / std_error`, `NaN` when the standard error is zero.
    pub t_stat: f64,
}

impl Coefficient {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: f64) -> Self {
        Coefficient {
            name: name.into(),
            estimate,
            std_error,
            t_stat: if std_error > 0.0 { estimate / std_error } else { f64::NAN },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct EstimateResult {
    pub estimator: String,
    pub coefficients: Vec<Coefficient>,
    pub n_obs: usize,
    pub r_squared: f64,
    pub first_stage_f: Option<f64>,
    pub weak_instrument: bool,
}

impl EstimateResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Named regressor columns over a fixed row set.
struct Design {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Design {
    fn new(n: usize) -> Self {
        Design {
            names: vec!["intercept".to_string()],
            columns: vec![vec![1.0; n]],
        }
    }

    fn extend(&mut self, cols: Vec<(String, Vec<f64>)>) {
        for (name, values) in cols {
            self.names.push(name);
            self.columns.push(values);
        }
    }

    fn matrix(&self, n: usize) -> Matrix {
        Matrix::from_columns(n, &self.columns).expect("columns share the row count")
    }
}

fn rank_error(names: &[String], c: Collinearity) -> Error {
    let mut columns: Vec<String> = c.partners.iter().map(|&j| names[j].clone()).collect();
    columns.push(names[c.column].clone());
    Error::RankDeficient { columns }
}

struct LsFit {
    beta: Vec<f64>,
    xtx_inv: Matrix,
}

fn fit_ls(x: &Matrix, names: &[String], y: &[f64]) -> Result<LsFit> {
    let qr = QrFactor::new(x).map_err(|c| rank_error(names, c))?;
    Ok(LsFit {
        beta: qr.solve(y)?,
        xtx_inv: qr.xtx_inverse(),
    })
}

/// Covariance of the coefficients given the "bread" design `x` and residuals.
fn covariance(x: &Matrix, xtx_inv: &Matrix, resid: &[f64], se: SeType) -> Matrix {
    let n = x.nrows();
    let k = x.ncols();
    let dof = n.saturating_sub(k) as f64;
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    match se {
        SeType::Classical => {
            let s2 = if dof > 0.0 { rss / dof } else { f64::NAN };
            let mut c = xtx_inv.clone();
            for i in 0..k {
                for j in 0..k {
                    c[(i, j)] *= s2;
                }
            }
            c
        }
        SeType::Robust => {
            let mut meat = Matrix::zeros(k, k);
            for i in 0..n {
                let row = x.row(i);
                let e2 = resid[i] * resid[i];
                for a in 0..k {
                    let ra = row[a] * e2;
                    for b in 0..k {
                        meat[(a, b)] += ra * row[b];
                    }
                }
            }
            let scale = if dof > 0.0 { n as f64 / dof } else { f64::NAN };
            let mut c = xtx_inv.matmul(&meat).unwrap().matmul(xtx_inv).unwrap();
            for i in 0..k {
                for j in 0..k {
                    c[(i, j)] *= scale;
                }
            }
            c
        }
    }
}

fn r_squared(y: &[f64], resid: &[f64]) -> f64 {
    let m = y.iter().sum::<f64>() / y.len() as f64;
    let tss: f64 = y.iter().map(|v| (v - m) * (v - m)).sum();
    let rss: f64 = resid.iter().map(|e| e * e).sum();
    if tss > 0.0 {
        1.0 - rss / tss
    } else if rss <= 1e-24 * (1.0 + m * m) * y.len() as f64 {
        1.0
    } else {
        0.0
    }
}

fn coefficient_table(names: &[String], beta: &[f64], cov: &Matrix) -> Vec<Coefficient> {
    names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient::new(name.clone(), beta[j], libm::sqrt(cov[(j, j)].max(0.0))))
        .collect()
}

fn outcome_values(ds: &PanelDataset, name: &str, rows: &[usize]) -> Result<Vec<f64>> {
    let col = ds.column(name)?;
    if col.is_categorical() {
        return Err(invalid(format!("outcome `{name}` is categorical")));
    }
    Ok(rows.iter().map(|&i| col.values[i]).collect())
}

/// Rows with complete data and the exogenous block `[intercept, controls, FE dummies]`.
fn exogenous_block(ds: &PanelDataset, spec: &RegressionSpec, rows: &[usize]) -> Result<Design> {
    let mut d = Design::new(rows.len());
    for c in &spec.controls {
        d.extend(ds.expand_column(c, rows)?);
    }
    for fe in &spec.fixed_effects {
        d.extend(ds.dummies(fe, rows)?);
    }
    Ok(d)
}

/// Least squares of the outcome on treatments, controls and fixed-effect
/// dummies, with an intercept and one omitted level per fixed effect.
pub fn fe_ols(ds: &PanelDataset, spec: &RegressionSpec) -> Result<EstimateResult> {
    spec.validate()?;
    if !spec.instruments.is_empty() {
        return Err(invalid("fe_ols does not take instruments; use tsls"));
    }
    let rows = ds.complete_rows(&spec.referenced())?;
    if rows.is_empty() {
        return Err(Error::Degenerate("no complete rows for regression".to_string()));
    }
    let n = rows.len();
    let y = outcome_values(ds, &spec.outcome, &rows)?;
    let mut design = Design::new(n);
    for t in &spec.treatments {
        design.extend(ds.expand_column(t, &rows)?);
    }
    let exo = exogenous_block(ds, spec, &rows)?;
    design.names.extend(exo.names.into_iter().skip(1));
    design.columns.extend(exo.columns.into_iter().skip(1));

    let x = design.matrix(n);
    let fit = fit_ls(&x, &design.names, &y)?;
    let fitted = x.matvec(&fit.beta)?;
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let cov = covariance(&x, &fit.xtx_inv, &resid, spec.se_type);
    Ok(EstimateResult {
        estimator: "fe".to_string(),
        coefficients: coefficient_table(&design.names, &fit.beta, &cov),
        n_obs: n,
        r_squared: r_squared(&y, &resid),
        first_stage_f: None,
        weak_instrument: false,
    })
}

/// Linear probability model: [`fe_ols`] on a 0/1 outcome; fitted values are not clipped.
pub fn lpm(ds: &PanelDataset, spec: &RegressionSpec) -> Result<EstimateResult> {
    let y = ds.values(&spec.outcome)?;
    if let Some(v) = y.iter().find(|v| !v.is_nan() && **v != 0.0 && **v != 1.0) {
        return Err(Error::OutOfRange {
            what: format!("LPM outcome `{}`", spec.outcome),
            value: *v,
            range: "{0,1}".to_string(),
        });
    }
    let mut r = fe_ols(ds, spec)?;
    r.estimator = "lpm".to_string();
    Ok(r)
}

/// Two-stage least squares with one endogenous treatment.
///
/// The first stage regresses the treatment on instruments plus the
/// exogenous block; the second stage replaces the treatment by its fitted
/// value. Residuals for the standard errors use the original treatment.
pub fn tsls(ds: &PanelDataset, spec: &RegressionSpec) -> Result<EstimateResult> {
    spec.validate()?;
    if spec.instruments.is_empty() {
        return Err(invalid("tsls needs at least one instrument"));
    }
    let rows = ds.complete_rows(&spec.referenced())?;
    if rows.is_empty() {
        return Err(Error::Degenerate("no complete rows for regression".to_string()));
    }
    let n = rows.len();
    let y = outcome_values(ds, &spec.outcome, &rows)?;
    let treatment = &spec.treatments[0];
    let tcol = ds.column(treatment)?;
    if tcol.is_categorical() {
        return Err(invalid(format!("endogenous treatment `{treatment}` must be numeric")));
    }
    let d: Vec<f64> = rows.iter().map(|&i| tcol.values[i]).collect();
    let exo = exogenous_block(ds, spec, &rows)?;

    // First stage: d on [exogenous, instruments].
    let mut first = Design {
        names: exo.names.clone(),
        columns: exo.columns.clone(),
    };
    let mut q = 0;
    for z in &spec.instruments {
        let cols = ds.expand_column(z, &rows)?;
        q += cols.len();
        first.extend(cols);
    }
    let xf = first.matrix(n);
    let fs = fit_ls(&xf, &first.names, &d)?;
    let d_hat = xf.matvec(&fs.beta)?;
    let rss_u: f64 = d.iter().zip(&d_hat).map(|(a, b)| (a - b) * (a - b)).sum();
    let xr = exo.matrix(n);
    let rs = fit_ls(&xr, &exo.names, &d)?;
    let rss_r: f64 = d
        .iter()
        .zip(xr.matvec(&rs.beta)?)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let dof_u = n.saturating_sub(xf.ncols()) as f64;
    let first_stage_f = if rss_u <= 1e-28 * rss_r.max(1e-300) {
        f64::INFINITY
    } else {
        ((rss_r - rss_u) / q as f64) / (rss_u / dof_u)
    };

    // Second stage: intercept, fitted treatment, then the rest of the exogenous block.
    let mut names = vec!["intercept".to_string(), treatment.clone()];
    names.extend(exo.names.iter().skip(1).cloned());
    let mut hat_cols = vec![vec![1.0; n], d_hat];
    hat_cols.extend(exo.columns.iter().skip(1).cloned());
    let x_hat = Matrix::from_columns(n, &hat_cols)?;
    let fit = fit_ls(&x_hat, &names, &y)?;
    let resid: Vec<f64> = (0..n)
        .map(|i| {
            let fitted = fit.beta[0] + fit.beta[1] * d[i] + dot(&fit.beta[2..], &x_hat.row(i)[2..]);
            y[i] - fitted
        })
        .collect();
    let cov = covariance(&x_hat, &fit.xtx_inv, &resid, spec.se_type);
    Ok(EstimateResult {
        estimator: "tsls".to_string(),
        coefficients: coefficient_table(&names, &fit.beta, &cov),
        n_obs: n,
        r_squared: r_squared(&y, &resid),
        first_stage_f: Some(first_stage_f),
        weak_instrument: !(first_stage_f >= WEAK_INSTRUMENT_F),
    })
}

/// Adds column `name` holding, per row, the mean of `target` over the other
/// rows in the same group and wave. Rows alone in their cell get `NaN`.
pub fn city_average_instrument(ds: &PanelDataset, group: &str, target: &str, name: &str) -> Result<PanelDataset> {
    let g = ds.column(group)?;
    let t = ds.values(target)?;
    let years = ds.years();
    let mut cells: BTreeMap<(u64, i64), (f64, usize)> = BTreeMap::new();
    for i in 0..ds.len() {
        if g.values[i].is_nan() || t[i].is_nan() {
            continue;
        }
        let e = cells.entry((g.values[i].to_bits(), years[i])).or_insert((0.0, 0));
        e.0 += t[i];
        e.1 += 1;
    }
    let values = (0..ds.len())
        .map(|i| {
            if g.values[i].is_nan() || t[i].is_nan() {
                return f64::NAN;
            }
            let (sum, count) = cells[&(g.values[i].to_bits(), years[i])];
            if count < 2 {
                f64::NAN
            } else {
                (sum - t[i]) / (count - 1) as f64
            }
        })
        .collect();
    let mut out = ds.clone();
    out.set_column(Column {
        name: name.to_string(),
        values,
        levels: None,
    })?;
    Ok(out)
}
