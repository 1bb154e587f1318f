//! Cross-fitted double machine learning for the partially linear model
//! `Y = θ·D + g(X) + U`, `D = m(X) + V`, and its instrumental-variable variant.
//!
//! Nuisances `ℓ(X) = E[Y|X]`, `m(X) = E[D|X]` (and `r(X) = E[Z|X]`) are
//! predicted out-of-fold. With residuals `Ŵ = Y − ℓ̂`, `V̂ = D − m̂`,
//! `Ẑ = Z − r̂`, the orthogonal moment `Σ (Ŵ − θV̂)·Ẑ = 0` is solved once over
//! all folds (DML2 pooling); the partially linear case is `Ẑ = V̂`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::learners::{cross_fit, kfold, FoldPlan, LearnerSpec};
use crate::linalg::Matrix;
use crate::panel::{fields, PanelDataset};
use crate::rng::derive_seed;
use crate::stats;

/// Residualised-instrument first-stage F below which `weak_instrument` is set.
pub const WEAK_INSTRUMENT_F: f64 = 10.0;

/// Cross-fitting configuration shared by every DML entry point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DmlOptions {
    /// Learner for `E[Y|X]`.
    pub outcome_learner: LearnerSpec,
    /// Learner for `E[D|X]`.
    pub treatment_learner: LearnerSpec,
    /// Learner for `E[Z|X]` (IV only).
    pub instrument_learner: LearnerSpec,
    pub folds: usize,
    pub seed: u64,
    pub n_repeats: usize,
}

impl Default for DmlOptions {
    fn default() -> Self {
        DmlOptions {
            outcome_learner: LearnerSpec::default(),
            treatment_learner: LearnerSpec::default(),
            instrument_learner: LearnerSpec::default(),
            folds: 5,
            seed: 0,
            n_repeats: 1,
        }
    }
}

impl DmlOptions {
    /// Every nuisance uses `learner`.
    pub fn with_learner(learner: LearnerSpec) -> Self {
        DmlOptions {
            outcome_learner: learner.clone(),
            treatment_learner: learner.clone(),
            instrument_learner: learner,
            ..DmlOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(invalid("DML needs at least two folds"));
        }
        if self.n_repeats == 0 {
            return Err(invalid("n_repeats must be >= 1"));
        }
        self.outcome_learner.validate()?;
        self.treatment_learner.validate()?;
        self.instrument_learner.validate()
    }

    /// Fold plan used by repeat `r`.
    pub fn fold_plan(&self, n: usize, repeat: usize) -> Result<FoldPlan> {
        kfold(n, self.folds, derive_seed(self.seed, repeat as u64))
    }
}

/// Field names plus cross-fitting configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DmlSpec {
    pub outcome: String,
    pub treatment: String,
    pub controls: Vec<String>,
    pub instrument: Option<String>,
    pub options: DmlOptions,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DmlResult {
    pub theta: f64,
    pub se: f64,
    pub t_stat: f64,
    pub n_obs: usize,
    /// Per-fold solutions of the moment (first repeat), diagnostic only.
    pub fold_thetas: Vec<f64>,
    pub rmse_outcome: f64,
    pub rmse_treatment: f64,
    pub rmse_instrument: Option<f64>,
    /// First-stage F of `V̂` on `Ẑ` (IV only).
    pub instrument_f: Option<f64>,
    pub weak_instrument: bool,
    /// `θ̂` of every repeat when `n_repeats > 1`.
    pub repeat_thetas: Vec<f64>,
}

impl DmlResult {
    /// Normal-approximation confidence interval.
    pub fn confidence_interval(&self, z: f64) -> (f64, f64) {
        (self.theta - z * self.se, self.theta + z * self.se)
    }
}

/// Out-of-fold residuals of one cross-fitting pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Residuals {
    pub outcome: Vec<f64>,
    pub treatment: Vec<f64>,
    pub instrument: Option<Vec<f64>>,
}

fn residualize(learner: &LearnerSpec, x: &Matrix, target: &[f64], plan: &FoldPlan, repeat: usize) -> Result<Vec<f64>> {
    let fitted = cross_fit(&learner.reseeded(repeat as u64), x, target, plan)?;
    Ok(target.iter().zip(fitted).map(|(a, b)| a - b).collect())
}

/// Cross-fits every nuisance on `plan`.
pub fn cross_fit_residuals(
    y: &[f64],
    d: &[f64],
    z: Option<&[f64]>,
    x: &Matrix,
    options: &DmlOptions,
    plan: &FoldPlan,
    repeat: usize,
) -> Result<Residuals> {
    Ok(Residuals {
        outcome: residualize(&options.outcome_learner, x, y, plan, repeat)?,
        treatment: residualize(&options.treatment_learner, x, d, plan, repeat)?,
        instrument: match z {
            Some(z) => Some(residualize(&options.instrument_learner, x, z, plan, repeat)?),
            None => None,
        },
    })
}

/// Solution of the pooled orthogonal moment with its influence-function SE.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSolution {
    pub theta: f64,
    pub se: f64,
}

/// Solves `Σ (Ŵ − θV̂)·Ẑ = 0`; `se² = mean[(Ŵ − θV̂)²Ẑ²] / mean[ẐV̂]² / n`.
pub fn solve_orthogonal_moment(w: &[f64], v: &[f64], z: &[f64]) -> MomentSolution {
    let n = w.len() as f64;
    let zv: f64 = z.iter().zip(v).map(|(a, b)| a * b).sum();
    let zw: f64 = z.iter().zip(w).map(|(a, b)| a * b).sum();
    let theta = zw / zv;
    let meat: f64 = (0..w.len())
        .map(|i| {
            let u = w[i] - theta * v[i];
            u * u * z[i] * z[i]
        })
        .sum::<f64>()
        / n;
    let jac = zv / n;
    MomentSolution {
        theta,
        se: libm::sqrt(meat / (jac * jac) / n),
    }
}

fn fold_thetas(res_w: &[f64], res_v: &[f64], res_z: &[f64], plan: &FoldPlan) -> Vec<f64> {
    (0..plan.k())
        .map(|k| {
            let idx = plan.test_indices(k);
            let zw: f64 = idx.iter().map(|&i| res_z[i] * res_w[i]).sum();
            let zv: f64 = idx.iter().map(|&i| res_z[i] * res_v[i]).sum();
            zw / zv
        })
        .collect()
}

fn rmse(r: &[f64]) -> f64 {
    libm::sqrt(r.iter().map(|e| e * e).sum::<f64>() / r.len() as f64)
}

fn check_inputs(y: &[f64], d: &[f64], z: Option<&[f64]>, x: &Matrix) -> Result<()> {
    let n = x.nrows();
    for (what, len) in [("outcome length", y.len()), ("treatment length", d.len())]
        .into_iter()
        .chain(z.map(|z| ("instrument length", z.len())))
    {
        if len != n {
            return Err(Error::DimensionMismatch {
                what,
                expected: n,
                found: len,
            });
        }
    }
    let finite = |s: &[f64]| s.iter().all(|v| v.is_finite());
    if !finite(y) || !finite(d) || !z.is_none_or(finite) || !x.is_finite() {
        return Err(Error::NonFinite("DML inputs"));
    }
    Ok(())
}

fn centered_ss(xs: &[f64]) -> f64 {
    let m = stats::mean(xs);
    xs.iter().map(|v| (v - m) * (v - m)).sum()
}

/// One cross-fitting pass on a fixed fold plan.
pub fn dml_on_plan(
    y: &[f64],
    d: &[f64],
    z: Option<&[f64]>,
    x: &Matrix,
    options: &DmlOptions,
    plan: &FoldPlan,
    repeat: usize,
) -> Result<DmlResult> {
    check_inputs(y, d, z, x)?;
    let res = cross_fit_residuals(y, d, z, x, options, plan, repeat)?;
    let w = &res.outcome;
    let v = &res.treatment;
    let sv2: f64 = v.iter().map(|e| e * e).sum();
    let sd2 = centered_ss(d);
    if !(sd2 > 0.0) || sv2 <= 1e-12 * sd2 {
        return Err(Error::Degenerate("treatment fully explained by controls".to_string()));
    }
    let (zr, instrument_f, weak) = match &res.instrument {
        None => (v.as_slice(), None, false),
        Some(zh) => {
            let sz2: f64 = zh.iter().map(|e| e * e).sum();
            if !(sz2 > 1e-12 * centered_ss(z.unwrap())) {
                return Err(Error::Degenerate("instrument fully explained by controls".to_string()));
            }
            let szv: f64 = zh.iter().zip(v).map(|(a, b)| a * b).sum();
            let pi = szv / sz2;
            let e2: f64 = zh.iter().zip(v).map(|(a, b)| (b - pi * a) * (b - pi * a)).sum();
            let s2 = e2 / (zh.len() as f64 - 1.0);
            let f = if s2 > 0.0 { pi * pi * sz2 / s2 } else { f64::INFINITY };
            (zh.as_slice(), Some(f), !(f >= WEAK_INSTRUMENT_F))
        }
    };
    let sol = solve_orthogonal_moment(w, v, zr);
    Ok(DmlResult {
        theta: sol.theta,
        se: sol.se,
        t_stat: sol.theta / sol.se,
        n_obs: y.len(),
        fold_thetas: fold_thetas(w, v, zr, plan),
        rmse_outcome: rmse(w),
        rmse_treatment: rmse(v),
        rmse_instrument: res.instrument.as_deref().map(rmse),
        instrument_f,
        weak_instrument: weak,
        repeat_thetas: Vec::new(),
    })
}

/// Runs `n_repeats` cross-fitting passes and aggregates by the median:
/// `θ̂ = med θ_r`, `se = √med(se_r² + (θ_r − θ̂)²)`.
pub fn dml_arrays(y: &[f64], d: &[f64], z: Option<&[f64]>, x: &Matrix, options: &DmlOptions) -> Result<DmlResult> {
    options.validate()?;
    let n = x.nrows();
    let first = dml_on_plan(y, d, z, x, options, &options.fold_plan(n, 0)?, 0)?;
    if options.n_repeats == 1 {
        return Ok(first);
    }
    let mut runs = alloc::vec![first];
    for r in 1..options.n_repeats {
        runs.push(dml_on_plan(y, d, z, x, options, &options.fold_plan(n, r)?, r)?);
    }
    let thetas: Vec<f64> = runs.iter().map(|r| r.theta).collect();
    let theta = stats::median(&thetas);
    let spread: Vec<f64> = runs
        .iter()
        .map(|r| r.se * r.se + (r.theta - theta) * (r.theta - theta))
        .collect();
    let se = libm::sqrt(stats::median(&spread));
    let mut out = runs.swap_remove(0);
    out.theta = theta;
    out.se = se;
    out.t_stat = theta / se;
    out.repeat_thetas = thetas;
    Ok(out)
}

/// Outcome, treatment, optional instrument and control matrix over complete rows.
pub struct DmlArrays {
    pub y: Vec<f64>,
    pub d: Vec<f64>,
    pub z: Option<Vec<f64>>,
    pub x: Matrix,
    pub control_names: Vec<String>,
}

/// Extracts the arrays for `spec` from `ds`, dropping rows with a missing
/// value in any referenced field. Categorical controls become dummies.
pub fn extract(ds: &PanelDataset, spec: &DmlSpec) -> Result<DmlArrays> {
    let mut names: Vec<&str> = alloc::vec![spec.outcome.as_str(), spec.treatment.as_str()];
    names.extend(spec.controls.iter().map(String::as_str));
    if let Some(z) = &spec.instrument {
        names.push(z);
    }
    let rows = ds.complete_rows(&names)?;
    if rows.is_empty() {
        return Err(Error::Degenerate("no complete rows for DML".to_string()));
    }
    let pick = |name: &str| -> Result<Vec<f64>> {
        let c = ds.column(name)?;
        if c.is_categorical() {
            return Err(invalid(format!("`{name}` must be numeric")));
        }
        Ok(rows.iter().map(|&i| c.values[i]).collect())
    };
    let mut control_names = Vec::new();
    let mut cols = Vec::new();
    for c in &spec.controls {
        for (name, values) in ds.expand_column(c, &rows)? {
            control_names.push(name);
            cols.push(values);
        }
    }
    Ok(DmlArrays {
        y: pick(&spec.outcome)?,
        d: pick(&spec.treatment)?,
        z: spec.instrument.as_deref().map(pick).transpose()?,
        x: Matrix::from_columns(rows.len(), &cols)?,
        control_names,
    })
}

/// Partially linear DML of `spec.outcome` on `spec.treatment` given `spec.controls`.
pub fn dml_plm(ds: &PanelDataset, spec: &DmlSpec) -> Result<DmlResult> {
    let spec = DmlSpec {
        instrument: None,
        ..spec.clone()
    };
    let a = extract(ds, &spec)?;
    dml_arrays(&a.y, &a.d, None, &a.x, &spec.options)
}

/// Partially linear IV DML with `spec.instrument` as the excluded instrument.
pub fn dml_plm_iv(ds: &PanelDataset, spec: &DmlSpec) -> Result<DmlResult> {
    if spec.instrument.is_none() {
        return Err(invalid("dml_plm_iv needs an instrument"));
    }
    let a = extract(ds, spec)?;
    dml_arrays(&a.y, &a.d, a.z.as_deref(), &a.x, &spec.options)
}

/// DML on a single wave, with province dummies added to the controls when
/// the dataset has a province column.
pub fn per_year_dml(ds: &PanelDataset, spec: &DmlSpec, year: i64) -> Result<DmlResult> {
    let wave = ds.restrict_waves(&[year])?;
    let mut spec = spec.clone();
    if wave.has_column(fields::PROVINCE) && !spec.controls.iter().any(|c| c == fields::PROVINCE) {
        spec.controls.push(fields::PROVINCE.to_string());
    }
    match spec.instrument {
        Some(_) => dml_plm_iv(&wave, &spec),
        None => dml_plm(&wave, &spec),
    }
}
