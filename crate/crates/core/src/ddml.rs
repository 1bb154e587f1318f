//! Dynamic double machine learning.
//!
//! The data-generating system, per household and period `t = 1..m`:
//!
//! ```text
//! X_t = (A + C ⊙ X_{t−1})·D_{t−1} + B·X_{t−1} + ε_t      (X_1 ~ N(0, I))
//! D_t = α·D_{t−1} + (1 − α)·dᵀX_t + ζ_t                  (no lag term at t = 1)
//! Y_t = (σᵀX_t + 1)·e·D_t + fᵀX_t + η_t
//! ```
//!
//! The target is `ψ_t`, the effect of period-`t` treatment on the terminal
//! outcome `Y_m` with the later treatments `D_{t+1..m}` held at their
//! realised values, so that `Y_m = Σ_q ψ_q D_q + (terms in X_t and future
//! shocks)`. [`ddml_estimate`] recovers the `ψ_t` backwards: the last period
//! first, then each earlier period on the outcome with the already-estimated
//! later contributions removed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dml::{dml_arrays, DmlOptions};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, spectral_radius, Matrix};
use crate::panel::{fields, PanelDataset};
use crate::rng::derive_seed;

/// Column holding the simulated outcome.
pub const OUTCOME: &str = "y";
/// Column holding the simulated treatment.
pub const TREATMENT: &str = fields::FA_INDEX;

/// Name of state variable `j` (zero-based) in simulated panels: `x1`, `x2`, ….
pub fn state_name(j: usize) -> String {
    format!("x{}", j + 1)
}

/// Structural parameters of the dynamic system.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DynamicDgpParams {
    /// Treatment → state, length `p`.
    pub a: Vec<f64>,
    /// State transition, `p` rows of length `p`.
    pub b: Vec<Vec<f64>>,
    /// Treatment × state interaction, length `p` (elementwise).
    pub c: Vec<f64>,
    /// Treatment persistence in `[0, 1)`.
    pub alpha: f64,
    /// State → treatment, length `p`.
    pub d: Vec<f64>,
    /// Direct treatment effect on the outcome.
    pub e: f64,
    /// Effect heterogeneity loading, length `p`.
    pub sigma: Vec<f64>,
    /// State → outcome, length `p`.
    pub f: Vec<f64>,
    pub state_noise_sd: f64,
    pub treatment_noise_sd: f64,
    pub outcome_noise_sd: f64,
    /// Number of periods `m`.
    pub periods: usize,
}

impl DynamicDgpParams {
    pub fn state_dim(&self) -> usize {
        self.a.len()
    }

    pub fn transition(&self) -> Result<Matrix> {
        Matrix::from_rows(&self.b)
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.a.len();
        if p == 0 {
            return Err(invalid("state dimension must be >= 1"));
        }
        for (what, len) in [
            ("C length", self.c.len()),
            ("d length", self.d.len()),
            ("sigma length", self.sigma.len()),
            ("f length", self.f.len()),
            ("B rows", self.b.len()),
        ] {
            if len != p {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: p,
                    found: len,
                });
            }
        }
        let b = self.transition()?;
        if b.ncols() != p {
            return Err(Error::DimensionMismatch {
                what: "B columns",
                expected: p,
                found: b.ncols(),
            });
        }
        let scalars = [
            self.alpha,
            self.e,
            self.state_noise_sd,
            self.treatment_noise_sd,
            self.outcome_noise_sd,
        ];
        let vectors = self.a.iter().chain(&self.c).chain(&self.d).chain(&self.sigma).chain(&self.f);
        if !scalars.iter().chain(vectors).all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::NonFinite("dynamic DGP parameters"));
        }
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::OutOfRange {
                what: "alpha".to_string(),
                value: self.alpha,
                range: "[0, 1)".to_string(),
            });
        }
        if self.state_noise_sd < 0.0 || self.treatment_noise_sd < 0.0 || self.outcome_noise_sd < 0.0 {
            return Err(invalid("noise standard deviations must be >= 0"));
        }
        if self.periods < 2 {
            return Err(Error::OutOfRange {
                what: "periods".to_string(),
                value: self.periods as f64,
                range: ">= 2".to_string(),
            });
        }
        let rho = spectral_radius(&b);
        if !(rho < 1.0 - 1e-9) {
            return Err(Error::OutOfRange {
                what: "spectral radius of B".to_string(),
                value: rho,
                range: "< 1".to_string(),
            });
        }
        Ok(())
    }

    /// True when the interaction and heterogeneity terms vanish.
    pub fn is_linear_homogeneous(&self) -> bool {
        self.c.iter().all(|v| *v == 0.0) && self.sigma.iter().all(|v| *v == 0.0)
    }
}

/// Per-period effects on the terminal outcome.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DynamicEffects {
    /// Wave label of each period, ascending; the last is the terminal period.
    pub waves: Vec<i64>,
    pub psi: Vec<f64>,
    pub se: Vec<f64>,
    /// Household-wave observations used.
    pub n_obs: usize,
}

impl DynamicEffects {
    /// Row labels such as `15-19`, `17-19`, `19-19`.
    pub fn period_labels(&self) -> Vec<String> {
        let last = self.waves.last().copied().unwrap_or(0);
        self.waves
            .iter()
            .map(|w| format!("{:02}-{:02}", w.rem_euclid(100), last.rem_euclid(100)))
            .collect()
    }

    pub fn t_stats(&self) -> Vec<f64> {
        self.psi
            .iter()
            .zip(&self.se)
            .map(|(p, s)| if *s > 0.0 { p / s } else { f64::NAN })
            .collect()
    }
}

/// Draws `n` independent households over `params.periods` periods labelled `1..=m`.
///
/// Columns: `x1..xp` (state), `fa_index` (treatment), `y` (outcome of that period).
/// Household `i` uses its own random stream derived from `(seed, i)`.
pub fn simulate_dynamic_panel(params: &DynamicDgpParams, n: usize, seed: u64) -> Result<PanelDataset> {
    params.validate()?;
    let p = params.state_dim();
    let m = params.periods;
    let b = params.transition()?;
    let rows = n * m;
    let mut household = Vec::with_capacity(rows);
    let mut year = Vec::with_capacity(rows);
    let mut states: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); p];
    let mut treatment = Vec::with_capacity(rows);
    let mut outcome = Vec::with_capacity(rows);
    let width = n.max(1).to_string().len();

    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        let mut normal = || -> f64 { StandardNormal.sample(&mut rng) };
        let id = format!("h{:0width$}", i + 1);
        let mut x: Vec<f64> = (0..p).map(|_| normal()).collect();
        let mut d = (1.0 - params.alpha) * dot(&params.d, &x) + params.treatment_noise_sd * normal();
        for t in 1..=m {
            if t > 1 {
                let bx = b.matvec(&x)?;
                let next: Vec<f64> = (0..p)
                    .map(|j| (params.a[j] + params.c[j] * x[j]) * d + bx[j] + params.state_noise_sd * normal())
                    .collect();
                x = next;
                d = params.alpha * d + (1.0 - params.alpha) * dot(&params.d, &x) + params.treatment_noise_sd * normal();
            }
            let y = (dot(&params.sigma, &x) + 1.0) * params.e * d + dot(&params.f, &x) + params.outcome_noise_sd * normal();
            household.push(id.clone());
            year.push(t as i64);
            for j in 0..p {
                states[j].push(x[j]);
            }
            treatment.push(d);
            outcome.push(y);
        }
    }

    let mut ds = PanelDataset::new(household, year)?;
    for (j, col) in states.into_iter().enumerate() {
        ds = ds.with_column(&state_name(j), col)?;
    }
    ds.with_column(TREATMENT, treatment)?.with_column(OUTCOME, outcome)
}

/// Exact `ψ_t` for the linear homogeneous system (`C = 0`, `σ = 0`):
/// `ψ_m = e` and `ψ_t = fᵀ B^{m−1−t} A` for `t < m`.
pub fn true_effects(params: &DynamicDgpParams) -> Result<DynamicEffects> {
    params.validate()?;
    if !params.is_linear_homogeneous() {
        return Err(invalid("true effects are only defined for C = 0 and sigma = 0"));
    }
    let m = params.periods;
    let b = params.transition()?;
    let mut psi = vec![0.0; m];
    psi[m - 1] = params.e;
    // channel = B^{m−1−t} A, built from the period right before the terminal one backwards.
    let mut channel = params.a.clone();
    for t in (0..m - 1).rev() {
        psi[t] = dot(&params.f, &channel);
        channel = b.matvec(&channel)?;
    }
    Ok(DynamicEffects {
        waves: (1..=m as i64).collect(),
        psi,
        se: vec![0.0; m],
        n_obs: 0,
    })
}

/// Conditioning set for the period-`t` nuisances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "kebab-case"))]
pub enum InformationSet {
    /// Current controls and the previous treatment.
    #[default]
    Markov,
    /// All controls up to `t` and all treatments before `t`.
    FullHistory,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DdmlSpec {
    pub outcome: String,
    pub treatment: String,
    pub controls: Vec<String>,
    pub information_set: InformationSet,
    /// Restrict to these waves first (e.g. drop a middle wave); the earlier
    /// retained wave then supplies the lagged treatment.
    pub waves: Option<Vec<i64>>,
    pub options: DmlOptions,
}

/// Wide, household-major view of a balanced panel.
struct WidePanel {
    waves: Vec<i64>,
    terminal_outcome: Vec<f64>,
    /// `treatment[t][i]`
    treatment: Vec<Vec<f64>>,
    /// `controls[t]` is `n × k`.
    controls: Vec<Matrix>,
}

fn widen(ds: &PanelDataset, spec: &DdmlSpec) -> Result<WidePanel> {
    let waves = ds.waves();
    let m = waves.len();
    if m == 0 {
        return Err(invalid("dynamic DML needs at least one wave"));
    }
    if !ds.is_balanced() {
        return Err(Error::Unbalanced("every household must appear once in every wave".to_string()));
    }
    let groups = ds.rows_by_household();
    let n = groups.len();
    let years = ds.years();
    // per_wave[t][i] = row index of household i in wave t
    let mut per_wave = vec![vec![0usize; n]; m];
    for (i, (_, rows)) in groups.iter().enumerate() {
        for &r in rows {
            let t = waves.binary_search(&years[r]).unwrap();
            per_wave[t][i] = r;
        }
    }
    let numeric = |name: &str| -> Result<&[f64]> {
        let c = ds.column(name)?;
        if c.is_categorical() {
            return Err(invalid(format!("`{name}` must be numeric")));
        }
        Ok(&c.values)
    };
    let check = |name: &str, v: &[f64]| -> Result<()> {
        if v.iter().any(|x| !x.is_finite()) {
            return Err(invalid(format!("missing or non-finite value in `{name}`")));
        }
        Ok(())
    };
    let y_all = numeric(&spec.outcome)?;
    let d_all = numeric(&spec.treatment)?;
    let terminal_outcome: Vec<f64> = per_wave[m - 1].iter().map(|&r| y_all[r]).collect();
    check(&spec.outcome, &terminal_outcome)?;
    let mut treatment = Vec::with_capacity(m);
    let mut controls = Vec::with_capacity(m);
    for rows in &per_wave {
        let d: Vec<f64> = rows.iter().map(|&r| d_all[r]).collect();
        check(&spec.treatment, &d)?;
        treatment.push(d);
        let mut cols = Vec::new();
        for c in &spec.controls {
            for (name, values) in ds.expand_column(c, rows)? {
                check(&name, &values)?;
                cols.push(values);
            }
        }
        controls.push(Matrix::from_columns(n, &cols)?);
    }
    Ok(WidePanel {
        waves,
        terminal_outcome,
        treatment,
        controls,
    })
}

/// `Y − Σ_{q > t} ψ_q·D_q`, with `treatments[q]` the period-`q` treatment column.
pub fn adjusted_outcome(y: &[f64], treatments: &[Vec<f64>], psi: &[f64], t: usize) -> Vec<f64> {
    let mut out = y.to_vec();
    for q in (t + 1)..treatments.len() {
        for (o, d) in out.iter_mut().zip(&treatments[q]) {
            *o -= psi[q] * d;
        }
    }
    out
}

fn stage_features(wide: &WidePanel, t: usize, info: InformationSet) -> Result<Matrix> {
    let n = wide.terminal_outcome.len();
    let lag = |q: usize| Matrix::from_columns(n, &[&wide.treatment[q]]);
    match info {
        InformationSet::Markov => {
            if t == 0 {
                Ok(wide.controls[0].clone())
            } else {
                wide.controls[t].hstack(&lag(t - 1)?)
            }
        }
        InformationSet::FullHistory => {
            let mut x = wide.controls[0].clone();
            for q in 1..=t {
                x = x.hstack(&wide.controls[q])?;
            }
            for q in 0..t {
                x = x.hstack(&lag(q)?)?;
            }
            Ok(x)
        }
    }
}

/// Per-period effects of the treatment on the terminal-wave outcome.
///
/// Stage `m` runs DML of `Y_m` on `D_m`; stage `t < m` runs DML of
/// `Y_m − Σ_{q>t} ψ̂_q D_q` on `D_t`. Each stage conditions on the chosen
/// [`InformationSet`] and reports its own influence-function SE with the
/// later `ψ̂_q` treated as known. All stages share one fold plan.
pub fn ddml_estimate(ds: &PanelDataset, spec: &DdmlSpec) -> Result<DynamicEffects> {
    let restricted;
    let ds = match &spec.waves {
        Some(w) => {
            restricted = ds.restrict_waves(w)?;
            &restricted
        }
        None => ds,
    };
    let wide = widen(ds, spec)?;
    let m = wide.waves.len();
    let n = wide.terminal_outcome.len();
    let mut psi = vec![0.0; m];
    let mut se = vec![0.0; m];
    for t in (0..m).rev() {
        let y_adj = adjusted_outcome(&wide.terminal_outcome, &wide.treatment, &psi, t);
        let x = stage_features(&wide, t, spec.information_set)?;
        let r = dml_arrays(&y_adj, &wide.treatment[t], None, &x, &spec.options)?;
        psi[t] = r.theta;
        se[t] = r.se;
    }
    Ok(DynamicEffects {
        waves: wide.waves,
        psi,
        se,
        n_obs: n * m,
    })
}
