//! The `ingest`, `estimate` and `simulate` subcommands.

use std::path::{Path, PathBuf};

use panel_dml_core::ddml::{self, DdmlSpec};
use panel_dml_core::dml::{self, DmlOptions, DmlResult, DmlSpec};
use panel_dml_core::indices::{entropy_weights, fa_score, InclusionFlags};
use panel_dml_core::learners::LearnerSpec;
use panel_dml_core::linear::{self, EstimateResult, RegressionSpec};
use panel_dml_core::panel::{self, fields, Predicate};
use panel_dml_core::rng::derive_seed;
use panel_dml_core::{Error, Matrix, PanelDataset};

use crate::assets::AssetTable;
use crate::canonical::{self, Provenance};
use crate::config::{DmlConfig, EstimateConfig, EstimatorKind, Format, RunConfig};
use crate::error::{CliError, Result};
use crate::output::{write_text, ResultTable, TableRow};
use crate::schema::{load_panel, IndexInputs, VariableSchema};

/// Command-line values that replace their config-file counterparts.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub subset: Option<String>,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Ingest,
    Estimate,
    Simulate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Ingest => "ingest",
            Command::Estimate => "estimate",
            Command::Simulate => "simulate",
        }
    }
}

/// Text for the terminal: the summary on stdout, notices on stderr.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub stdout: String,
    pub notices: Vec<String>,
}

/// Folds command-line overrides into the config; the digest is taken afterwards.
pub fn apply_overrides(cfg: &mut RunConfig, command: Command, o: &Overrides) -> Result<()> {
    if let Some(seed) = o.seed {
        cfg.seed = Some(seed);
    }
    // Command-line paths are relative to the working directory, not the config file.
    let cwd_path = |p: &PathBuf| -> Result<PathBuf> {
        if p.is_absolute() {
            return Ok(p.clone());
        }
        std::env::current_dir()
            .map(|d| d.join(p))
            .map_err(|e| CliError::config(format!("cannot resolve {}: {e}", p.display())))
    };
    match command {
        Command::Ingest => {
            if o.subset.is_some() || o.format.is_some() {
                return Err(CliError::config("ingest takes neither --subset nor --format"));
            }
            if let Some(p) = &o.output {
                let path = cwd_path(p)?;
                cfg.ingest.as_mut().ok_or_else(|| CliError::config("config has no [ingest] section"))?.output = Some(path);
            }
        }
        Command::Estimate => {
            let e = cfg
                .estimate
                .as_mut()
                .ok_or_else(|| CliError::config("config has no [estimate] section"))?;
            if let Some(s) = &o.subset {
                e.subset = Some(s.clone());
            }
            if let Some(p) = &o.output {
                e.output = Some(cwd_path(p)?);
            }
            if let Some(f) = o.format {
                e.format = Some(f);
            }
        }
        Command::Simulate => {
            if o.subset.is_some() {
                return Err(CliError::config("simulate does not take --subset"));
            }
            let s = cfg
                .simulate
                .as_mut()
                .ok_or_else(|| CliError::config("config has no [simulate] section"))?;
            if let Some(p) = &o.output {
                s.output = Some(cwd_path(p)?);
            }
            if let Some(f) = o.format {
                s.format = Some(f);
            }
        }
    }
    Ok(())
}

fn provenance(cfg: &RunConfig, command: Command) -> Provenance {
    vec![
        ("tool".into(), format!("panel-dml {}", env!("CARGO_PKG_VERSION"))),
        ("command".into(), command.name().into()),
        ("config_sha256".into(), cfg.digest()),
        ("seed".into(), cfg.seed.map_or_else(|| "none".to_string(), |s| s.to_string())),
    ]
}

fn csv_number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

pub fn run(cfg: &RunConfig, command: Command) -> Result<Report> {
    match command {
        Command::Ingest => ingest(cfg),
        Command::Estimate => estimate(cfg),
        Command::Simulate => simulate(cfg),
    }
}

/// load → filter_adults → trim → enforce_balance → entropy score.
pub fn ingest(cfg: &RunConfig) -> Result<Report> {
    let ic = cfg.ingest()?;
    let schema = VariableSchema::load(&cfg.resolve(&ic.schema))?;
    let assets = ic.assets.as_ref().map(|p| AssetTable::load(&cfg.resolve(p))).transpose()?;
    if let Some(t) = &ic.trim {
        if t.variables.is_empty() {
            return Err(CliError::config("ingest.trim.variables is empty"));
        }
    }
    let inputs = IndexInputs {
        assets: assets.as_ref(),
        undefined_sharpe: ic.undefined_sharpe,
    };
    let mut report = Report::default();
    let loaded = load_panel(&cfg.resolve(&ic.input), &schema, &inputs).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("load: {m}")),
        other => other,
    })?;
    for issue in &loaded.dropped {
        report
            .notices
            .push(format!("row {} dropped: column `{}`: {}", issue.row, issue.column, issue.reason));
    }
    let mut ds = loaded.dataset;
    let mut prov = provenance(cfg, Command::Ingest);
    prov.push(("dropped_rows".into(), loaded.dropped.len().to_string()));

    if ic.adult_filter {
        if ds.has_column(fields::AGE) {
            ds = panel::filter_adults(&ds).map_err(|e| CliError::stage("filter_adults", e))?;
        } else {
            report.notices.push("adult filter skipped: no `age` field".into());
        }
    }
    if let Some(t) = &ic.trim {
        for v in &t.variables {
            ds = panel::trim_tails(&ds, v, t.fraction).map_err(|e| CliError::stage("trim", e))?;
        }
    }
    ds = panel::enforce_balance(&ds);
    if ds.is_empty() {
        return Err(CliError::stage("enforce_balance", "no household is observed in every wave"));
    }
    if ic.entropy_score && fields::INCLUSION_FLAGS.iter().all(|f| ds.has_column(f)) {
        let weights = add_fa_score(&mut ds).map_err(|e| CliError::stage("fa_score", e))?;
        let w: Vec<String> = weights.iter().map(|w| format!("{w}")).collect();
        prov.push(("fa_score_weights".into(), w.join(" ")));
    }

    let waves = ds.waves();
    prov.push(("households".into(), ds.households().len().to_string()));
    prov.push((
        "waves".into(),
        waves.iter().map(i64::to_string).collect::<Vec<_>>().join(" "),
    ));
    prov.push(("rows".into(), ds.len().to_string()));

    let summary = panel::summary_stats(&ds).map_err(|e| CliError::stage("summary", e))?;
    let mut out = String::new();
    for (k, v) in &prov[4..] {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    out.push_str("variable,n,median,mean,sd,min,max\n");
    for r in &summary {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.variable,
            r.n,
            csv_number(r.median),
            csv_number(r.mean),
            csv_number(r.sd),
            csv_number(r.min),
            csv_number(r.max)
        ));
    }
    report.stdout = out;
    match &ic.output {
        Some(p) => canonical::write(&cfg.resolve(p), &ds, &prov)?,
        None => report.notices.push("no ingest.output set: canonical dataset not written".into()),
    }
    Ok(report)
}

/// Entropy weights over the rows with all four flags, then `fa_score` per row.
fn add_fa_score(ds: &mut PanelDataset) -> std::result::Result<Vec<f64>, Error> {
    let cols: Vec<&[f64]> = fields::INCLUSION_FLAGS
        .iter()
        .map(|f| ds.values(f))
        .collect::<std::result::Result<_, _>>()?;
    let complete: Vec<usize> = (0..ds.len()).filter(|&i| cols.iter().all(|c| !c[i].is_nan())).collect();
    let data: Vec<f64> = complete.iter().flat_map(|&i| cols.iter().map(move |c| c[i])).collect();
    let weights = entropy_weights(&Matrix::from_vec(complete.len(), 4, data)?)?;
    let mut score = vec![f64::NAN; ds.len()];
    for &i in &complete {
        let flags = InclusionFlags::new(cols[0][i] as u8, cols[1][i] as u8, cols[2][i] as u8, cols[3][i] as u8)?;
        score[i] = fa_score(&flags, &weights)?;
    }
    ds.set_column(panel::Column {
        name: fields::FA_SCORE.to_string(),
        values: score,
        levels: None,
    })?;
    Ok(weights)
}

/// Splits `EXPR@WAVE`.
fn parse_subset(text: &str) -> Result<(Predicate, Option<i64>)> {
    let (expr, wave) = match text.rsplit_once('@') {
        Some((e, w)) => {
            let w = w
                .trim()
                .parse::<i64>()
                .map_err(|_| CliError::config(format!("subset `{text}`: `{w}` is not a wave")))?;
            (e, Some(w))
        }
        None => (text, None),
    };
    let p = Predicate::parse(expr).map_err(|e| CliError::config(format!("subset `{text}`: {e}")))?;
    Ok((p, wave))
}

fn apply_subset(ds: &PanelDataset, text: &str) -> Result<PanelDataset> {
    let (predicate, wave) = parse_subset(text)?;
    let reference = match wave {
        Some(w) => w,
        None => *ds.waves().last().ok_or_else(|| CliError::data("dataset has no rows"))?,
    };
    let out = panel::subset(ds, &predicate, reference).map_err(|e| CliError::stage("subset", e))?;
    if out.is_empty() {
        return Err(CliError::data(format!(
            "subset: empty subset: no household satisfies `{text}` in wave {reference}"
        )));
    }
    Ok(out)
}

fn estimation_error(stage: &str, e: Error) -> CliError {
    match e {
        Error::UnknownField(_) | Error::UnknownWave(_) | Error::Unbalanced(_) => CliError::stage(stage, e),
        other => CliError::estimation(stage, other),
    }
}

/// Forest nuisances get independent streams derived from the run seed.
fn seeded(spec: &LearnerSpec, seed: u64, stream: u64) -> LearnerSpec {
    match spec {
        LearnerSpec::Forest(p) => LearnerSpec::Forest(panel_dml_core::learners::ForestParams {
            seed: derive_seed(seed, stream),
            ..p.clone()
        }),
        other => other.clone(),
    }
}

fn dml_options(c: &DmlConfig, seed: u64) -> DmlOptions {
    let pick = |o: &Option<LearnerSpec>| o.clone().unwrap_or_else(|| c.learner.clone());
    DmlOptions {
        outcome_learner: seeded(&pick(&c.outcome_learner), seed, 1),
        treatment_learner: seeded(&pick(&c.treatment_learner), seed, 2),
        instrument_learner: seeded(&pick(&c.instrument_learner), seed, 3),
        folds: c.folds,
        seed,
        n_repeats: c.n_repeats,
    }
}

fn linear_table(r: &EstimateResult) -> ResultTable {
    let mut t = ResultTable {
        rows: r
            .coefficients
            .iter()
            .map(|c| TableRow {
                term: c.name.clone(),
                estimate: c.estimate,
                std_error: c.std_error,
                t_stat: c.t_stat,
                n_obs: r.n_obs,
            })
            .collect(),
        diagnostics: Vec::new(),
    };
    t.diagnostic("r_squared", r.r_squared);
    if let Some(f) = r.first_stage_f {
        t.diagnostic("first_stage_f", f);
        t.diagnostic("weak_instrument", r.weak_instrument);
    }
    t
}

fn dml_table(term: &str, r: &DmlResult) -> ResultTable {
    let mut t = ResultTable {
        rows: vec![TableRow {
            term: term.to_string(),
            estimate: r.theta,
            std_error: r.se,
            t_stat: r.t_stat,
            n_obs: r.n_obs,
        }],
        diagnostics: Vec::new(),
    };
    t.diagnostic("rmse_outcome", r.rmse_outcome);
    t.diagnostic("rmse_treatment", r.rmse_treatment);
    if let Some(v) = r.rmse_instrument {
        t.diagnostic("rmse_instrument", v);
    }
    if let Some(f) = r.instrument_f {
        t.diagnostic("instrument_f", f);
        t.diagnostic("weak_instrument", r.weak_instrument);
    }
    if !r.repeat_thetas.is_empty() {
        let v: Vec<String> = r.repeat_thetas.iter().map(|x| format!("{x}")).collect();
        t.diagnostic("repeat_thetas", v.join(" "));
    }
    t
}

fn estimate_table(ds: &PanelDataset, e: &EstimateConfig, seed: Option<u64>) -> Result<ResultTable> {
    let kind = e.estimator;
    let stage = kind.name();
    let mut ds = ds.clone();
    let instrument = match (&e.instrument, &e.group_instrument) {
        (Some(z), _) => Some(z.clone()),
        (None, Some(group)) => {
            let name = format!("loo_{}_{}", group, e.treatments[0]);
            ds = linear::city_average_instrument(&ds, group, &e.treatments[0], &name)
                .map_err(|err| CliError::stage("group_instrument", err))?;
            Some(name)
        }
        (None, None) => None,
    };
    let mut table = match kind {
        EstimatorKind::Fe | EstimatorKind::Lpm | EstimatorKind::Tsls => {
            let spec = RegressionSpec {
                outcome: e.outcome.clone(),
                treatments: e.treatments.clone(),
                controls: e.controls.clone(),
                fixed_effects: e.fixed_effects.clone(),
                instruments: instrument.into_iter().collect(),
                se_type: e.se_type,
            };
            let r = match kind {
                EstimatorKind::Fe => linear::fe_ols(&ds, &spec),
                EstimatorKind::Lpm => linear::lpm(&ds, &spec),
                _ => linear::tsls(&ds, &spec),
            }
            .map_err(|err| estimation_error(stage, err))?;
            linear_table(&r)
        }
        EstimatorKind::Dml | EstimatorKind::DmlIv => {
            let seed = seed.ok_or_else(|| CliError::config("seed required"))?;
            let spec = DmlSpec {
                outcome: e.outcome.clone(),
                treatment: e.treatments[0].clone(),
                controls: e.controls.clone(),
                instrument,
                options: dml_options(&e.dml, seed),
            };
            let r = match (e.year, kind) {
                (Some(y), _) => dml::per_year_dml(&ds, &spec, y),
                (None, EstimatorKind::Dml) => dml::dml_plm(&ds, &spec),
                (None, _) => dml::dml_plm_iv(&ds, &spec),
            }
            .map_err(|err| estimation_error(stage, err))?;
            let mut t = dml_table(&spec.treatment, &r);
            t.diagnostic("learner", spec.options.outcome_learner.name());
            t.diagnostic("folds", spec.options.folds);
            t.diagnostic("n_repeats", spec.options.n_repeats);
            if let Some(y) = e.year {
                t.diagnostic("year", y);
            }
            t
        }
        EstimatorKind::Ddml => {
            let seed = seed.ok_or_else(|| CliError::config("seed required"))?;
            let spec = DdmlSpec {
                outcome: e.outcome.clone(),
                treatment: e.treatments[0].clone(),
                controls: e.controls.clone(),
                information_set: e.ddml.information_set,
                waves: e.ddml.waves.clone(),
                options: dml_options(&e.dml, seed),
            };
            let r = ddml::ddml_estimate(&ds, &spec).map_err(|err| estimation_error(stage, err))?;
            let mut t = ResultTable::default();
            for ((label, (psi, se)), ts) in r.period_labels().into_iter().zip(r.psi.iter().zip(&r.se)).zip(r.t_stats()) {
                t.rows.push(TableRow {
                    term: label,
                    estimate: *psi,
                    std_error: *se,
                    t_stat: ts,
                    n_obs: r.n_obs,
                });
            }
            t.diagnostic("learner", spec.options.outcome_learner.name());
            t.diagnostic("folds", spec.options.folds);
            t.diagnostic(
                "information_set",
                match spec.information_set {
                    ddml::InformationSet::Markov => "markov",
                    ddml::InformationSet::FullHistory => "full-history",
                },
            );
            t
        }
    };
    table.diagnostics.insert(0, ("estimator".into(), stage.into()));
    Ok(table)
}

pub fn estimate(cfg: &RunConfig) -> Result<Report> {
    let e = cfg.estimate()?;
    let (mut ds, _) = canonical::read(&cfg.resolve(&e.input))?;
    if let Some(s) = &e.subset {
        ds = apply_subset(&ds, s)?;
    }
    let table = estimate_table(&ds, e, cfg.seed)?;
    let mut prov = provenance(cfg, Command::Estimate);
    if let Some(s) = &e.subset {
        prov.push(("subset".into(), s.clone()));
    }
    let text = table.render(&prov, e.format.unwrap_or_default());
    let mut report = Report::default();
    match &e.output {
        Some(p) => write_text(&cfg.resolve(p), &text)?,
        None => report.stdout = text,
    }
    Ok(report)
}

fn default_true_effects_path(output: &Path, format: Format) -> PathBuf {
    let stem = output.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = match format {
        Format::Csv => "csv",
        Format::Json => "json",
    };
    output.with_file_name(format!("{stem}.true_effects.{ext}"))
}

pub fn simulate(cfg: &RunConfig) -> Result<Report> {
    let s = cfg.simulate()?;
    let seed = cfg.seed.ok_or_else(|| CliError::config("seed required"))?;
    let output = s
        .output
        .as_ref()
        .map(|p| cfg.resolve(p))
        .ok_or_else(|| CliError::config("simulate needs `output` or --output"))?;
    let ds = ddml::simulate_dynamic_panel(&s.params, s.households, seed)
        .map_err(|e| CliError::estimation("simulate", e))?;
    let prov = provenance(cfg, Command::Simulate);
    canonical::write(&output, &ds, &prov)?;
    let mut report = Report {
        stdout: format!(
            "simulated {} households x {} periods -> {}\n",
            s.households,
            s.params.periods,
            output.display()
        ),
        notices: Vec::new(),
    };
    if s.params.is_linear_homogeneous() {
        let format = s.format.unwrap_or_default();
        let path = s
            .true_effects_output
            .as_ref()
            .map(|p| cfg.resolve(p))
            .unwrap_or_else(|| default_true_effects_path(&output, format));
        let eff = ddml::true_effects(&s.params).map_err(|e| CliError::estimation("true_effects", e))?;
        let mut t = ResultTable::default();
        for (label, psi) in eff.period_labels().into_iter().zip(&eff.psi) {
            t.rows.push(TableRow {
                term: label,
                estimate: *psi,
                std_error: 0.0,
                t_stat: f64::NAN,
                n_obs: 0,
            });
        }
        t.diagnostic("estimator", "true_effects");
        write_text(&path, &t.render(&prov, format))?;
        report.stdout.push_str(&format!("true effects -> {}\n", path.display()));
    } else {
        report
            .notices
            .push("true effects omitted: they are defined only when c = 0 and sigma = 0".into());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subset_wave_suffix() {
        let (_, w) = parse_subset("rural=1@2019").unwrap();
        assert_eq!(w, Some(2019));
        assert_eq!(parse_subset("rural=1").unwrap().1, None);
        assert!(matches!(parse_subset("rural=1@x"), Err(CliError::Config(_))));
    }

    #[test]
    fn true_effects_path_sits_beside_output() {
        assert_eq!(
            default_true_effects_path(Path::new("out/sim.csv"), Format::Json),
            PathBuf::from("out/sim.true_effects.json")
        );
    }

    #[test]
    fn nuisances_get_distinct_forest_seeds() {
        let o = dml_options(&DmlConfig::default(), 9);
        assert_ne!(o.outcome_learner, o.treatment_learner);
        assert_eq!(o.seed, 9);
    }
}
