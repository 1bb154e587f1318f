//! Run configuration.
//!
//! ```toml
//! seed = 42
//!
//! [ingest]
//! input = "survey.csv"
//! schema = "schema.toml"
//! assets = "assets.toml"
//! trim = { fraction = 0.01, variables = ["sharpe"] }
//! output = "panel.csv"
//!
//! [estimate]
//! input = "panel.csv"
//! estimator = "ddml"
//! outcome = "risky_ratio"
//! treatments = ["fa_index"]
//! controls = ["age", "male", "edu"]
//! subset = "rural=1@2019"
//! output = "effects.csv"
//! dml = { folds = 5, learner = { kind = "forest", n_trees = 200 } }
//!
//! [simulate]
//! households = 5000
//! output = "sim.csv"
//! params = { a = [0.5], b = [[0.5]], c = [0.0], alpha = 0.3, d = [0.4], e = 1.0, sigma = [0.0], f = [0.6],
//!            state_noise_sd = 1.0, treatment_noise_sd = 1.0, outcome_noise_sd = 1.0, periods = 3 }
//! ```
//!
//! Relative paths are resolved against the directory of the config file.

use std::path::{Path, PathBuf};

use panel_dml_core::ddml::{DynamicDgpParams, InformationSet};
use panel_dml_core::learners::LearnerSpec;
use panel_dml_core::linear::SeType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};
use crate::schema::SharpePolicy;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Fe,
    Lpm,
    Tsls,
    Dml,
    DmlIv,
    Ddml,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Fe => "fe",
            EstimatorKind::Lpm => "lpm",
            EstimatorKind::Tsls => "tsls",
            EstimatorKind::Dml => "dml",
            EstimatorKind::DmlIv => "dml-iv",
            EstimatorKind::Ddml => "ddml",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, EstimatorKind::Dml | EstimatorKind::DmlIv | EstimatorKind::Ddml)
    }

    fn needs_instrument(self) -> bool {
        matches!(self, EstimatorKind::Tsls | EstimatorKind::DmlIv)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrimConfig {
    pub fraction: f64,
    pub variables: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestConfig {
    pub input: PathBuf,
    pub schema: PathBuf,
    pub assets: Option<PathBuf>,
    pub trim: Option<TrimConfig>,
    #[serde(default = "yes")]
    pub adult_filter: bool,
    #[serde(default)]
    pub undefined_sharpe: SharpePolicy,
    /// Add the entropy-weighted `fa_score` when all four service flags are present.
    #[serde(default = "yes")]
    pub entropy_score: bool,
    pub output: Option<PathBuf>,
}

fn yes() -> bool {
    true
}

fn default_folds() -> usize {
    5
}

fn default_repeats() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmlConfig {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_repeats")]
    pub n_repeats: usize,
    /// Learner for every nuisance unless overridden below.
    #[serde(default)]
    pub learner: LearnerSpec,
    pub outcome_learner: Option<LearnerSpec>,
    pub treatment_learner: Option<LearnerSpec>,
    pub instrument_learner: Option<LearnerSpec>,
}

impl Default for DmlConfig {
    fn default() -> Self {
        DmlConfig {
            folds: default_folds(),
            n_repeats: default_repeats(),
            learner: LearnerSpec::default(),
            outcome_learner: None,
            treatment_learner: None,
            instrument_learner: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DdmlConfig {
    #[serde(default)]
    pub information_set: InformationSet,
    /// Restrict to these waves (e.g. `[2015, 2019]`).
    pub waves: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub input: PathBuf,
    pub estimator: EstimatorKind,
    pub outcome: String,
    pub treatments: Vec<String>,
    #[serde(default)]
    pub controls: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    pub instrument: Option<String>,
    /// Build a leave-one-out group-average instrument of the treatment over this field.
    pub group_instrument: Option<String>,
    #[serde(default)]
    pub se_type: SeType,
    /// `EXPR` or `EXPR@WAVE`; the reference wave defaults to the last wave.
    pub subset: Option<String>,
    /// Single-wave DML on this wave.
    pub year: Option<i64>,
    #[serde(default)]
    pub dml: DmlConfig,
    #[serde(default)]
    pub ddml: DdmlConfig,
    pub output: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub households: usize,
    pub params: DynamicDgpParams,
    pub output: Option<PathBuf>,
    /// Defaults to `<output stem>.true_effects.<ext>`.
    pub true_effects_output: Option<PathBuf>,
    pub format: Option<Format>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub ingest: Option<IngestConfig>,
    pub estimate: Option<EstimateConfig>,
    pub simulate: Option<SimulateConfig>,
    /// Directory that relative paths are resolved against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::unreadable_config(path, e))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// SHA-256 of the effective configuration (after command-line overrides).
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serialises");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn ingest(&self) -> Result<&IngestConfig> {
        self.ingest.as_ref().ok_or_else(|| CliError::config("config has no [ingest] section"))
    }

    pub fn estimate(&self) -> Result<&EstimateConfig> {
        let e = self
            .estimate
            .as_ref()
            .ok_or_else(|| CliError::config("config has no [estimate] section"))?;
        e.validate()?;
        if e.estimator.is_stochastic() && self.seed.is_none() {
            return Err(CliError::config(format!(
                "estimator `{}` is stochastic: set `seed` or pass --seed",
                e.estimator.name()
            )));
        }
        Ok(e)
    }

    pub fn simulate(&self) -> Result<&SimulateConfig> {
        let s = self
            .simulate
            .as_ref()
            .ok_or_else(|| CliError::config("config has no [simulate] section"))?;
        if self.seed.is_none() {
            return Err(CliError::config("simulate is stochastic: set `seed` or pass --seed"));
        }
        if s.households == 0 {
            return Err(CliError::config("simulate.households must be >= 1"));
        }
        s.params.validate().map_err(|e| CliError::config(format!("simulate.params: {e}")))?;
        Ok(s)
    }
}

impl EstimateConfig {
    fn validate(&self) -> Result<()> {
        let k = self.estimator;
        if self.treatments.is_empty() {
            return Err(CliError::config("estimate.treatments is empty"));
        }
        if !matches!(k, EstimatorKind::Fe | EstimatorKind::Lpm) && self.treatments.len() != 1 {
            return Err(CliError::config(format!("estimator `{}` takes exactly one treatment", k.name())));
        }
        let has_iv = self.instrument.is_some() || self.group_instrument.is_some();
        if k.needs_instrument() && !has_iv {
            return Err(CliError::config(format!(
                "estimator `{}` needs `instrument` or `group_instrument`",
                k.name()
            )));
        }
        if self.instrument.is_some() && self.group_instrument.is_some() {
            return Err(CliError::config("give only one of `instrument` and `group_instrument`"));
        }
        if !k.needs_instrument() && has_iv {
            return Err(CliError::config(format!("estimator `{}` does not take an instrument", k.name())));
        }
        if self.year.is_some() && !matches!(k, EstimatorKind::Dml | EstimatorKind::DmlIv) {
            return Err(CliError::config("`year` applies to dml and dml-iv only"));
        }
        if matches!(k, EstimatorKind::Dml | EstimatorKind::DmlIv | EstimatorKind::Ddml) && !self.fixed_effects.is_empty() {
            return Err(CliError::config("DML estimators take categorical fields as `controls`, not `fixed_effects`"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
seed = 7
[estimate]
input = "panel.csv"
estimator = "dml"
outcome = "y"
treatments = ["d"]
controls = ["x"]
dml = { folds = 3, learner = { kind = "forest", n_trees = 20 } }
"#;

    #[test]
    fn parses_learner_and_defaults() {
        let c = RunConfig::parse(TEXT).unwrap();
        let e = c.estimate().unwrap();
        assert_eq!(e.dml.folds, 3);
        match &e.dml.learner {
            LearnerSpec::Forest(p) => {
                assert_eq!(p.n_trees, 20);
                assert_eq!(p.max_depth, 8);
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(e.se_type, SeType::Robust);
    }

    #[test]
    fn stochastic_estimators_need_a_seed() {
        let c = RunConfig::parse(&TEXT.replace("seed = 7", "")).unwrap();
        assert!(matches!(c.estimate(), Err(CliError::Config(_))));
    }

    #[test]
    fn digest_tracks_overrides() {
        let a = RunConfig::parse(TEXT).unwrap();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.seed = Some(8);
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
    }
}
