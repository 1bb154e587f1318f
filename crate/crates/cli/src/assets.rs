//! Asset-class return/risk assumptions, per survey wave.
//!
//! ```toml
//! [default]
//! risk_free_rate = 0.015
//! classes = [
//!     { name = "bond", expected_return = 0.04, sd = 0.03 },
//!     { name = "stock", expected_return = 0.10, sd = 0.25 },
//! ]
//! correlation = [[1.0, 0.1], [0.1, 1.0]]
//!
//! [waves.2019]
//! risk_free_rate = 0.015
//! classes = [ ... ]
//! covariance = [[0.0009, 0.00075], [0.00075, 0.0625]]
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use panel_dml_core::indices::{AssetClassParams, RiskyClass};
use panel_dml_core::Matrix;
use serde::Deserialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetSpec {
    risk_free_rate: f64,
    classes: Vec<RiskyClass>,
    correlation: Option<Vec<Vec<f64>>>,
    covariance: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AssetFile {
    default: Option<AssetSpec>,
    #[serde(default)]
    waves: BTreeMap<String, AssetSpec>,
}

impl AssetSpec {
    fn build(self, at: &str) -> Result<AssetClassParams> {
        let matrix = |rows: &[Vec<f64>]| Matrix::from_rows(rows).map_err(|e| CliError::config(format!("{at}: {e}")));
        let params = match (self.correlation, self.covariance) {
            (Some(c), None) => AssetClassParams::from_correlation(self.risk_free_rate, self.classes, &matrix(&c)?),
            (None, Some(c)) => AssetClassParams::from_covariance(self.risk_free_rate, self.classes, matrix(&c)?),
            _ => return Err(CliError::config(format!("{at}: give exactly one of `correlation` or `covariance`"))),
        };
        params.map_err(|e| CliError::config(format!("{at}: {e}")))
    }
}

/// Asset-class parameters keyed by wave, with an optional fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetTable {
    default: Option<AssetClassParams>,
    waves: BTreeMap<i64, AssetClassParams>,
}

impl AssetTable {
    pub fn uniform(params: AssetClassParams) -> Self {
        AssetTable {
            default: Some(params),
            waves: BTreeMap::new(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let file: AssetFile = toml::from_str(text).map_err(|e| CliError::config(format!("asset parameters: {e}")))?;
        let default = file.default.map(|s| s.build("[default]")).transpose()?;
        let mut waves = BTreeMap::new();
        for (key, spec) in file.waves {
            let wave: i64 = key
                .parse()
                .map_err(|_| CliError::config(format!("asset parameters: wave key `{key}` is not an integer")))?;
            waves.insert(wave, spec.build(&format!("[waves.{key}]"))?);
        }
        if default.is_none() && waves.is_empty() {
            return Err(CliError::config("asset parameters: no [default] or [waves.*] table"));
        }
        Ok(AssetTable { default, waves })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::unreadable_config(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn for_wave(&self, wave: i64) -> Option<&AssetClassParams> {
        self.waves.get(&wave).or(self.default.as_ref())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TEXT: &str = r#"
[default]
risk_free_rate = 0.02
classes = [
    { name = "bond", expected_return = 0.04, sd = 0.03 },
    { name = "stock", expected_return = 0.10, sd = 0.25 },
]
correlation = [[1.0, 0.1], [0.1, 1.0]]

[waves.2019]
risk_free_rate = 0.01
classes = [{ name = "bond", expected_return = 0.03, sd = 0.02 }]
covariance = [[0.0004]]
"#;

    #[test]
    fn per_wave_lookup_falls_back_to_default() {
        let t = AssetTable::parse(TEXT).unwrap();
        assert_eq!(t.for_wave(2019).unwrap().risk_free_rate(), 0.01);
        assert_eq!(t.for_wave(2015).unwrap().risk_free_rate(), 0.02);
        assert_eq!(t.for_wave(2015).unwrap().classes().len(), 2);
    }

    #[test]
    fn rejects_ambiguous_or_invalid_matrices() {
        let both = TEXT.replace("correlation = [[1.0, 0.1], [0.1, 1.0]]", "correlation = [[1.0]]\ncovariance = [[1.0]]");
        assert!(matches!(AssetTable::parse(&both), Err(CliError::Config(_))));
        let bad = TEXT.replace("[[1.0, 0.1], [0.1, 1.0]]", "[[1.0, 2.0], [2.0, 1.0]]");
        assert!(AssetTable::parse(&bad).is_err());
    }
}
