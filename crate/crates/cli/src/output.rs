//! Coefficient tables written by `estimate`.
//!
//! CSV: `# key: value` provenance and diagnostic lines, then
//! `term,estimate,std_error,t_stat,n_obs`. JSON: one object with
//! `provenance`, `diagnostics` and `rows`; non-finite numbers become `null`.

use std::path::Path;

use serde::Serialize;

use crate::canonical::Provenance;
use crate::config::Format;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableRow {
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_stat: f64,
    pub n_obs: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<TableRow>,
    pub diagnostics: Vec<(String, String)>,
}

impl ResultTable {
    pub fn diagnostic(&mut self, key: &str, value: impl ToString) {
        self.diagnostics.push((key.to_string(), value.to_string()));
    }

    pub fn to_csv(&self, provenance: &Provenance) -> String {
        let mut out = String::new();
        for (k, v) in provenance.iter().chain(&self.diagnostics) {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str("term,estimate,std_error,t_stat,n_obs\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.term,
                number(r.estimate),
                number(r.std_error),
                number(r.t_stat),
                r.n_obs
            ));
        }
        out
    }

    pub fn to_json(&self, provenance: &Provenance) -> String {
        #[derive(Serialize)]
        struct Doc<'a> {
            provenance: serde_json::Map<String, serde_json::Value>,
            diagnostics: serde_json::Map<String, serde_json::Value>,
            rows: &'a [TableRow],
        }
        let doc = Doc {
            provenance: object(provenance),
            diagnostics: object(&self.diagnostics),
            rows: &self.rows,
        };
        let mut s = serde_json::to_string_pretty(&doc).expect("table serialises");
        s.push('\n');
        s
    }

    pub fn render(&self, provenance: &Provenance, format: Format) -> String {
        match format {
            Format::Csv => self.to_csv(provenance),
            Format::Json => self.to_json(provenance),
        }
    }
}

fn number(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

fn object(pairs: &[(String, String)]) -> serde_json::Map<String, serde_json::Value> {
    pairs
        .iter()
        .map(|(k, v)| (k.clone(), serde_json::Value::String(v.clone())))
        .collect()
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}
