//! Mapping from a survey export's columns to the panel's semantic fields, and
//! the validating loader built on it.
//!
//! ```toml
//! delimiter = ","
//! missing = ["", "NA", "."]
//!
//! [fields]
//! household_id = "hhid"
//! year = "wave"
//! edu = "education"
//! asset_group = { column = "asset_level", coding = { "1" = "low", "2" = "middle", "3" = "high" } }
//! city = { column = "city_code", kind = "categorical" }
//!
//! [amounts]          # optional: derive fmp, risky_ratio and sharpe from holdings
//! risk_free = "deposits"
//! risky = { bond = "bond_amount", stock = "stock_amount" }
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::Read;
use std::path::Path;

use panel_dml_core::indices::{self, fmp_flag, sharpe_ratio, InclusionFlags, PortfolioWeights};
use panel_dml_core::panel::{fields, AssetGroup, Column, Region};
use panel_dml_core::PanelDataset;
use serde::{Deserialize, Serialize};

use crate::assets::AssetTable;
use crate::error::{CliError, Result};

/// Value domain of a field.
#[derive(Debug, Clone, PartialEq)]
pub enum FieldKind {
    Id,
    Year,
    Binary,
    /// Closed interval; infinite bounds are open-ended.
    Real { min: f64, max: f64 },
    Integer { min: i64, max: i64 },
    /// Fixed level set, or levels taken from the data when `None`.
    Categorical { levels: Option<Vec<String>> },
}

impl FieldKind {
    fn real(min: f64, max: f64) -> Self {
        FieldKind::Real { min, max }
    }

    fn describe(&self) -> String {
        match self {
            FieldKind::Id => "a non-empty identifier".to_string(),
            FieldKind::Year => "an integer wave label".to_string(),
            FieldKind::Binary => "{0,1}".to_string(),
            FieldKind::Real { min, max } => match (min.is_finite(), max.is_finite()) {
                (true, true) => format!("[{min}, {max}]"),
                (true, false) => format!(">= {min}"),
                (false, true) => format!("<= {max}"),
                (false, false) => "a finite number".to_string(),
            },
            FieldKind::Integer { min, max } => format!("{min}..{max}"),
            FieldKind::Categorical { levels: Some(l) } => format!("one of {}", l.join(", ")),
            FieldKind::Categorical { levels: None } => "a category label".to_string(),
        }
    }
}

/// Built-in domain of a semantic field, `None` for user-defined fields.
pub fn builtin_kind(field: &str) -> Option<FieldKind> {
    use fields::*;
    let levels = |ls: &[&str]| Some(ls.iter().map(|s| s.to_string()).collect());
    Some(match field {
        HOUSEHOLD_ID => FieldKind::Id,
        YEAR => FieldKind::Year,
        PROVINCE => FieldKind::Categorical { levels: None },
        FMP | CREDIT_CARD | DIGITAL_PAYMENT | BANK_ACCOUNT | INSURANCE | MALE | MARRIAGE | IND_COMMER | RURAL
        | RISK_PREFER | FINA_KNOW => FieldKind::Binary,
        RISKY_RATIO | FA_INDEX => FieldKind::real(0.0, 1.0),
        SHARPE => FieldKind::real(f64::NEG_INFINITY, f64::INFINITY),
        AGE => FieldKind::real(0.0, 150.0),
        EDU => FieldKind::Integer { min: 1, max: 9 },
        HEALTH => FieldKind::Integer { min: 1, max: 5 },
        OLDSUM | YOUNGSUM => FieldKind::real(0.0, f64::INFINITY),
        FAMILY_SIZE => FieldKind::real(1.0, f64::INFINITY),
        ASSET_GROUP => FieldKind::Categorical {
            levels: levels(&AssetGroup::LEVELS),
        },
        REGION => FieldKind::Categorical {
            levels: levels(&Region::LEVELS),
        },
        _ => return None,
    })
}

/// Output order of built-in fields.
const BUILTIN_ORDER: [&str; 23] = [
    fields::PROVINCE,
    fields::FMP,
    fields::RISKY_RATIO,
    fields::SHARPE,
    fields::FA_INDEX,
    fields::CREDIT_CARD,
    fields::DIGITAL_PAYMENT,
    fields::BANK_ACCOUNT,
    fields::INSURANCE,
    fields::AGE,
    fields::MALE,
    fields::MARRIAGE,
    fields::IND_COMMER,
    fields::EDU,
    fields::HEALTH,
    fields::OLDSUM,
    fields::YOUNGSUM,
    fields::FAMILY_SIZE,
    fields::ASSET_GROUP,
    fields::RURAL,
    fields::REGION,
    fields::RISK_PREFER,
    fields::FINA_KNOW,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
enum CustomKind {
    Numeric,
    Integer,
    Binary,
    Categorical,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum FieldEntry {
    Column(String),
    Detailed(FieldDetail),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FieldDetail {
    column: String,
    required: Option<bool>,
    kind: Option<CustomKind>,
    #[serde(default)]
    coding: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmountsFile {
    risk_free: String,
    risky: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SchemaFile {
    delimiter: Option<char>,
    missing: Option<Vec<String>>,
    fields: BTreeMap<String, FieldEntry>,
    amounts: Option<AmountsFile>,
}

/// One semantic field and where it comes from.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSpec {
    pub field: String,
    pub column: String,
    pub kind: FieldKind,
    /// Rows with this field missing are dropped.
    pub required: bool,
    /// Raw cell value → level label, for categorical fields.
    pub coding: BTreeMap<String, String>,
}

/// Holdings columns from which the portfolio measures are derived.
#[derive(Debug, Clone, PartialEq)]
pub struct AmountColumns {
    pub risk_free: String,
    /// Risky class name → column.
    pub risky: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VariableSchema {
    pub delimiter: u8,
    pub missing: Vec<String>,
    pub fields: Vec<FieldSpec>,
    pub amounts: Option<AmountColumns>,
}

impl VariableSchema {
    pub fn parse(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text).map_err(|e| CliError::config(format!("schema: {e}")))?;
        let delimiter = file.delimiter.unwrap_or(',');
        if !delimiter.is_ascii() {
            return Err(CliError::config("schema: delimiter must be a single ASCII character"));
        }
        let mut specs = Vec::new();
        for (field, entry) in file.fields {
            let (column, required, kind, coding) = match entry {
                FieldEntry::Column(c) => (c, None, None, BTreeMap::new()),
                FieldEntry::Detailed(d) => (d.column, d.required, d.kind, d.coding),
            };
            let kind = match (builtin_kind(&field), kind) {
                (Some(_), Some(_)) => {
                    return Err(CliError::config(format!("schema: `{field}` is a built-in field; drop its `kind`")))
                }
                (Some(k), None) => k,
                (None, k) => match k.unwrap_or(CustomKind::Numeric) {
                    CustomKind::Numeric => FieldKind::real(f64::NEG_INFINITY, f64::INFINITY),
                    CustomKind::Integer => FieldKind::Integer {
                        min: i64::MIN,
                        max: i64::MAX,
                    },
                    CustomKind::Binary => FieldKind::Binary,
                    CustomKind::Categorical => FieldKind::Categorical { levels: None },
                },
            };
            if !coding.is_empty() && !matches!(kind, FieldKind::Categorical { .. }) {
                return Err(CliError::config(format!("schema: `{field}` is not categorical but has a coding table")));
            }
            let is_key = matches!(kind, FieldKind::Id | FieldKind::Year);
            let required = required.unwrap_or(field != fields::SHARPE);
            if is_key && !required {
                return Err(CliError::config(format!("schema: `{field}` cannot be optional")));
            }
            specs.push(FieldSpec {
                field,
                column,
                kind,
                required,
                coding,
            });
        }
        for key in [fields::HOUSEHOLD_ID, fields::YEAR] {
            if !specs.iter().any(|s| s.field == key) {
                return Err(CliError::config(format!("schema: required field `{key}` is not mapped")));
            }
        }
        let amounts = file.amounts.map(|a| AmountColumns {
            risk_free: a.risk_free,
            risky: a.risky,
        });
        if amounts.is_some() {
            for derived in [fields::FMP, fields::RISKY_RATIO, fields::SHARPE] {
                if specs.iter().any(|s| s.field == derived) {
                    return Err(CliError::config(format!(
                        "schema: `{derived}` is derived from [amounts] and cannot also be mapped"
                    )));
                }
            }
        }
        Ok(VariableSchema {
            delimiter: delimiter as u8,
            missing: file
                .missing
                .unwrap_or_else(|| ["", "NA", "NaN", "."].map(String::from).to_vec()),
            fields: specs,
            amounts,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::unreadable_config(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn field(&self, name: &str) -> Option<&FieldSpec> {
        self.fields.iter().find(|f| f.field == name)
    }
}

/// What to record as the Sharpe ratio of a zero-variance (all risk-free) portfolio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SharpePolicy {
    /// Leave it missing; estimators on `sharpe` then skip the row.
    #[default]
    Missing,
    Zero,
}

/// A row skipped because a required value was missing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowIssue {
    /// 1-based data row (the header is row 0).
    pub row: usize,
    pub column: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadedPanel {
    pub dataset: PanelDataset,
    pub dropped: Vec<RowIssue>,
}

fn bad_value(row: usize, column: &str, value: &str, kind: &FieldKind) -> CliError {
    CliError::data(format!(
        "row {row}, column `{column}`: value `{value}` is invalid; legal range {}",
        kind.describe()
    ))
}

enum Cell {
    Missing,
    Number(f64),
    Text(String),
}

fn parse_cell(raw: &str, spec: &FieldSpec, row: usize, missing: &[String]) -> Result<Cell> {
    let raw = raw.trim();
    if missing.iter().any(|m| m == raw) {
        return Ok(Cell::Missing);
    }
    let err = || bad_value(row, &spec.column, raw, &spec.kind);
    let number = || raw.parse::<f64>().ok().filter(|v| v.is_finite());
    Ok(match &spec.kind {
        FieldKind::Id => Cell::Text(raw.to_string()),
        FieldKind::Year => Cell::Number(raw.parse::<i64>().map_err(|_| err())? as f64),
        FieldKind::Binary => match number() {
            Some(v) if v == 0.0 || v == 1.0 => Cell::Number(v),
            _ => return Err(err()),
        },
        FieldKind::Real { min, max } => match number() {
            Some(v) if v >= *min && v <= *max => Cell::Number(v),
            _ => return Err(err()),
        },
        FieldKind::Integer { min, max } => match number() {
            Some(v) if v.fract() == 0.0 && v >= *min as f64 && v <= *max as f64 => Cell::Number(v),
            _ => return Err(err()),
        },
        FieldKind::Categorical { levels } => {
            let label = spec.coding.get(raw).map(String::as_str).unwrap_or(raw);
            match levels {
                Some(ls) => match ls.iter().find(|l| l.eq_ignore_ascii_case(label)) {
                    Some(l) => Cell::Text(l.clone()),
                    None => return Err(err()),
                },
                None => Cell::Text(label.to_string()),
            }
        }
    })
}

/// Inputs for the portfolio measures derived at load time.
#[derive(Debug, Clone, Default)]
pub struct IndexInputs<'a> {
    pub assets: Option<&'a AssetTable>,
    pub undefined_sharpe: SharpePolicy,
}

enum Values {
    Numeric(Vec<f64>),
    Labels(Vec<String>),
}

/// Reads delimiter-separated text with a header row.
pub fn read_panel<R: Read>(reader: R, schema: &VariableSchema, inputs: &IndexInputs) -> Result<LoadedPanel> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::data(format!("header: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let locate = |column: &str, field: &str| -> Result<usize> {
        let hits: Vec<usize> = (0..header.len()).filter(|&i| header[i] == column).collect();
        match hits.as_slice() {
            [i] => Ok(*i),
            [] => Err(CliError::data(format!("missing required column `{column}` (field `{field}`)"))),
            _ => Err(CliError::data(format!("column `{column}` (field `{field}`) appears more than once"))),
        }
    };
    let positions: Vec<usize> = schema
        .fields
        .iter()
        .map(|s| locate(&s.column, &s.field))
        .collect::<Result<_>>()?;
    let amount_spec = FieldSpec {
        field: "amount".to_string(),
        column: String::new(),
        kind: FieldKind::real(0.0, f64::INFINITY),
        required: true,
        coding: BTreeMap::new(),
    };
    let amount_cols: Option<(usize, Vec<(String, usize)>)> = match &schema.amounts {
        None => None,
        Some(a) => Some((
            locate(&a.risk_free, "risk_free")?,
            a.risky
                .iter()
                .map(|(class, col)| Ok((class.clone(), locate(col, class)?)))
                .collect::<Result<_>>()?,
        )),
    };

    let mut values: Vec<Values> = schema
        .fields
        .iter()
        .map(|s| match s.kind {
            FieldKind::Id | FieldKind::Categorical { .. } => Values::Labels(Vec::new()),
            _ => Values::Numeric(Vec::new()),
        })
        .collect();
    let mut derived: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    let mut dropped = Vec::new();
    let mut seen_rows = 0;

    'rows: for (k, record) in rdr.records().enumerate() {
        let row = k + 1;
        seen_rows += 1;
        let record = record.map_err(|e| CliError::data(format!("row {row}: {e}")))?;
        let mut cells = Vec::with_capacity(schema.fields.len());
        for (spec, &pos) in schema.fields.iter().zip(&positions) {
            let cell = parse_cell(record.get(pos).unwrap_or(""), spec, row, &schema.missing)?;
            if matches!(cell, Cell::Missing) && spec.required {
                dropped.push(RowIssue {
                    row,
                    column: spec.column.clone(),
                    reason: "missing required value".to_string(),
                });
                continue 'rows;
            }
            cells.push(cell);
        }
        let year_idx = schema.fields.iter().position(|s| s.field == fields::YEAR).unwrap();
        let year = match cells[year_idx] {
            Cell::Number(v) => v as i64,
            _ => unreachable!("year is required"),
        };

        let mut row_derived: Vec<(&str, f64)> = Vec::new();
        if let (Some((rf_pos, risky)), Some(a)) = (&amount_cols, &schema.amounts) {
            let amount = |pos: usize, column: &str| -> Result<Option<f64>> {
                let spec = FieldSpec {
                    column: column.to_string(),
                    ..amount_spec.clone()
                };
                Ok(match parse_cell(record.get(pos).unwrap_or(""), &spec, row, &schema.missing)? {
                    Cell::Number(v) => Some(v),
                    _ => None,
                })
            };
            let Some(rf) = amount(*rf_pos, &a.risk_free)? else {
                dropped.push(RowIssue {
                    row,
                    column: a.risk_free.clone(),
                    reason: "missing required value".to_string(),
                });
                continue 'rows;
            };
            let mut held: BTreeMap<&str, f64> = BTreeMap::new();
            for (class, pos) in risky {
                let column = &a.risky[class];
                let Some(v) = amount(*pos, column)? else {
                    dropped.push(RowIssue {
                        row,
                        column: column.clone(),
                        reason: "missing required value".to_string(),
                    });
                    continue 'rows;
                };
                held.insert(class.as_str(), v);
            }
            let risky_total: f64 = held.values().sum();
            let total = rf + risky_total;
            if !(total > 0.0) {
                dropped.push(RowIssue {
                    row,
                    column: a.risk_free.clone(),
                    reason: "no financial assets".to_string(),
                });
                continue 'rows;
            }
            let stage = |e: panel_dml_core::Error| CliError::data(format!("row {row}: {e}"));
            row_derived.push((fields::FMP, f64::from(fmp_flag(risky_total).map_err(stage)?)));
            row_derived.push((fields::RISKY_RATIO, indices::risky_ratio(risky_total, total).map_err(stage)?));
            if let Some(table) = inputs.assets {
                let params = table
                    .for_wave(year)
                    .ok_or_else(|| CliError::config(format!("asset parameters: no entry for wave {year}")))?;
                for class in held.keys() {
                    if !params.classes().iter().any(|c| c.name == *class) {
                        return Err(CliError::config(format!(
                            "asset parameters for wave {year} have no risky class `{class}`"
                        )));
                    }
                }
                let amounts: Vec<f64> = params
                    .classes()
                    .iter()
                    .map(|c| held.get(c.name.as_str()).copied().unwrap_or(0.0))
                    .collect();
                let w = PortfolioWeights::from_amounts(rf, &amounts).map_err(stage)?;
                let s = match sharpe_ratio(&w, params).map_err(stage)? {
                    Some(s) => s,
                    None => match inputs.undefined_sharpe {
                        SharpePolicy::Missing => f64::NAN,
                        SharpePolicy::Zero => 0.0,
                    },
                };
                row_derived.push((fields::SHARPE, s));
            }
        }

        let flag = |name: &str| -> Option<u8> {
            let i = schema.fields.iter().position(|s| s.field == name)?;
            match cells[i] {
                Cell::Number(v) => Some(v as u8),
                _ => None,
            }
        };
        let flags = match (
            flag(fields::CREDIT_CARD),
            flag(fields::DIGITAL_PAYMENT),
            flag(fields::BANK_ACCOUNT),
            flag(fields::INSURANCE),
        ) {
            (Some(a), Some(b), Some(c), Some(d)) => Some(InclusionFlags::new(a, b, c, d).expect("flags validated as binary")),
            _ => None,
        };
        match (schema.fields.iter().position(|s| s.field == fields::FA_INDEX), flags) {
            (Some(i), Some(f)) => {
                if let Cell::Number(v) = cells[i] {
                    let implied = indices::fa_index(&f);
                    if (v - implied).abs() > 1e-9 {
                        return Err(CliError::data(format!(
                            "row {row}, column `{}`: value `{v}` is not the mean of the four service flags ({implied})",
                            schema.fields[i].column
                        )));
                    }
                }
            }
            (None, Some(f)) => row_derived.push((fields::FA_INDEX, indices::fa_index(&f))),
            _ => {}
        }

        for (slot, cell) in values.iter_mut().zip(cells) {
            match (slot, cell) {
                (Values::Numeric(v), Cell::Number(x)) => v.push(x),
                (Values::Numeric(v), Cell::Missing) => v.push(f64::NAN),
                (Values::Labels(v), Cell::Text(s)) => v.push(s),
                (Values::Labels(v), Cell::Missing) => v.push(String::new()),
                _ => unreachable!("cell type follows the field kind"),
            }
        }
        for (name, v) in row_derived {
            derived.entry(name).or_default().push(v);
        }
    }

    if seen_rows == 0 {
        return Err(CliError::data("no data rows"));
    }
    let mut ids = Vec::new();
    let mut years = Vec::new();
    let mut columns: Vec<Column> = Vec::new();
    for (spec, vals) in schema.fields.iter().zip(values) {
        match (&spec.kind, vals) {
            (FieldKind::Id, Values::Labels(v)) => ids = v,
            (FieldKind::Year, Values::Numeric(v)) => years = v.into_iter().map(|y| y as i64).collect(),
            (FieldKind::Categorical { levels }, Values::Labels(labels)) => {
                let levels: Vec<String> = match levels {
                    Some(l) => l.clone(),
                    None => labels
                        .iter()
                        .filter(|s| !s.is_empty())
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .cloned()
                        .collect(),
                };
                let codes = labels
                    .iter()
                    .map(|s| levels.iter().position(|l| l == s).map_or(f64::NAN, |k| k as f64))
                    .collect();
                columns.push(Column {
                    name: spec.field.clone(),
                    values: codes,
                    levels: Some(levels),
                });
            }
            (_, Values::Numeric(v)) => columns.push(Column {
                name: spec.field.clone(),
                values: v,
                levels: None,
            }),
            (_, Values::Labels(_)) => unreachable!(),
        }
    }
    if ids.is_empty() {
        return Err(CliError::data("no data rows left after dropping rows with missing required values"));
    }
    let mut ds = PanelDataset::new(ids, years).map_err(|e| CliError::data(e.to_string()))?;
    for (name, v) in derived {
        columns.push(Column {
            name: name.to_string(),
            values: v,
            levels: None,
        });
    }
    let rank = |name: &str| BUILTIN_ORDER.iter().position(|b| *b == name).unwrap_or(BUILTIN_ORDER.len());
    columns.sort_by(|a, b| rank(&a.name).cmp(&rank(&b.name)).then_with(|| a.name.cmp(&b.name)));
    for c in columns {
        ds.set_column(c).map_err(|e| CliError::data(e.to_string()))?;
    }
    Ok(LoadedPanel { dataset: ds, dropped })
}

/// Loads and validates a survey export described by `schema`.
pub fn load_panel(path: &Path, schema: &VariableSchema, inputs: &IndexInputs) -> Result<LoadedPanel> {
    let file = std::fs::File::open(path).map_err(|e| CliError::unreadable_data(path, e))?;
    read_panel(file, schema, inputs).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
