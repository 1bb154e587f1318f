//! Household-wave panel container and the sample-construction rules applied
//! to it: balancing, tail trimming, the adult filter and reference-wave
//! subsetting.
//!
//! A [`PanelDataset`] is columnar. Every column is `f64`, with `NaN` marking a
//! missing value; categorical columns additionally carry their level labels
//! and store the level index as the value. All operations return new
//! datasets and drop whole households, so a balanced input stays balanced.

use alloc::boxed::Box;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::indices::InclusionFlags;
use crate::stats;

/// Canonical semantic field names.
pub mod fields {
    pub const HOUSEHOLD_ID: &str = "household_id";
    pub const YEAR: &str = "year";
    pub const PROVINCE: &str = "province";
    pub const FMP: &str = "fmp";
    pub const RISKY_RATIO: &str = "risky_ratio";
    pub const SHARPE: &str = "sharpe";
    pub const FA_INDEX: &str = "fa_index";
    pub const FA_SCORE: &str = "fa_score";
    pub const CREDIT_CARD: &str = "credit_card";
    pub const DIGITAL_PAYMENT: &str = "digital_payment";
    pub const BANK_ACCOUNT: &str = "bank_account";
    pub const INSURANCE: &str = "insurance";
    pub const AGE: &str = "age";
    pub const MALE: &str = "male";
    pub const MARRIAGE: &str = "marriage";
    pub const IND_COMMER: &str = "ind_commer";
    pub const EDU: &str = "edu";
    pub const HEALTH: &str = "health";
    pub const OLDSUM: &str = "oldsum";
    pub const YOUNGSUM: &str = "youngsum";
    pub const FAMILY_SIZE: &str = "family_size";
    pub const ASSET_GROUP: &str = "asset_group";
    pub const RURAL: &str = "rural";
    pub const REGION: &str = "region";
    pub const RISK_PREFER: &str = "risk_prefer";
    pub const FINA_KNOW: &str = "fina_know";

    /// The four service flags, in the column order used for FA scores.
    pub const INCLUSION_FLAGS: [&str; 4] = [CREDIT_CARD, DIGITAL_PAYMENT, BANK_ACCOUNT, INSURANCE];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum AssetGroup {
    Low,
    Middle,
    High,
}

impl AssetGroup {
    pub const LEVELS: [&'static str; 3] = ["low", "middle", "high"];

    pub fn label(self) -> &'static str {
        Self::LEVELS[self as usize]
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "low" => Some(AssetGroup::Low),
            "middle" => Some(AssetGroup::Middle),
            "high" => Some(AssetGroup::High),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Region {
    East,
    Middle,
    West,
}

impl Region {
    pub const LEVELS: [&'static str; 3] = ["east", "middle", "west"];

    pub fn label(self) -> &'static str {
        Self::LEVELS[self as usize]
    }

    pub fn from_label(s: &str) -> Option<Self> {
        match s {
            "east" => Some(Region::East),
            "middle" => Some(Region::Middle),
            "west" => Some(Region::West),
            _ => None,
        }
    }
}

/// Household-head and household characteristics used as controls.
#[derive(Debug, Clone, PartialEq)]
pub struct Controls {
    pub age: f64,
    pub male: u8,
    pub marriage: u8,
    pub ind_commer: u8,
    /// 1 = none … 9 = doctorate.
    pub edu: u8,
    /// 1 = very good … 5 = very bad.
    pub health: u8,
    pub oldsum: f64,
    pub youngsum: f64,
    pub family_size: f64,
    pub asset_group: AssetGroup,
    pub rural: u8,
    pub region: Region,
    pub risk_prefer: u8,
    pub fina_know: u8,
}

/// One household in one survey wave.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationRow {
    pub household_id: String,
    pub province_id: String,
    pub year: i64,
    pub fmp: u8,
    pub risky_ratio: f64,
    pub sharpe: Option<f64>,
    pub fa_index: f64,
    pub flags: InclusionFlags,
    pub controls: Controls,
}

fn check_binary(what: &str, v: u8) -> Result<()> {
    if v > 1 {
        return Err(Error::OutOfRange {
            what: what.to_string(),
            value: f64::from(v),
            range: "{0,1}".to_string(),
        });
    }
    Ok(())
}

fn check_range(what: &str, v: f64, lo: f64, hi: f64, range: &str) -> Result<()> {
    if !(v >= lo && v <= hi) {
        return Err(Error::OutOfRange {
            what: what.to_string(),
            value: v,
            range: range.to_string(),
        });
    }
    Ok(())
}

impl ObservationRow {
    /// Checks every coding range and the FA-index identity.
    pub fn validate(&self) -> Result<()> {
        use fields::*;
        let c = &self.controls;
        check_binary(FMP, self.fmp)?;
        check_range(RISKY_RATIO, self.risky_ratio, 0.0, 1.0, "[0,1]")?;
        if let Some(s) = self.sharpe {
            if !s.is_finite() {
                return Err(Error::NonFinite(SHARPE));
            }
        }
        check_binary(CREDIT_CARD, self.flags.credit_card)?;
        check_binary(DIGITAL_PAYMENT, self.flags.digital_payment)?;
        check_binary(BANK_ACCOUNT, self.flags.bank_account)?;
        check_binary(INSURANCE, self.flags.insurance)?;
        check_range(FA_INDEX, self.fa_index, 0.0, 1.0, "[0,1]")?;
        let implied = crate::indices::fa_index(&self.flags);
        if (self.fa_index - implied).abs() > 1e-9 {
            return Err(Error::OutOfRange {
                what: FA_INDEX.to_string(),
                value: self.fa_index,
                range: format!("mean of the four service flags ({implied})"),
            });
        }
        check_range(AGE, c.age, 0.0, 150.0, "0..150")?;
        check_binary(MALE, c.male)?;
        check_binary(MARRIAGE, c.marriage)?;
        check_binary(IND_COMMER, c.ind_commer)?;
        check_range(EDU, f64::from(c.edu), 1.0, 9.0, "1..9")?;
        check_range(HEALTH, f64::from(c.health), 1.0, 5.0, "1..5")?;
        check_range(OLDSUM, c.oldsum, 0.0, f64::INFINITY, ">= 0")?;
        check_range(YOUNGSUM, c.youngsum, 0.0, f64::INFINITY, ">= 0")?;
        check_range(FAMILY_SIZE, c.family_size, 1.0, f64::INFINITY, ">= 1")?;
        check_binary(RURAL, c.rural)?;
        check_binary(RISK_PREFER, c.risk_prefer)?;
        check_binary(FINA_KNOW, c.fina_know)?;
        Ok(())
    }
}

/// One named column; `levels` is set for categorical columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    pub levels: Option<Vec<String>>,
}

impl Column {
    pub fn is_categorical(&self) -> bool {
        self.levels.is_some()
    }

    /// Label of a categorical value, or `None` for numeric columns / missing values.
    pub fn label(&self, value: f64) -> Option<&str> {
        let levels = self.levels.as_ref()?;
        if value.is_nan() || value < 0.0 {
            return None;
        }
        levels.get(value as usize).map(String::as_str)
    }
}

/// Balanced or unbalanced household-wave panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    household: Vec<String>,
    year: Vec<i64>,
    columns: Vec<Column>,
}

impl PanelDataset {
    pub fn new(household: Vec<String>, year: Vec<i64>) -> Result<Self> {
        if household.len() != year.len() {
            return Err(Error::DimensionMismatch {
                what: "year column length",
                expected: household.len(),
                found: year.len(),
            });
        }
        Ok(PanelDataset {
            household,
            year,
            columns: Vec::new(),
        })
    }

    /// Adds (or replaces) a numeric column.
    pub fn with_column(mut self, name: &str, values: Vec<f64>) -> Result<Self> {
        self.set_column(Column {
            name: name.to_string(),
            values,
            levels: None,
        })?;
        Ok(self)
    }

    /// Adds (or replaces) a categorical column storing level indices.
    pub fn with_categorical(mut self, name: &str, codes: Vec<f64>, levels: Vec<String>) -> Result<Self> {
        self.set_column(Column {
            name: name.to_string(),
            values: codes,
            levels: Some(levels),
        })?;
        Ok(self)
    }

    pub fn set_column(&mut self, column: Column) -> Result<()> {
        if column.values.len() != self.len() {
            return Err(Error::DimensionMismatch {
                what: "column length",
                expected: self.len(),
                found: column.values.len(),
            });
        }
        if column.name == fields::HOUSEHOLD_ID || column.name == fields::YEAR {
            return Err(invalid(format!("`{}` is a reserved column name", column.name)));
        }
        match self.columns.iter_mut().find(|c| c.name == column.name) {
            Some(slot) => *slot = column,
            None => self.columns.push(column),
        }
        Ok(())
    }

    /// Builds a dataset from typed survey rows.
    pub fn from_observations(rows: &[ObservationRow]) -> Result<Self> {
        use fields::*;
        for r in rows {
            r.validate()?;
        }
        let household = rows.iter().map(|r| r.household_id.clone()).collect();
        let year = rows.iter().map(|r| r.year).collect();
        let provinces: BTreeSet<&str> = rows.iter().map(|r| r.province_id.as_str()).collect();
        let province_levels: Vec<String> = provinces.iter().map(|s| s.to_string()).collect();
        let province_code = |p: &str| province_levels.iter().position(|l| l == p).unwrap() as f64;
        let col = |f: &dyn Fn(&ObservationRow) -> f64| rows.iter().map(f).collect::<Vec<f64>>();
        let labels = |ls: &[&str]| ls.iter().map(|s| s.to_string()).collect::<Vec<_>>();

        let ds = PanelDataset::new(household, year)?
            .with_categorical(PROVINCE, rows.iter().map(|r| province_code(&r.province_id)).collect(), province_levels.clone())?
            .with_column(FMP, col(&|r| f64::from(r.fmp)))?
            .with_column(RISKY_RATIO, col(&|r| r.risky_ratio))?
            .with_column(SHARPE, col(&|r| r.sharpe.unwrap_or(f64::NAN)))?
            .with_column(FA_INDEX, col(&|r| r.fa_index))?
            .with_column(CREDIT_CARD, col(&|r| f64::from(r.flags.credit_card)))?
            .with_column(DIGITAL_PAYMENT, col(&|r| f64::from(r.flags.digital_payment)))?
            .with_column(BANK_ACCOUNT, col(&|r| f64::from(r.flags.bank_account)))?
            .with_column(INSURANCE, col(&|r| f64::from(r.flags.insurance)))?
            .with_column(AGE, col(&|r| r.controls.age))?
            .with_column(MALE, col(&|r| f64::from(r.controls.male)))?
            .with_column(MARRIAGE, col(&|r| f64::from(r.controls.marriage)))?
            .with_column(IND_COMMER, col(&|r| f64::from(r.controls.ind_commer)))?
            .with_column(EDU, col(&|r| f64::from(r.controls.edu)))?
            .with_column(HEALTH, col(&|r| f64::from(r.controls.health)))?
            .with_column(OLDSUM, col(&|r| r.controls.oldsum))?
            .with_column(YOUNGSUM, col(&|r| r.controls.youngsum))?
            .with_column(FAMILY_SIZE, col(&|r| r.controls.family_size))?
            .with_categorical(ASSET_GROUP, col(&|r| r.controls.asset_group as usize as f64), labels(&AssetGroup::LEVELS))?
            .with_column(RURAL, col(&|r| f64::from(r.controls.rural)))?
            .with_categorical(REGION, col(&|r| r.controls.region as usize as f64), labels(&Region::LEVELS))?
            .with_column(RISK_PREFER, col(&|r| f64::from(r.controls.risk_prefer)))?
            .with_column(FINA_KNOW, col(&|r| f64::from(r.controls.fina_know)))?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.household.len()
    }

    pub fn is_empty(&self) -> bool {
        self.household.is_empty()
    }

    pub fn household_ids(&self) -> &[String] {
        &self.household
    }

    pub fn years(&self) -> &[i64] {
        &self.year
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    /// Sorted distinct wave labels.
    pub fn waves(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self.year.iter().copied().collect();
        set.into_iter().collect()
    }

    /// Distinct households in order of first appearance.
    pub fn households(&self) -> Vec<&str> {
        let mut seen = BTreeSet::new();
        self.household
            .iter()
            .filter(|h| seen.insert(h.as_str()))
            .map(String::as_str)
            .collect()
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::UnknownField(name.to_string()))
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn values(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.column(name)?.values)
    }

    /// Copies the listed rows, in order.
    pub fn select_rows(&self, rows: &[usize]) -> PanelDataset {
        PanelDataset {
            household: rows.iter().map(|&i| self.household[i].clone()).collect(),
            year: rows.iter().map(|&i| self.year[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                    levels: c.levels.clone(),
                })
                .collect(),
        }
    }

    /// Keeps every row whose household is in `keep`, preserving order.
    pub fn retain_households(&self, keep: &BTreeSet<&str>) -> PanelDataset {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| keep.contains(self.household[i].as_str()))
            .collect();
        self.select_rows(&rows)
    }

    /// Row indices grouped by household, households in first-appearance order.
    pub fn rows_by_household(&self) -> Vec<(&str, Vec<usize>)> {
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
        for (i, h) in self.household.iter().enumerate() {
            let slot = *index.entry(h.as_str()).or_insert_with(|| {
                groups.push((h.as_str(), Vec::new()));
                groups.len() - 1
            });
            groups[slot].1.push(i);
        }
        groups
    }

    /// Every household appears exactly once in every wave.
    pub fn is_balanced(&self) -> bool {
        let waves = self.waves();
        self.rows_by_household().iter().all(|(_, rows)| {
            let ys: BTreeSet<i64> = rows.iter().map(|&i| self.year[i]).collect();
            rows.len() == waves.len() && ys.len() == waves.len()
        })
    }

    /// Keeps only the listed waves.
    pub fn restrict_waves(&self, waves: &[i64]) -> Result<PanelDataset> {
        let present = self.waves();
        for w in waves {
            if !present.contains(w) {
                return Err(Error::UnknownWave(*w));
            }
        }
        let rows: Vec<usize> = (0..self.len()).filter(|&i| waves.contains(&self.year[i])).collect();
        Ok(self.select_rows(&rows))
    }

    /// Renames the sorted waves to `labels` (same count, order preserved).
    pub fn relabel_waves(&self, labels: &[i64]) -> Result<PanelDataset> {
        let waves = self.waves();
        if labels.len() != waves.len() {
            return Err(Error::DimensionMismatch {
                what: "wave label count",
                expected: waves.len(),
                found: labels.len(),
            });
        }
        if labels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("wave labels must be strictly increasing"));
        }
        let mut out = self.clone();
        for y in out.year.iter_mut() {
            let k = waves.iter().position(|w| w == y).unwrap();
            *y = labels[k];
        }
        Ok(out)
    }

    /// Rows with no missing value in any of `names`.
    pub fn complete_rows(&self, names: &[&str]) -> Result<Vec<usize>> {
        let cols: Vec<&[f64]> = names.iter().map(|n| self.values(n)).collect::<Result<_>>()?;
        Ok((0..self.len())
            .filter(|&i| cols.iter().all(|c| !c[i].is_nan()))
            .collect())
    }

    /// Regressor columns for `name` restricted to `rows`: the column itself
    /// when numeric, otherwise one indicator per level after the first
    /// level present in those rows.
    pub fn expand_column(&self, name: &str, rows: &[usize]) -> Result<Vec<(String, Vec<f64>)>> {
        let col = self.column(name)?;
        if col.is_categorical() {
            self.dummies(name, rows)
        } else {
            Ok(vec![(name.to_string(), rows.iter().map(|&i| col.values[i]).collect())])
        }
    }

    /// Indicator columns for every distinct value of `name` within `rows`
    /// except the smallest one (the omitted base category).
    pub fn dummies(&self, name: &str, rows: &[usize]) -> Result<Vec<(String, Vec<f64>)>> {
        let (values, col): (Vec<f64>, Option<&Column>) = if name == fields::YEAR {
            (rows.iter().map(|&i| self.year[i] as f64).collect(), None)
        } else {
            let c = self.column(name)?;
            (rows.iter().map(|&i| c.values[i]).collect(), Some(c))
        };
        let mut distinct: Vec<f64> = values.iter().copied().filter(|v| !v.is_nan()).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        Ok(distinct
            .iter()
            .skip(1)
            .map(|&level| {
                let label = match col.and_then(|c| c.label(level)) {
                    Some(l) => l.to_string(),
                    None => format!("{level}"),
                };
                let ind = values.iter().map(|&v| if v == level { 1.0 } else { 0.0 }).collect();
                (format!("{name}[{label}]"), ind)
            })
            .collect())
    }
}

/// Keeps only households observed exactly once in every wave of `ds`.
pub fn enforce_balance(ds: &PanelDataset) -> PanelDataset {
    let waves = ds.waves();
    let groups = ds.rows_by_household();
    let keep: BTreeSet<&str> = groups
        .iter()
        .filter(|(_, rows)| {
            let ys: BTreeSet<i64> = rows.iter().map(|&i| ds.year[i]).collect();
            rows.len() == waves.len() && ys.len() == waves.len()
        })
        .map(|(h, _)| *h)
        .collect();
    ds.retain_households(&keep)
}

/// Drops every household with a value of `variable` strictly outside the
/// pooled `[q(fraction), q(1 − fraction)]` interval.
pub fn trim_tails(ds: &PanelDataset, variable: &str, fraction: f64) -> Result<PanelDataset> {
    if !(0.0..0.5).contains(&fraction) {
        return Err(Error::OutOfRange {
            what: "trim fraction out of range".to_string(),
            value: fraction,
            range: "[0, 0.5)".to_string(),
        });
    }
    let col = ds.column(variable)?;
    if col.is_categorical() {
        return Err(invalid(format!("cannot trim categorical field `{variable}`")));
    }
    if fraction == 0.0 {
        return Ok(ds.clone());
    }
    let mut pooled: Vec<f64> = col.values.iter().copied().filter(|v| !v.is_nan()).collect();
    if pooled.is_empty() {
        return Ok(ds.clone());
    }
    pooled.sort_by(f64::total_cmp);
    let lo = stats::quantile_sorted(&pooled, fraction);
    let hi = stats::quantile_sorted(&pooled, 1.0 - fraction);
    let dropped: BTreeSet<&str> = (0..ds.len())
        .filter(|&i| {
            let v = col.values[i];
            v < lo || v > hi
        })
        .map(|i| ds.household[i].as_str())
        .collect();
    let keep: BTreeSet<&str> = ds.households().into_iter().filter(|h| !dropped.contains(h)).collect();
    Ok(ds.retain_households(&keep))
}

/// Removes every household whose head is under 18 in any wave.
pub fn filter_adults(ds: &PanelDataset) -> Result<PanelDataset> {
    let age = ds.values(fields::AGE)?;
    let minors: BTreeSet<&str> = (0..ds.len())
        .filter(|&i| age[i] < 18.0)
        .map(|i| ds.household[i].as_str())
        .collect();
    let keep: BTreeSet<&str> = ds.households().into_iter().filter(|h| !minors.contains(h)).collect();
    Ok(ds.retain_households(&keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompareOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

impl CompareOp {
    fn apply(self, a: f64, b: f64) -> bool {
        match self {
            CompareOp::Eq => a == b,
            CompareOp::Ne => a != b && !a.is_nan(),
            CompareOp::Lt => a < b,
            CompareOp::Le => a <= b,
            CompareOp::Gt => a > b,
            CompareOp::Ge => a >= b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PredicateValue {
    Number(f64),
    /// A categorical level label such as `high`.
    Label(String),
}

/// Row condition used to select households at a reference wave.
///
/// Textual form: `field OP value` with `OP` one of `= != < <= > >=`,
/// conjunctions joined by `&`, a leading `!` negating a term, and `*`
/// for the always-true predicate.
#[derive(Debug, Clone, PartialEq)]
pub enum Predicate {
    Always,
    Compare {
        field: String,
        op: CompareOp,
        value: PredicateValue,
    },
    Not(Box<Predicate>),
    And(Vec<Predicate>),
}

impl Predicate {
    pub fn compare(field: &str, op: CompareOp, value: PredicateValue) -> Self {
        Predicate::Compare {
            field: field.to_string(),
            op,
            value,
        }
    }

    pub fn negate(self) -> Self {
        Predicate::Not(Box::new(self))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let terms: Vec<&str> = text.split('&').map(str::trim).collect();
        let mut parsed = Vec::with_capacity(terms.len());
        for term in terms {
            parsed.push(Self::parse_term(term)?);
        }
        Ok(if parsed.len() == 1 {
            parsed.pop().unwrap()
        } else {
            Predicate::And(parsed)
        })
    }

    fn parse_term(term: &str) -> Result<Self> {
        if term.is_empty() {
            return Err(invalid("empty predicate term"));
        }
        if term == "*" {
            return Ok(Predicate::Always);
        }
        if let Some(rest) = term.strip_prefix('!') {
            if !rest.starts_with('=') {
                return Ok(Self::parse_term(rest.trim())?.negate());
            }
        }
        const OPS: [(&str, CompareOp); 6] = [
            ("<=", CompareOp::Le),
            (">=", CompareOp::Ge),
            ("!=", CompareOp::Ne),
            ("=", CompareOp::Eq),
            ("<", CompareOp::Lt),
            (">", CompareOp::Gt),
        ];
        for (tok, op) in OPS {
            if let Some(pos) = term.find(tok) {
                let field = term[..pos].trim();
                let raw = term[pos + tok.len()..].trim();
                if field.is_empty() || raw.is_empty() {
                    return Err(invalid(format!("malformed predicate `{term}`")));
                }
                let value = match raw.parse::<f64>() {
                    Ok(v) => PredicateValue::Number(v),
                    Err(_) => PredicateValue::Label(raw.to_string()),
                };
                return Ok(Predicate::compare(field, op, value));
            }
        }
        Err(invalid(format!("predicate `{term}` has no comparison operator")))
    }

    fn resolve<'a>(&self, ds: &'a PanelDataset) -> Result<Resolved<'a>> {
        Ok(match self {
            Predicate::Always => Resolved::Always,
            Predicate::Not(p) => Resolved::Not(Box::new(p.resolve(ds)?)),
            Predicate::And(ps) => Resolved::And(ps.iter().map(|p| p.resolve(ds)).collect::<Result<_>>()?),
            Predicate::Compare { field, op, value } => {
                let col = ds.column(field)?;
                let target = match (value, &col.levels) {
                    (PredicateValue::Number(v), _) => *v,
                    (PredicateValue::Label(l), Some(levels)) => match levels.iter().position(|x| x == l) {
                        Some(k) => k as f64,
                        None => return Err(invalid(format!("`{l}` is not a level of `{field}`"))),
                    },
                    (PredicateValue::Label(l), None) => {
                        return Err(invalid(format!("`{field}` is numeric; `{l}` is not a number")))
                    }
                };
                Resolved::Compare {
                    values: &col.values,
                    op: *op,
                    target,
                }
            }
        })
    }
}

enum Resolved<'a> {
    Always,
    Compare { values: &'a [f64], op: CompareOp, target: f64 },
    Not(Box<Resolved<'a>>),
    And(Vec<Resolved<'a>>),
}

impl Resolved<'_> {
    fn eval(&self, row: usize) -> bool {
        match self {
            Resolved::Always => true,
            Resolved::Compare { values, op, target } => op.apply(values[row], *target),
            Resolved::Not(p) => !p.eval(row),
            Resolved::And(ps) => ps.iter().all(|p| p.eval(row)),
        }
    }
}

/// Keeps, with all their waves, the households whose row in
/// `reference_wave` satisfies `predicate`.
pub fn subset(ds: &PanelDataset, predicate: &Predicate, reference_wave: i64) -> Result<PanelDataset> {
    if !ds.year.contains(&reference_wave) {
        return Err(Error::UnknownWave(reference_wave));
    }
    let resolved = predicate.resolve(ds)?;
    let keep: BTreeSet<&str> = (0..ds.len())
        .filter(|&i| ds.year[i] == reference_wave && resolved.eval(i))
        .map(|i| ds.household[i].as_str())
        .collect();
    Ok(ds.retain_households(&keep))
}

/// One line of the descriptive-statistics table.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct SummaryRow {
    pub variable: String,
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub min: f64,
    pub max: f64,
}

/// Median, mean, standard deviation, minimum and maximum of every numeric
/// column over the pooled rows (missing values skipped).
pub fn summary_stats(ds: &PanelDataset) -> Result<Vec<SummaryRow>> {
    if ds.is_empty() {
        return Err(Error::Degenerate("no rows to summarise".to_string()));
    }
    Ok(ds
        .columns
        .iter()
        .filter(|c| !c.is_categorical())
        .map(|c| {
            let mut xs: Vec<f64> = c.values.iter().copied().filter(|v| !v.is_nan()).collect();
            xs.sort_by(f64::total_cmp);
            SummaryRow {
                variable: c.name.clone(),
                n: xs.len(),
                median: stats::quantile_sorted(&xs, 0.5),
                mean: stats::mean(&xs),
                sd: stats::sd(&xs),
                min: xs.first().copied().unwrap_or(f64::NAN),
                max: xs.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn panel(rows: &[(&str, i64, f64)]) -> PanelDataset {
        PanelDataset::new(
            rows.iter().map(|r| r.0.to_string()).collect(),
            rows.iter().map(|r| r.1).collect(),
        )
        .unwrap()
        .with_column("v", rows.iter().map(|r| r.2).collect())
        .unwrap()
    }

    #[test]
    fn balance_drops_household_missing_a_wave() {
        let ds = panel(&[
            ("A", 2015, 1.0),
            ("A", 2017, 1.0),
            ("A", 2019, 1.0),
            ("B", 2015, 2.0),
            ("B", 2019, 2.0),
        ]);
        let out = enforce_balance(&ds);
        assert_eq!(out.len(), 3);
        assert!(out.household_ids().iter().all(|h| h == "A"));
        assert_eq!(enforce_balance(&out), out);
    }

    #[test]
    fn balance_drops_duplicated_household_wave() {
        let ds = panel(&[("A", 1, 0.0), ("A", 1, 0.0), ("B", 1, 0.0), ("B", 2, 0.0), ("A", 2, 0.0)]);
        let out = enforce_balance(&ds);
        assert_eq!(out.households(), vec!["B"]);
    }

    #[test]
    fn trim_drops_both_tails() {
        let rows: Vec<(String, i64, f64)> = (1..=100).map(|k| (format!("h{k}"), 2019, k as f64)).collect();
        let refs: Vec<(&str, i64, f64)> = rows.iter().map(|r| (r.0.as_str(), r.1, r.2)).collect();
        let ds = panel(&refs);
        let out = trim_tails(&ds, "v", 0.01).unwrap();
        assert_eq!(out.len(), 98);
        let vals = out.values("v").unwrap();
        assert!(!vals.contains(&1.0) && !vals.contains(&100.0));
        assert_eq!(trim_tails(&ds, "v", 0.0).unwrap(), ds);
    }

    #[test]
    fn trim_rejects_bad_fraction_and_unknown_field() {
        let ds = panel(&[("A", 1, 1.0)]);
        let err = trim_tails(&ds, "v", 0.6).unwrap_err();
        assert!(err.to_string().contains("fraction out of range"));
        assert_eq!(trim_tails(&ds, "nope", 0.1).unwrap_err(), Error::UnknownField("nope".into()));
    }

    #[test]
    fn adult_filter_is_household_level() {
        let ds = PanelDataset::new(
            ["A", "A", "B", "B", "C", "C"].iter().map(|s| s.to_string()).collect(),
            vec![1, 2, 1, 2, 1, 2],
        )
        .unwrap()
        .with_column(fields::AGE, vec![40.0, 42.0, 17.0, 19.0, 18.0, 20.0])
        .unwrap();
        let out = filter_adults(&ds).unwrap();
        assert_eq!(out.households(), vec!["A", "C"]);
        assert_eq!(out.len(), 4);
    }

    #[test]
    fn subset_freezes_classification_at_reference_wave() {
        let ds = PanelDataset::new(
            ["A", "A", "B", "B"].iter().map(|s| s.to_string()).collect(),
            vec![2015, 2019, 2015, 2019],
        )
        .unwrap()
        .with_column(fields::RURAL, vec![1.0, 0.0, 0.0, 1.0])
        .unwrap();
        let p = Predicate::parse("rural=1").unwrap();
        let out = subset(&ds, &p, 2019).unwrap();
        assert_eq!(out.households(), vec!["B"]);
        assert_eq!(out.len(), 2);
        assert_eq!(subset(&ds, &Predicate::Always, 2019).unwrap(), ds);
        assert_eq!(subset(&ds, &p, 2021).unwrap_err(), Error::UnknownWave(2021));
        let unknown = Predicate::parse("urban=1").unwrap();
        assert!(matches!(subset(&ds, &unknown, 2019), Err(Error::UnknownField(_))));
    }

    #[test]
    fn predicate_parsing() {
        assert_eq!(
            Predicate::parse("edu >= 4").unwrap(),
            Predicate::compare("edu", CompareOp::Ge, PredicateValue::Number(4.0))
        );
        assert_eq!(
            Predicate::parse("!asset_group=high").unwrap(),
            Predicate::compare("asset_group", CompareOp::Eq, PredicateValue::Label("high".into())).negate()
        );
        assert!(matches!(Predicate::parse("rural=1 & edu<4").unwrap(), Predicate::And(v) if v.len() == 2));
        assert!(Predicate::parse("rural").is_err());
    }

    #[test]
    fn summary_of_fixture() {
        let ds = panel(&[("A", 1, 0.0), ("B", 1, 0.25), ("C", 1, 0.75)]);
        let s = summary_stats(&ds).unwrap();
        assert_eq!(s.len(), 1);
        assert!((s[0].mean - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[0].median, 0.25);
        let one = summary_stats(&panel(&[("A", 1, 2.5)])).unwrap();
        assert_eq!((one[0].mean, one[0].median, one[0].min, one[0].max, one[0].sd), (2.5, 2.5, 2.5, 2.5, 0.0));
    }

    #[test]
    fn dummies_drop_base_level() {
        let ds = PanelDataset::new(vec!["a".into(), "b".into(), "c".into()], vec![2015, 2017, 2019])
            .unwrap()
            .with_categorical("g", vec![0.0, 1.0, 1.0], vec!["x".into(), "y".into()])
            .unwrap();
        let d = ds.dummies("g", &[0, 1, 2]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].0, "g[y]");
        let y = ds.dummies(fields::YEAR, &[0, 1, 2]).unwrap();
        assert_eq!(y.iter().map(|c| c.0.as_str()).collect::<Vec<_>>(), vec!["year[2017]", "year[2019]"]);
    }
}
