//! Canonical intermediate dataset: comma-separated text with a typed header.
//!
//! ```text
//! # config_sha256: 3f1c…
//! # seed: 42
//! household_id:str,year:int,fa_index:f64,asset_group:cat(low|middle|high)
//! h1,2015,0.25,low
//! ```
//!
//! Leading `#` lines carry `key: value` provenance. Missing numbers are empty
//! cells; floats are written in shortest round-trip form, so a write/read
//! cycle is lossless.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use panel_dml_core::panel::{fields, Column};
use panel_dml_core::PanelDataset;

use crate::error::{CliError, Result};

pub type Provenance = Vec<(String, String)>;

fn format_value(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        format!("{v}")
    }
}

fn check_token(what: &str, s: &str) -> Result<()> {
    if s.is_empty() || s.contains([',', '|', '(', ')', ':', '\n', '\r', '"', '#']) {
        return Err(CliError::data(format!("{what} `{s}` cannot be written to the canonical format")));
    }
    Ok(())
}

fn column_header(c: &Column) -> Result<String> {
    check_token("column name", &c.name)?;
    Ok(match &c.levels {
        None => format!("{}:f64", c.name),
        Some(levels) => {
            for l in levels {
                check_token("level", l)?;
            }
            format!("{}:cat({})", c.name, levels.join("|"))
        }
    })
}

/// Serialises `ds` with its provenance lines.
pub fn to_string(ds: &PanelDataset, provenance: &Provenance) -> Result<String> {
    let mut out = String::new();
    for (k, v) in provenance {
        out.push_str(&format!("# {k}: {v}\n"));
    }
    let mut header = vec![
        format!("{}:str", fields::HOUSEHOLD_ID),
        format!("{}:int", fields::YEAR),
    ];
    for c in ds.columns() {
        header.push(column_header(c)?);
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for (i, (h, y)) in ds.household_ids().iter().zip(ds.years()).enumerate() {
        check_token("household id", h)?;
        out.push_str(h);
        out.push(',');
        out.push_str(&y.to_string());
        for c in ds.columns() {
            out.push(',');
            let v = c.values[i];
            match (&c.levels, v.is_nan()) {
                (Some(levels), false) => out.push_str(&levels[v as usize]),
                _ => out.push_str(&format_value(v)),
            }
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write(path: &Path, ds: &PanelDataset, provenance: &Provenance) -> Result<()> {
    let text = to_string(ds, provenance)?;
    let mut f = std::fs::File::create(path).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
}

enum ColumnType {
    Numeric,
    Categorical(Vec<String>),
}

fn parse_header(cell: &str) -> Result<(String, String)> {
    cell.split_once(':')
        .map(|(n, t)| (n.to_string(), t.to_string()))
        .ok_or_else(|| CliError::data(format!("canonical header cell `{cell}` has no type")))
}

/// Parses canonical text back into a dataset and its provenance.
pub fn from_str(text: &str) -> Result<(PanelDataset, BTreeMap<String, String>)> {
    let mut provenance = BTreeMap::new();
    let mut lines = text.lines().peekable();
    while let Some(line) = lines.peek() {
        let Some(rest) = line.strip_prefix('#') else { break };
        if let Some((k, v)) = rest.split_once(':') {
            provenance.insert(k.trim().to_string(), v.trim().to_string());
        }
        lines.next();
    }
    let header = lines.next().ok_or_else(|| CliError::data("canonical dataset has no header"))?;
    let cells: Vec<&str> = header.split(',').collect();
    if cells.len() < 2 {
        return Err(CliError::data("canonical header must start with household_id:str,year:int"));
    }
    let id = parse_header(cells[0])?;
    let year = parse_header(cells[1])?;
    if id != (fields::HOUSEHOLD_ID.to_string(), "str".to_string()) || year != (fields::YEAR.to_string(), "int".to_string()) {
        return Err(CliError::data("canonical header must start with household_id:str,year:int"));
    }
    let mut names = Vec::new();
    let mut types = Vec::new();
    for cell in &cells[2..] {
        let (name, ty) = parse_header(cell)?;
        let ty = if ty == "f64" {
            ColumnType::Numeric
        } else if let Some(inner) = ty.strip_prefix("cat(").and_then(|t| t.strip_suffix(')')) {
            ColumnType::Categorical(inner.split('|').map(String::from).collect())
        } else {
            return Err(CliError::data(format!("unknown column type `{ty}` for `{name}`")));
        };
        names.push(name);
        types.push(ty);
    }

    let mut ids = Vec::new();
    let mut years = Vec::new();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (k, line) in lines.enumerate() {
        let row = k + 1;
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != cells.len() {
            return Err(CliError::data(format!(
                "row {row}: expected {} fields, found {}",
                cells.len(),
                parts.len()
            )));
        }
        ids.push(parts[0].to_string());
        years.push(
            parts[1]
                .parse::<i64>()
                .map_err(|_| CliError::data(format!("row {row}: year `{}` is not an integer", parts[1])))?,
        );
        for (j, ty) in types.iter().enumerate() {
            let raw = parts[j + 2];
            let v = if raw.is_empty() {
                f64::NAN
            } else {
                match ty {
                    ColumnType::Numeric => raw
                        .parse::<f64>()
                        .map_err(|_| CliError::data(format!("row {row}, column `{}`: `{raw}` is not a number", names[j])))?,
                    ColumnType::Categorical(levels) => levels.iter().position(|l| l == raw).ok_or_else(|| {
                        CliError::data(format!("row {row}, column `{}`: `{raw}` is not a declared level", names[j]))
                    })? as f64,
                }
            };
            values[j].push(v);
        }
    }
    if ids.is_empty() {
        return Err(CliError::data("no data rows"));
    }
    let mut ds = PanelDataset::new(ids, years).map_err(|e| CliError::data(e.to_string()))?;
    for ((name, ty), vals) in names.into_iter().zip(types).zip(values) {
        ds.set_column(Column {
            name,
            values: vals,
            levels: match ty {
                ColumnType::Numeric => None,
                ColumnType::Categorical(l) => Some(l),
            },
        })
        .map_err(|e| CliError::data(e.to_string()))?;
    }
    Ok((ds, provenance))
}

pub fn read(path: &Path) -> Result<(PanelDataset, BTreeMap<String, String>)> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::unreadable_data(path, e))?;
    from_str(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_lossless() {
        let ds = PanelDataset::new(vec!["a".into(), "b".into()], vec![2015, 2017])
            .unwrap()
            .with_column("x", vec![0.1 + 0.2, f64::NAN])
            .unwrap()
            .with_categorical("g", vec![1.0, f64::NAN], vec!["low".into(), "high".into()])
            .unwrap();
        let prov = vec![("seed".to_string(), "7".to_string())];
        let text = to_string(&ds, &prov).unwrap();
        let (back, p) = from_str(&text).unwrap();
        assert_eq!(p["seed"], "7");
        assert_eq!(back.values("x").unwrap()[0].to_bits(), (0.1f64 + 0.2).to_bits());
        assert!(back.values("x").unwrap()[1].is_nan());
        assert_eq!(back.column("g").unwrap().levels, ds.column("g").unwrap().levels);
        assert_eq!(to_string(&back, &prov).unwrap(), text);
    }

    #[test]
    fn rejects_unwritable_names() {
        let ds = PanelDataset::new(vec!["a,b".into()], vec![2015]).unwrap();
        assert!(to_string(&ds, &Vec::new()).is_err());
    }
}
