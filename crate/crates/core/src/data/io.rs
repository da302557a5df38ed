use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColumnData, ColumnKind, ColumnSpec, CovariateColumn, Covariates, Dataset};
use crate::error::{Error, Result};

fn default_delimiter() -> String {
    ",".into()
}

fn default_missing() -> String {
    "NA".into()
}

fn default_exponent() -> f64 {
    1.0 / 1.6
}

/// Power transform `x -> x^exponent` applied to selected columns at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerTransform {
    pub columns: Vec<String>,
    #[serde(default = "default_exponent")]
    pub exponent: f64,
}

/// How to read a delimited text file into a [`Dataset`].
///
/// Written as TOML:
///
/// ```toml
/// response = "robs"
/// group = "year"              # optional
/// weight = "w"                # optional
/// covariates = ["tp_mean"]    # optional; default is every other column
/// categorical = ["month"]
/// exclude = ["date"]
/// missing = "NA"
/// delimiter = ","
///
/// [levels]                    # optional fixed level sets
/// month = ["1", "2", "3"]
///
/// [power]
/// columns = ["robs", "tp_mean"]
/// exponent = 0.625
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schema {
    pub response: String,
    #[serde(default = "default_delimiter")]
    pub delimiter: String,
    #[serde(default = "default_missing")]
    pub missing: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariates: Option<Vec<String>>,
    #[serde(default)]
    pub categorical: Vec<String>,
    #[serde(default)]
    pub exclude: Vec<String>,
    #[serde(default)]
    pub levels: BTreeMap<String, Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<PowerTransform>,
}

impl Schema {
    pub fn new(response: impl Into<String>) -> Self {
        Self {
            response: response.into(),
            delimiter: default_delimiter(),
            missing: default_missing(),
            group: None,
            weight: None,
            covariates: None,
            categorical: Vec::new(),
            exclude: Vec::new(),
            levels: BTreeMap::new(),
            power: None,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let schema: Schema = toml::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("schema is always representable as TOML")
    }

    /// Schema under which [`save`] output loads back into `data` unchanged.
    pub fn describing(data: &Dataset) -> Self {
        let mut schema = Schema::new(data.response_name.clone());
        let cols = data.covariates.columns();
        schema.covariates = Some(cols.iter().map(|c| c.name.clone()).collect());
        for c in cols {
            if let ColumnData::Categorical { levels, .. } = &c.data {
                schema.categorical.push(c.name.clone());
                schema.levels.insert(c.name.clone(), levels.clone());
            }
        }
        if data.groups.is_some() {
            schema.group = Some("group".into());
        }
        if data.weights.iter().any(|&w| w != 1.0) {
            schema.weight = Some("weight".into());
        }
        schema
    }

    pub fn validate(&self) -> Result<()> {
        if self.delimiter.len() != 1 {
            return Err(Error::Config(format!(
                "delimiter must be a single byte, got '{}'",
                self.delimiter
            )));
        }
        if let Some(cov) = &self.covariates {
            if cov.contains(&self.response) {
                return Err(Error::Config("response listed as a covariate".into()));
            }
        }
        if self.categorical.contains(&self.response) {
            return Err(Error::Config("response cannot be categorical".into()));
        }
        if let Some(p) = &self.power {
            if !(p.exponent > 0.0 && p.exponent.is_finite()) {
                return Err(Error::Config(format!("power exponent must be positive, got {}", p.exponent)));
            }
            if p.columns.iter().any(|c| self.categorical.contains(c)) {
                return Err(Error::Config("power transform targets a categorical column".into()));
            }
        }
        Ok(())
    }

    fn delimiter_byte(&self) -> u8 {
        self.delimiter.as_bytes()[0]
    }

    fn transformed(&self, column: &str) -> Option<f64> {
        self.power
            .as_ref()
            .filter(|p| p.columns.iter().any(|c| c == column))
            .map(|p| p.exponent)
    }
}

/// `value^exponent` for non-negative `value`.
pub fn power_transform(value: f64, exponent: f64) -> Option<f64> {
    if value < 0.0 {
        None
    } else {
        Some(value.powf(exponent))
    }
}

struct Table {
    header: Vec<String>,
    /// (line number, fields)
    rows: Vec<(usize, Vec<String>)>,
}

fn read_table<R: Read>(reader: R, schema: &Schema) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte())
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(Table { header, rows })
}

fn parse_number(raw: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        line,
        column: column.to_owned(),
        message: format!("'{raw}' is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column: column.to_owned(),
            message: format!("'{raw}' is not finite"),
        });
    }
    Ok(v)
}

fn transform(schema: &Schema, column: &str, value: f64, line: usize) -> Result<f64> {
    match schema.transformed(column) {
        None => Ok(value),
        Some(exp) => power_transform(value, exp).ok_or_else(|| Error::NegativeUnderTransform {
            column: column.to_owned(),
            line,
            value,
        }),
    }
}

fn column_position(table: &Table, name: &str) -> Result<usize> {
    table
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::SchemaMismatch(format!("column '{name}' not found in header")))
}

fn parse_numeric_column(table: &Table, pos: usize, name: &str, schema: &Schema) -> Result<Vec<Option<f64>>> {
    table
        .rows
        .iter()
        .map(|(line, fields)| {
            let raw = &fields[pos];
            if raw == &schema.missing || raw.is_empty() {
                Ok(None)
            } else {
                let v = parse_number(raw, *line, name)?;
                transform(schema, name, v, *line).map(Some)
            }
        })
        .collect()
}

fn parse_categorical_column(
    table: &Table,
    pos: usize,
    name: &str,
    schema: &Schema,
    fixed_levels: Option<&Vec<String>>,
) -> Result<CovariateColumn> {
    let levels: Vec<String> = match fixed_levels {
        Some(l) => l.clone(),
        None => {
            let set: BTreeSet<&str> = table
                .rows
                .iter()
                .map(|(_, f)| f[pos].as_str())
                .filter(|v| *v != schema.missing && !v.is_empty())
                .collect();
            set.into_iter().map(str::to_owned).collect()
        }
    };
    let index: HashMap<&str, u32> = levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
    let codes = table
        .rows
        .iter()
        .map(|(_, f)| {
            let raw = f[pos].as_str();
            if raw == schema.missing || raw.is_empty() {
                Ok(None)
            } else {
                index.get(raw).copied().map(Some).ok_or_else(|| Error::UnknownCategory {
                    column: name.to_owned(),
                    value: raw.to_owned(),
                })
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CovariateColumn::categorical(name, levels, codes))
}

fn parse_response(table: &Table, pos: usize, schema: &Schema) -> Result<Vec<f64>> {
    let name = &schema.response;
    table
        .rows
        .iter()
        .map(|(line, fields)| {
            let raw = &fields[pos];
            if raw == &schema.missing || raw.is_empty() {
                return Err(Error::Parse {
                    line: *line,
                    column: name.clone(),
                    message: "missing response".into(),
                });
            }
            let v = parse_number(raw, *line, name)?;
            transform(schema, name, v, *line)
        })
        .collect()
}

fn covariate_names(table: &Table, schema: &Schema) -> Vec<String> {
    match &schema.covariates {
        Some(list) => list.clone(),
        None => table
            .header
            .iter()
            .filter(|h| {
                **h != schema.response
                    && Some(*h) != schema.group.as_ref()
                    && Some(*h) != schema.weight.as_ref()
                    && !schema.exclude.contains(h)
            })
            .cloned()
            .collect(),
    }
}

fn load_from_reader<R: Read>(reader: R, schema: &Schema) -> Result<Dataset> {
    schema.validate()?;
    let table = read_table(reader, schema)?;
    let response = parse_response(&table, column_position(&table, &schema.response)?, schema)?;

    let mut columns = Vec::new();
    for name in covariate_names(&table, schema) {
        let pos = column_position(&table, &name)?;
        if schema.categorical.contains(&name) {
            columns.push(parse_categorical_column(&table, pos, &name, schema, schema.levels.get(&name))?);
        } else {
            columns.push(CovariateColumn::numeric(name.clone(), parse_numeric_column(&table, pos, &name, schema)?));
        }
    }
    let n = response.len();
    let covariates = Covariates::new(columns, n)?;

    let weights = match &schema.weight {
        None => vec![1.0; n],
        Some(w) => {
            let pos = column_position(&table, w)?;
            table
                .rows
                .iter()
                .map(|(line, f)| parse_number(&f[pos], *line, w))
                .collect::<Result<Vec<_>>>()?
        }
    };
    let groups = match &schema.group {
        None => None,
        Some(g) => {
            let pos = column_position(&table, g)?;
            Some(table.rows.iter().map(|(_, f)| f[pos].clone()).collect())
        }
    };
    Dataset::from_parts(schema.response.clone(), response, covariates, weights, groups)
}

/// Reads a delimited text file under `schema`.
pub fn load(path: impl AsRef<Path>, schema: &Schema) -> Result<Dataset> {
    load_from_reader(File::open(path)?, schema)
}

/// Reads covariates laid out as `layout` (typically a fitted model's), plus
/// the response when the file has one.
pub fn load_covariates(
    path: impl AsRef<Path>,
    schema: &Schema,
    layout: &[ColumnSpec],
) -> Result<(Covariates, Option<Vec<f64>>)> {
    schema.validate()?;
    let table = read_table(File::open(path)?, schema)?;
    let mut columns = Vec::with_capacity(layout.len());
    for spec in layout {
        let pos = column_position(&table, &spec.name)?;
        match spec.kind {
            ColumnKind::Numeric => columns.push(CovariateColumn::numeric(
                spec.name.clone(),
                parse_numeric_column(&table, pos, &spec.name, schema)?,
            )),
            ColumnKind::Categorical => {
                columns.push(parse_categorical_column(&table, pos, &spec.name, schema, Some(&spec.levels))?)
            }
        }
    }
    let covariates = Covariates::new(columns, table.rows.len())?;
    let response = match table.header.iter().position(|h| *h == schema.response) {
        Some(pos) => Some(parse_response(&table, pos, schema)?),
        None => None,
    };
    Ok((covariates, response))
}

fn write_to<W: Write>(writer: W, data: &Dataset, schema: &Schema) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter_byte())
        .from_writer(writer);
    let mut header = vec![data.response_name.clone()];
    header.extend(data.covariates.columns().iter().map(|c| c.name.clone()));
    if let Some(g) = &schema.group {
        header.push(g.clone());
    }
    if let Some(w) = &schema.weight {
        header.push(w.clone());
    }
    wtr.write_record(&header)?;
    for i in 0..data.n_rows() {
        let mut rec = vec![data.response[i].to_string()];
        for c in data.covariates.columns() {
            rec.push(match &c.data {
                ColumnData::Numeric(v) => v[i].map_or_else(|| schema.missing.clone(), |x| x.to_string()),
                ColumnData::Categorical { levels, codes } => {
                    codes[i].map_or_else(|| schema.missing.clone(), |l| levels[l as usize].clone())
                }
            });
        }
        if schema.group.is_some() {
            rec.push(data.groups.as_ref().map_or_else(String::new, |g| g[i].clone()));
        }
        if schema.weight.is_some() {
            rec.push(data.weights[i].to_string());
        }
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Writes `data` in the canonical delimited format and returns the schema
/// that reads it back exactly.
pub fn save(data: &Dataset, path: impl AsRef<Path>) -> Result<Schema> {
    let schema = Schema::describing(data);
    write_to(File::create(path)?, data, &schema)?;
    Ok(schema)
}
