//! Typed datasets: a non-negative response, covariate columns that may be
//! numeric or categorical (with missing values), case weights and an optional
//! grouping key.

mod io;
mod synthetic;

pub use io::{load, load_covariates, power_transform, save, PowerTransform, Schema};
pub use synthetic::{generate, ScenarioKind, SyntheticData, SyntheticScenario};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<Option<f64>>),
    /// Level codes index into `levels`.
    Categorical {
        levels: Vec<String>,
        codes: Vec<Option<u32>>,
    },
}

/// One value of a covariate row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovariateValue {
    Numeric(f64),
    Level(u32),
    Missing,
}

/// Name, kind and (for categorical columns) level set of a covariate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariateColumn {
    pub name: String,
    pub data: ColumnData,
}

impl CovariateColumn {
    pub fn numeric(name: impl Into<String>, values: Vec<Option<f64>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Numeric(values),
        }
    }

    pub fn numeric_dense(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self::numeric(name, values.into_iter().map(Some).collect())
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>, codes: Vec<Option<u32>>) -> Self {
        Self {
            name: name.into(),
            data: ColumnData::Categorical { levels, codes },
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn kind(&self) -> ColumnKind {
        match self.data {
            ColumnData::Numeric(_) => ColumnKind::Numeric,
            ColumnData::Categorical { .. } => ColumnKind::Categorical,
        }
    }

    pub fn n_levels(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(_) => 0,
            ColumnData::Categorical { levels, .. } => levels.len(),
        }
    }

    pub fn value(&self, row: usize) -> CovariateValue {
        match &self.data {
            ColumnData::Numeric(v) => v[row].map_or(CovariateValue::Missing, CovariateValue::Numeric),
            ColumnData::Categorical { codes, .. } => {
                codes[row].map_or(CovariateValue::Missing, CovariateValue::Level)
            }
        }
    }

    pub fn spec(&self) -> ColumnSpec {
        ColumnSpec {
            name: self.name.clone(),
            kind: self.kind(),
            levels: match &self.data {
                ColumnData::Numeric(_) => Vec::new(),
                ColumnData::Categorical { levels, .. } => levels.clone(),
            },
        }
    }

    /// Column whose row `i` holds this column's row `order[i]`.
    pub fn reordered(&self, order: &[usize]) -> Self {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(order.iter().map(|&i| v[i]).collect()),
            ColumnData::Categorical { levels, codes } => ColumnData::Categorical {
                levels: levels.clone(),
                codes: order.iter().map(|&i| codes[i]).collect(),
            },
        };
        Self {
            name: self.name.clone(),
            data,
        }
    }
}

/// Covariate columns of equal length.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariates {
    columns: Vec<CovariateColumn>,
    n_rows: usize,
}

impl Covariates {
    pub fn new(columns: Vec<CovariateColumn>, n_rows: usize) -> Result<Self> {
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::SchemaMismatch(format!(
                    "column '{}' has {} rows, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
            if let ColumnData::Categorical { levels, codes } = &c.data {
                if codes.iter().flatten().any(|&code| code as usize >= levels.len()) {
                    return Err(Error::SchemaMismatch(format!(
                        "column '{}' has a level code outside its level set",
                        c.name
                    )));
                }
            }
        }
        Ok(Self { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[CovariateColumn] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &CovariateColumn {
        &self.columns[j]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn row(&self, i: usize) -> Vec<CovariateValue> {
        self.columns.iter().map(|c| c.value(i)).collect()
    }

    pub fn layout(&self) -> Vec<ColumnSpec> {
        self.columns.iter().map(CovariateColumn::spec).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            columns: self.columns.iter().map(|c| c.reordered(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    /// Replaces column `j`; the replacement must keep name, kind and length.
    pub fn with_column(&self, j: usize, column: CovariateColumn) -> Result<Self> {
        let old = &self.columns[j];
        if column.len() != self.n_rows || column.kind() != old.kind() {
            return Err(Error::SchemaMismatch(format!(
                "replacement for column '{}' does not match its kind or length",
                old.name
            )));
        }
        let mut columns = self.columns.clone();
        columns[j] = column;
        Ok(Self {
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Checks that `layout` (e.g. from a fitted model) describes these columns.
    pub fn check_layout(&self, layout: &[ColumnSpec]) -> Result<()> {
        if layout.len() != self.columns.len() {
            return Err(Error::SchemaMismatch(format!(
                "expected {} covariates, found {}",
                layout.len(),
                self.columns.len()
            )));
        }
        for (spec, col) in layout.iter().zip(&self.columns) {
            let ours = col.spec();
            if ours.name != spec.name || ours.kind != spec.kind {
                return Err(Error::SchemaMismatch(format!(
                    "covariate '{}' ({:?}) does not match expected '{}' ({:?})",
                    ours.name, ours.kind, spec.name, spec.kind
                )));
            }
            if spec.kind == ColumnKind::Categorical && ours.levels != spec.levels {
                return Err(Error::SchemaMismatch(format!(
                    "levels of categorical covariate '{}' differ from the training levels",
                    spec.name
                )));
            }
        }
        Ok(())
    }
}

/// Checks a single covariate row against a column layout.
pub fn check_row(layout: &[ColumnSpec], row: &[CovariateValue]) -> Result<()> {
    if layout.len() != row.len() {
        return Err(Error::SchemaMismatch(format!(
            "row has {} values, model expects {}",
            row.len(),
            layout.len()
        )));
    }
    for (spec, v) in layout.iter().zip(row) {
        let ok = match (spec.kind, v) {
            (_, CovariateValue::Missing) => true,
            (ColumnKind::Numeric, CovariateValue::Numeric(x)) => x.is_finite(),
            (ColumnKind::Categorical, CovariateValue::Level(l)) => (*l as usize) < spec.levels.len(),
            _ => false,
        };
        if !ok {
            return Err(Error::SchemaMismatch(format!(
                "value {v:?} does not fit covariate '{}'",
                spec.name
            )));
        }
    }
    Ok(())
}

/// Response, covariates, case weights and optional group labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub response_name: String,
    pub response: Vec<f64>,
    pub covariates: Covariates,
    pub weights: Vec<f64>,
    pub groups: Option<Vec<String>>,
}

impl Dataset {
    /// Builds an unweighted dataset without groups.
    pub fn new(response_name: impl Into<String>, response: Vec<f64>, columns: Vec<CovariateColumn>) -> Result<Self> {
        let n = response.len();
        let covariates = Covariates::new(columns, n)?;
        Self::from_parts(response_name.into(), response, covariates, vec![1.0; n], None)
    }

    pub fn from_parts(
        response_name: String,
        response: Vec<f64>,
        covariates: Covariates,
        weights: Vec<f64>,
        groups: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = response.len();
        if covariates.n_rows() != n || weights.len() != n {
            return Err(Error::SchemaMismatch(format!(
                "{n} responses but {} covariate rows and {} weights",
                covariates.n_rows(),
                weights.len()
            )));
        }
        if let Some(g) = &groups {
            if g.len() != n {
                return Err(Error::SchemaMismatch(format!("{n} responses but {} group labels", g.len())));
            }
        }
        if let Some(bad) = response.iter().find(|y| !y.is_finite()) {
            return Err(Error::Domain(format!("non-finite response {bad}")));
        }
        if let Some(bad) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!("invalid case weight {bad}")));
        }
        if covariates.columns().iter().any(|c| c.name == response_name) {
            return Err(Error::SchemaMismatch(format!(
                "response '{response_name}' is also a covariate"
            )));
        }
        Ok(Self {
            response_name,
            response,
            covariates,
            weights,
            groups,
        })
    }

    pub fn with_groups(mut self, groups: Vec<String>) -> Result<Self> {
        if groups.len() != self.n_rows() {
            return Err(Error::SchemaMismatch("group labels do not match row count".into()));
        }
        self.groups = Some(groups);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.n_columns()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            response_name: self.response_name.clone(),
            response: rows.iter().map(|&i| self.response[i]).collect(),
            covariates: self.covariates.subset(rows),
            weights: rows.iter().map(|&i| self.weights[i]).collect(),
            groups: self.groups.as_ref().map(|g| rows.iter().map(|&i| g[i].clone()).collect()),
        }
    }

    /// First `n` rows and the remainder.
    pub fn split_at(&self, n: usize) -> (Self, Self) {
        let n = n.min(self.n_rows());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.n_rows()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    /// Training rows (groups not listed) and test rows (groups listed).
    pub fn split_by_group(&self, test_groups: &[&str]) -> Result<(Self, Self)> {
        let labels = self
            .groups
            .as_ref()
            .ok_or_else(|| Error::Config("splitting by group needs a group column".into()))?;
        if let Some(g) = test_groups.iter().find(|g| !labels.iter().any(|l| l == *g)) {
            return Err(Error::Config(format!("group `{g}` does not occur in the data")));
        }
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..self.n_rows()).partition(|&i| test_groups.contains(&labels[i].as_str()));
        Ok((self.subset(&train), self.subset(&test)))
    }

    pub fn with_covariates(&self, covariates: Covariates) -> Result<Self> {
        Self::from_parts(
            self.response_name.clone(),
            self.response.clone(),
            covariates,
            self.weights.clone(),
            self.groups.clone(),
        )
    }

    pub fn schema(&self) -> Schema {
        Schema::describing(self)
    }
}
