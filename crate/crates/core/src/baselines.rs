//! Reference models: EMOS (censored regression with a linear location
//! predictor and a log-linear scale predictor) and the intercept-only fit.

use serde::{Deserialize, Serialize};

use crate::data::{check_row, ColumnData, ColumnSpec, CovariateValue, Dataset};
use crate::error::{Error, Result};
use crate::families::{DistributionFamily, Family, ParamVector};
use crate::mle::{self, NewtonOptions, Objective, WeightedSample};

/// Spread values are floored here before a log transform.
pub const SPREAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScaleTransform {
    Identity,
    #[default]
    Log,
}

impl ScaleTransform {
    pub fn apply(self, x: f64) -> Result<f64> {
        match self {
            ScaleTransform::Identity => Ok(x),
            ScaleTransform::Log if x < 0.0 => Err(Error::Domain(format!(
                "scale regressor must be non-negative under the log transform, got {x}"
            ))),
            ScaleTransform::Log => Ok(x.max(SPREAD_FLOOR).ln()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosSpec {
    pub loc_column: String,
    pub scale_column: String,
    #[serde(default)]
    pub scale_transform: ScaleTransform,
    /// Fix both slopes at zero, leaving only the intercepts free.
    #[serde(default)]
    pub intercept_only: bool,
}

impl EmosSpec {
    pub fn new(loc_column: impl Into<String>, scale_column: impl Into<String>) -> Self {
        Self {
            loc_column: loc_column.into(),
            scale_column: scale_column.into(),
            scale_transform: ScaleTransform::Log,
            intercept_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmosModel {
    /// Location intercept and slope.
    pub beta: [f64; 2],
    /// Log-scale intercept and slope.
    pub gamma: [f64; 2],
    pub loc_column: String,
    pub scale_column: String,
    pub loc_index: usize,
    pub scale_index: usize,
    pub scale_transform: ScaleTransform,
    pub family: Family,
    pub layout: Vec<ColumnSpec>,
    /// Weighted training log-likelihood at the optimum.
    pub loglik: f64,
    pub iterations: usize,
}

struct EmosObjective<'a> {
    family: &'a Family,
    y: &'a [f64],
    w: &'a [f64],
    x_loc: &'a [f64],
    t_scale: &'a [f64],
    intercept_only: bool,
}

impl EmosObjective<'_> {
    fn coefficients(&self, x: &[f64]) -> [f64; 4] {
        if self.intercept_only {
            [x[0], 0.0, x[1], 0.0]
        } else {
            [x[0], x[1], x[2], x[3]]
        }
    }
}

fn linear_params(c: &[f64; 4], x_loc: f64, t_scale: f64) -> (f64, f64) {
    (c[0] + c[1] * x_loc, (c[2] + c[3] * t_scale).exp())
}

impl Objective for EmosObjective<'_> {
    fn dim(&self) -> usize {
        if self.intercept_only {
            2
        } else {
            4
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let c = self.coefficients(x);
        (0..self.y.len())
            .map(|i| {
                let (mu, sigma) = linear_params(&c, self.x_loc[i], self.t_scale[i]);
                self.w[i] * self.family.loglik_raw(mu, sigma, self.y[i])
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let c = self.coefficients(x);
        let mut g = [0.0; 4];
        for i in 0..self.y.len() {
            let (mu, sigma) = linear_params(&c, self.x_loc[i], self.t_scale[i]);
            let s = self.family.score_raw(mu, sigma, self.y[i]);
            let (a, b) = (self.w[i] * s[0], self.w[i] * s[1] * sigma);
            g[0] += a;
            g[1] += a * self.x_loc[i];
            g[2] += b;
            g[3] += b * self.t_scale[i];
        }
        if self.intercept_only {
            vec![g[0], g[2]]
        } else {
            g.to_vec()
        }
    }
}

fn dense_numeric(data: &Dataset, name: &str) -> Result<(usize, Vec<f64>)> {
    let j = data
        .covariates
        .index_of(name)
        .ok_or_else(|| Error::Config(format!("unknown column `{name}`")))?;
    match &data.covariates.column(j).data {
        ColumnData::Numeric(values) => {
            let dense = values
                .iter()
                .enumerate()
                .map(|(i, v)| v.ok_or_else(|| Error::MissingInput(format!("`{name}` is missing in row {i}"))))
                .collect::<Result<Vec<f64>>>()?;
            Ok((j, dense))
        }
        ColumnData::Categorical { .. } => Err(Error::Config(format!("column `{name}` is not numeric"))),
    }
}

fn has_variance(values: &[f64], w: &[f64]) -> bool {
    let first = values.iter().zip(w).find(|(_, w)| **w > 0.0).map(|(v, _)| *v);
    match first {
        None => false,
        Some(v0) => values.iter().zip(w).any(|(v, w)| *w > 0.0 && *v != v0),
    }
}

/// Maximum-likelihood EMOS fit on all rows of `data`.
pub fn fit_emos(data: &Dataset, family: Family, spec: &EmosSpec) -> Result<EmosModel> {
    let (loc_index, x_loc) = dense_numeric(data, &spec.loc_column)?;
    let (scale_index, x_scale) = dense_numeric(data, &spec.scale_column)?;
    let t_scale = x_scale
        .iter()
        .map(|&v| spec.scale_transform.apply(v))
        .collect::<Result<Vec<f64>>>()?;
    let w = &data.weights;
    if !spec.intercept_only {
        for (name, values) in [(&spec.loc_column, &x_loc), (&spec.scale_column, &t_scale)] {
            if !has_variance(values, w) {
                return Err(Error::Collinear(format!("column `{name}` has zero variance")));
            }
        }
    }

    // start from the global fit with zero slopes
    let global = mle::fit(&family, &WeightedSample::new(data.response.clone(), w.clone())?, None)?;
    let x0 = if spec.intercept_only {
        vec![global.theta.mu, global.theta.sigma.ln()]
    } else {
        vec![global.theta.mu, 0.0, global.theta.sigma.ln(), 0.0]
    };
    let objective = EmosObjective {
        family: &family,
        y: &data.response,
        w,
        x_loc: &x_loc,
        t_scale: &t_scale,
        intercept_only: spec.intercept_only,
    };
    let total: f64 = w.iter().sum();
    let opts = NewtonOptions {
        tolerance: 1e-8 * total,
        max_iterations: 100,
    };
    let opt = mle::maximize(&objective, &x0, opts);
    if !opt.converged {
        return Err(Error::NonConvergence {
            best: opt.x,
            iterations: opt.iterations,
            gradient_norm: opt.stationarity,
        });
    }
    let c = objective.coefficients(&opt.x);
    Ok(EmosModel {
        beta: [c[0], c[1]],
        gamma: [c[2], c[3]],
        loc_column: spec.loc_column.clone(),
        scale_column: spec.scale_column.clone(),
        loc_index,
        scale_index,
        scale_transform: spec.scale_transform,
        family,
        layout: data.covariates.layout(),
        loglik: opt.value,
        iterations: opt.iterations,
    })
}

impl EmosModel {
    /// Parameters for given raw regressor values.
    pub fn params_at(&self, x_loc: f64, x_scale: f64) -> Result<ParamVector> {
        let t = self.scale_transform.apply(x_scale)?;
        let c = [self.beta[0], self.beta[1], self.gamma[0], self.gamma[1]];
        let (mu, sigma) = linear_params(&c, x_loc, t);
        ParamVector::new(mu, sigma)
    }

    pub fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        check_row(&self.layout, z)?;
        let get = |j: usize, name: &str| match z[j] {
            CovariateValue::Numeric(v) => Ok(v),
            _ => Err(Error::MissingInput(format!("`{name}` is missing"))),
        };
        self.params_at(get(self.loc_index, &self.loc_column)?, get(self.scale_index, &self.scale_column)?)
    }
}

/// Unconditional fit: the same distribution for every covariate row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterceptModel {
    pub theta: ParamVector,
    pub family: Family,
    pub layout: Vec<ColumnSpec>,
    pub loglik: f64,
}

pub fn fit_intercept(data: &Dataset, family: Family) -> Result<InterceptModel> {
    let sample = WeightedSample::new(data.response.clone(), data.weights.clone())?;
    let fit = mle::fit(&family, &sample, None)?;
    Ok(InterceptModel {
        theta: fit.theta,
        family,
        layout: data.covariates.layout(),
        loglik: fit.loglik_value,
    })
}

impl InterceptModel {
    pub fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        check_row(&self.layout, z)?;
        Ok(self.theta)
    }
}
