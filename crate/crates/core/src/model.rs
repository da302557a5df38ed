//! Common prediction interface for forests, trees and the baselines.

use rayon::prelude::*;

use crate::baselines::{EmosModel, InterceptModel};
use crate::data::{ColumnSpec, CovariateValue, Covariates};
use crate::error::Result;
use crate::families::{DistributionFamily, Family, ParamVector};
use crate::forest::DistForest;
use crate::tree::DistTree;

/// A fitted family distribution at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Predictive {
    pub family: Family,
    pub theta: ParamVector,
}

impl Predictive {
    pub fn cdf(&self, y: f64) -> Result<f64> {
        self.family.cdf(&self.theta, y)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.family.quantile(&self.theta, p)
    }

    pub fn crps(&self, y: f64) -> Result<f64> {
        self.family.crps(&self.theta, y)
    }

    /// Probability of the censoring atom.
    pub fn point_mass(&self) -> Result<f64> {
        self.family.point_mass(&self.theta)
    }
}

pub trait DistributionalModel: Send + Sync {
    fn family(&self) -> Family;

    /// Covariate layout the model expects for prediction.
    fn layout(&self) -> &[ColumnSpec];

    fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector>;

    fn predict_distribution(&self, z: &[CovariateValue]) -> Result<Predictive> {
        Ok(Predictive {
            family: self.family(),
            theta: self.predict(z)?,
        })
    }

    /// Predictions for every row, in parallel; the first failing row (by
    /// index) determines the error.
    fn predict_all(&self, x: &Covariates) -> Result<Vec<ParamVector>> {
        x.check_layout(self.layout())?;
        (0..x.n_rows()).into_par_iter().map(|i| self.predict(&x.row(i))).collect()
    }
}

impl DistributionalModel for DistForest {
    fn family(&self) -> Family {
        self.family
    }

    fn layout(&self) -> &[ColumnSpec] {
        &self.layout
    }

    fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        DistForest::predict(self, z)
    }
}

impl DistributionalModel for DistTree {
    fn family(&self) -> Family {
        self.family
    }

    fn layout(&self) -> &[ColumnSpec] {
        &self.layout
    }

    fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        DistTree::predict(self, z)
    }
}

impl DistributionalModel for EmosModel {
    fn family(&self) -> Family {
        self.family
    }

    fn layout(&self) -> &[ColumnSpec] {
        &self.layout
    }

    fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        EmosModel::predict(self, z)
    }
}

impl DistributionalModel for InterceptModel {
    fn family(&self) -> Family {
        self.family
    }

    fn layout(&self) -> &[ColumnSpec] {
        &self.layout
    }

    fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        InterceptModel::predict(self, z)
    }
}
