//! Distributional forests: subsampled distributional trees whose
//! co-membership counts define nearest-neighbor weights for a weighted
//! likelihood fit at every query point.

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{check_row, ColumnSpec, CovariateValue, Dataset};
use crate::error::{Error, Result};
use crate::families::{Family, ParamVector};
use crate::mle;
use crate::tree::{DistTree, SplitObjective, Statistic, TreeConfig};

/// Attempts per tree before it is skipped.
const TREE_ATTEMPTS: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub ntree: usize,
    /// Variables drawn per split; `None` means `ceil(m / 3)`.
    pub mtry: Option<usize>,
    /// Fraction of rows drawn without replacement for each tree.
    pub subsample_fraction: f64,
    pub minsplit: usize,
    pub minbucket: usize,
    pub alpha: f64,
    pub statistic: Statistic,
    pub split_objective: SplitObjective,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            ntree: 100,
            mtry: None,
            subsample_fraction: 0.632,
            minsplit: 50,
            minbucket: 20,
            alpha: 1.0,
            statistic: Statistic::Quadratic,
            split_objective: SplitObjective::MaxStatistic,
            seed: 1,
        }
    }
}

impl ForestConfig {
    pub fn resolved_mtry(&self, n_covariates: usize) -> usize {
        self.mtry.unwrap_or_else(|| n_covariates.div_ceil(3)).clamp(1, n_covariates.max(1))
    }

    pub fn tree_config(&self, n_covariates: usize) -> TreeConfig {
        TreeConfig {
            minsplit: self.minsplit,
            minbucket: self.minbucket,
            alpha: self.alpha,
            mtry: Some(self.resolved_mtry(n_covariates)),
            statistic: self.statistic,
            split_objective: self.split_objective,
        }
    }

    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.ntree == 0 {
            return Err(Error::Config("ntree must be at least 1".into()));
        }
        if !(self.subsample_fraction > 0.0 && self.subsample_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "subsample_fraction must lie in (0, 1], got {}",
                self.subsample_fraction
            )));
        }
        if n_covariates == 0 {
            return Err(Error::Config("a forest needs at least one covariate".into()));
        }
        self.tree_config(n_covariates).validate(n_covariates)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistForest {
    pub trees: Vec<DistTree>,
    /// Training rows each tree was grown on, ascending.
    pub subsamples: Vec<Vec<usize>>,
    pub config: ForestConfig,
    pub family: Family,
    pub layout: Vec<ColumnSpec>,
    /// Training responses and case weights for the weighted refits; empty in
    /// slim form.
    pub train_response: Vec<f64>,
    pub train_weights: Vec<f64>,
    /// Trees that could not be grown after all attempts.
    pub skipped_trees: usize,
}

fn tree_rng(seed: u64, tree: usize, attempt: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64 * TREE_ATTEMPTS + attempt);
    rng
}

fn grow_one(data: &Dataset, family: Family, config: &ForestConfig, t: usize) -> Option<(DistTree, Vec<usize>)> {
    let n = data.n_rows();
    let tree_config = config.tree_config(data.n_covariates());
    for attempt in 0..TREE_ATTEMPTS {
        let mut rng = tree_rng(config.seed, t, attempt);
        let rows: Vec<usize> = if config.subsample_fraction >= 1.0 {
            (0..n).collect()
        } else {
            let size = ((config.subsample_fraction * n as f64).round() as usize).clamp(1, n);
            let mut r = sample_indices(&mut rng, n, size).into_vec();
            r.sort_unstable();
            r
        };
        match DistTree::grow_on_rows(data, family, &rows, tree_config, &mut rng) {
            Ok(tree) => return Some((tree, rows)),
            Err(e) => log::warn!("tree {t}, attempt {attempt}: {e}"),
        }
    }
    None
}

impl DistForest {
    /// Grows `config.ntree` trees in parallel. Tree `t` draws from its own
    /// random stream, so results do not depend on scheduling.
    pub fn grow(data: &Dataset, family: Family, config: ForestConfig) -> Result<Self> {
        config.validate(data.n_covariates())?;
        if data.n_rows() == 0 {
            return Err(Error::DegenerateSample("empty training data".into()));
        }
        let grown: Vec<Option<(DistTree, Vec<usize>)>> = (0..config.ntree)
            .into_par_iter()
            .map(|t| grow_one(data, family, &config, t))
            .collect();
        let skipped_trees = grown.iter().filter(|g| g.is_none()).count();
        let (trees, subsamples): (Vec<_>, Vec<_>) = grown.into_iter().flatten().unzip();
        if trees.is_empty() {
            return Err(Error::DegenerateSample(format!(
                "none of the {} trees could be grown",
                config.ntree
            )));
        }
        if skipped_trees > 0 {
            log::warn!("{skipped_trees} of {} trees skipped", config.ntree);
        }
        Ok(Self {
            trees,
            subsamples,
            config,
            family,
            layout: data.covariates.layout(),
            train_response: data.response.clone(),
            train_weights: data.weights.clone(),
            skipped_trees,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_train(&self) -> usize {
        self.trees.first().map_or(0, |t| t.n_train)
    }

    pub fn is_slim(&self) -> bool {
        self.train_response.is_empty()
    }

    /// Drops training responses and leaf member lists; the result can be
    /// stored compactly but no longer predicts.
    pub fn into_slim(mut self) -> Self {
        self.train_response.clear();
        self.train_weights.clear();
        for tree in &mut self.trees {
            for node in &mut tree.nodes {
                if let crate::tree::Node::Leaf { members, .. } = node {
                    members.clear();
                }
            }
        }
        self
    }

    /// Averaged nearest-neighbor weights of `z` over all training rows.
    pub fn forest_weights(&self, z: &[CovariateValue]) -> Result<Vec<f64>> {
        check_row(&self.layout, z)?;
        if self.is_slim() {
            return Err(Error::MissingInput("slim forest has no leaf membership".into()));
        }
        Ok(self.forest_weights_unchecked(z))
    }

    fn forest_weights_unchecked(&self, z: &[CovariateValue]) -> Vec<f64> {
        let mut w = vec![0.0; self.n_train()];
        let t = self.trees.len() as f64;
        for tree in &self.trees {
            let members = tree.leaf_members(tree.leaf_of_unchecked(z));
            let share = 1.0 / (t * members.len() as f64);
            for &i in members {
                w[i] += share;
            }
        }
        w
    }

    /// Weighted likelihood estimate at `z`.
    pub fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        let w = self.forest_weights(z)?;
        let combined: Vec<f64> = w.iter().zip(&self.train_weights).map(|(a, b)| a * b).collect();
        mle::fit_from_weights(&self.family, &self.train_response, &combined).map_err(|e| match e {
            Error::DegenerateSample(msg) => Error::DegenerateSample(format!("{msg} (query {z:?})")),
            other => other,
        })
    }

    /// Variables used by any split of any tree.
    pub fn split_variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.trees.iter().flat_map(|t| t.split_variables()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}
