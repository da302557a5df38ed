//! Distributional trees grown by score-based permutation tests.
//!
//! In each node the family is refitted by maximum likelihood, the scores at
//! the node estimate are tested for association with each candidate
//! covariate, the variable with the smallest Bonferroni-adjusted p-value is
//! split at the point of maximal score discrepancy, and the procedure recurses
//! until the node is too small or nothing is significant.

mod independence;
mod split;

pub use independence::{select_variable, test_association, AssociationTest, Statistic};
pub use split::{select_split, Split, SplitObjective, SplitRule, MAX_ENUMERATED_LEVELS, MAX_NUMERIC_CANDIDATES};

use rand::seq::index::sample as sample_indices;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{check_row, ColumnSpec, CovariateValue, Dataset};
use crate::error::{Error, Result};
use crate::families::{DistributionFamily, Family, ParamVector};
use crate::mle::{self, WeightedSample};
use independence::{association_for_rows, ranked_variables};
use split::{best_split, NodeRows};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// Nodes with fewer rows are not split.
    pub minsplit: usize,
    /// Minimum rows in each child.
    pub minbucket: usize,
    /// Significance level for the Bonferroni-adjusted variable tests.
    pub alpha: f64,
    /// Variables tested per node; `None` tests all.
    pub mtry: Option<usize>,
    pub statistic: Statistic,
    pub split_objective: SplitObjective,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            minsplit: 50,
            minbucket: 20,
            alpha: 1.0,
            mtry: None,
            statistic: Statistic::Quadratic,
            split_objective: SplitObjective::MaxStatistic,
        }
    }
}

impl TreeConfig {
    pub fn validate(&self, n_covariates: usize) -> Result<()> {
        if self.minbucket == 0 {
            return Err(Error::Config("minbucket must be at least 1".into()));
        }
        if self.minsplit < 2 * self.minbucket {
            return Err(Error::Config(format!(
                "minsplit ({}) must be at least 2 * minbucket ({})",
                self.minsplit, self.minbucket
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > n_covariates {
                return Err(Error::Config(format!("mtry = {m} outside [1, {n_covariates}]")));
            }
        }
        Ok(())
    }
}

/// An internal node's split together with its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub variable: usize,
    pub rule: SplitRule,
    pub statistic: f64,
    pub left: usize,
    pub right: usize,
    /// Child receiving missing values and unseen levels.
    pub majority_left: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Node {
    Split(SplitRecord),
    Leaf {
        theta: ParamVector,
        /// Training row ids in this leaf, ascending.
        members: Vec<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistTree {
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
    pub config: TreeConfig,
    pub family: Family,
    pub layout: Vec<ColumnSpec>,
    /// Number of training rows indexed by leaf members.
    pub n_train: usize,
}

/// Routes one covariate row through a split.
fn goes_left(record: &SplitRecord, z: &[CovariateValue]) -> bool {
    match (&record.rule, z[record.variable]) {
        (SplitRule::Threshold(t), CovariateValue::Numeric(x)) => x <= *t,
        (SplitRule::Levels { left, right }, CovariateValue::Level(l)) => {
            if left.contains(&l) {
                true
            } else if right.contains(&l) {
                false
            } else {
                record.majority_left
            }
        }
        _ => record.majority_left,
    }
}

impl DistTree {
    /// Grows a tree on every row of `data`, testing all variables in every
    /// node unless `config.mtry` says otherwise.
    pub fn grow(data: &Dataset, family: Family, config: TreeConfig, rng: &mut dyn RngCore) -> Result<Self> {
        let rows: Vec<usize> = (0..data.n_rows()).collect();
        Self::grow_on_rows(data, family, &rows, config, rng)
    }

    /// Grows a tree on the subset `rows` of `data`; leaf members are ids
    /// into `data`.
    pub fn grow_on_rows(
        data: &Dataset,
        family: Family,
        rows: &[usize],
        config: TreeConfig,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        config.validate(data.n_covariates())?;
        if rows.is_empty() {
            return Err(Error::DegenerateSample("no rows to grow a tree on".into()));
        }
        let mut grower = Grower {
            data,
            family: &family,
            config: &config,
            rng,
            nodes: Vec::new(),
        };
        grower.grow_node(rows.to_vec())?;
        Ok(Self {
            nodes: grower.nodes,
            config,
            family,
            layout: data.covariates.layout(),
            n_train: data.n_rows(),
        })
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split(s) => 1 + go(nodes, s.left).max(go(nodes, s.right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Ids of the leaf nodes in storage order.
    pub fn leaves(&self) -> impl Iterator<Item = (usize, &ParamVector, &[usize])> {
        self.nodes.iter().enumerate().filter_map(|(id, n)| match n {
            Node::Leaf { theta, members } => Some((id, theta, members.as_slice())),
            Node::Split(_) => None,
        })
    }

    /// Variables used by any split.
    pub fn split_variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split(s) => Some(s.variable),
                Node::Leaf { .. } => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Leaf node reached by `z`; `z` must follow the training layout.
    pub fn leaf_of(&self, z: &[CovariateValue]) -> Result<usize> {
        check_row(&self.layout, z)?;
        Ok(self.leaf_of_unchecked(z))
    }

    pub(crate) fn leaf_of_unchecked(&self, z: &[CovariateValue]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { .. } => return id,
                Node::Split(s) => id = if goes_left(s, z) { s.left } else { s.right },
            }
        }
    }

    pub(crate) fn leaf_members(&self, leaf: usize) -> &[usize] {
        match &self.nodes[leaf] {
            Node::Leaf { members, .. } => members,
            Node::Split(_) => &[],
        }
    }

    pub(crate) fn leaf_theta(&self, leaf: usize) -> ParamVector {
        match &self.nodes[leaf] {
            Node::Leaf { theta, .. } => *theta,
            Node::Split(_) => unreachable!("leaf_of returns leaves only"),
        }
    }

    /// Co-membership indicator of `z` with every training row.
    pub fn tree_weights(&self, z: &[CovariateValue]) -> Result<Vec<f64>> {
        let leaf = self.leaf_of(z)?;
        let mut w = vec![0.0; self.n_train];
        for &i in self.leaf_members(leaf) {
            w[i] = 1.0;
        }
        Ok(w)
    }

    /// Stored parameter estimate of the leaf `z` falls into.
    pub fn predict(&self, z: &[CovariateValue]) -> Result<ParamVector> {
        Ok(self.leaf_theta(self.leaf_of(z)?))
    }
}

struct Grower<'a> {
    data: &'a Dataset,
    family: &'a Family,
    config: &'a TreeConfig,
    rng: &'a mut dyn RngCore,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn fit_node(&self, rows: &[usize]) -> Result<ParamVector> {
        let y = rows.iter().map(|&i| self.data.response[i]).collect();
        let w = rows.iter().map(|&i| self.data.weights[i]).collect();
        Ok(mle::fit(self.family, &WeightedSample::new(y, w)?, None)?.theta)
    }

    fn push_leaf(&mut self, theta: ParamVector, mut rows: Vec<usize>) -> usize {
        rows.sort_unstable();
        self.nodes.push(Node::Leaf { theta, members: rows });
        self.nodes.len() - 1
    }

    fn candidate_variables(&mut self) -> Vec<usize> {
        let m = self.data.n_covariates();
        match self.config.mtry {
            Some(k) if k < m => {
                let mut v = sample_indices(&mut *self.rng, m, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..m).collect(),
        }
    }

    fn grow_node(&mut self, rows: Vec<usize>) -> Result<usize> {
        let theta = self.fit_node(&rows)?;
        if rows.len() < self.config.minsplit || self.data.n_covariates() == 0 {
            return Ok(self.push_leaf(theta, rows));
        }

        let scores: Vec<[f64; 2]> = rows
            .iter()
            .map(|&i| self.family.score_raw(theta.mu, theta.sigma, self.data.response[i]))
            .collect();
        let weights: Vec<f64> = rows.iter().map(|&i| self.data.weights[i]).collect();
        let censored: Vec<bool> = rows.iter().map(|&i| self.family.is_censored(self.data.response[i])).collect();

        let variables = self.candidate_variables();
        let tests: Vec<AssociationTest> = variables
            .iter()
            .map(|&j| association_for_rows(&scores, &weights, self.data.covariates.column(j), &rows, self.config.statistic))
            .collect();

        let node = NodeRows {
            rows: &rows,
            scores: &scores,
            weights: &weights,
            censored: &censored,
        };
        let mut chosen = None;
        for idx in ranked_variables(&tests, self.config.alpha) {
            let j = variables[idx];
            match best_split(
                &node,
                self.data.covariates.column(j),
                j,
                self.config.minbucket,
                self.config.statistic,
                self.config.split_objective,
            ) {
                Ok(split) => {
                    chosen = Some(split);
                    break;
                }
                Err(Error::NoAdmissibleSplit { .. }) => continue,
                Err(e) => return Err(e),
            }
        }
        let Some(split) = chosen else {
            return Ok(self.push_leaf(theta, rows));
        };

        let column = self.data.covariates.column(split.variable);
        let mut left = Vec::new();
        let mut right = Vec::new();
        let mut undecided = Vec::new();
        for &i in &rows {
            let v = column.value(i);
            let side = match (&split.rule, v) {
                (SplitRule::Threshold(t), CovariateValue::Numeric(x)) => Some(x <= *t),
                (SplitRule::Levels { left, right }, CovariateValue::Level(l)) => {
                    if left.contains(&l) {
                        Some(true)
                    } else if right.contains(&l) {
                        Some(false)
                    } else {
                        None
                    }
                }
                _ => None,
            };
            match side {
                Some(true) => left.push(i),
                Some(false) => right.push(i),
                None => undecided.push(i),
            }
        }
        let majority_left = left.len() >= right.len();
        if majority_left {
            left.extend(undecided);
        } else {
            right.extend(undecided);
        }

        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            theta,
            members: Vec::new(),
        });
        let left_id = match self.grow_node(left) {
            Ok(c) => c,
            Err(e) => return self.abandon_split(id, theta, rows, e),
        };
        let right_id = match self.grow_node(right) {
            Ok(c) => c,
            Err(e) => return self.abandon_split(id, theta, rows, e),
        };
        self.nodes[id] = Node::Split(SplitRecord {
            variable: split.variable,
            rule: split.rule,
            statistic: split.statistic,
            left: left_id,
            right: right_id,
            majority_left,
        });
        Ok(id)
    }

    /// Turns node `id` back into a leaf when a child cannot be fitted.
    fn abandon_split(&mut self, id: usize, theta: ParamVector, mut rows: Vec<usize>, err: Error) -> Result<usize> {
        match err {
            Error::DegenerateSample(_) | Error::NonConvergence { .. } => {
                self.nodes.truncate(id);
                rows.sort_unstable();
                self.nodes.push(Node::Leaf { theta, members: rows });
                Ok(id)
            }
            other => Err(other),
        }
    }
}
