//! Split-point search for the selected variable.
//!
//! Every candidate binary partition is scored with the standardized linear
//! statistic of the scores against the two-level partition indicator, using
//! the same permutation moments as the variable tests.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::independence::{standardize, ScoreMoments, Statistic};
use crate::data::ColumnData;
use crate::data::CovariateColumn;
use crate::error::{Error, Result};

/// Candidate thresholds beyond this count are thinned to quantile positions.
pub const MAX_NUMERIC_CANDIDATES: usize = 50;

/// Categorical variables with more observed levels than this use ordered
/// prefix splits instead of full enumeration.
pub const MAX_ENUMERATED_LEVELS: usize = 10;

/// How split candidates are ranked by their standardized statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitObjective {
    /// Largest discrepancy between the two subgroups.
    #[default]
    MaxStatistic,
    /// Literal argmin reading of the split-point formula.
    MinStatistic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitRule {
    /// `z <= threshold` goes left.
    Threshold(f64),
    /// Level codes sent left and right; other levels follow the majority.
    Levels { left: Vec<u32>, right: Vec<u32> },
}

/// A chosen split before it is attached to child nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub variable: usize,
    pub rule: SplitRule,
    pub statistic: f64,
}

/// Sufficient statistics of the binary indicator test for one candidate.
struct BinaryScorer {
    total: f64,
    mean: [f64; 2],
    cov: DMatrix<f64>,
    statistic: Statistic,
}

impl BinaryScorer {
    fn new(scores: &[[f64; 2]], weights: &[f64], statistic: Statistic) -> Self {
        let m = ScoreMoments::new(scores, weights);
        let cov = DMatrix::from_row_slice(2, 2, &[m.cov[0][0], m.cov[0][1], m.cov[1][0], m.cov[1][1]]);
        Self {
            total: m.total,
            mean: m.mean,
            cov,
            statistic,
        }
    }

    /// Statistic for a left group of weight `n_left` with score sum `sum_left`.
    fn score(&self, n_left: f64, sum_left: [f64; 2]) -> f64 {
        let n = self.total;
        let centered = [sum_left[0] - n_left * self.mean[0], sum_left[1] - n_left * self.mean[1]];
        // Σ = n/(n-1) · V · n_left (n - n_left) / n
        let scale = n_left * (n - n_left) / (n - 1.0);
        let sigma = &self.cov * scale;
        standardize(&centered, &sigma, self.statistic).0
    }
}

fn better(objective: SplitObjective, candidate: f64, incumbent: f64) -> bool {
    match objective {
        SplitObjective::MaxStatistic => candidate > incumbent,
        SplitObjective::MinStatistic => candidate < incumbent,
    }
}

/// Per-row inputs for split search over the rows of one node.
pub(crate) struct NodeRows<'a> {
    pub rows: &'a [usize],
    pub scores: &'a [[f64; 2]],
    pub weights: &'a [f64],
    pub censored: &'a [bool],
}

/// Best admissible split of `column` for the node.
///
/// Admissible splits leave at least `minbucket` non-missing rows and at
/// least one uncensored response on each side.
pub(crate) fn best_split(
    node: &NodeRows<'_>,
    column: &CovariateColumn,
    variable: usize,
    minbucket: usize,
    statistic: Statistic,
    objective: SplitObjective,
) -> Result<Split> {
    match &column.data {
        ColumnData::Numeric(values) => numeric_split(node, values, variable, minbucket, statistic, objective),
        ColumnData::Categorical { codes, .. } => {
            categorical_split(node, codes, variable, minbucket, statistic, objective)
        }
    }
}

fn numeric_split(
    node: &NodeRows<'_>,
    values: &[Option<f64>],
    variable: usize,
    minbucket: usize,
    statistic: Statistic,
    objective: SplitObjective,
) -> Result<Split> {
    let mut present: Vec<(f64, usize)> = node
        .rows
        .iter()
        .enumerate()
        .filter_map(|(i, &row)| values[row].map(|v| (v, i)))
        .collect();
    present.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let n = present.len();
    let no_split = Error::NoAdmissibleSplit { minbucket };
    if n < 2 {
        return Err(no_split);
    }

    let scores: Vec<[f64; 2]> = present.iter().map(|&(_, i)| node.scores[i]).collect();
    let weights: Vec<f64> = present.iter().map(|&(_, i)| node.weights[i]).collect();
    let scorer = BinaryScorer::new(&scores, &weights, statistic);
    let total_uncensored = present.iter().filter(|&&(_, i)| !node.censored[i]).count();

    // cumulative sums over the sorted rows; position k splits after row k
    let mut cum_w = Vec::with_capacity(n);
    let mut cum_s = Vec::with_capacity(n);
    let mut cum_unc = Vec::with_capacity(n);
    let (mut w, mut s, mut u) = (0.0, [0.0; 2], 0usize);
    for (k, &(_, i)) in present.iter().enumerate() {
        w += weights[k];
        s[0] += weights[k] * scores[k][0];
        s[1] += weights[k] * scores[k][1];
        if !node.censored[i] {
            u += 1;
        }
        cum_w.push(w);
        cum_s.push(s);
        cum_unc.push(u);
    }

    let admissible: Vec<usize> = (0..n - 1)
        .filter(|&k| {
            let left = k + 1;
            present[k].0 < present[k + 1].0
                && left >= minbucket
                && n - left >= minbucket
                && cum_unc[k] >= 1
                && total_uncensored - cum_unc[k] >= 1
        })
        .collect();
    if admissible.is_empty() {
        return Err(no_split);
    }
    let candidates: Vec<usize> = if admissible.len() > MAX_NUMERIC_CANDIDATES {
        let last = (admissible.len() - 1) as f64;
        let mut picked: Vec<usize> = (0..MAX_NUMERIC_CANDIDATES)
            .map(|j| admissible[(j as f64 * last / (MAX_NUMERIC_CANDIDATES - 1) as f64).round() as usize])
            .collect();
        picked.dedup();
        picked
    } else {
        admissible
    };

    let mut best: Option<(usize, f64)> = None;
    for &k in &candidates {
        let stat = scorer.score(cum_w[k], cum_s[k]);
        if best.is_none_or(|(_, b)| better(objective, stat, b)) {
            best = Some((k, stat));
        }
    }
    let (k, stat) = best.ok_or(no_split)?;
    let (lo, hi) = (present[k].0, present[k + 1].0);
    let mut threshold = 0.5 * (lo + hi);
    if !(threshold >= lo && threshold < hi) {
        threshold = lo;
    }
    Ok(Split {
        variable,
        rule: SplitRule::Threshold(threshold),
        statistic: stat,
    })
}

struct LevelSummary {
    code: u32,
    count: usize,
    weight: f64,
    sum: [f64; 2],
    uncensored: usize,
}

fn categorical_split(
    node: &NodeRows<'_>,
    codes: &[Option<u32>],
    variable: usize,
    minbucket: usize,
    statistic: Statistic,
    objective: SplitObjective,
) -> Result<Split> {
    let no_split = Error::NoAdmissibleSplit { minbucket };
    let mut levels: Vec<LevelSummary> = Vec::new();
    let mut scores = Vec::new();
    let mut weights = Vec::new();
    for (i, &row) in node.rows.iter().enumerate() {
        let Some(code) = codes[row] else { continue };
        scores.push(node.scores[i]);
        weights.push(node.weights[i]);
        let entry = match levels.iter_mut().position(|l| l.code == code) {
            Some(p) => &mut levels[p],
            None => {
                levels.push(LevelSummary {
                    code,
                    count: 0,
                    weight: 0.0,
                    sum: [0.0; 2],
                    uncensored: 0,
                });
                levels.last_mut().expect("just pushed")
            }
        };
        let w = node.weights[i];
        entry.count += 1;
        entry.weight += w;
        entry.sum[0] += w * node.scores[i][0];
        entry.sum[1] += w * node.scores[i][1];
        if !node.censored[i] {
            entry.uncensored += 1;
        }
    }
    if levels.len() < 2 {
        return Err(no_split);
    }
    levels.sort_by_key(|l| l.code);
    let scorer = BinaryScorer::new(&scores, &weights, statistic);
    let n_total: usize = levels.iter().map(|l| l.count).sum();
    let unc_total: usize = levels.iter().map(|l| l.uncensored).sum();

    // Each candidate is a list of indices into `levels` sent left.
    let candidates: Vec<Vec<usize>> = if levels.len() <= MAX_ENUMERATED_LEVELS {
        let free = levels.len() - 1;
        (1u32..(1u32 << free))
            .map(|mask| (0..free).filter(|b| mask & (1 << b) != 0).collect())
            .collect()
    } else {
        let mut order: Vec<usize> = (0..levels.len()).collect();
        order.sort_by(|&a, &b| {
            let ma = levels[a].sum[0] / levels[a].weight;
            let mb = levels[b].sum[0] / levels[b].weight;
            ma.total_cmp(&mb).then(a.cmp(&b))
        });
        (1..order.len()).map(|k| order[..k].to_vec()).collect()
    };

    let mut best: Option<(&Vec<usize>, f64)> = None;
    for cand in &candidates {
        let count: usize = cand.iter().map(|&l| levels[l].count).sum();
        let unc: usize = cand.iter().map(|&l| levels[l].uncensored).sum();
        if count < minbucket || n_total - count < minbucket || unc < 1 || unc_total - unc < 1 {
            continue;
        }
        let weight: f64 = cand.iter().map(|&l| levels[l].weight).sum();
        let sum = cand
            .iter()
            .fold([0.0; 2], |acc, &l| [acc[0] + levels[l].sum[0], acc[1] + levels[l].sum[1]]);
        let stat = scorer.score(weight, sum);
        if best.is_none_or(|(_, b)| better(objective, stat, b)) {
            best = Some((cand, stat));
        }
    }
    let (cand, stat) = best.ok_or(no_split)?;
    let mut left: Vec<u32> = cand.iter().map(|&l| levels[l].code).collect();
    left.sort_unstable();
    let right: Vec<u32> = levels.iter().map(|l| l.code).filter(|c| !left.contains(c)).collect();
    Ok(Split {
        variable,
        rule: SplitRule::Levels { left, right },
        statistic: stat,
    })
}

/// Standalone split search over all rows of `column` with unit weights and
/// no censoring information; see [`super::DistTree`] for the growing path.
pub fn select_split(
    scores: &[[f64; 2]],
    column: &CovariateColumn,
    minbucket: usize,
    statistic: Statistic,
    objective: SplitObjective,
) -> Result<Split> {
    let rows: Vec<usize> = (0..column.len()).collect();
    let weights = vec![1.0; rows.len()];
    let censored = vec![false; rows.len()];
    let node = NodeRows {
        rows: &rows,
        scores,
        weights: &weights,
        censored: &censored,
    };
    best_split(&node, column, 0, minbucket, statistic, objective)
}
