//! Conditional (permutation) independence tests between model scores and a
//! covariate, standardized with the exact permutation mean and covariance of
//! the linear statistic.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, CovariateColumn};
use crate::special;

/// Number of score components.
const K: usize = 2;

/// Relative eigenvalue cutoff for the Moore-Penrose inverse.
const PINV_TOL: f64 = 1e-10;

/// Univariate summary of the standardized linear statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Statistic {
    /// Quadratic form with the pseudo-inverse covariance; χ² reference.
    #[default]
    Quadratic,
    /// Maximum absolute standardized entry; normal reference.
    Maximum,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssociationTest {
    pub statistic: f64,
    pub p_value: f64,
    /// `ln p_value`, finite even where `p_value` underflows.
    pub log_p_value: f64,
    /// Rank of the covariance of the linear statistic.
    pub df: usize,
    /// Observed linear statistic, score component major:
    /// entry `j * p + r` pairs score `j` with transformation entry `r`.
    pub linear_statistic: Vec<f64>,
    pub expectation: Vec<f64>,
    pub covariance: DMatrix<f64>,
}

impl AssociationTest {
    pub fn degenerate(dim: usize) -> Self {
        Self {
            statistic: 0.0,
            p_value: 1.0,
            log_p_value: 0.0,
            df: 0,
            linear_statistic: vec![0.0; dim],
            expectation: vec![0.0; dim],
            covariance: DMatrix::zeros(dim, dim),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.df == 0
    }
}

/// Weighted mean and (1/n-normalized) covariance of the score rows.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ScoreMoments {
    pub total: f64,
    pub mean: [f64; K],
    pub cov: [[f64; K]; K],
}

impl ScoreMoments {
    pub fn new(scores: &[[f64; K]], weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let mut mean = [0.0; K];
        for (s, &w) in scores.iter().zip(weights) {
            for j in 0..K {
                mean[j] += w * s[j];
            }
        }
        for m in &mut mean {
            *m /= total;
        }
        let mut cov = [[0.0; K]; K];
        for (s, &w) in scores.iter().zip(weights) {
            for a in 0..K {
                for b in 0..K {
                    cov[a][b] += w * (s[a] - mean[a]) * (s[b] - mean[b]);
                }
            }
        }
        for row in &mut cov {
            for c in row.iter_mut() {
                *c /= total;
            }
        }
        Self { total, mean, cov }
    }
}

/// Moore-Penrose inverse of a symmetric matrix and its numerical rank.
pub(crate) fn pinv_symmetric(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b));
    let mut inv = DMatrix::zeros(n, n);
    if !max.is_finite() || max <= 0.0 {
        return (inv, 0);
    }
    let mut rank = 0;
    for (i, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > PINV_TOL * max {
            rank += 1;
            let u = eig.eigenvectors.column(i);
            inv += (u * u.transpose()) / lambda;
        }
    }
    (inv, rank)
}

/// Standardizes `t - mu` with covariance `sigma` into a test result.
pub(crate) fn standardize(
    centered: &[f64],
    sigma: &DMatrix<f64>,
    statistic: Statistic,
) -> (f64, f64, usize) {
    match statistic {
        Statistic::Quadratic => {
            let (inv, rank) = pinv_symmetric(sigma);
            if rank == 0 {
                return (0.0, 0.0, 0);
            }
            let d = DVector::from_column_slice(centered);
            let c = (d.transpose() * &inv * &d)[(0, 0)].max(0.0);
            (c, special::chi2_log_sf(c, rank), rank)
        }
        Statistic::Maximum => {
            let max_var = (0..sigma.nrows()).fold(0.0f64, |m, i| m.max(sigma[(i, i)]));
            let mut c: f64 = 0.0;
            let mut dims = 0;
            for (i, &d) in centered.iter().enumerate() {
                let v = sigma[(i, i)];
                if v > PINV_TOL * max_var && v > 0.0 {
                    dims += 1;
                    c = c.max(d.abs() / v.sqrt());
                }
            }
            if dims == 0 {
                return (0.0, 0.0, 0);
            }
            // Šidák combination of the per-entry two-sided normal tails
            let log_single = special::norm_log_two_sided(c);
            let single = log_single.exp();
            let log_p = if dims == 1 {
                log_single
            } else if single < 1e-10 {
                (dims as f64).ln() + log_single
            } else {
                (-(dims as f64 * (-single).ln_1p()).exp_m1()).ln()
            };
            (c, log_p.min(0.0), dims)
        }
    }
}

/// Linear-statistic test given per-row transformed covariate vectors `g`
/// (length `p` each), scores and weights for the rows that enter the sums.
pub(crate) fn linear_test(
    g: &[Vec<f64>],
    scores: &[[f64; K]],
    weights: &[f64],
    p: usize,
    statistic: Statistic,
) -> AssociationTest {
    let dim = p * K;
    let moments = ScoreMoments::new(scores, weights);
    let n = moments.total;
    if g.len() < 2 || n <= 1.0 {
        return AssociationTest::degenerate(dim);
    }

    let mut sum_g = vec![0.0; p];
    for (gi, &w) in g.iter().zip(weights) {
        for r in 0..p {
            sum_g[r] += w * gi[r];
        }
    }
    let g_mean: Vec<f64> = sum_g.iter().map(|s| s / n).collect();

    let mut t = vec![0.0; dim];
    let mut centered = vec![0.0; dim];
    let mut cg = DMatrix::<f64>::zeros(p, p);
    for ((gi, s), &w) in g.iter().zip(scores).zip(weights) {
        for j in 0..K {
            let hc = s[j] - moments.mean[j];
            for r in 0..p {
                t[j * p + r] += w * gi[r] * s[j];
                centered[j * p + r] += w * gi[r] * hc;
            }
        }
        for r in 0..p {
            let dr = gi[r] - g_mean[r];
            for q in 0..p {
                cg[(r, q)] += w * dr * (gi[q] - g_mean[q]);
            }
        }
    }
    let expectation: Vec<f64> = (0..dim).map(|idx| sum_g[idx % p] * moments.mean[idx / p]).collect();

    // Σ = n/(n-1) · V ⊗ Σ w (g - ḡ)(g - ḡ)ᵀ
    let factor = n / (n - 1.0);
    let mut covariance = DMatrix::zeros(dim, dim);
    for a in 0..K {
        for b in 0..K {
            let v = moments.cov[a][b] * factor;
            for r in 0..p {
                for q in 0..p {
                    covariance[(a * p + r, b * p + q)] = v * cg[(r, q)];
                }
            }
        }
    }

    let (stat, log_p, df) = standardize(&centered, &covariance, statistic);
    if df == 0 {
        let mut d = AssociationTest::degenerate(dim);
        d.linear_statistic = t;
        d.expectation = expectation;
        d.covariance = covariance;
        return d;
    }
    AssociationTest {
        statistic: stat,
        p_value: log_p.exp(),
        log_p_value: log_p,
        df,
        linear_statistic: t,
        expectation,
        covariance,
    }
}

/// Transformation `v_l` of one column entry: the value itself for numeric
/// columns, the level indicator vector for categorical ones. `None` for
/// missing entries.
pub(crate) fn transform(column: &CovariateColumn, row: usize) -> Option<Vec<f64>> {
    match &column.data {
        ColumnData::Numeric(v) => v[row].map(|x| vec![x]),
        ColumnData::Categorical { levels, codes } => codes[row].map(|c| {
            let mut e = vec![0.0; levels.len()];
            e[c as usize] = 1.0;
            e
        }),
    }
}

pub(crate) fn transform_dim(column: &CovariateColumn) -> usize {
    match &column.data {
        ColumnData::Numeric(_) => 1,
        ColumnData::Categorical { levels, .. } => levels.len(),
    }
}

/// Tests independence of `scores[i]` (for dataset row `rows[i]`) and
/// `column`, excluding rows where the column is missing.
pub(crate) fn association_for_rows(
    scores: &[[f64; K]],
    weights: &[f64],
    column: &CovariateColumn,
    rows: &[usize],
    statistic: Statistic,
) -> AssociationTest {
    let p = transform_dim(column);
    let mut g = Vec::with_capacity(rows.len());
    let mut s = Vec::with_capacity(rows.len());
    let mut w = Vec::with_capacity(rows.len());
    for (i, &row) in rows.iter().enumerate() {
        if let Some(gi) = transform(column, row) {
            g.push(gi);
            s.push(scores[i]);
            w.push(weights[i]);
        }
    }
    linear_test(&g, &s, &w, p, statistic)
}

/// Permutation test of independence between the score rows and `column`
/// (one score row per column entry, unit case weights).
pub fn test_association(scores: &[[f64; 2]], column: &CovariateColumn, statistic: Statistic) -> AssociationTest {
    let rows: Vec<usize> = (0..column.len()).collect();
    let weights = vec![1.0; rows.len()];
    association_for_rows(scores, &weights, column, &rows, statistic)
}

/// Index of the test with the smallest Bonferroni-adjusted p-value, if that
/// adjusted p-value is below `alpha`. Ties go to the lowest index.
pub fn select_variable(tests: &[AssociationTest], alpha: f64) -> Option<usize> {
    ranked_variables(tests, alpha).into_iter().next()
}

/// All tests whose adjusted p-value is below `alpha`, best first. With
/// `alpha >= 1` every non-degenerate test qualifies, including those whose
/// adjusted p-value is capped at 1. Ranking uses the uncapped `m · p`.
pub(crate) fn ranked_variables(tests: &[AssociationTest], alpha: f64) -> Vec<usize> {
    let log_m = (tests.len() as f64).ln();
    let log_alpha = alpha.ln();
    let mut ranked: Vec<(usize, f64)> = tests
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.is_degenerate())
        .map(|(i, t)| (i, t.log_p_value + log_m))
        .filter(|(_, adj)| alpha >= 1.0 || *adj < log_alpha)
        .collect();
    ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    ranked.into_iter().map(|(i, _)| i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fake(p: f64) -> AssociationTest {
        AssociationTest {
            statistic: 1.0,
            p_value: p,
            log_p_value: p.ln(),
            df: 1,
            linear_statistic: vec![],
            expectation: vec![],
            covariance: DMatrix::zeros(0, 0),
        }
    }

    #[test]
    fn bonferroni_selection() {
        let tests = vec![fake(0.001), fake(0.2), fake(0.9)];
        assert_eq!(select_variable(&tests, 0.05), Some(0));
        let tests = vec![fake(0.03), fake(0.2), fake(0.9)];
        assert_eq!(select_variable(&tests, 0.05), None);
        let tests = vec![fake(0.7), fake(0.4), fake(0.9)];
        assert_eq!(select_variable(&tests, 1.0), Some(1));
        let tests = vec![AssociationTest::degenerate(2), AssociationTest::degenerate(2)];
        assert_eq!(select_variable(&tests, 1.0), None);
        // ties resolve to the lowest index
        let tests = vec![fake(0.2), fake(0.01), fake(0.01)];
        assert_eq!(select_variable(&tests, 1.0), Some(1));
    }

    #[test]
    fn constant_column_is_degenerate() {
        let col = CovariateColumn::numeric_dense("c", vec![2.0; 10]);
        let scores: Vec<[f64; 2]> = (0..10).map(|i| [i as f64, (i * i) as f64]).collect();
        let t = test_association(&scores, &col, Statistic::Quadratic);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.df, 0);
    }

    #[test]
    fn constant_scores_are_degenerate() {
        let col = CovariateColumn::numeric_dense("c", (0..10).map(f64::from).collect());
        let scores = vec![[1.0, -2.0]; 10];
        assert!(test_association(&scores, &col, Statistic::Quadratic).is_degenerate());
        assert!(test_association(&scores, &col, Statistic::Maximum).is_degenerate());
    }

    #[test]
    fn missing_rows_are_excluded() {
        let values = vec![Some(1.0), None, Some(3.0), Some(2.0), None, Some(5.0)];
        let col = CovariateColumn::numeric("x", values.clone());
        let scores: Vec<[f64; 2]> = vec![[1.0, 0.5], [100.0, 100.0], [-1.0, 0.2], [0.3, -0.7], [-50.0, 9.0], [2.0, 1.0]];
        let with_missing = test_association(&scores, &col, Statistic::Quadratic);
        let kept: Vec<usize> = vec![0, 2, 3, 5];
        let col2 = CovariateColumn::numeric("x", kept.iter().map(|&i| values[i]).collect());
        let scores2: Vec<[f64; 2]> = kept.iter().map(|&i| scores[i]).collect();
        let dense = test_association(&scores2, &col2, Statistic::Quadratic);
        assert!((with_missing.statistic - dense.statistic).abs() < 1e-12);
    }

    #[test]
    fn categorical_rank_is_levels_minus_one_times_k() {
        let codes: Vec<Option<u32>> = (0..30).map(|i| Some(i % 3)).collect();
        let col = CovariateColumn::categorical("c", vec!["a".into(), "b".into(), "c".into()], codes);
        let scores: Vec<[f64; 2]> = (0..30).map(|i| [((i * 7) % 11) as f64, ((i * 5) % 13) as f64]).collect();
        let t = test_association(&scores, &col, Statistic::Quadratic);
        assert_eq!(t.df, 4);
        assert_eq!(t.linear_statistic.len(), 6);
    }

    #[test]
    fn pinv_of_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let (inv, rank) = pinv_symmetric(&m);
        assert_eq!(rank, 1);
        let back = &m * &inv * &m;
        assert!((back - m).abs().max() < 1e-12);
    }
}
