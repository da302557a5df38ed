//! Forecast evaluation: CRPS and skill, permutation importance, randomized
//! quantile residuals and grouped cross-validation.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::families::{DistributionFamily, Family, ParamVector};
use crate::model::DistributionalModel;
use crate::special::norm_quantile;

/// PIT values are clamped into `[PIT_CLAMP, 1 - PIT_CLAMP]`.
pub const PIT_CLAMP: f64 = 1e-12;

/// CRPS of every prediction against its observation.
pub fn crps_values(family: &Family, predictions: &[ParamVector], observations: &[f64]) -> Result<Vec<f64>> {
    if predictions.len() != observations.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions but {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    predictions
        .iter()
        .zip(observations)
        .map(|(theta, &y)| family.crps(theta, y))
        .collect()
}

pub fn mean_crps(family: &Family, predictions: &[ParamVector], observations: &[f64]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(Error::InvalidParameter("no predictions to score".into()));
    }
    let values = crps_values(family, predictions, observations)?;
    Ok(mean(&values))
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Skill `1 - method / reference`; positive means the method improves on
/// the reference.
pub fn crpss(method_crps: f64, reference_crps: f64) -> Result<f64> {
    if reference_crps == 0.0 {
        return Err(Error::ZeroReference);
    }
    if reference_crps.is_nan() || reference_crps <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "reference CRPS must be positive, got {reference_crps}"
        )));
    }
    Ok(1.0 - method_crps / reference_crps)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceEntry {
    pub variable: usize,
    pub name: String,
    /// Mean CRPS with the column permuted minus the unpermuted mean CRPS.
    pub delta_crps: f64,
}

/// Permutation importance of every covariate on `test`.
///
/// Each column is permuted `n_permutations` times; the permuted mean CRPS is
/// averaged over permutations. Entries are in column order.
pub fn variable_importance(
    model: &dyn DistributionalModel,
    test: &Dataset,
    rng: &mut dyn RngCore,
    n_permutations: usize,
) -> Result<Vec<ImportanceEntry>> {
    if test.n_rows() == 0 {
        return Err(Error::InvalidParameter("importance needs a non-empty test set".into()));
    }
    if n_permutations == 0 {
        return Err(Error::InvalidParameter("n_permutations must be at least 1".into()));
    }
    let family = model.family();
    let baseline = mean_crps(&family, &model.predict_all(&test.covariates)?, &test.response)?;
    let seed = rng.next_u64();
    (0..test.n_covariates())
        .into_par_iter()
        .map(|j| {
            let mut local = ChaCha8Rng::seed_from_u64(seed);
            local.set_stream(j as u64);
            let column = test.covariates.column(j);
            let mut total = 0.0;
            for _ in 0..n_permutations {
                let mut order: Vec<usize> = (0..test.n_rows()).collect();
                order.shuffle(&mut local);
                let permuted = test.covariates.with_column(j, column.reordered(&order))?;
                total += mean_crps(&family, &model.predict_all(&permuted)?, &test.response)?;
            }
            Ok(ImportanceEntry {
                variable: j,
                name: column.name.clone(),
                delta_crps: total / n_permutations as f64 - baseline,
            })
        })
        .collect()
}

/// Randomized quantile residuals with their underlying PIT values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileResiduals {
    /// `pit[i][d]`: draw `d` for observation `i`.
    pub pit: Vec<Vec<f64>>,
    pub residuals: Vec<Vec<f64>>,
    /// Observations whose PIT had to be clamped away from 0 or 1.
    pub clamped: Vec<bool>,
}

/// PIT `F(y)` for uncensored observations; `U · F(threshold)` with a fresh
/// uniform `U` per draw for observations on the censoring atom.
pub fn quantile_residuals(
    family: &Family,
    predictions: &[ParamVector],
    observations: &[f64],
    rng: &mut dyn RngCore,
    n_draws: usize,
) -> Result<QuantileResiduals> {
    if n_draws == 0 {
        return Err(Error::InvalidParameter("n_draws must be at least 1".into()));
    }
    if predictions.len() != observations.len() {
        return Err(Error::InvalidParameter(format!(
            "{} predictions but {} observations",
            predictions.len(),
            observations.len()
        )));
    }
    let n = observations.len();
    let mut out = QuantileResiduals {
        pit: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n),
        clamped: Vec::with_capacity(n),
    };
    for (theta, &y) in predictions.iter().zip(observations) {
        let f = family.cdf(theta, y)?;
        let raw: Vec<f64> = if family.is_censored(y) {
            (0..n_draws).map(|_| rng.random::<f64>() * f).collect()
        } else {
            vec![f; n_draws]
        };
        let mut flagged = false;
        let pit: Vec<f64> = raw
            .into_iter()
            .map(|p| {
                let c = p.clamp(PIT_CLAMP, 1.0 - PIT_CLAMP);
                flagged |= c != p;
                c
            })
            .collect();
        out.residuals.push(pit.iter().map(|&p| norm_quantile(p)).collect());
        out.pit.push(pit);
        out.clamped.push(flagged);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1), with the
/// asymptotic Kolmogorov distribution and Stephens' small-sample correction.
pub fn ks_uniform(values: &[f64]) -> KsTest {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let lo = x - i as f64 / n;
        let hi = (i + 1) as f64 / n - x;
        d.max(lo).max(hi)
    });
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    KsTest {
        statistic: d,
        p_value: kolmogorov_sf(lambda),
    }
}

/// `P(K > lambda)` for the Kolmogorov distribution.
fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..200 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Everything computed by [`evaluate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_obs_crps: Vec<f64>,
    pub mean_crps: f64,
    pub crpss_vs_reference: Option<f64>,
    pub calibration: Option<QuantileResiduals>,
    pub importance: Option<Vec<ImportanceEntry>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EvalOptions {
    /// Draws of randomized quantile residuals; 0 skips calibration.
    pub residual_draws: usize,
    /// Permutations per covariate; 0 skips importance.
    pub importance_permutations: usize,
}

pub fn evaluate(
    model: &dyn DistributionalModel,
    reference: Option<&dyn DistributionalModel>,
    test: &Dataset,
    rng: &mut dyn RngCore,
    options: EvalOptions,
) -> Result<EvalReport> {
    if test.n_rows() == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one row".into()));
    }
    let family = model.family();
    let predictions = model.predict_all(&test.covariates)?;
    let per_obs_crps = crps_values(&family, &predictions, &test.response)?;
    let mean_crps = mean(&per_obs_crps);
    let crpss_vs_reference = match reference {
        None => None,
        Some(r) => {
            let rp = r.predict_all(&test.covariates)?;
            Some(crpss(mean_crps, self::mean_crps(&r.family(), &rp, &test.response)?)?)
        }
    };
    let calibration = match options.residual_draws {
        0 => None,
        d => Some(quantile_residuals(&family, &predictions, &test.response, rng, d)?),
    };
    let importance = match options.importance_permutations {
        0 => None,
        k => Some(variable_importance(model, test, rng, k)?),
    };
    Ok(EvalReport {
        per_obs_crps,
        mean_crps,
        crpss_vs_reference,
        calibration,
        importance,
    })
}

/// Repeated K-fold assignment of whole groups to folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub repetitions: usize,
    pub folds: usize,
    pub seed: u64,
    /// Distinct group labels, sorted.
    pub groups: Vec<String>,
    /// `assignment[r][g]`: fold of group `g` in repetition `r`.
    pub assignment: Vec<Vec<usize>>,
}

impl CvPlan {
    /// Shuffles the groups per repetition and deals them round-robin to
    /// folds, so fold sizes differ by at most one group.
    pub fn new(group_labels: &[String], repetitions: usize, folds: usize, seed: u64) -> Result<Self> {
        let mut groups: Vec<String> = group_labels.to_vec();
        groups.sort();
        groups.dedup();
        if repetitions == 0 || folds < 2 {
            return Err(Error::Config("cross-validation needs repetitions >= 1 and folds >= 2".into()));
        }
        if groups.len() < folds {
            return Err(Error::Config(format!(
                "{} groups cannot fill {folds} folds",
                groups.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignment = (0..repetitions)
            .map(|_| {
                let mut order: Vec<usize> = (0..groups.len()).collect();
                order.shuffle(&mut rng);
                let mut fold_of = vec![0; groups.len()];
                for (pos, &g) in order.iter().enumerate() {
                    fold_of[g] = pos % folds;
                }
                fold_of
            })
            .collect();
        Ok(Self {
            repetitions,
            folds,
            seed,
            groups,
            assignment,
        })
    }

    pub fn for_dataset(data: &Dataset, repetitions: usize, folds: usize, seed: u64) -> Result<Self> {
        let labels = data
            .groups
            .as_ref()
            .ok_or_else(|| Error::Config("cross-validation needs a group column".into()))?;
        Self::new(labels, repetitions, folds, seed)
    }

    /// Rows of `data` in the test fold `fold` of repetition `rep`.
    pub fn test_rows(&self, data: &Dataset, rep: usize, fold: usize) -> Result<Vec<usize>> {
        let labels = data
            .groups
            .as_ref()
            .ok_or_else(|| Error::Config("cross-validation needs a group column".into()))?;
        labels
            .iter()
            .enumerate()
            .filter_map(|(i, label)| match self.groups.binary_search(label) {
                Ok(g) => (self.assignment[rep][g] == fold).then_some(Ok(i)),
                Err(_) => Some(Err(Error::Config(format!("group `{label}` is not in the plan")))),
            })
            .collect()
    }
}

type FitFn = dyn Fn(&Dataset) -> Result<Box<dyn DistributionalModel>> + Send + Sync;

/// A named, re-entrant recipe for fitting a model on training data.
pub struct ModelFactory {
    pub name: String,
    pub fit: Box<FitFn>,
}

impl ModelFactory {
    pub fn new(
        name: impl Into<String>,
        fit: impl Fn(&Dataset) -> Result<Box<dyn DistributionalModel>> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            fit: Box::new(fit),
        }
    }
}

/// Per-repetition scores; `None` marks a model that failed in some fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvTable {
    pub models: Vec<String>,
    pub reference: usize,
    /// `mean_crps[r][m]`
    pub mean_crps: Vec<Vec<Option<f64>>>,
    /// `crpss[r][m]` against the reference model.
    pub crpss: Vec<Vec<Option<f64>>>,
}

/// Fits every factory on each training complement and scores it on the
/// held-out fold. Folds run in parallel.
pub fn cross_validate(data: &Dataset, factories: &[ModelFactory], reference: usize, plan: &CvPlan) -> Result<CvTable> {
    if reference >= factories.len() {
        return Err(Error::Config(format!(
            "reference index {reference} out of range for {} models",
            factories.len()
        )));
    }
    let n = data.n_rows();
    let mut jobs = Vec::new();
    for rep in 0..plan.repetitions {
        for fold in 0..plan.folds {
            let test = plan.test_rows(data, rep, fold)?;
            if test.is_empty() {
                return Err(Error::Config(format!("fold {fold} of repetition {rep} is empty")));
            }
            jobs.push((rep, test));
        }
    }

    // per job: summed CRPS per model, None on failure
    let results: Vec<(usize, Vec<Option<f64>>)> = jobs
        .par_iter()
        .map(|(rep, test)| {
            let mut in_test = vec![false; n];
            for &i in test {
                in_test[i] = true;
            }
            let train_rows: Vec<usize> = (0..n).filter(|&i| !in_test[i]).collect();
            let train = data.subset(&train_rows);
            let holdout = data.subset(test);
            let sums = factories
                .iter()
                .map(|f| {
                    let scored = (f.fit)(&train).and_then(|model| {
                        let p = model.predict_all(&holdout.covariates)?;
                        crps_values(&model.family(), &p, &holdout.response)
                    });
                    match scored {
                        Ok(values) => Some(values.iter().sum::<f64>()),
                        Err(e) => {
                            log::warn!("model `{}` failed in repetition {rep}: {e}", f.name);
                            None
                        }
                    }
                })
                .collect();
            (*rep, sums)
        })
        .collect();

    let m = factories.len();
    let mut totals = vec![vec![Some(0.0); m]; plan.repetitions];
    for (rep, sums) in results {
        for (slot, s) in totals[rep].iter_mut().zip(sums) {
            *slot = match (*slot, s) {
                (Some(a), Some(b)) => Some(a + b),
                _ => None,
            };
        }
    }
    let mean_crps: Vec<Vec<Option<f64>>> = totals
        .into_iter()
        .map(|row| row.into_iter().map(|t| t.map(|t| t / n as f64)).collect())
        .collect();
    let crpss = mean_crps
        .iter()
        .map(|row| {
            row.iter()
                .map(|v| match (v, row[reference]) {
                    (Some(a), Some(r)) => crpss(*a, r).ok(),
                    _ => None,
                })
                .collect()
        })
        .collect();
    Ok(CvTable {
        models: factories.iter().map(|f| f.name.clone()).collect(),
        reference,
        mean_crps,
        crpss,
    })
}

/// Median of the available values; `None` when there are none.
pub fn median(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().flatten().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    Some(if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn theta(mu: f64, sigma: f64) -> ParamVector {
        ParamVector::new(mu, sigma).unwrap()
    }

    #[test]
    fn skill_score_examples() {
        assert_eq!(crpss(1.0, 1.0).unwrap(), 0.0);
        assert!((crpss(0.95, 1.0).unwrap() - 0.05).abs() < 1e-15);
        assert!(matches!(crpss(0.5, 0.0), Err(Error::ZeroReference)));
    }

    #[test]
    fn mean_of_two() {
        // crps values {0.2, 0.4} via a direct mean
        assert!((mean(&[0.2, 0.4]) - 0.3).abs() < 1e-15);
        let f = Family::default();
        let p = [theta(1.0, 1.0)];
        assert_eq!(mean_crps(&f, &p, &[2.0]).unwrap(), f.crps(&p[0], 2.0).unwrap());
    }

    #[test]
    fn residuals_deterministic_off_the_atom() {
        let f = Family::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = quantile_residuals(&f, &[theta(1.0, 1.0), theta(0.0, 1.0)], &[1.5, 0.0], &mut rng, 50).unwrap();
        assert!(q.residuals[0].iter().all(|&r| r == q.residuals[0][0]));
        assert!(q.pit[1].iter().all(|&p| p > 0.0 && p <= 0.5));
        assert!(q.pit[1].iter().any(|&p| p != q.pit[1][0]));
    }

    #[test]
    fn extreme_pit_is_clamped_and_flagged() {
        let f = Family::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = quantile_residuals(&f, &[theta(0.0, 1.0)], &[60.0], &mut rng, 1).unwrap();
        assert!(q.clamped[0]);
        assert_eq!(q.pit[0][0], 1.0 - PIT_CLAMP);
        assert!(q.residuals[0][0].is_finite());
    }

    #[test]
    fn ks_detects_non_uniformity() {
        let uniform: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        assert!(ks_uniform(&uniform).p_value > 0.99);
        let skewed: Vec<f64> = uniform.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).p_value < 1e-6);
    }

    #[test]
    fn plan_partitions_groups() {
        let labels: Vec<String> = (0..28).map(|i| format!("y{i:02}")).collect();
        let plan = CvPlan::new(&labels, 10, 7, 3).unwrap();
        for rep in &plan.assignment {
            for fold in 0..7 {
                assert_eq!(rep.iter().filter(|&&f| f == fold).count(), 4);
            }
        }
        assert_eq!(plan, CvPlan::new(&labels, 10, 7, 3).unwrap());
        assert!(CvPlan::new(&labels[..5], 1, 7, 3).is_err());
    }

    #[test]
    fn median_skips_missing() {
        assert_eq!(median([Some(3.0), None, Some(1.0), Some(2.0)]), Some(2.0));
        assert_eq!(median([Some(1.0), Some(2.0)]), Some(1.5));
        assert_eq!(median([None]), None);
    }
}
