//! Synthetic scenarios with known parameter functions.
//!
//! A scenario file is a flat TOML table:
//!
//! ```toml
//! kind = "step-location"   # step-location | step-scale | smooth | emos-linear | null
//! n = 400
//! m_noise = 5              # irrelevant N(0,1) columns appended after the signal columns
//! seed = 7
//! groups = 28              # optional: contiguous blocks labelled g01, g02, ...
//! cut = 0.5                # step scenarios: changepoint in z1
//! low = 0.0                # step scenarios: parameter value for z1 <= cut
//! high = 3.0               # step scenarios: parameter value for z1 > cut
//! mu = 2.0                 # null / step-scale: constant location
//! sigma = 1.0              # null / step-location: constant scale
//! family = "censored-gaussian"
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{CovariateColumn, Dataset};
use crate::error::{Error, Result};
use crate::families::{DistributionFamily, Family, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioKind {
    /// Location jumps from `low` to `high` at `z1 = cut`.
    StepLocation,
    /// Scale jumps from `low` to `high` at `z1 = cut`; location constant.
    StepScale,
    /// Nonlinear interactions in both parameters on top of an EMOS-like
    /// linear structure in `ens_mean` / `ens_sprd`.
    Smooth,
    /// `mu = 0.5 + ens_mean`, `log sigma = -0.2 + 0.8 log(ens_sprd)`.
    EmosLinear,
    /// Constant parameters; `z1` is irrelevant.
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScenario {
    pub kind: ScenarioKind,
    pub n: usize,
    #[serde(default)]
    pub m_noise: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub groups: usize,
    #[serde(default)]
    pub cut: Option<f64>,
    #[serde(default)]
    pub low: Option<f64>,
    #[serde(default)]
    pub high: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub family: Option<String>,
}

impl SyntheticScenario {
    pub fn new(kind: ScenarioKind, n: usize, seed: u64) -> Self {
        Self {
            kind,
            n,
            m_noise: 0,
            seed,
            groups: 0,
            cut: None,
            low: None,
            high: None,
            mu: None,
            sigma: None,
            family: None,
        }
    }

    pub fn with_noise(mut self, m_noise: usize) -> Self {
        self.m_noise = m_noise;
        self
    }

    pub fn with_groups(mut self, groups: usize) -> Self {
        self.groups = groups;
        self
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Names of the covariates that drive the parameters.
    pub fn signal_columns(&self) -> Vec<&'static str> {
        match self.kind {
            ScenarioKind::StepLocation | ScenarioKind::StepScale | ScenarioKind::Null => vec!["z1"],
            ScenarioKind::EmosLinear => vec!["ens_mean", "ens_sprd"],
            ScenarioKind::Smooth => vec!["ens_mean", "ens_sprd", "z3", "z4", "z5"],
        }
    }
}

/// Generated data together with the true parameters of every row.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: Vec<ParamVector>,
    pub family: Family,
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Draws a dataset from `scenario`; deterministic in `scenario.seed`.
pub fn generate(scenario: &SyntheticScenario) -> Result<SyntheticData> {
    let family = match &scenario.family {
        None => Family::default(),
        Some(name) => Family::from_name(name, 0.0)?,
    };
    if scenario.n == 0 {
        return Err(Error::Config("scenario needs n >= 1".into()));
    }
    let n = scenario.n;
    let cut = scenario.cut.unwrap_or(0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let signal_names = scenario.signal_columns();
    let mut signal: Vec<Vec<f64>> = vec![Vec::with_capacity(n); signal_names.len()];
    let mut truth = Vec::with_capacity(n);

    for _ in 0..n {
        let theta = match scenario.kind {
            ScenarioKind::StepLocation => {
                let z = rng.random::<f64>();
                signal[0].push(z);
                let mu = if z <= cut {
                    scenario.low.unwrap_or(0.0)
                } else {
                    scenario.high.unwrap_or(3.0)
                };
                ParamVector::new(mu, scenario.sigma.unwrap_or(1.0))?
            }
            ScenarioKind::StepScale => {
                let z = rng.random::<f64>();
                signal[0].push(z);
                let sigma = if z <= cut {
                    scenario.low.unwrap_or(1.0)
                } else {
                    scenario.high.unwrap_or(3.0)
                };
                ParamVector::new(scenario.mu.unwrap_or(2.0), sigma)?
            }
            ScenarioKind::Null => {
                signal[0].push(rng.random::<f64>());
                ParamVector::new(scenario.mu.unwrap_or(1.0), scenario.sigma.unwrap_or(1.0))?
            }
            ScenarioKind::EmosLinear => {
                let mean = uniform(&mut rng, 0.0, 4.0);
                let sprd = uniform(&mut rng, 0.2, 2.0);
                signal[0].push(mean);
                signal[1].push(sprd);
                ParamVector::new(0.5 + mean, (-0.2 + 0.8 * sprd.ln()).exp())?
            }
            ScenarioKind::Smooth => {
                let mean = uniform(&mut rng, 0.0, 4.0);
                let sprd = uniform(&mut rng, 0.2, 2.0);
                let z3 = uniform(&mut rng, -1.0, 1.0);
                let z4 = rng.random::<f64>();
                let z5 = rng.random::<f64>();
                for (col, v) in signal.iter_mut().zip([mean, sprd, z3, z4, z5]) {
                    col.push(v);
                }
                let bump = if z4 > 0.5 { 1.0 } else { -1.0 };
                let mu = 0.3 + 0.7 * mean + 1.5 * bump * (std::f64::consts::PI * z3).sin()
                    + if z5 > 0.6 && mean > 2.0 { 1.5 } else { 0.0 };
                let log_sigma = -0.2 + 0.3 * sprd.ln() + if z3 > 0.0 { 0.9 * z4 } else { -0.4 * z4 };
                ParamVector::new(mu, log_sigma.exp())?
            }
        };
        truth.push(theta);
    }

    let mut columns: Vec<CovariateColumn> = signal_names
        .iter()
        .zip(signal)
        .map(|(name, values)| CovariateColumn::numeric_dense(*name, values))
        .collect();
    for j in 0..scenario.m_noise {
        let values: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        columns.push(CovariateColumn::numeric_dense(format!("noise{}", j + 1), values));
    }

    let response = truth
        .iter()
        .map(|t| family.sample(t, &mut rng))
        .collect::<Result<Vec<_>>>()?;

    let mut dataset = Dataset::new("y", response, columns)?;
    if scenario.groups > 0 {
        let g = scenario.groups;
        let labels = (0..n).map(|i| format!("g{:02}", i * g / n + 1)).collect();
        dataset = dataset.with_groups(labels)?;
    }
    Ok(SyntheticData { dataset, truth, family })
}
