//! Left-censored location-scale response families.
//!
//! Both families put a point mass on the censoring threshold (zero by
//! default) equal to the latent CDF at the threshold, and a continuous density
//! above it. Everything family-specific is expressed through the standardized
//! latent distribution; the censoring algebra is shared.

use std::fmt;

use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special;

/// Distribution parameters in natural coordinates: location `mu` and scale
/// `sigma`, both in response units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub mu: f64,
    pub sigma: f64,
}

impl ParamVector {
    /// Number of distribution parameters.
    pub const DIM: usize = 2;

    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        let theta = Self { mu, sigma };
        theta.validate()?;
        Ok(theta)
    }

    /// Builds from the unconstrained coordinates `(mu, log sigma)`.
    pub fn from_internal(eta: [f64; 2]) -> Self {
        Self {
            mu: eta[0],
            sigma: eta[1].exp(),
        }
    }

    pub fn to_internal(&self) -> [f64; 2] {
        [self.mu, self.sigma.ln()]
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.mu, self.sigma]
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() || !self.sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite parameter (mu = {}, sigma = {})",
                self.mu, self.sigma
            )));
        }
        if self.sigma <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        Ok(())
    }
}

impl fmt::Display for ParamVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(mu = {:.6}, sigma = {:.6})", self.mu, self.sigma)
    }
}

/// A response distribution with a point mass at a left-censoring threshold.
///
/// Implementors supply the standardized latent distribution (`std_*`
/// methods); the provided methods handle location, scale and censoring.
/// Scores are returned in natural `(mu, sigma)` coordinates.
pub trait DistributionFamily: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    /// Left-censoring threshold; observations equal to it are censored.
    fn threshold(&self) -> f64;

    fn n_params(&self) -> usize {
        ParamVector::DIM
    }

    fn std_log_pdf(&self, z: f64) -> f64;
    fn std_cdf(&self, z: f64) -> f64;
    fn std_log_cdf(&self, z: f64) -> f64;
    /// `d/dz log f(z)` of the standardized latent density.
    fn std_dlog_pdf(&self, z: f64) -> f64;
    /// `f(z) / F(z)`, evaluated stably in the lower tail.
    fn std_pdf_over_cdf(&self, z: f64) -> f64;
    fn std_quantile(&self, p: f64) -> f64;
    fn std_sample(&self, rng: &mut dyn RngCore) -> f64;
    /// CRPS of the standardized distribution censored at `a` for an
    /// observation `z >= a`.
    fn std_crps(&self, z: f64, a: f64) -> f64;

    fn is_censored(&self, y: f64) -> bool {
        y <= self.threshold()
    }

    /// Log-likelihood without argument validation.
    fn loglik_raw(&self, mu: f64, sigma: f64, y: f64) -> f64 {
        if y <= self.threshold() {
            self.std_log_cdf((self.threshold() - mu) / sigma)
        } else {
            self.std_log_pdf((y - mu) / sigma) - sigma.ln()
        }
    }

    /// Score in `(mu, sigma)` without argument validation.
    fn score_raw(&self, mu: f64, sigma: f64, y: f64) -> [f64; 2] {
        if y <= self.threshold() {
            let a = (self.threshold() - mu) / sigma;
            let m = self.std_pdf_over_cdf(a);
            [-m / sigma, -a * m / sigma]
        } else {
            let z = (y - mu) / sigma;
            let d = self.std_dlog_pdf(z);
            [-d / sigma, -(z * d + 1.0) / sigma]
        }
    }

    fn check_response(&self, y: f64) -> Result<()> {
        if !y.is_finite() || y < self.threshold() {
            return Err(Error::Domain(format!(
                "response {y} is below the censoring threshold {}",
                self.threshold()
            )));
        }
        Ok(())
    }

    fn loglik(&self, theta: &ParamVector, y: f64) -> Result<f64> {
        theta.validate()?;
        self.check_response(y)?;
        Ok(self.loglik_raw(theta.mu, theta.sigma, y))
    }

    fn score(&self, theta: &ParamVector, y: f64) -> Result<[f64; 2]> {
        theta.validate()?;
        self.check_response(y)?;
        Ok(self.score_raw(theta.mu, theta.sigma, y))
    }

    /// Right-continuous CDF; jumps by `point_mass` at the threshold.
    fn cdf(&self, theta: &ParamVector, y: f64) -> Result<f64> {
        theta.validate()?;
        if y < self.threshold() {
            return Ok(0.0);
        }
        Ok(self.std_cdf((y - theta.mu) / theta.sigma))
    }

    /// Probability of observing exactly the threshold value.
    fn point_mass(&self, theta: &ParamVector) -> Result<f64> {
        theta.validate()?;
        Ok(self.std_cdf((self.threshold() - theta.mu) / theta.sigma))
    }

    fn quantile(&self, theta: &ParamVector, p: f64) -> Result<f64> {
        theta.validate()?;
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
        }
        let atom = self.std_cdf((self.threshold() - theta.mu) / theta.sigma);
        if p <= atom {
            Ok(self.threshold())
        } else {
            Ok((theta.mu + theta.sigma * self.std_quantile(p)).max(self.threshold()))
        }
    }

    fn sample(&self, theta: &ParamVector, rng: &mut dyn RngCore) -> Result<f64> {
        theta.validate()?;
        Ok((theta.mu + theta.sigma * self.std_sample(rng)).max(self.threshold()))
    }

    /// Continuous ranked probability score, closed form.
    fn crps(&self, theta: &ParamVector, y: f64) -> Result<f64> {
        theta.validate()?;
        self.check_response(y)?;
        let a = (self.threshold() - theta.mu) / theta.sigma;
        let z = ((y - theta.mu) / theta.sigma).max(a);
        Ok((theta.sigma * self.std_crps(z, a)).max(0.0))
    }
}

/// Normal distribution left-censored at a threshold (zero by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredGaussian {
    pub threshold: f64,
}

impl Default for CensoredGaussian {
    fn default() -> Self {
        Self { threshold: 0.0 }
    }
}

impl CensoredGaussian {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { threshold }
    }
}

impl DistributionFamily for CensoredGaussian {
    fn name(&self) -> &'static str {
        "censored-gaussian"
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn std_log_pdf(&self, z: f64) -> f64 {
        special::norm_log_pdf(z)
    }

    fn std_cdf(&self, z: f64) -> f64 {
        special::norm_cdf(z)
    }

    fn std_log_cdf(&self, z: f64) -> f64 {
        special::norm_log_cdf(z)
    }

    fn std_dlog_pdf(&self, z: f64) -> f64 {
        -z
    }

    fn std_pdf_over_cdf(&self, z: f64) -> f64 {
        special::norm_pdf_over_cdf(z)
    }

    fn std_quantile(&self, p: f64) -> f64 {
        special::norm_quantile(p)
    }

    fn std_sample(&self, rng: &mut dyn RngCore) -> f64 {
        StandardNormal.sample(rng)
    }

    fn std_crps(&self, z: f64, a: f64) -> f64 {
        // Uncensored normal CRPS minus the integral of Φ² over (-∞, a].
        let uncensored =
            z * (2.0 * special::norm_cdf(z) - 1.0) + 2.0 * special::norm_pdf(z) - special::FRAC_1_SQRT_PI;
        let pa = special::norm_cdf(a);
        let below = a * pa * pa + 2.0 * pa * special::norm_pdf(a)
            - special::FRAC_1_SQRT_PI * special::norm_cdf(std::f64::consts::SQRT_2 * a);
        uncensored - below
    }
}

/// Logistic distribution left-censored at a threshold (zero by default).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CensoredLogistic {
    pub threshold: f64,
}

impl Default for CensoredLogistic {
    fn default() -> Self {
        Self { threshold: 0.0 }
    }
}

impl CensoredLogistic {
    pub fn with_threshold(threshold: f64) -> Self {
        Self { threshold }
    }
}

impl DistributionFamily for CensoredLogistic {
    fn name(&self) -> &'static str {
        "censored-logistic"
    }

    fn threshold(&self) -> f64 {
        self.threshold
    }

    fn std_log_pdf(&self, z: f64) -> f64 {
        special::logistic_log_pdf(z)
    }

    fn std_cdf(&self, z: f64) -> f64 {
        special::logistic_cdf(z)
    }

    fn std_log_cdf(&self, z: f64) -> f64 {
        special::logistic_log_cdf(z)
    }

    fn std_dlog_pdf(&self, z: f64) -> f64 {
        1.0 - 2.0 * special::logistic_cdf(z)
    }

    fn std_pdf_over_cdf(&self, z: f64) -> f64 {
        special::logistic_cdf(-z)
    }

    fn std_quantile(&self, p: f64) -> f64 {
        special::logistic_quantile(p)
    }

    fn std_sample(&self, rng: &mut dyn RngCore) -> f64 {
        // open interval (0, 1)
        let u = ((rng.next_u64() >> 11) as f64 + 0.5) / (1u64 << 53) as f64;
        special::logistic_quantile(u)
    }

    fn std_crps(&self, z: f64, a: f64) -> f64 {
        // Uncensored logistic CRPS minus ∫_{-∞}^{a} F² = softplus(a) - F(a).
        let uncensored = z + 2.0 * special::softplus(-z) - 1.0;
        uncensored - (special::softplus(a) - special::logistic_cdf(a))
    }
}

/// Serializable choice among the implemented families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Family {
    CensoredGaussian(CensoredGaussian),
    CensoredLogistic(CensoredLogistic),
}

impl Default for Family {
    fn default() -> Self {
        Family::CensoredGaussian(CensoredGaussian::default())
    }
}

impl Family {
    /// Looks a family up by its command-line name.
    pub fn from_name(name: &str, threshold: f64) -> Result<Self> {
        match name {
            "censored-gaussian" | "gaussian" | "cnorm" => {
                Ok(Family::CensoredGaussian(CensoredGaussian::with_threshold(threshold)))
            }
            "censored-logistic" | "logistic" | "clogis" => {
                Ok(Family::CensoredLogistic(CensoredLogistic::with_threshold(threshold)))
            }
            other => Err(Error::Config(format!("unknown family '{other}'"))),
        }
    }

    fn inner(&self) -> &dyn DistributionFamily {
        match self {
            Family::CensoredGaussian(f) => f,
            Family::CensoredLogistic(f) => f,
        }
    }
}

impl DistributionFamily for Family {
    fn name(&self) -> &'static str {
        self.inner().name()
    }
    fn threshold(&self) -> f64 {
        self.inner().threshold()
    }
    fn std_log_pdf(&self, z: f64) -> f64 {
        self.inner().std_log_pdf(z)
    }
    fn std_cdf(&self, z: f64) -> f64 {
        self.inner().std_cdf(z)
    }
    fn std_log_cdf(&self, z: f64) -> f64 {
        self.inner().std_log_cdf(z)
    }
    fn std_dlog_pdf(&self, z: f64) -> f64 {
        self.inner().std_dlog_pdf(z)
    }
    fn std_pdf_over_cdf(&self, z: f64) -> f64 {
        self.inner().std_pdf_over_cdf(z)
    }
    fn std_quantile(&self, p: f64) -> f64 {
        self.inner().std_quantile(p)
    }
    fn std_sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.inner().std_sample(rng)
    }
    fn std_crps(&self, z: f64, a: f64) -> f64 {
        self.inner().std_crps(z, a)
    }
}
