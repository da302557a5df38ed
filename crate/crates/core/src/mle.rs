//! Weighted maximum-likelihood estimation.
//!
//! The same damped Newton routine backs global fits, node and leaf fits in
//! trees, forest predictions (weighted by nearest-neighbor weights) and the
//! four-coefficient EMOS regression.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::families::{DistributionFamily, ParamVector};

/// Responses with non-negative case weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSample {
    y: Vec<f64>,
    w: Vec<f64>,
}

impl WeightedSample {
    pub fn new(y: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if y.len() != w.len() {
            return Err(Error::InvalidParameter(format!(
                "{} responses but {} weights",
                y.len(),
                w.len()
            )));
        }
        if let Some(bad) = w.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter(format!("invalid weight {bad}")));
        }
        if w.iter().sum::<f64>() <= 0.0 {
            return Err(Error::DegenerateSample("total weight is zero".into()));
        }
        Ok(Self { y, w })
    }

    pub fn unweighted(y: Vec<f64>) -> Result<Self> {
        let w = vec![1.0; y.len()];
        Self::new(y, w)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn total_weight(&self) -> f64 {
        self.w.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: ParamVector,
    /// Weighted log-likelihood at `theta`.
    pub loglik_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Sup-norm of the weighted score sum in `(mu, sigma)` coordinates.
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 100,
        }
    }
}

/// A smooth objective to be maximized.
pub trait Objective {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;

    /// Norm used for the convergence test; defaults to the gradient sup-norm.
    fn stationarity(&self, x: &[f64], gradient: &[f64]) -> f64 {
        let _ = x;
        sup_norm(gradient)
    }
}

#[derive(Debug, Clone)]
pub struct Optimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stationarity: f64,
    /// Objective at the start and at every accepted iterate.
    pub trace: Vec<f64>,
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn fd_hessian<O: Objective + ?Sized>(obj: &O, x: &[f64]) -> DMatrix<f64> {
    let k = obj.dim();
    let mut h = DMatrix::zeros(k, k);
    let mut xp = x.to_vec();
    for j in 0..k {
        let step = 1e-5 * x[j].abs().max(1.0);
        xp[j] = x[j] + step;
        let gp = obj.gradient(&xp);
        xp[j] = x[j] - step;
        let gm = obj.gradient(&xp);
        xp[j] = x[j];
        for i in 0..k {
            h[(i, j)] = (gp[i] - gm[i]) / (2.0 * step);
        }
    }
    (&h + h.transpose()) * 0.5
}

/// Relative size of rounding noise in objective values. Predicted gains
/// below this cannot be confirmed by comparing values.
const VALUE_NOISE: f64 = 1e-12;

/// Newton ascent with finite-difference Hessian and Armijo backtracking.
///
/// When the Hessian is not negative definite the step uses the absolute
/// values of its eigenvalues, and plain gradient ascent as a last resort.
/// Accepted iterates never decrease the objective by more than
/// `VALUE_NOISE` relative; once the predicted gain drops to that level the
/// full step is taken only if it reduces the stationarity measure.
pub fn maximize<O: Objective + ?Sized>(obj: &O, x0: &[f64], opts: NewtonOptions) -> Optimum {
    let mut x = x0.to_vec();
    let mut f = obj.value(&x);
    let mut g = obj.gradient(&x);
    let mut iterations = 0;
    let mut trace = vec![f];

    loop {
        let stat = obj.stationarity(&x, &g);
        if stat <= opts.tolerance {
            // one more Newton step costs little and takes the iterate from
            // the tolerance down to rounding level
            if let Some((xp, fp, sp)) = polish(obj, &x, f, &g, stat) {
                trace.push(fp);
                return Optimum { x: xp, value: fp, iterations, converged: true, stationarity: sp, trace };
            }
            return Optimum { x, value: f, iterations, converged: true, stationarity: stat, trace };
        }
        if iterations >= opts.max_iterations || !f.is_finite() {
            return Optimum { x, value: f, iterations, converged: false, stationarity: stat, trace };
        }
        iterations += 1;

        let neg_h = -fd_hessian(obj, &x);
        let grad = DVector::from_column_slice(&g);
        let mut dir: Vec<f64> = match neg_h.clone().cholesky() {
            Some(ch) => ch.solve(&grad).iter().copied().collect(),
            None => modified_newton(neg_h, &grad),
        };
        if dir.iter().any(|d| !d.is_finite()) || dot(&dir, &g) <= 0.0 {
            dir = g.clone();
        }
        let slope = dot(&dir, &g);
        let noise = VALUE_NOISE * (1.0 + f.abs());

        let mut accepted = None;
        let mut trial = vec![0.0; x.len()];
        if slope > noise {
            let mut t = 1.0;
            for _ in 0..60 {
                for i in 0..x.len() {
                    trial[i] = x[i] + t * dir[i];
                }
                if trial == x {
                    break;
                }
                let ft = obj.value(&trial);
                if ft.is_finite() && ft >= f + 1e-4 * t * slope {
                    accepted = Some(ft);
                    break;
                }
                t *= 0.5;
            }
        }

        match accepted {
            Some(ft) => {
                x.copy_from_slice(&trial);
                f = ft;
                g = obj.gradient(&x);
                trace.push(f);
            }
            None => {
                // Value comparisons are at rounding level here: take the full
                // step if it does not lose more than noise and improves
                // stationarity.
                for i in 0..x.len() {
                    trial[i] = x[i] + dir[i];
                }
                let ft = obj.value(&trial);
                let gt = obj.gradient(&trial);
                if trial != x && ft.is_finite() && ft >= f - noise && obj.stationarity(&trial, &gt) < stat {
                    x.copy_from_slice(&trial);
                    f = ft;
                    g = gt;
                    trace.push(f);
                } else {
                    return Optimum { x, value: f, iterations, converged: false, stationarity: stat, trace };
                }
            }
        }
    }
}

/// Newton direction with the eigenvalues of `-H` replaced by their absolute
/// values (floored relative to the largest), an ascent direction that keeps
/// the curvature scaling plain gradient steps lose.
fn modified_newton(neg_h: DMatrix<f64>, grad: &DVector<f64>) -> Vec<f64> {
    let eig = neg_h.symmetric_eigen();
    let top = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !top.is_finite() || top <= 0.0 {
        return grad.iter().copied().collect();
    }
    let q = &eig.eigenvectors;
    let mut coef = q.transpose() * grad;
    for (c, lam) in coef.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= lam.abs().max(1e-8 * top);
    }
    (q * coef).iter().copied().collect()
}

/// Full Newton step from a converged iterate, kept only if it neither loses
/// value beyond rounding noise nor increases the stationarity measure.
fn polish<O: Objective + ?Sized>(obj: &O, x: &[f64], f: f64, g: &[f64], stat: f64) -> Option<(Vec<f64>, f64, f64)> {
    if stat == 0.0 {
        return None;
    }
    let ch = (-fd_hessian(obj, x)).cholesky()?;
    let dir = ch.solve(&DVector::from_column_slice(g));
    let trial: Vec<f64> = x.iter().zip(dir.iter()).map(|(a, d)| a + d).collect();
    if trial == x {
        return None;
    }
    let ft = obj.value(&trial);
    let st = obj.stationarity(&trial, &obj.gradient(&trial));
    (ft.is_finite() && ft >= f - VALUE_NOISE * (1.0 + f.abs()) && st <= stat).then_some((trial, ft, st))
}

/// Weighted log-likelihood of a family in `(mu, log sigma)` coordinates.
struct FamilyObjective<'a, F: DistributionFamily + ?Sized> {
    family: &'a F,
    y: &'a [f64],
    w: &'a [f64],
}

impl<F: DistributionFamily + ?Sized> FamilyObjective<'_, F> {
    fn natural_score_sum(&self, mu: f64, sigma: f64) -> [f64; 2] {
        let mut s = [0.0; 2];
        for (&y, &w) in self.y.iter().zip(self.w) {
            let si = self.family.score_raw(mu, sigma, y);
            s[0] += w * si[0];
            s[1] += w * si[1];
        }
        s
    }
}

impl<F: DistributionFamily + ?Sized> Objective for FamilyObjective<'_, F> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        let sigma = x[1].exp();
        self.y
            .iter()
            .zip(self.w)
            .map(|(&y, &w)| w * self.family.loglik_raw(x[0], sigma, y))
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let sigma = x[1].exp();
        let s = self.natural_score_sum(x[0], sigma);
        // chain rule for log sigma
        vec![s[0], s[1] * sigma]
    }

    fn stationarity(&self, x: &[f64], gradient: &[f64]) -> f64 {
        let sigma = x[1].exp();
        gradient[0].abs().max((gradient[1] / sigma).abs())
    }
}

fn initial_guess(y: &[f64], w: &[f64]) -> ParamVector {
    let total: f64 = w.iter().sum();
    let mean = y.iter().zip(w).map(|(y, w)| y * w).sum::<f64>() / total;
    let var = y
        .iter()
        .zip(w)
        .map(|(y, w)| w * (y - mean) * (y - mean))
        .sum::<f64>()
        / total;
    let sigma = var.sqrt().max(0.1 * mean + 1e-6).max(1e-3);
    ParamVector { mu: mean, sigma }
}

/// Maximum-likelihood fit of `family` to a weighted sample.
///
/// Zero-weight observations are ignored. Fails with
/// [`Error::DegenerateSample`] when the likelihood has no interior maximum:
/// all positive weight on the censoring atom, or all weight on a single
/// uncensored value.
pub fn fit<F: DistributionFamily + ?Sized>(
    family: &F,
    sample: &WeightedSample,
    init: Option<ParamVector>,
) -> Result<FitResult> {
    let mut y = Vec::with_capacity(sample.len());
    let mut w = Vec::with_capacity(sample.len());
    for (&yi, &wi) in sample.y.iter().zip(&sample.w) {
        family.check_response(yi)?;
        if wi > 0.0 {
            y.push(yi);
            w.push(wi);
        }
    }
    let total: f64 = w.iter().sum();

    let mut censored_mass = 0.0;
    let mut uncensored_mass = 0.0;
    let mut first_uncensored = None;
    let mut spread = false;
    for (&yi, &wi) in y.iter().zip(&w) {
        if family.is_censored(yi) {
            censored_mass += wi;
        } else {
            uncensored_mass += wi;
            match first_uncensored {
                None => first_uncensored = Some(yi),
                Some(v) if v != yi => spread = true,
                _ => {}
            }
        }
    }
    if uncensored_mass <= 0.0 {
        return Err(Error::DegenerateSample(
            "all weight sits on the censoring point".into(),
        ));
    }
    if censored_mass <= 0.0 && !spread {
        return Err(Error::DegenerateSample(
            "all weight sits on a single uncensored value".into(),
        ));
    }

    let start = match init {
        Some(t) => {
            t.validate()?;
            t
        }
        None => initial_guess(&y, &w),
    };
    let objective = FamilyObjective { family, y: &y, w: &w };
    let opts = NewtonOptions {
        tolerance: 1e-8 * total,
        max_iterations: 100,
    };
    let opt = maximize(&objective, &start.to_internal(), opts);
    if !opt.converged {
        return Err(Error::NonConvergence {
            best: opt.x,
            iterations: opt.iterations,
            gradient_norm: opt.stationarity,
        });
    }
    let theta = ParamVector::from_internal([opt.x[0], opt.x[1]]);
    theta.validate()?;
    Ok(FitResult {
        theta,
        loglik_value: opt.value,
        iterations: opt.iterations,
        converged: true,
        gradient_norm: opt.stationarity,
    })
}

/// Fits `family` to all of `y` with per-observation `weights` (tree or
/// forest weights), returning the parameter estimate.
pub fn fit_from_weights<F: DistributionFamily + ?Sized>(
    family: &F,
    y: &[f64],
    weights: &[f64],
) -> Result<ParamVector> {
    if y.len() != weights.len() {
        return Err(Error::InvalidParameter(format!(
            "{} responses but {} weights",
            y.len(),
            weights.len()
        )));
    }
    let (ys, ws): (Vec<f64>, Vec<f64>) = y
        .iter()
        .zip(weights)
        .filter(|(_, w)| **w > 0.0)
        .map(|(y, w)| (*y, *w))
        .unzip();
    let sample = WeightedSample::new(ys, ws)?;
    Ok(fit(family, &sample, None)?.theta)
}
