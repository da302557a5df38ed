//! Independent reference computations shared by the integration tests.
//!
//! Nothing here calls into the library's numerical code: the normal
//! distribution comes from `statrs::distribution::Normal`, integrals are
//! evaluated by composite Simpson rules and optima by brute-force grids.

#![allow(dead_code)]

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).unwrap()
}

/// Log-likelihood of one observation under the zero-censored Gaussian.
pub fn loglik(mu: f64, sigma: f64, y: f64) -> f64 {
    let n = std_normal();
    if y > 0.0 {
        n.ln_pdf((y - mu) / sigma) - sigma.ln()
    } else {
        n.cdf(-mu / sigma).ln()
    }
}

pub fn total_loglik(mu: f64, sigma: f64, y: &[f64], w: &[f64]) -> f64 {
    y.iter().zip(w).map(|(&yi, &wi)| wi * loglik(mu, sigma, yi)).sum()
}

/// Predictive CDF of the zero-censored Gaussian.
pub fn censored_cdf(mu: f64, sigma: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        std_normal().cdf((x - mu) / sigma)
    }
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let m = intervals + intervals % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// CRPS as the integral of `(F(x) - 1{x >= y})^2` over the real line.
///
/// Below 0 both terms vanish for `y >= 0`; the integrand is smooth on
/// `[0, y)` and `[y, upper]`, and `upper` lies far enough in the right tail
/// that the remainder is below `1e-12`.
pub fn crps_integral(mu: f64, sigma: f64, y: f64) -> f64 {
    let upper = (mu + 12.0 * sigma).max(y) + 1.0;
    let left = simpson(|x| censored_cdf(mu, sigma, x).powi(2), 0.0, y, 20_000);
    let right = simpson(|x| (1.0 - censored_cdf(mu, sigma, x)).powi(2), y, upper, 20_000);
    left + right
}

/// Maximizes the weighted log-likelihood over `(mu, log sigma)` by a coarse
/// grid on `[-5, 5] x [-3, 3]` followed by repeated local refinement.
pub fn grid_mle(y: &[f64], w: &[f64]) -> (f64, f64) {
    grid_mle_on(y, w, (-5.0, 5.0), (-3.0, 3.0))
}

pub fn grid_mle_on(y: &[f64], w: &[f64], mu_range: (f64, f64), ls_range: (f64, f64)) -> (f64, f64) {
    let f = |mu: f64, ls: f64| total_loglik(mu, ls.exp(), y, w);
    let coarse = 80;
    let (mut step_mu, mut step_ls) = (
        (mu_range.1 - mu_range.0) / coarse as f64,
        (ls_range.1 - ls_range.0) / coarse as f64,
    );
    let mut best = (mu_range.0, ls_range.0, f64::NEG_INFINITY);
    for i in 0..=coarse {
        for j in 0..=coarse {
            let (mu, ls) = (mu_range.0 + i as f64 * step_mu, ls_range.0 + j as f64 * step_ls);
            let v = f(mu, ls);
            if v > best.2 {
                best = (mu, ls, v);
            }
        }
    }
    // refine on a 21 x 21 grid spanning two previous steps each way
    while step_mu > 1e-8 || step_ls > 1e-8 {
        step_mu /= 5.0;
        step_ls /= 5.0;
        let (c_mu, c_ls) = (best.0, best.1);
        for i in -10..=10 {
            for j in -10..=10 {
                let (mu, ls) = (c_mu + i as f64 * step_mu, c_ls + j as f64 * step_ls);
                let v = f(mu, ls);
                if v > best.2 {
                    best = (mu, ls, v);
                }
            }
        }
    }
    (best.0, best.1.exp())
}

/// Closed-form Gaussian MLE `(mean, sqrt(biased variance))`.
pub fn gaussian_mle(y: &[f64]) -> (f64, f64) {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Linear statistic `vec(sum_i g_i h_i^T)` in score-major order: entry
/// `j * p + r` pairs score component `j` with transformation entry `r`.
pub fn linear_statistic(g: &[Vec<f64>], h: &[[f64; 2]]) -> Vec<f64> {
    let p = g[0].len();
    let mut t = vec![0.0; 2 * p];
    for (gi, hi) in g.iter().zip(h) {
        for j in 0..2 {
            for r in 0..p {
                t[j * p + r] += gi[r] * hi[j];
            }
        }
    }
    t
}

/// Monte Carlo moments of the permutation distribution of the linear
/// statistic, with standard errors of every mean and covariance entry.
pub struct PermutationMoments {
    pub mean: Vec<f64>,
    pub mean_se: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
    pub cov_se: Vec<Vec<f64>>,
}

pub fn permutation_moments(
    g: &[Vec<f64>],
    h: &[[f64; 2]],
    permutations: usize,
    rng: &mut impl rand::Rng,
) -> PermutationMoments {
    use rand::seq::SliceRandom;
    let n = g.len();
    let mut draws = Vec::with_capacity(permutations);
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..permutations {
        order.shuffle(rng);
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| g[i].clone()).collect();
        draws.push(linear_statistic(&permuted, h));
    }
    let d = draws[0].len();
    let b = permutations as f64;
    let mean: Vec<f64> = (0..d).map(|a| draws.iter().map(|t| t[a]).sum::<f64>() / b).collect();
    let mut cov = vec![vec![0.0; d]; d];
    let mut cov_se = vec![vec![0.0; d]; d];
    for a in 0..d {
        for c in 0..d {
            let prods: Vec<f64> = draws.iter().map(|t| (t[a] - mean[a]) * (t[c] - mean[c])).collect();
            let m = prods.iter().sum::<f64>() / b;
            let v = prods.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (b - 1.0);
            cov[a][c] = m * b / (b - 1.0);
            cov_se[a][c] = (v / b).sqrt();
        }
    }
    let mean_se = (0..d).map(|a| (cov[a][a] / b).sqrt()).collect();
    PermutationMoments {
        mean,
        mean_se,
        cov,
        cov_se,
    }
}

/// Predictive CDF of the zero-censored logistic.
pub fn censored_logistic_cdf(mu: f64, sigma: f64, x: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else {
        1.0 / (1.0 + (-(x - mu) / sigma).exp())
    }
}

/// CRPS by quadrature for an arbitrary CDF that vanishes below 0, with the
/// right tail truncated at `upper`.
pub fn crps_integral_with(cdf: impl Fn(f64) -> f64, y: f64, upper: f64) -> f64 {
    let left = simpson(|x| cdf(x).powi(2), 0.0, y, 20_000);
    let right = simpson(|x| (1.0 - cdf(x)).powi(2), y, upper.max(y) + 1.0, 40_000);
    left + right
}

/// Composite Simpson rule, exposed for density normalization checks.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    simpson(f, a, b, intervals)
}
