mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use distforest::mle::{self, maximize, NewtonOptions, Objective, WeightedSample};
use distforest::{DistributionFamily, Family, ParamVector};

fn draw(truth: ParamVector, n: usize, seed: u64) -> Vec<f64> {
    let f = Family::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| f.sample(&truth, &mut rng).unwrap()).collect()
}

fn fit(y: &[f64], w: &[f64]) -> mle::FitResult {
    mle::fit(&Family::default(), &WeightedSample::new(y.to_vec(), w.to_vec()).unwrap(), None).unwrap()
}

/// Family log-likelihood in `(mu, log sigma)` coordinates, for driving the
/// optimizer directly.
struct LogLik {
    y: Vec<f64>,
}

impl Objective for LogLik {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        match ParamVector::new(x[0], x[1].exp()) {
            Ok(t) => self.y.iter().map(|&y| Family::default().loglik(&t, y).unwrap()).sum(),
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let sigma = x[1].exp();
        let Ok(t) = ParamVector::new(x[0], sigma) else {
            return vec![f64::NAN; 2];
        };
        let mut g = vec![0.0; 2];
        for &y in &self.y {
            let s = Family::default().score(&t, y).unwrap();
            g[0] += s[0];
            g[1] += s[1] * sigma;
        }
        g
    }
}

#[test]
fn uncensored_sample_gives_closed_form() {
    let r = fit(&[10.0, 11.0, 12.0], &[1.0; 3]);
    assert!((r.theta.mu - 11.0).abs() < 1e-8);
    assert!((r.theta.sigma - (2.0f64 / 3.0).sqrt()).abs() < 1e-8);
}

#[test]
fn mixed_sample_matches_grid_oracle() {
    let y = [0.0, 0.0, 1.0, 2.0];
    let w = [1.0; 4];
    let r = fit(&y, &w);
    let (mu, sigma) = common::grid_mle(&y, &w);
    assert!((r.theta.mu - mu).abs() < 1e-4, "{} vs {mu}", r.theta.mu);
    assert!((r.theta.sigma - sigma).abs() < 1e-4, "{} vs {sigma}", r.theta.sigma);
}

#[test]
fn converged_fit_respects_tolerance() {
    for seed in 0..20 {
        let y = draw(ParamVector::new(0.8, 1.3).unwrap(), 300, seed);
        let r = fit(&y, &vec![1.0; y.len()]);
        assert!(r.converged);
        assert!(r.gradient_norm <= 1e-8 * y.len() as f64);
        assert!((r.loglik_value - common::total_loglik(r.theta.mu, r.theta.sigma, &y, &vec![1.0; y.len()])).abs() < 1e-8);
    }
}

#[test]
fn warm_start_from_truth_needs_few_steps() {
    for seed in 0..20 {
        let truth = ParamVector::new(1.0, 1.0).unwrap();
        let y = draw(truth, 1000, 500 + seed);
        let r = mle::fit(&Family::default(), &WeightedSample::unweighted(y).unwrap(), Some(truth)).unwrap();
        assert!(r.iterations <= 5, "seed {seed}: {} iterations", r.iterations);
    }
}

#[test]
fn accepted_iterates_never_lose_likelihood() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for seed in 0..30 {
        let truth = ParamVector::new(rng.random_range(-1.0..3.0), rng.random_range(0.5..3.0)).unwrap();
        let obj = LogLik { y: draw(truth, 200, seed) };
        let start = [rng.random_range(-6.0..8.0), rng.random_range(-2.0..2.5)];
        let opt = maximize(&obj, &start, NewtonOptions::default());
        assert!(opt.converged, "seed {seed} from {start:?}: stationarity {:e}", opt.stationarity);
        for pair in opt.trace.windows(2) {
            // rounding-level ties are allowed, real losses are not
            assert!(pair[1] >= pair[0] - 1e-12 * (1.0 + pair[0].abs()), "{} -> {}", pair[0], pair[1]);
        }
        assert_eq!(*opt.trace.last().unwrap(), opt.value);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn scale_equivariance(seed in 0u64..10_000, mu in -1.0..3.0f64, sigma in 0.5..2.0f64, c in 0.2..5.0f64) {
        let y = draw(ParamVector::new(mu, sigma).unwrap(), 150, seed);
        prop_assume!(y.iter().filter(|&&v| v > 0.0).count() >= 2);
        let w = vec![1.0; y.len()];
        let a = fit(&y, &w).theta;
        let scaled: Vec<f64> = y.iter().map(|v| c * v).collect();
        let b = fit(&scaled, &w).theta;
        prop_assert!((b.mu - c * a.mu).abs() < 1e-8 * c.max(1.0), "mu {} vs {}", b.mu, c * a.mu);
        prop_assert!((b.sigma - c * a.sigma).abs() < 1e-8 * c.max(1.0), "sigma {} vs {}", b.sigma, c * a.sigma);
    }

    #[test]
    fn duplicated_rows_equal_doubled_weights(seed in 0u64..10_000, mu in -1.0..3.0f64) {
        let y = draw(ParamVector::new(mu, 1.0).unwrap(), 60, seed);
        prop_assume!(y.iter().filter(|&&v| v > 0.0).count() >= 2);
        let k = 20;
        let mut dup = y.clone();
        dup.extend_from_slice(&y[..k]);
        let a = fit(&dup, &vec![1.0; dup.len()]).theta;
        let mut w = vec![1.0; y.len()];
        for wi in &mut w[..k] {
            *wi = 2.0;
        }
        let b = fit(&y, &w).theta;
        prop_assert!((a.mu - b.mu).abs() < 1e-10);
        prop_assert!((a.sigma - b.sigma).abs() < 1e-10);
    }

    #[test]
    fn weight_scale_does_not_move_the_optimum(seed in 0u64..10_000, scale in 1e-3..1e3f64) {
        let y = draw(ParamVector::new(0.5, 1.0).unwrap(), 80, seed);
        prop_assume!(y.iter().filter(|&&v| v > 0.0).count() >= 2);
        let a = fit(&y, &vec![1.0; y.len()]).theta;
        let b = fit(&y, &vec![scale; y.len()]).theta;
        prop_assert!((a.mu - b.mu).abs() < 1e-8);
        prop_assert!((a.sigma - b.sigma).abs() < 1e-8);
    }
}
