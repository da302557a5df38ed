mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

use distforest::families::{CensoredGaussian, CensoredLogistic};
use distforest::{DistributionFamily, Family, ParamVector};

fn families() -> [Family; 2] {
    [
        Family::CensoredGaussian(CensoredGaussian::default()),
        Family::CensoredLogistic(CensoredLogistic::default()),
    ]
}

fn theta(mu: f64, sigma: f64) -> ParamVector {
    ParamVector::new(mu, sigma).unwrap()
}

fn oracle_cdf(f: &Family, mu: f64, sigma: f64, x: f64) -> f64 {
    match f {
        Family::CensoredGaussian(_) => common::censored_cdf(mu, sigma, x),
        Family::CensoredLogistic(_) => common::censored_logistic_cdf(mu, sigma, x),
    }
}

fn response() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), 1e-3..20.0f64]
}

proptest! {
    #[test]
    fn score_matches_finite_differences(mu in -5.0..15.0f64, sigma in 0.3..5.0f64, y in response()) {
        for f in families() {
            let s = f.score(&theta(mu, sigma), y).unwrap();
            let hm = 1e-6 * mu.abs().max(1.0);
            let hs = 1e-6 * sigma.max(1.0);
            let ll = |m: f64, s: f64| f.loglik(&theta(m, s), y).unwrap();
            let fd = [
                (ll(mu + hm, sigma) - ll(mu - hm, sigma)) / (2.0 * hm),
                (ll(mu, sigma + hs) - ll(mu, sigma - hs)) / (2.0 * hs),
            ];
            for j in 0..2 {
                prop_assert!((s[j] - fd[j]).abs() / s[j].abs().max(1.0) < 1e-6, "{} {j}: {} vs {}", f.name(), s[j], fd[j]);
            }
        }
    }

    #[test]
    fn cdf_is_monotone_and_matches_oracle(mu in -5.0..10.0f64, sigma in 0.2..5.0f64, a in 0.0..30.0f64, b in 0.0..30.0f64) {
        for f in families() {
            let t = theta(mu, sigma);
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(f.cdf(&t, lo).unwrap() <= f.cdf(&t, hi).unwrap());
            prop_assert!((f.cdf(&t, a).unwrap() - oracle_cdf(&f, mu, sigma, a)).abs() < 1e-9);
        }
    }

    #[test]
    fn quantile_is_generalized_inverse(mu in -5.0..10.0f64, sigma in 0.2..5.0f64, p in 0.001..0.999f64, y in response()) {
        for f in families() {
            let t = theta(mu, sigma);
            let q = f.quantile(&t, p).unwrap();
            let c = f.cdf(&t, q).unwrap();
            prop_assert!(c >= p - 1e-12);
            if q > 0.0 {
                prop_assert!((c - p).abs() < 1e-9, "cdf(q({p})) = {c}");
            }
            // quantile(cdf(y)) >= y, with equality off the atom where F is not saturated
            let cy = f.cdf(&t, y).unwrap();
            if cy < 1.0 - 1e-9 {
                let back = f.quantile(&t, cy).unwrap();
                prop_assert!(back >= y - 1e-6 * y.max(1.0));
                if y > 0.0 {
                    prop_assert!((back - y).abs() < 1e-6 * y.max(1.0));
                }
            }
        }
    }

    #[test]
    fn internal_coordinates_round_trip(mu in -50.0..50.0f64, sigma in 1e-3..50.0f64) {
        let t = theta(mu, sigma);
        let back = ParamVector::from_internal(t.to_internal());
        prop_assert!((back.mu - mu).abs() <= 1e-12 * mu.abs().max(1.0));
        prop_assert!((back.sigma - sigma).abs() <= 1e-12 * sigma);
        prop_assert!(back.sigma > 0.0);
    }
}

#[test]
fn crps_matches_quadrature_on_random_grid() {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for f in families() {
        let mut worst = 0.0f64;
        for _ in 0..50 {
            let mu = rng.random_range(-3.0..6.0);
            let sigma = rng.random_range(0.3..3.0);
            let y = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..10.0) };
            let tail = match f {
                Family::CensoredGaussian(_) => 12.0,
                Family::CensoredLogistic(_) => 40.0,
            };
            let oracle =
                common::crps_integral_with(|x| oracle_cdf(&f, mu, sigma, x), y, mu + tail * sigma);
            worst = worst.max((f.crps(&theta(mu, sigma), y).unwrap() - oracle).abs());
        }
        assert!(worst < 1e-4, "{}: {worst:e}", f.name());
    }
}

#[test]
fn density_and_atom_integrate_to_one() {
    for f in families() {
        for (mu, sigma) in [(0.0, 1.0), (2.0, 0.5), (-1.0, 3.0), (5.0, 2.0)] {
            let t = theta(mu, sigma);
            let atom = f.loglik(&t, 0.0).unwrap().exp();
            // density is smooth on (0, inf); the right tail beyond 60 sigma is negligible
            let upper = mu.max(0.0) + 60.0 * sigma;
            let body = common::integrate(|y| if y > 0.0 { f.loglik(&t, y).unwrap().exp() } else { 0.0 }, 1e-300, upper, 200_000);
            assert!((atom + body - 1.0).abs() < 1e-8, "{} at ({mu}, {sigma}): {}", f.name(), atom + body);
        }
    }
}

#[test]
fn sample_ecdf_within_dkw_band() {
    let n = 100_000;
    // P(sup |F_n - F| > eps) <= 2 exp(-2 n eps^2) = 0.001
    let eps = ((2.0f64 / 0.001).ln() / (2.0 * n as f64)).sqrt();
    for f in families() {
        for (mu, sigma) in [(0.5, 1.0), (2.0, 1.5)] {
            let t = theta(mu, sigma);
            let mut rng = ChaCha8Rng::seed_from_u64(99);
            let mut draws: Vec<f64> = (0..n).map(|_| f.sample(&t, &mut rng).unwrap()).collect();
            draws.sort_by(f64::total_cmp);
            assert!(draws[0] >= 0.0);
            for k in 0..20 {
                let x = k as f64 * (mu + 4.0 * sigma) / 19.0;
                let ecdf = draws.partition_point(|&d| d <= x) as f64 / n as f64;
                let d = (ecdf - oracle_cdf(&f, mu, sigma, x)).abs();
                assert!(d < eps, "{} at x = {x}: |ECDF - F| = {d}", f.name());
            }
        }
    }
}

#[test]
fn gaussian_reference_points() {
    let f = Family::default();
    let n = Normal::new(0.0, 1.0).unwrap();
    assert!((f.cdf(&theta(2.0, 1.0), 0.0).unwrap() - n.cdf(-2.0)).abs() < 1e-10);
    assert!((f.cdf(&theta(2.0, 1.0), 0.0).unwrap() - 0.0227501).abs() < 1e-7);
    assert!((f.quantile(&theta(3.0, 1.0), 0.975).unwrap() - 4.959964).abs() < 1e-6);
    assert_eq!(f.quantile(&theta(0.0, 1.0), 0.5).unwrap(), 0.0);
    let s = f.score(&theta(0.0, 1.0), 0.0).unwrap();
    assert!((s[0] + 0.7978846).abs() < 1e-7);
    assert_eq!(s[1], 0.0);
    // uncensored-normal closed form sigma * (2 phi(0) - 1/sqrt(pi)) when censoring is negligible
    let closed = 2.0 * (-0.5 * (2.0 * std::f64::consts::PI).ln()).exp() - 1.0 / std::f64::consts::PI.sqrt();
    assert!((f.crps(&theta(10.0, 1.0), 10.0).unwrap() - closed).abs() < 1e-10);
    assert!(f.crps(&theta(0.0, 1.0), 5.0).unwrap() > f.crps(&theta(0.0, 1.0), 0.0).unwrap());
}
