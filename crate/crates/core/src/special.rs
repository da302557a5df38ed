//! Scalar special functions shared by the censored families.
//!
//! `erfc` comes from `libm`; the inverse error function and `ln Γ` come from
//! `statrs`; the far lower tail of the normal log-CDF uses
//! an asymptotic Mills-ratio expansion because `Φ(r)` underflows long before
//! `log Φ(r)` does.

use statrs::function::{erf, gamma};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this standardized value the log-CDF switches to the asymptotic series.
const MILLS_SWITCH: f64 = -8.0;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Sum of the asymptotic series `1 - 1/x² + 3/x⁴ - 15/x⁶ + ...`, truncated at
/// its smallest term. Valid for `x` well into the lower tail.
fn mills_series(x: f64) -> f64 {
    let inv_x2 = 1.0 / (x * x);
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..40 {
        let next = -term * (2 * k - 1) as f64 * inv_x2;
        if next.abs() >= term.abs() || next.abs() < 1e-17 {
            break;
        }
        term = next;
        sum += term;
    }
    sum
}

/// `log Φ(x)`, finite for every finite `x`.
pub fn norm_log_cdf(x: f64) -> f64 {
    if x < MILLS_SWITCH {
        norm_log_pdf(x) - (-x).ln() + mills_series(x).ln()
    } else if x > 5.0 {
        // log(1 - Φ(-x)) without cancellation
        (-norm_cdf(-x)).ln_1p()
    } else {
        norm_cdf(x).ln()
    }
}

/// Inverse Mills ratio `φ(x) / Φ(x)`.
pub fn norm_pdf_over_cdf(x: f64) -> f64 {
    if x < MILLS_SWITCH {
        -x / mills_series(x)
    } else {
        norm_pdf(x) / norm_cdf(x)
    }
}

/// Standard normal quantile `Φ⁻¹(p)` for `0 < p < 1`.
pub fn norm_quantile(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Natural log of the regularized upper incomplete gamma function `Q(a, x)`.
fn ln_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefactor = -x + a * x.ln() - gamma::ln_gamma(a);
    if x < a + 1.0 {
        // series for P(a, x)
        let mut ap = a;
        let mut del = 1.0 / a;
        let mut sum = del;
        for _ in 0..1000 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        let p = (log_prefactor + sum.ln()).exp();
        (-p.min(1.0)).ln_1p()
    } else {
        // modified Lentz continued fraction for Q(a, x)
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..1000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        log_prefactor + h.ln()
    }
}

/// Log of the upper tail probability of a χ² distribution with `df`
/// degrees of freedom; stays finite where the probability underflows.
pub fn chi2_log_sf(x: f64, df: usize) -> f64 {
    if df == 0 || x <= 0.0 || x.is_nan() {
        return 0.0;
    }
    ln_gamma_q(0.5 * df as f64, 0.5 * x).min(0.0)
}

/// Upper tail probability of a χ² distribution with `df` degrees of freedom.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    chi2_log_sf(x, df).exp()
}

/// Log of the two-sided normal tail probability `2 (1 - Φ(|x|))`.
pub fn norm_log_two_sided(x: f64) -> f64 {
    std::f64::consts::LN_2 + norm_log_cdf(-x.abs())
}

/// Logistic CDF `1 / (1 + e^{-x})`.
pub fn logistic_cdf(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log F(x)` for the standard logistic CDF.
pub fn logistic_log_cdf(x: f64) -> f64 {
    -softplus(-x)
}

pub fn logistic_log_pdf(x: f64) -> f64 {
    -x.abs() - 2.0 * (-x.abs()).exp().ln_1p()
}

pub fn logistic_quantile(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_cdf_is_continuous_at_series_switch() {
        let below = norm_log_cdf(MILLS_SWITCH - 1e-9);
        let above = norm_log_cdf(MILLS_SWITCH + 1e-9);
        // slope of log Φ near the switch is about 8.1
        assert!((below - above).abs() < 2e-8, "{below} vs {above}");
        let direct = norm_cdf(MILLS_SWITCH).ln();
        let series = norm_log_pdf(MILLS_SWITCH) - (-MILLS_SWITCH).ln()
            + mills_series(MILLS_SWITCH).ln();
        assert!((direct - series).abs() < 1e-12);
    }

    #[test]
    fn log_cdf_far_tail_is_finite() {
        for x in [-40.0, -100.0, -1e4] {
            let v = norm_log_cdf(x);
            assert!(v.is_finite());
            // leading behaviour -x²/2
            assert!((v / (-0.5 * x * x) - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn reference_values() {
        assert!((norm_cdf(-2.0) - 0.022_750_131_948_179_2).abs() < 1e-15);
        assert!((norm_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((norm_log_cdf(0.0) + std::f64::consts::LN_2).abs() < 1e-15);
        assert!((chi2_sf(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-10);
        assert!((logistic_log_pdf(0.0) - 0.25f64.ln()).abs() < 1e-15);
        assert!((chi2_sf(10.0, 4) - 0.040_427_681_994_512_8).abs() < 1e-12);
        assert!((chi2_sf(0.5, 3) - 0.918_891_411_654_676).abs() < 1e-12);
    }

    #[test]
    fn chi2_log_tail_beyond_underflow() {
        // Q(1/2, x/2) = erfc(sqrt(x/2)) for df = 1
        let x = 50.0;
        let direct = libm::erfc((x / 2.0f64).sqrt()).ln();
        assert!((chi2_log_sf(x, 1) - direct).abs() < 1e-10);
        let far = chi2_log_sf(5000.0, 2);
        assert!((far + 2500.0).abs() < 1e-9); // df = 2: Q = exp(-x/2)
        assert_eq!(chi2_sf(5000.0, 2), 0.0);
        assert_eq!(chi2_log_sf(0.0, 3), 0.0);
    }

    #[test]
    fn pdf_over_cdf_matches_direct_ratio() {
        for x in [-7.9, -3.0, 0.0, 2.0] {
            let direct = norm_pdf(x) / norm_cdf(x);
            assert!((norm_pdf_over_cdf(x) - direct).abs() < 1e-12 * direct.max(1.0));
        }
        let x = -8.5;
        let direct = norm_pdf(x) / norm_cdf(x);
        assert!((norm_pdf_over_cdf(x) / direct - 1.0).abs() < 1e-10);
    }
}
