//! Thin wrappers around the special functions the crate relies on, so the
//! choice of backing implementation lives in one place.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use statrs::function::gamma::{gamma, gamma_lr, gamma_ur};

/// Euler gamma function.
pub fn gamma_fn(x: f64) -> f64 {
    gamma(x)
}

/// Regularized lower incomplete gamma function `P(a, x)`.
pub fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(a, x)
    }
}

/// Regularized upper incomplete gamma function `Q(a, x)`, accurate in the
/// tail where `1 - P(a, x)` would lose all precision.
pub fn reg_upper_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        gamma_ur(a, x)
    }
}

/// Standard normal CDF, accurate in both tails.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Standard normal density.
pub fn normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile, polished with one Newton step so that
/// `normal_cdf(normal_quantile(p))` agrees with `p` to near machine precision.
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "normal quantile needs p in (0,1)");
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    let mut z = n.inverse_cdf(p);
    let pdf = normal_pdf(z);
    if pdf > 0.0 {
        z -= (normal_cdf(z) - p) / pdf;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_quantile_round_trip() {
        for &p in &[1e-12, 1e-6, 0.025, 0.5, 0.7, 0.975, 1.0 - 1e-6] {
            let z = normal_quantile(p);
            assert!((normal_cdf(z) - p).abs() <= 1e-14 + 1e-12 * p);
        }
    }

    #[test]
    fn incomplete_gamma_endpoints() {
        assert_eq!(reg_lower_gamma(0.5, 0.0), 0.0);
        assert!((reg_lower_gamma(0.5, 1e10) - 1.0).abs() < 1e-12);
    }
}
