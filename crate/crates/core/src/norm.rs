//! Standard-normal helpers shared across the crate.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};
use statrs::function::gamma::{gamma_lr, gamma_ur};

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("valid standard normal")
}

/// Standard normal CDF through the regularized incomplete gamma function,
/// which stays at machine precision into the far tails.
pub fn phi(x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    let z = x / std::f64::consts::SQRT_2;
    if x < 0.0 {
        0.5 * gamma_ur(0.5, z * z)
    } else {
        0.5 + 0.5 * gamma_lr(0.5, z * z)
    }
}

/// Standard normal density.
pub fn dphi(x: f64) -> f64 {
    std_normal().pdf(x)
}

/// Standard normal log-density.
pub fn log_dphi(x: f64) -> f64 {
    -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

/// Standard normal quantile, polished to machine precision by Newton steps
/// on the CDF.
pub fn phi_inv(p: f64) -> f64 {
    let mut x = std_normal().inverse_cdf(p);
    for _ in 0..2 {
        let f = phi(x) - p;
        let d = dphi(x);
        if d <= f64::MIN_POSITIVE {
            break;
        }
        x -= f / d;
    }
    x
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Inverse of [`softplus`]: `log(e^y - 1)` for `y > 0`.
pub fn inv_softplus(y: f64) -> f64 {
    debug_assert!(y > 0.0);
    if y < std::f64::consts::LN_2 {
        // expm1 keeps small increments exact.
        y.exp_m1().ln()
    } else {
        y + (-(-y).exp()).ln_1p()
    }
}

/// Logistic sigmoid, the derivative of [`softplus`].
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_round_trip() {
        for &x in &[-20.0, -3.0, -0.5, 0.0, 0.7, 5.0, 30.0] {
            let y = softplus(x);
            assert!((inv_softplus(y) - x).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn phi_matches_known_values() {
        assert!((phi(0.0) - 0.5).abs() < 1e-15);
        assert!((phi(1.959963984540054) - 0.975).abs() < 1e-12);
        assert!((phi_inv(0.975) - 1.959963984540054).abs() < 1e-8);
    }
}
