//! Bernstein bases and monotone marginal transformation functions.
//!
//! A marginal transformation is a polynomial in Bernstein form on a support
//! interval `[l, u]`, with nondecreasing coefficients guaranteeing
//! monotonicity. Outside the support the transformation continues linearly
//! with the boundary slope so that scoring never produces zero density.

use serde::{Deserialize, Serialize};

use crate::norm::{inv_softplus, softplus};

/// Bernstein basis of a fixed order on a support interval, attached to one
/// marker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BernsteinBasis {
    pub order: usize,
    pub lower: f64,
    pub upper: f64,
    pub marker: usize,
}

impl BernsteinBasis {
    pub fn new(order: usize, lower: f64, upper: f64, marker: usize) -> Self {
        assert!(order >= 1, "Bernstein order must be at least 1");
        assert!(upper > lower, "support interval must have positive length");
        Self {
            order,
            lower,
            upper,
            marker,
        }
    }

    fn unit_coord(&self, y: f64) -> f64 {
        ((y - self.lower) / (self.upper - self.lower)).clamp(0.0, 1.0)
    }
}

/// Coefficients of a monotone polynomial in Bernstein form.
///
/// The vector is nondecreasing; strict increase (positive derivative almost
/// everywhere) is what [`monotone_reparam`] produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonotoneCoeffs {
    values: Vec<f64>,
}

impl MonotoneCoeffs {
    /// Wraps an already-nondecreasing coefficient vector.
    pub fn from_values(values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "need order >= 1, i.e. at least 2 coefficients");
        assert!(
            values.windows(2).all(|w| w[1] >= w[0]),
            "coefficients must be nondecreasing"
        );
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Evaluates all `M+1` basis polynomials at `y`; outside `[l, u]` the basis
/// of the clamped point is returned.
///
/// The values are the binomial pmf with success probability `(y-l)/(u-l)`,
/// so they are nonnegative and sum to one.
pub fn bernstein_basis(y: f64, basis: &BernsteinBasis) -> Vec<f64> {
    let t = basis.unit_coord(y);
    binomial_pmf_row(basis.order, t)
}

/// All values `C(m, k) t^k (1-t)^(m-k)` for `k = 0..=m`.
fn binomial_pmf_row(m: usize, t: f64) -> Vec<f64> {
    let n = m + 1;
    let mut out = vec![0.0; n];
    // Forward powers of t and backward powers of (1-t), combined with
    // incrementally built binomial coefficients.
    let mut tk = vec![0.0; n];
    let mut sk = vec![0.0; n];
    tk[0] = 1.0;
    sk[0] = 1.0;
    for k in 1..n {
        tk[k] = tk[k - 1] * t;
        sk[k] = sk[k - 1] * (1.0 - t);
    }
    let mut binom = 1.0;
    for k in 0..n {
        if k > 0 {
            binom *= (m - k + 1) as f64 / k as f64;
        }
        out[k] = binom * tk[k] * sk[m - k];
    }
    out
}

/// Evaluates the monotone transformation and its derivative at `y`.
///
/// Inside the support, `h(y) = b(y)' vartheta` and `h'(y) = b'(y)' vartheta`.
/// Outside, `h` continues linearly with the slope at the nearest boundary.
pub fn transform_eval(y: f64, coeffs: &MonotoneCoeffs, basis: &BernsteinBasis) -> (f64, f64) {
    debug_assert_eq!(coeffs.len(), basis.order + 1);
    if y < basis.lower {
        let (h_l, slope_l) = eval_inside(basis.lower, coeffs, basis);
        (h_l + slope_l * (y - basis.lower), slope_l)
    } else if y > basis.upper {
        let (h_u, slope_u) = eval_inside(basis.upper, coeffs, basis);
        (h_u + slope_u * (y - basis.upper), slope_u)
    } else {
        eval_inside(y, coeffs, basis)
    }
}

fn eval_inside(y: f64, coeffs: &MonotoneCoeffs, basis: &BernsteinBasis) -> (f64, f64) {
    let t = basis.unit_coord(y);
    let vals = binomial_pmf_row(basis.order, t);
    let h = vals
        .iter()
        .zip(coeffs.values())
        .map(|(b, v)| b * v)
        .sum::<f64>();
    // h'(y) = M/(u-l) * sum_m (theta_{m+1} - theta_m) * b_{M-1,m}(t)
    let lower_order = binomial_pmf_row(basis.order - 1, t);
    let scale = basis.order as f64 / (basis.upper - basis.lower);
    let v = coeffs.values();
    let hp = scale
        * lower_order
            .iter()
            .enumerate()
            .map(|(m, b)| b * (v[m + 1] - v[m]))
            .sum::<f64>();
    (h, hp)
}

/// Maps an unconstrained vector to strictly increasing coefficients:
/// the first entry passes through, each subsequent increment is
/// `softplus(raw[m]) > 0`.
pub fn monotone_reparam(raw: &[f64]) -> MonotoneCoeffs {
    assert!(raw.len() >= 2);
    let mut values = Vec::with_capacity(raw.len());
    values.push(raw[0]);
    for &r in &raw[1..] {
        let prev = *values.last().unwrap();
        values.push(prev + softplus(r));
    }
    MonotoneCoeffs { values }
}

/// Inverse of [`monotone_reparam`]; requires strictly increasing input.
pub fn inverse_reparam(coeffs: &MonotoneCoeffs) -> Vec<f64> {
    let v = coeffs.values();
    let mut raw = Vec::with_capacity(v.len());
    raw.push(v[0]);
    for w in v.windows(2) {
        let inc = w[1] - w[0];
        assert!(inc > 0.0, "inverse_reparam requires strictly increasing coefficients");
        raw.push(inv_softplus(inc));
    }
    raw
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn basis01(m: usize) -> BernsteinBasis {
        BernsteinBasis::new(m, 0.0, 1.0, 0)
    }

    #[test]
    fn basis_boundary_is_indicator() {
        let b = basis01(2);
        assert_eq!(bernstein_basis(0.0, &b), vec![1.0, 0.0, 0.0]);
        assert_eq!(bernstein_basis(1.0, &b), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn basis_midpoint_order_two() {
        let b = basis01(2);
        let v = bernstein_basis(0.5, &b);
        assert!((v[0] - 0.25).abs() < 1e-15);
        assert!((v[1] - 0.5).abs() < 1e-15);
        assert!((v[2] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn basis_matches_binomial_pmf() {
        // Components at t = 0.3, M = 3 equal C(3,m) 0.3^m 0.7^(3-m).
        let b = basis01(3);
        let v = bernstein_basis(0.3, &b);
        let expected = [0.343, 0.441, 0.189, 0.027];
        for (got, want) in v.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn basis_partition_of_unity() {
        let b = BernsteinBasis::new(6, -2.0, 5.0, 0);
        for i in 0..=100 {
            let y = -2.0 + 7.0 * i as f64 / 100.0;
            let v = bernstein_basis(y, &b);
            assert!(v.iter().all(|&x| x >= 0.0));
            let s: f64 = v.iter().sum();
            assert!((s - 1.0).abs() < 1e-12, "sum {s} at y = {y}");
        }
    }

    #[test]
    fn linear_coefficients_reproduce_identity() {
        // theta_m = m/M on [0,1] gives h(y) = y, h'(y) = 1.
        let m = 5;
        let b = basis01(m);
        let coeffs =
            MonotoneCoeffs::from_values((0..=m).map(|k| k as f64 / m as f64).collect());
        for i in 0..=20 {
            let y = i as f64 / 20.0;
            let (h, hp) = transform_eval(y, &coeffs, &b);
            assert!((h - y).abs() < 1e-12);
            assert!((hp - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_coefficients_degenerate() {
        let b = basis01(3);
        let coeffs = MonotoneCoeffs::from_values(vec![2.5; 4]);
        let (h, hp) = transform_eval(0.37, &coeffs, &b);
        assert!((h - 2.5).abs() < 1e-14);
        assert!(hp.abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(7);
        let b = BernsteinBasis::new(6, -1.0, 2.0, 0);
        for _ in 0..20 {
            let raw: Vec<f64> = (0..7).map(|_| rng.random_range(-1.0..1.0)).collect();
            let coeffs = monotone_reparam(&raw);
            for _ in 0..100 {
                let y = rng.random_range(-0.9..1.9);
                let eps = 1e-5;
                let (_, hp) = transform_eval(y, &coeffs, &b);
                let (h_plus, _) = transform_eval(y + eps, &coeffs, &b);
                let (h_minus, _) = transform_eval(y - eps, &coeffs, &b);
                let fd = (h_plus - h_minus) / (2.0 * eps);
                assert!((hp - fd).abs() < 1e-6, "hp {hp} fd {fd} at y {y}");
            }
        }
    }

    #[test]
    fn tail_extension_is_linear_and_monotone() {
        let b = basis01(4);
        let coeffs = monotone_reparam(&[0.3, -0.5, 0.1, 0.9, -2.0]);
        let (h_l, s_l) = transform_eval(0.0, &coeffs, &b);
        let (h_out, s_out) = transform_eval(-3.0, &coeffs, &b);
        assert!((h_out - (h_l - 3.0 * s_l)).abs() < 1e-12);
        assert!((s_out - s_l).abs() < 1e-15);
        // Monotone across the whole line, including the tails.
        let mut prev = f64::NEG_INFINITY;
        for i in 0..200 {
            let y = -2.0 + 5.0 * i as f64 / 199.0;
            let (h, _) = transform_eval(y, &coeffs, &b);
            assert!(h >= prev);
            prev = h;
        }
    }

    #[test]
    fn reparam_softplus_values() {
        let c = monotone_reparam(&[0.0, 0.0, 0.0]);
        let ln2 = std::f64::consts::LN_2;
        assert!((c.values()[0] - 0.0).abs() < 1e-15);
        assert!((c.values()[1] - ln2).abs() < 1e-15);
        assert!((c.values()[2] - 2.0 * ln2).abs() < 1e-15);
    }

    #[test]
    fn reparam_large_raw_is_nearly_identity_increment() {
        let c = monotone_reparam(&[-1.0, 20.0, 20.0]);
        let v = c.values();
        assert!((v[1] - v[0] - 20.0).abs() < 1e-8);
        assert!((v[2] - v[1] - 20.0).abs() < 1e-8);
    }

    #[test]
    fn reparam_round_trip() {
        let mut rng = StdRng::seed_from_u64(42);
        for _ in 0..50 {
            let raw: Vec<f64> = (0..8).map(|_| rng.random_range(-4.0..4.0)).collect();
            let back = inverse_reparam(&monotone_reparam(&raw));
            for (a, b) in raw.iter().zip(&back) {
                assert!((a - b).abs() < 1e-10);
            }
        }
    }
}
