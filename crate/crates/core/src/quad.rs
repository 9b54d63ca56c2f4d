//! Gauss-Legendre quadrature on [-1, 1], used by the characteristic-function
//! inversion and by numeric-integration oracles.

use std::collections::HashMap;
use std::sync::{Mutex, OnceLock};

/// Nodes and weights of the `n`-point Gauss-Legendre rule on [-1, 1].
///
/// Computed by Newton iteration on the Legendre polynomial and cached.
pub fn gauss_legendre(n: usize) -> (&'static [f64], &'static [f64]) {
    // Leak per rule size; the set of sizes used is tiny and fixed.
    type Stored = (&'static [f64], &'static [f64]);
    static RULES: OnceLock<Mutex<HashMap<usize, Stored>>> = OnceLock::new();
    let rules = RULES.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = rules.lock().unwrap();
    if let Some(&(nodes, weights)) = guard.get(&n) {
        return (nodes, weights);
    }
    let (nodes, weights) = compute_gauss_legendre(n);
    let nodes: &'static [f64] = Box::leak(nodes.into_boxed_slice());
    let weights: &'static [f64] = Box::leak(weights.into_boxed_slice());
    guard.insert(n, (nodes, weights));
    (nodes, weights)
}

fn compute_gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Chebyshev-based initial guess.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P'_n(x).
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

/// Integrates `f` over `[a, b]` with a fixed `n`-point rule.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    let (nodes, weights) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut s = 0.0;
    for (&t, &w) in nodes.iter().zip(weights) {
        s += w * f(mid + half * t);
    }
    s * half
}
