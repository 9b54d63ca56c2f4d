//! Dense BFGS quasi-Newton minimizer with a strong-Wolfe line search.
//!
//! Problem dimensions here stay below ~100, so the full inverse-Hessian
//! update is cheaper and more robust than limited-memory variants.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Max-norm threshold on the gradient at the solution.
    pub grad_tol: f64,
    /// Relative objective-improvement threshold.
    pub f_tol_rel: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self {
            max_iter: 2000,
            grad_tol: 1e-5,
            f_tol_rel: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BfgsOutcome {
    pub x: DVector<f64>,
    pub f: f64,
    pub grad: DVector<f64>,
    pub iterations: usize,
    /// Both convergence thresholds were met.
    pub converged: bool,
    /// Line search could no longer make progress.
    pub stalled: bool,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;

/// Minimizes `f` from `x0`. The objective returns the value and gradient
/// jointly; non-finite values are treated as out-of-bounds by the line
/// search.
pub fn minimize_bfgs<F>(mut objective: F, x0: DVector<f64>, opts: &BfgsOptions) -> BfgsOutcome
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = objective(&x);
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut iterations = 0;
    let mut stalled = false;
    let mut last_rel_improvement = f64::INFINITY;

    while iterations < opts.max_iter {
        let gmax = g.amax();
        if gmax <= opts.grad_tol && last_rel_improvement < opts.f_tol_rel {
            break;
        }
        let mut p = -(&h * &g);
        let mut dphi0 = p.dot(&g);
        if !dphi0.is_finite() || dphi0 >= 0.0 {
            // Reset to steepest descent if the model lost positive
            // definiteness through rounding.
            h = DMatrix::identity(n, n);
            p = -g.clone();
            dphi0 = -g.norm_squared();
            if dphi0 == 0.0 {
                break;
            }
        }

        match line_search(&mut objective, &x, &p, f, dphi0) {
            Some(ls) => {
                let step = &ls.x - &x;
                let y = &ls.grad - &g;
                let sy = step.dot(&y);
                last_rel_improvement = (f - ls.f) / (f.abs() + 1e-12);
                x = ls.x;
                f = ls.f;
                g = ls.grad;
                if sy > 1e-10 * step.norm() * y.norm() {
                    if first_update {
                        let yy = y.norm_squared();
                        if yy > 0.0 {
                            h *= sy / yy;
                        }
                        first_update = false;
                    }
                    bfgs_update(&mut h, &step, &y, sy);
                }
            }
            None => {
                stalled = true;
                break;
            }
        }
        iterations += 1;
    }

    let gmax = g.amax();
    let converged = gmax <= opts.grad_tol && last_rel_improvement < opts.f_tol_rel;
    BfgsOutcome {
        x,
        f,
        grad: g,
        iterations,
        converged,
        stalled,
    }
}

/// `H <- (I - r s y')H(I - r y s') + r s s'` with `r = 1/(y's)`.
fn bfgs_update(h: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, sy: f64) {
    let r = 1.0 / sy;
    let hy = &*h * y;
    let yhy = y.dot(&hy);
    // Expanded form avoids building the rank-one projector matrices.
    let coef = r * r * yhy + r;
    let n = h.nrows();
    for i in 0..n {
        for jj in 0..n {
            h[(i, jj)] += coef * s[i] * s[jj] - r * (s[i] * hy[jj] + hy[i] * s[jj]);
        }
    }
}

struct LineSearchResult {
    x: DVector<f64>,
    f: f64,
    grad: DVector<f64>,
}

/// Strong-Wolfe line search (bracket then zoom with bisection/interpolation).
fn line_search<F>(
    objective: &mut F,
    x: &DVector<f64>,
    p: &DVector<f64>,
    phi0: f64,
    dphi0: f64,
) -> Option<LineSearchResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let eval = |objective: &mut F, alpha: f64| {
        let xt = x + p * alpha;
        let (ft, gt) = objective(&xt);
        let dt = gt.dot(p);
        (xt, ft, gt, dt)
    };

    let mut alpha_prev = 0.0;
    let mut phi_prev = phi0;
    let mut alpha = 1.0;
    let mut best: Option<LineSearchResult> = None;

    for iter in 0..30 {
        let (xt, ft, gt, dt) = eval(objective, alpha);
        if !ft.is_finite() {
            // Stepped out of the finite region; shrink hard.
            alpha = alpha_prev + 0.25 * (alpha - alpha_prev);
            if alpha - alpha_prev < 1e-18 {
                break;
            }
            continue;
        }
        if ft < phi0 {
            // Track the best plain decrease as a fallback.
            let replace = best.as_ref().map(|b| ft < b.f).unwrap_or(true);
            if replace {
                best = Some(LineSearchResult {
                    x: xt.clone(),
                    f: ft,
                    grad: gt.clone(),
                });
            }
        }
        if ft > phi0 + C1 * alpha * dphi0 || (iter > 0 && ft >= phi_prev) {
            return zoom(objective, x, p, phi0, dphi0, alpha_prev, phi_prev, alpha).or(best);
        }
        if dt.abs() <= -C2 * dphi0 {
            return Some(LineSearchResult {
                x: xt,
                f: ft,
                grad: gt,
            });
        }
        if dt >= 0.0 {
            return zoom(objective, x, p, phi0, dphi0, alpha, ft, alpha_prev).or(best);
        }
        alpha_prev = alpha;
        phi_prev = ft;
        alpha = (2.5 * alpha).min(1e6);
    }
    best
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(
    objective: &mut F,
    x: &DVector<f64>,
    p: &DVector<f64>,
    phi0: f64,
    dphi0: f64,
    mut alpha_lo: f64,
    mut phi_lo: f64,
    mut alpha_hi: f64,
) -> Option<LineSearchResult>
where
    F: FnMut(&DVector<f64>) -> (f64, DVector<f64>),
{
    let mut best: Option<LineSearchResult> = None;
    for _ in 0..30 {
        let alpha = 0.5 * (alpha_lo + alpha_hi);
        if (alpha_hi - alpha_lo).abs() < 1e-16 * (1.0 + alpha_lo.abs()) {
            break;
        }
        let xt = x + p * alpha;
        let (ft, gt) = objective(&xt);
        let dt = gt.dot(p);
        if ft.is_finite() && ft < phi0 {
            let replace = best.as_ref().map(|b| ft < b.f).unwrap_or(true);
            if replace {
                best = Some(LineSearchResult {
                    x: xt.clone(),
                    f: ft,
                    grad: gt.clone(),
                });
            }
        }
        if !ft.is_finite() || ft > phi0 + C1 * alpha * dphi0 || ft >= phi_lo {
            alpha_hi = alpha;
        } else {
            if dt.abs() <= -C2 * dphi0 {
                return Some(LineSearchResult {
                    x: xt,
                    f: ft,
                    grad: gt,
                });
            }
            if dt * (alpha_hi - alpha_lo) >= 0.0 {
                alpha_hi = alpha_lo;
            }
            alpha_lo = alpha;
            phi_lo = ft;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let out = minimize_bfgs(
            |x| {
                let f = 2.0 * x[0] * x[0] + (x[1] - 1.0) * (x[1] - 1.0);
                let g = DVector::from_vec(vec![4.0 * x[0], 2.0 * (x[1] - 1.0)]);
                (f, g)
            },
            DVector::from_vec(vec![3.0, -4.0]),
            &BfgsOptions::default(),
        );
        assert!(out.converged);
        assert!(out.x[0].abs() < 1e-7);
        assert!((out.x[1] - 1.0).abs() < 1e-7);
    }

    #[test]
    fn rosenbrock() {
        let out = minimize_bfgs(
            |x| {
                let (a, b) = (x[0], x[1]);
                let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
                let g = DVector::from_vec(vec![
                    -2.0 * (1.0 - a) - 400.0 * a * (b - a * a),
                    200.0 * (b - a * a),
                ]);
                (f, g)
            },
            DVector::from_vec(vec![-1.2, 1.0]),
            &BfgsOptions {
                max_iter: 500,
                ..Default::default()
            },
        );
        assert!((out.x[0] - 1.0).abs() < 1e-5, "{:?}", out.x);
        assert!((out.x[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn handles_infinite_region() {
        // f(x) = -log(1 - x^2) + (x - 0.3)^2, infinite outside (-1, 1).
        let out = minimize_bfgs(
            |x| {
                let v = x[0];
                if v.abs() >= 1.0 {
                    return (f64::INFINITY, DVector::from_vec(vec![f64::NAN]));
                }
                let f = -(1.0 - v * v).ln() + (v - 0.3) * (v - 0.3);
                let g = DVector::from_vec(vec![2.0 * v / (1.0 - v * v) + 2.0 * (v - 0.3)]);
                (f, g)
            },
            DVector::from_vec(vec![0.9]),
            &BfgsOptions::default(),
        );
        assert!(out.converged, "{out:?}");
        // Stationarity: 2v/(1-v^2) + 2(v-0.3) = 0 near v ~ 0.1398.
        assert!(out.grad.amax() < 1e-5);
    }
}
