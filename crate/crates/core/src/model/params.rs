//! Flat parameter vector layout, decoding, and the joint log-likelihood
//! with its analytic gradient.
//!
//! Layout order: marginal coefficient blocks (raw, softplus-increment
//! scale), then location shifts, then log-scales, then correlation
//! parameters (one block per scope class). The Free family carries two
//! coefficient blocks (class 0, class 1) and no shifts or scales.

use std::collections::HashMap;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::bernstein::{monotone_reparam, MonotoneCoeffs};
use crate::corr::{corr_from_lambda, CorrelationParam};
use crate::data::CaseControlData;
use crate::model::{CorrelationScope, MarginalFamily};
use crate::norm::sigmoid;

const LN_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone)]
pub(crate) struct ParamLayout {
    pub j: usize,
    pub order: usize,
    pub family: MarginalFamily,
    pub scope: CorrelationScope,
}

impl ParamLayout {
    pub fn coeff_block_len(&self) -> usize {
        self.order + 1
    }

    pub fn n_coeff_blocks(&self) -> usize {
        match self.family {
            MarginalFamily::Free => 2,
            _ => 1,
        }
    }

    pub fn has_delta(&self) -> bool {
        !matches!(self.family, MarginalFamily::Free)
    }

    pub fn has_gamma(&self) -> bool {
        matches!(self.family, MarginalFamily::LocationScale)
    }

    pub fn n_lambda_blocks(&self) -> usize {
        match self.scope {
            CorrelationScope::Global => 1,
            CorrelationScope::PerDisease => 2,
        }
    }

    pub fn lambda_len(&self) -> usize {
        self.j * (self.j - 1) / 2
    }

    pub fn coeff_offset(&self, block: usize, marker: usize) -> usize {
        (block * self.j + marker) * self.coeff_block_len()
    }

    pub fn delta_offset(&self) -> usize {
        self.n_coeff_blocks() * self.j * self.coeff_block_len()
    }

    pub fn gamma_offset(&self) -> usize {
        self.delta_offset() + if self.has_delta() { self.j } else { 0 }
    }

    pub fn lambda_offset(&self, block: usize) -> usize {
        self.gamma_offset()
            + if self.has_gamma() { self.j } else { 0 }
            + block * self.lambda_len()
    }

    pub fn n_params(&self) -> usize {
        self.lambda_offset(self.n_lambda_blocks())
    }
}

/// Parameters decoded to model scale, plus factors reused by the gradient.
pub(crate) struct Decoded {
    pub coeffs: Vec<Vec<MonotoneCoeffs>>, // one or two blocks of J coefficient sets
    pub delta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub corrs: Vec<CorrelationParam>,
}

impl Decoded {
    pub fn coeffs_for(&self, d: usize, marker: usize) -> &MonotoneCoeffs {
        if self.coeffs.len() == 2 {
            &self.coeffs[d][marker]
        } else {
            &self.coeffs[0][marker]
        }
    }
}

pub(crate) fn decode(layout: &ParamLayout, x: &[f64]) -> Decoded {
    debug_assert_eq!(x.len(), layout.n_params());
    let mlen = layout.coeff_block_len();
    let mut coeffs = Vec::with_capacity(layout.n_coeff_blocks());
    for b in 0..layout.n_coeff_blocks() {
        let mut per_marker = Vec::with_capacity(layout.j);
        for m in 0..layout.j {
            let off = layout.coeff_offset(b, m);
            per_marker.push(monotone_reparam(&x[off..off + mlen]));
        }
        coeffs.push(per_marker);
    }
    let delta = if layout.has_delta() {
        x[layout.delta_offset()..layout.delta_offset() + layout.j].to_vec()
    } else {
        vec![0.0; layout.j]
    };
    let gamma = if layout.has_gamma() {
        x[layout.gamma_offset()..layout.gamma_offset() + layout.j].to_vec()
    } else {
        vec![0.0; layout.j]
    };
    let mut corrs = Vec::with_capacity(layout.n_lambda_blocks());
    for b in 0..layout.n_lambda_blocks() {
        let off = layout.lambda_offset(b);
        corrs.push(corr_from_lambda(&x[off..off + layout.lambda_len()]));
    }
    Decoded {
        coeffs,
        delta,
        gamma,
        corrs,
    }
}

/// Effective basis vectors at `y`: `h = beff' theta` and `h' = bpeff' theta`
/// exactly, including the linear tail continuation outside the support.
pub(crate) fn effective_basis(
    y: f64,
    order: usize,
    lower: f64,
    upper: f64,
) -> (Vec<f64>, Vec<f64>) {
    let (y_in, shift) = if y < lower {
        (lower, y - lower)
    } else if y > upper {
        (upper, y - upper)
    } else {
        (y, 0.0)
    };
    let t = (y_in - lower) / (upper - lower);
    let b = binom_row(order, t);
    let low = binom_row(order - 1, t);
    let scale = order as f64 / (upper - lower);
    let mut bp = vec![0.0; order + 1];
    for (m, &lv) in low.iter().enumerate() {
        bp[m] -= scale * lv;
        bp[m + 1] += scale * lv;
    }
    if shift != 0.0 {
        let mut beff = b;
        for (be, &d) in beff.iter_mut().zip(&bp) {
            *be += shift * d;
        }
        (beff, bp)
    } else {
        (b, bp)
    }
}

fn binom_row(m: usize, t: f64) -> Vec<f64> {
    let n = m + 1;
    let mut tk = vec![1.0; n];
    let mut sk = vec![1.0; n];
    for k in 1..n {
        tk[k] = tk[k - 1] * t;
        sk[k] = sk[k - 1] * (1.0 - t);
    }
    let mut out = vec![0.0; n];
    let mut binom = 1.0;
    for k in 0..n {
        if k > 0 {
            binom *= (m - k + 1) as f64 / k as f64;
        }
        out[k] = binom * tk[k] * sk[m - k];
    }
    out
}

struct PatternState {
    idx: Vec<usize>,
    chol: Cholesky<f64, Dyn>,
    log_det: f64,
    count: f64,
    scatter: DMatrix<f64>,
}

/// Joint log-likelihood over all rows; optionally its gradient.
///
/// Rows with missing markers contribute the marginal Gaussian density over
/// their observed coordinates. Returns `-inf` when parameters are
/// non-finite or a derivative fails to be positive at an observed point.
pub(crate) fn eval_loglik(
    layout: &ParamLayout,
    x: &[f64],
    data: &CaseControlData,
    bounds: &[(f64, f64)],
    want_grad: bool,
) -> (f64, Option<Vec<f64>>) {
    let n_par = layout.n_params();
    if x.iter().any(|v| !v.is_finite()) {
        return (f64::NEG_INFINITY, want_grad.then(|| vec![0.0; n_par]));
    }
    let dec = decode(layout, x);
    let j = layout.j;
    let mlen = layout.coeff_block_len();

    // Accumulators for the gradient, on the decoded (theta/delta/gamma)
    // scale; chained back to the raw scale at the end.
    let n_blocks = layout.n_coeff_blocks();
    let mut g_theta = vec![vec![0.0; j * mlen]; n_blocks];
    let mut g_delta = vec![0.0; j];
    let mut g_gamma = vec![0.0; j];

    // Per correlation block, per missingness pattern.
    let mut patterns: Vec<HashMap<u32, PatternState>> =
        (0..layout.n_lambda_blocks()).map(|_| HashMap::new()).collect();

    let mut total = 0.0;
    let mut h_obs: Vec<f64> = Vec::with_capacity(j);
    let mut gh_scale: Vec<(usize, f64, f64, f64)> = Vec::with_capacity(j);

    for i in 0..data.n_rows() {
        let d = data.disease(i) as usize;
        let block = if n_blocks == 2 { d } else { 0 };
        let corr_block = if layout.n_lambda_blocks() == 2 { d } else { 0 };
        let obs = data.row_observed(i);
        let vals = data.row_values(i);

        let mut mask: u32 = 0;
        h_obs.clear();
        gh_scale.clear();
        let mut jac = 0.0;

        for (k, (&o, &y)) in obs.iter().zip(vals).enumerate() {
            if !o {
                continue;
            }
            mask |= 1 << k;
            let (lo, up) = bounds[k];
            let (beff, bpeff) = effective_basis(y, layout.order, lo, up);
            let theta = dec.coeffs_for(d, k).values();
            let mut t = 0.0;
            let mut tp = 0.0;
            for m in 0..mlen {
                t += beff[m] * theta[m];
                tp += bpeff[m] * theta[m];
            }
            if !(tp > 0.0) {
                return (f64::NEG_INFINITY, want_grad.then(|| vec![0.0; n_par]));
            }
            let s = if d == 1 { (-dec.gamma[k]).exp() } else { 1.0 };
            let h = if d == 1 { (t - dec.delta[k]) * s } else { t };
            jac += tp.ln() - if d == 1 { dec.gamma[k] } else { 0.0 };
            h_obs.push(h);
            if want_grad {
                // Stash what the gradient pass needs: marker, scale, h, tp.
                gh_scale.push((k, s, h, tp));
            }
        }

        let m_obs = h_obs.len();
        if !patterns[corr_block].contains_key(&mask) {
            let idx: Vec<usize> = (0..j).filter(|&k| mask & (1 << k) != 0).collect();
            let sigma = &dec.corrs[corr_block].sigma;
            let sub = sigma.select_rows(idx.iter()).select_columns(idx.iter());
            let Some(chol) = sub.cholesky() else {
                // Numerically indefinite submatrix at an extreme iterate.
                return (f64::NEG_INFINITY, want_grad.then(|| vec![0.0; n_par]));
            };
            let log_det = 2.0 * (0..idx.len()).map(|a| chol.l()[(a, a)].ln()).sum::<f64>();
            patterns[corr_block].insert(
                mask,
                PatternState {
                    idx,
                    chol,
                    log_det,
                    count: 0.0,
                    scatter: DMatrix::zeros(m_obs, m_obs),
                },
            );
        }
        let state = patterns[corr_block].get_mut(&mask).unwrap();

        let h_vec = DVector::from_column_slice(&h_obs);
        let mut v = h_vec.clone();
        state.chol.solve_mut(&mut v);
        let quad = h_vec.dot(&v);
        total += -0.5 * (quad + m_obs as f64 * LN_2PI + state.log_det) + jac;

        if want_grad {
            state.count += 1.0;
            for a in 0..m_obs {
                for b in 0..m_obs {
                    state.scatter[(a, b)] += h_obs[a] * h_obs[b];
                }
            }
            for (a, &(k, s, h, tp)) in gh_scale.iter().enumerate() {
                let gh = -v[a];
                let theta_grad = &mut g_theta[block][k * mlen..(k + 1) * mlen];
                let (lo, up) = bounds[k];
                let (beff, bpeff) = effective_basis(vals[k], layout.order, lo, up);
                for m in 0..mlen {
                    theta_grad[m] += gh * s * beff[m] + bpeff[m] / tp;
                }
                if d == 1 {
                    g_delta[k] += -gh * s;
                    g_gamma[k] += -gh * h - 1.0;
                }
            }
        }
    }

    if !total.is_finite() {
        return (f64::NEG_INFINITY, want_grad.then(|| vec![0.0; n_par]));
    }
    if !want_grad {
        return (total, None);
    }

    let mut grad = vec![0.0; n_par];

    // Chain theta gradients to the raw (softplus-increment) scale.
    for b in 0..n_blocks {
        for k in 0..j {
            let off = layout.coeff_offset(b, k);
            let gt = &g_theta[b][k * mlen..(k + 1) * mlen];
            let mut suffix = 0.0;
            let mut suffixes = vec![0.0; mlen];
            for m in (0..mlen).rev() {
                suffix += gt[m];
                suffixes[m] = suffix;
            }
            grad[off] = suffixes[0];
            for m in 1..mlen {
                grad[off + m] = sigmoid(x[off + m]) * suffixes[m];
            }
        }
    }

    if layout.has_delta() {
        let off = layout.delta_offset();
        grad[off..off + j].copy_from_slice(&g_delta);
    }
    if layout.has_gamma() {
        let off = layout.gamma_offset();
        grad[off..off + j].copy_from_slice(&g_gamma);
    }

    // Correlation gradients: assemble dL/dSigma per block, then chain
    // through the standardized Cholesky parameterization.
    for (cb, pat_map) in patterns.iter().enumerate() {
        if layout.lambda_len() == 0 {
            continue;
        }
        let corr = &dec.corrs[cb];
        let mut p_full = DMatrix::<f64>::zeros(j, j);
        for state in pat_map.values() {
            let k_inv = state.chol.inverse();
            // dL/dSigma_oo = (K S K - n K) / 2
            let p_oo = 0.5 * (&k_inv * &state.scatter * &k_inv - state.count * &k_inv);
            for (a, &ia) in state.idx.iter().enumerate() {
                for (b, &ib) in state.idx.iter().enumerate() {
                    p_full[(ia, ib)] += p_oo[(a, b)];
                }
            }
        }
        let glam = lambda_gradient(corr, &p_full);
        let off = layout.lambda_offset(cb);
        grad[off..off + layout.lambda_len()].copy_from_slice(&glam);
    }

    (total, Some(grad))
}

/// Chains `dL/dSigma` to the unconstrained lower-triangle entries.
///
/// With `T = L D(L)` the standardized factor, `Sigma^{-1} = T' T`, and
/// `P = dL/dSigma` symmetric, the derivative for entry `(p, q)` of `L` is
/// `-2 [ A_pq D_q - sum_k a_k M_qk / D_k * colsum_k ]` where
/// `A = T Sigma P Sigma`, `a = L^{-1} e_p`, `M = L^{-1} L^{-'}` and
/// `colsum_k = sum_j A_jk L_jk`.
fn lambda_gradient(corr: &CorrelationParam, p_full: &DMatrix<f64>) -> Vec<f64> {
    let j = corr.dim();
    let l_inv = lower_inverse(&corr.unit_lower);
    let m = &l_inv * l_inv.transpose();
    let d: Vec<f64> = (0..j).map(|k| m[(k, k)].sqrt()).collect();
    let a_mat = &corr.std_cholesky * &corr.sigma * p_full * &corr.sigma;
    let mut colsum = vec![0.0; j];
    for k in 0..j {
        for row in 0..j {
            colsum[k] += a_mat[(row, k)] * corr.unit_lower[(row, k)];
        }
    }
    let mut out = Vec::with_capacity(j * (j - 1) / 2);
    for p in 1..j {
        for q in 0..p {
            let mut dsum = a_mat[(p, q)] * d[q];
            for k in 0..j {
                let a_k = l_inv[(k, p)];
                if a_k != 0.0 {
                    dsum -= colsum[k] * a_k * m[(q, k)] / d[k];
                }
            }
            out.push(-2.0 * dsum);
        }
    }
    out
}

fn lower_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let mut inv = DMatrix::zeros(n, n);
    for col in 0..n {
        inv[(col, col)] = 1.0 / l[(col, col)];
        for row in col + 1..n {
            let mut s = 0.0;
            for k in col..row {
                s += l[(row, k)] * inv[(k, col)];
            }
            inv[(row, col)] = -s / l[(row, row)];
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn toy_data(rng: &mut StdRng, n: usize, j: usize, with_missing: bool) -> CaseControlData {
        let mut values = Vec::with_capacity(n * j);
        let mut observed = Vec::with_capacity(n * j);
        let mut disease = Vec::with_capacity(n);
        for i in 0..n {
            let d = (i % 2) as u8;
            disease.push(d);
            for k in 0..j {
                let v: f64 = rng.random_range(-2.0..2.0) + 0.3 * d as f64 * (k as f64 + 1.0);
                values.push(v);
                let missing = with_missing && k > 0 && rng.random::<f64>() < 0.15;
                observed.push(!missing);
            }
        }
        CaseControlData::from_parts(
            values,
            observed,
            disease,
            (0..j).map(|k| format!("y{k}")).collect(),
        )
        .unwrap()
    }

    fn check_gradient(layout: &ParamLayout, data: &CaseControlData, bounds: &[(f64, f64)]) {
        let mut rng = StdRng::seed_from_u64(31);
        let n_par = layout.n_params();
        for _ in 0..4 {
            let x: Vec<f64> = (0..n_par).map(|_| rng.random_range(-0.6..0.6)).collect();
            let (_, grad) = eval_loglik(layout, &x, data, bounds, true);
            let grad = grad.unwrap();
            let mut fd = vec![0.0; n_par];
            let eps = 1e-6;
            for idx in 0..n_par {
                let mut xp = x.clone();
                xp[idx] += eps;
                let (fp, _) = eval_loglik(layout, &xp, data, bounds, false);
                xp[idx] -= 2.0 * eps;
                let (fm, _) = eval_loglik(layout, &xp, data, bounds, false);
                fd[idx] = (fp - fm) / (2.0 * eps);
            }
            let scale = fd.iter().fold(1.0_f64, |a, b| a.max(b.abs()));
            for idx in 0..n_par {
                assert!(
                    (grad[idx] - fd[idx]).abs() <= 1e-5 * scale,
                    "param {idx}: analytic {} vs fd {}",
                    grad[idx],
                    fd[idx]
                );
            }
        }
    }

    #[test]
    fn gradient_matches_fd_location_scale_global() {
        let mut rng = StdRng::seed_from_u64(1);
        let data = toy_data(&mut rng, 60, 3, false);
        let layout = ParamLayout {
            j: 3,
            order: 3,
            family: MarginalFamily::LocationScale,
            scope: CorrelationScope::Global,
        };
        let bounds = vec![(-3.0, 4.0); 3];
        check_gradient(&layout, &data, &bounds);
    }

    #[test]
    fn gradient_matches_fd_free_per_disease_with_missing() {
        let mut rng = StdRng::seed_from_u64(2);
        let data = toy_data(&mut rng, 80, 3, true);
        let layout = ParamLayout {
            j: 3,
            order: 2,
            family: MarginalFamily::Free,
            scope: CorrelationScope::PerDisease,
        };
        let bounds = vec![(-3.0, 4.0); 3];
        check_gradient(&layout, &data, &bounds);
    }

    #[test]
    fn gradient_matches_fd_location_global_univariate() {
        let mut rng = StdRng::seed_from_u64(3);
        let data = toy_data(&mut rng, 50, 1, false);
        let layout = ParamLayout {
            j: 1,
            order: 4,
            family: MarginalFamily::Location,
            scope: CorrelationScope::Global,
        };
        let bounds = vec![(-3.0, 4.0)];
        check_gradient(&layout, &data, &bounds);
    }
}
