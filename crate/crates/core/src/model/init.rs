//! Starting values for the optimizer.
//!
//! Marginal coefficients are initialized by least-squares projection of the
//! probit-transformed (Winsorized) empirical CDF onto the Bernstein basis,
//! followed by an isotonic correction, so the starting marginals already
//! track the nonparanormal estimate. Shifts, scales and correlation
//! parameters start at zero.

use nalgebra::{DMatrix, DVector};

use crate::bernstein::{inverse_reparam, MonotoneCoeffs};
use crate::data::CaseControlData;
use crate::model::params::{effective_basis, ParamLayout};
use crate::model::MarginalFamily;
use crate::norm::phi_inv;

pub(crate) fn initial_params(
    layout: &ParamLayout,
    data: &CaseControlData,
    bounds: &[(f64, f64)],
) -> Vec<f64> {
    let mut x = vec![0.0; layout.n_params()];
    let mlen = layout.coeff_block_len();
    for block in 0..layout.n_coeff_blocks() {
        let class = if layout.family == MarginalFamily::Free {
            Some(block as u8)
        } else {
            None
        };
        for k in 0..layout.j {
            let values = data.observed_column(k, class);
            let raw = marginal_start(&values, layout.order, bounds[k]);
            let off = layout.coeff_offset(block, k);
            x[off..off + mlen].copy_from_slice(&raw);
        }
    }
    // delta, gamma, lambda all start at zero.
    x
}

/// Raw (pre-reparameterization) coefficients approximating the probit ECDF.
fn marginal_start(values: &[f64], order: usize, (lo, up): (f64, f64)) -> Vec<f64> {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    let mlen = order + 1;
    let mut btb = DMatrix::<f64>::zeros(mlen, mlen);
    let mut btz = DVector::<f64>::zeros(mlen);
    for &y in values {
        // ECDF with Winsorization at [1/(n+1), n/(n+1)] before the probit.
        let count = sorted.partition_point(|&v| v <= y);
        let f = (count as f64 / (n as f64 + 1.0)).clamp(
            1.0 / (n as f64 + 1.0),
            n as f64 / (n as f64 + 1.0),
        );
        let z = phi_inv(f);
        let (b, _) = effective_basis(y, order, lo, up);
        for a in 0..mlen {
            btz[a] += b[a] * z;
            for c in 0..mlen {
                btb[(a, c)] += b[a] * b[c];
            }
        }
    }
    for a in 0..mlen {
        btb[(a, a)] += 1e-8 * n.max(1) as f64;
    }
    let theta = btb
        .cholesky()
        .map(|ch| ch.solve(&btz))
        .unwrap_or_else(|| DVector::zeros(mlen));

    let mut theta: Vec<f64> = theta.iter().copied().collect();
    isotonic(&mut theta);
    strictify(&mut theta);
    inverse_reparam(&MonotoneCoeffs::from_values(theta))
}

/// Pool-adjacent-violators for a nondecreasing sequence (unweighted).
fn isotonic(v: &mut [f64]) {
    let n = v.len();
    let mut level: Vec<f64> = Vec::with_capacity(n);
    let mut weight: Vec<f64> = Vec::with_capacity(n);
    for &val in v.iter() {
        level.push(val);
        weight.push(1.0);
        while level.len() > 1 && level[level.len() - 2] > level[level.len() - 1] {
            let (l2, w2) = (level.pop().unwrap(), weight.pop().unwrap());
            let (l1, w1) = (level.pop().unwrap(), weight.pop().unwrap());
            level.push((l1 * w1 + l2 * w2) / (w1 + w2));
            weight.push(w1 + w2);
        }
    }
    let mut pos = 0;
    for (l, w) in level.iter().zip(&weight) {
        for _ in 0..*w as usize {
            v[pos] = *l;
            pos += 1;
        }
    }
}

/// Enforces strictly positive increments so the inverse reparameterization
/// is defined.
fn strictify(v: &mut [f64]) {
    let spread = (v[v.len() - 1] - v[0]).max(1.0);
    let eps = 1e-3 * spread / (v.len() - 1) as f64;
    for m in 1..v.len() {
        if v[m] - v[m - 1] < eps {
            v[m] = v[m - 1] + eps;
        }
    }
}
