//! GRU cell with cached activations for backpropagation.
//!
//! ```text
//! z = σ(W_z x + U_z h + b_z)
//! r = σ(W_r x + U_r h + b_r)
//! n = tanh(W_n x + U_n (r ⊙ h) + b_n)
//! h' = (1 - z) ⊙ h + z ⊙ n
//! ```

use alloc::vec;
use alloc::vec::Vec;

use super::params::GruParams;
use crate::linalg::{dot, sigmoid, tanh};

#[derive(Debug, Clone)]
pub struct GruCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub z: Vec<f64>,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    pub h: Vec<f64>,
}

pub fn forward(p: &GruParams, x: &[f64], h_prev: &[f64]) -> GruCache {
    let hd = p.hidden();
    let mut a = vec![0.0; 3 * hd];
    p.w.matvec(x, &mut a);
    for (ai, bi) in a.iter_mut().zip(&p.b.data) {
        *ai += bi;
    }
    let mut z = vec![0.0; hd];
    let mut r = vec![0.0; hd];
    for k in 0..hd {
        z[k] = sigmoid(a[k] + dot(p.u.row(k), h_prev));
        r[k] = sigmoid(a[hd + k] + dot(p.u.row(hd + k), h_prev));
    }
    let rh: Vec<f64> = r.iter().zip(h_prev).map(|(r, h)| r * h).collect();
    let mut n = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        n[k] = tanh(a[2 * hd + k] + dot(p.u.row(2 * hd + k), &rh));
        h[k] = (1.0 - z[k]) * h_prev[k] + z[k] * n[k];
    }
    GruCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        z,
        r,
        n,
        h,
    }
}

/// Accumulates parameter gradients into `grads`, adds the input gradient
/// into `dx`, and returns the gradient with respect to `h_prev`.
pub fn backward(
    p: &GruParams,
    c: &GruCache,
    dh: &[f64],
    grads: &mut GruParams,
    dx: &mut [f64],
) -> Vec<f64> {
    let hd = p.hidden();
    let mut da = vec![0.0; 3 * hd];
    let mut dh_prev = vec![0.0; hd];
    for k in 0..hd {
        let dz = dh[k] * (c.n[k] - c.h_prev[k]);
        let dn = dh[k] * c.z[k];
        dh_prev[k] = dh[k] * (1.0 - c.z[k]);
        da[k] = dz * c.z[k] * (1.0 - c.z[k]);
        da[2 * hd + k] = dn * (1.0 - c.n[k] * c.n[k]);
    }

    // candidate gate: U_n acts on r ⊙ h_prev
    let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(r, h)| r * h).collect();
    let mut drh = vec![0.0; hd];
    for k in 0..hd {
        let g = da[2 * hd + k];
        if g != 0.0 {
            let urow = p.u.row(2 * hd + k);
            let grow = grads.u.row_mut(2 * hd + k);
            for m in 0..hd {
                drh[m] += urow[m] * g;
                grow[m] += g * rh[m];
            }
        }
    }
    for k in 0..hd {
        let dr = drh[k] * c.h_prev[k];
        dh_prev[k] += drh[k] * c.r[k];
        da[hd + k] = dr * c.r[k] * (1.0 - c.r[k]);
    }

    // update and reset gates: U acts on h_prev
    for k in 0..2 * hd {
        let g = da[k];
        if g != 0.0 {
            let urow = p.u.row(k);
            let grow = grads.u.row_mut(k);
            for m in 0..hd {
                dh_prev[m] += urow[m] * g;
                grow[m] += g * c.h_prev[m];
            }
        }
    }

    grads.w.add_outer(&da, &c.x);
    for (gb, d) in grads.b.data.iter_mut().zip(&da) {
        *gb += d;
    }
    p.w.matvec_t_add(&da, dx);
    dh_prev
}
