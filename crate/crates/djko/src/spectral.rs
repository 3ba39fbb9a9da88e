//! Cosine-basis (zero-Neumann) solver for `(αI − Δ)u = f` on the node-centered
//! grid. The discrete Laplacian uses the standard ghost-node Neumann stencil,
//! which is diagonalized exactly by the type-I discrete cosine transform.

use once_cell::sync::Lazy;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::fields::ScalarField;

static PLANS: Lazy<Mutex<HashMap<usize, Arc<dyn Fft<f64>>>>> =
    Lazy::new(|| Mutex::new(HashMap::new()));

fn plan(len: usize) -> Arc<dyn Fft<f64>> {
    let mut plans = PLANS.lock().unwrap();
    plans
        .entry(len)
        .or_insert_with(|| FftPlanner::new().plan_fft_forward(len))
        .clone()
}

/// In-place DCT-I with half-weighted endpoints:
/// `F_k = x_0/2 + (−1)^k x_{N}/2 + Σ_{j=1}^{N−1} x_j cos(πjk/N)`, `N = n−1`.
/// Applying it twice multiplies by `N/2`, so the inverse is `(2/N)·dct1`.
fn dct1(x: &mut [f64], scratch: &mut Vec<Complex<f64>>) {
    let n = x.len();
    debug_assert!(n >= 2);
    let nn = n - 1;
    let m = 2 * nn;
    scratch.clear();
    scratch.resize(m, Complex::new(0.0, 0.0));
    for (j, &v) in x.iter().enumerate() {
        scratch[j].re = v;
    }
    for j in 1..nn {
        scratch[m - j].re = x[j];
    }
    plan(m).process(scratch);
    for k in 0..n {
        x[k] = scratch[k].re * 0.5;
    }
}

/// Eigenvalues of the 1D Neumann Laplacian (ghost-node stencil) under DCT-I.
fn laplacian_eigs(n: usize, h: f64) -> Vec<f64> {
    let nn = (n - 1) as f64;
    (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * k as f64 / nn;
            (2.0 - 2.0 * theta.cos()) / (h * h)
        })
        .collect()
}

/// Solves `(αI − Δ)u = f` with zero-Neumann boundary. For `α = 0` the
/// constant mode of `f` is required to vanish (up to rounding) and `u` is
/// returned mean-free; otherwise the system is strictly positive definite.
pub fn neumann_solve(f: &ScalarField, alpha: f64) -> Result<ScalarField> {
    if alpha < 0.0 {
        return Err(Error::InvalidField("neumann_solve requires alpha >= 0".into()));
    }
    let g = &f.grid;
    let h = g.h();
    let mut vals = f.values.clone();
    let mut scratch = Vec::new();

    // Forward transform along each real axis.
    dct_axis(&mut vals, g.n, 1, &mut scratch, g.dim);
    dct_axis(&mut vals, g.n, 0, &mut scratch, g.dim);

    let eig0 = laplacian_eigs(g.n[0], h[0]);
    let eig1 = if g.dim == 2 {
        laplacian_eigs(g.n[1], h[1])
    } else {
        vec![0.0]
    };
    for k0 in 0..g.n[0] {
        for k1 in 0..g.n[1] {
            let lam = alpha + eig0[k0] + eig1[k1];
            let idx = k0 * g.n[1] + k1;
            if lam <= 0.0 {
                // The constant mode: project it out (mean-zero solve).
                vals[idx] = 0.0;
            } else {
                vals[idx] /= lam;
            }
        }
    }

    // Inverse transform: (2/N)·dct1 per axis.
    dct_axis(&mut vals, g.n, 1, &mut scratch, g.dim);
    dct_axis(&mut vals, g.n, 0, &mut scratch, g.dim);
    let mut scale = 2.0 / (g.n[0] - 1) as f64;
    if g.dim == 2 {
        scale *= 2.0 / (g.n[1] - 1) as f64;
    }
    for v in &mut vals {
        *v *= scale;
    }
    ScalarField::from_values(g, vals)
}

fn dct_axis(vals: &mut [f64], n: [usize; 2], axis: usize, scratch: &mut Vec<Complex<f64>>, dim: usize) {
    if axis >= dim {
        return;
    }
    match axis {
        1 => {
            for row in vals.chunks_mut(n[1]) {
                dct1(row, scratch);
            }
        }
        0 => {
            let mut line = vec![0.0; n[0]];
            for i1 in 0..n[1] {
                for i0 in 0..n[0] {
                    line[i0] = vals[i0 * n[1] + i1];
                }
                dct1(&mut line, scratch);
                for i0 in 0..n[0] {
                    vals[i0 * n[1] + i1] = line[i0];
                }
            }
        }
        _ => unreachable!(),
    }
}

/// Applies the discrete Neumann Laplacian (ghost-node stencil) to `u`.
/// Used by tests to verify the spectral solve against direct iteration.
pub fn apply_neumann_laplacian(u: &ScalarField) -> ScalarField {
    let g = &u.grid;
    let h = g.h();
    let mut out = ScalarField::zeros(g);
    for i0 in 0..g.n[0] {
        for i1 in 0..g.n[1] {
            let i = [i0, i1];
            let c = u.values[g.idx(i)];
            let mut acc = 0.0;
            for a in 0..g.dim {
                let ia = i[a];
                let up = {
                    let mut j = i;
                    j[a] = if ia + 1 < g.n[a] { ia + 1 } else { ia - 1 };
                    u.values[g.idx(j)]
                };
                let dn = {
                    let mut j = i;
                    j[a] = if ia > 0 { ia - 1 } else { ia + 1 };
                    u.values[g.idx(j)]
                };
                acc += (2.0 * c - up - dn) / (h[a] * h[a]);
            }
            out.values[g.idx(i)] = acc;
        }
    }
    out
}
