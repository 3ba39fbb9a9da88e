//! Fast quadratic c-transform `p^c(y) = min_x p(x) + |x−y|²/(2τ)`, its
//! conjugate, c-concavification, and extraction of the transport map.
//!
//! Transforms minimize over grid nodes only, per axis, with the linear-time
//! quadratic lower-envelope algorithm (separable min-convolution). This keeps
//! the conjugacy identities exact at the discrete level and admits exact
//! brute-force oracles.

use crate::error::{Error, Result};
use crate::fields::{gradient, GridSpec, ScalarField};

/// Sentinel magnitude encoding ±∞ for extended-real fields (e.g. barrier
/// pressures that are −∞ outside their support). Values with magnitude at or
/// above [`EXT_CUTOFF`] are excluded from envelopes.
pub const EXT_SENTINEL: f64 = 1e30;
pub const EXT_CUTOFF: f64 = 1e29;

/// Marker argnode for target nodes whose entire source line was excluded.
pub const ARG_NONE: usize = usize::MAX;

#[derive(Clone, Debug)]
pub struct TransformResult {
    pub field: ScalarField,
    /// For each target node, the flat index of a minimizing (c case) or
    /// maximizing (c̄ case) source node; smallest index among ties.
    pub argnode: Vec<usize>,
}

/// One-dimensional lower envelope of the parabolas `f[i] + a·(i−j)²` over the
/// valid (non-sentinel) indices. Ties resolve to the smallest index.
fn envelope_1d(f: &[f64], a: f64, out: &mut [f64], arg: &mut [usize]) {
    let n = f.len();
    let mut v: Vec<usize> = Vec::with_capacity(n); // parabola node indices
    let mut zb: Vec<f64> = Vec::with_capacity(n + 1); // left boundaries
    for i in 0..n {
        if f[i] >= EXT_CUTOFF {
            continue;
        }
        let fi = f[i];
        loop {
            match v.last() {
                None => {
                    v.push(i);
                    zb.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&p) => {
                    // Intersection of parabolas rooted at p and i (p < i).
                    let s = ((fi - f[p]) / a + (i * i - p * p) as f64) / (2 * (i - p)) as f64;
                    if s <= zb[v.len() - 1] {
                        v.pop();
                        zb.pop();
                    } else {
                        v.push(i);
                        zb.push(s);
                        break;
                    }
                }
            }
        }
    }
    if v.is_empty() {
        for j in 0..n {
            out[j] = EXT_SENTINEL;
            arg[j] = ARG_NONE;
        }
        return;
    }
    let mut k = 0usize;
    for j in 0..n {
        let jf = j as f64;
        while k + 1 < v.len() && zb[k + 1] < jf {
            k += 1;
        }
        let i = v[k];
        let dd = i as f64 - jf;
        out[j] = f[i] + a * (dd * dd);
        arg[j] = i;
    }
}

/// `p^c(y) = min_x p(x) + |x−y|²/(2τ)` over grid nodes; `argnode` records a
/// minimizing node per target.
pub fn c_transform(p: &ScalarField, tau: f64) -> Result<TransformResult> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    let g = &p.grid;
    let h = g.h();
    let n0 = g.n[0];
    let n1 = g.n[1];
    let a0 = h[0] * h[0] / (2.0 * tau);

    // Pass over axis 0 (columns), then axis 1 (rows).
    let mut mid = vec![0.0f64; g.len()];
    let mut arg0 = vec![0usize; g.len()];
    {
        let mut line = vec![0.0f64; n0];
        let mut lout = vec![0.0f64; n0];
        let mut larg = vec![0usize; n0];
        for i1 in 0..n1 {
            for i0 in 0..n0 {
                line[i0] = p.values[i0 * n1 + i1];
            }
            envelope_1d(&line, a0, &mut lout, &mut larg);
            for i0 in 0..n0 {
                mid[i0 * n1 + i1] = lout[i0];
                arg0[i0 * n1 + i1] = larg[i0];
            }
        }
    }

    if g.dim == 1 {
        let field = ScalarField::from_values(g, mid)?;
        return Ok(TransformResult { field, argnode: arg0 });
    }

    let a1 = h[1] * h[1] / (2.0 * tau);
    let mut out = vec![0.0f64; g.len()];
    let mut argnode = vec![0usize; g.len()];
    {
        let mut lout = vec![0.0f64; n1];
        let mut larg = vec![0usize; n1];
        for j0 in 0..n0 {
            let row = &mid[j0 * n1..(j0 + 1) * n1];
            envelope_1d(row, a1, &mut lout, &mut larg);
            for j1 in 0..n1 {
                out[j0 * n1 + j1] = lout[j1];
                let i1 = larg[j1];
                argnode[j0 * n1 + j1] = if i1 == ARG_NONE {
                    ARG_NONE
                } else {
                    let i0 = arg0[j0 * n1 + i1];
                    if i0 == ARG_NONE {
                        ARG_NONE
                    } else {
                        i0 * n1 + i1
                    }
                };
            }
        }
    }
    let field = ScalarField::from_values(g, out)?;
    Ok(TransformResult { field, argnode })
}

/// `q^{c̄}(x) = max_y q(y) − |x−y|²/(2τ)`: the mirror transform, computed by
/// negating, min-convolving, and negating back.
pub fn cbar_transform(q: &ScalarField, tau: f64) -> Result<TransformResult> {
    let neg = q.map(|v| if v <= -EXT_CUTOFF { EXT_SENTINEL } else { -v });
    let mut r = c_transform(&neg, tau)?;
    for v in &mut r.field.values {
        *v = if *v >= EXT_CUTOFF { -EXT_SENTINEL } else { -*v };
    }
    Ok(r)
}

/// `p^{cc̄}`: the c-concave envelope of `p`. Idempotent; ≤ `p` nodewise.
pub fn c_concavify(p: &ScalarField, tau: f64) -> Result<ScalarField> {
    Ok(cbar_transform(&c_transform(p, tau)?.field, tau)?.field)
}

/// c-concavification that also returns `q = p^c` (which equals the transform
/// of the concavified pressure, `p^{cc̄c} = p^c`), saving one pass.
pub fn c_concavify_with_q(p: &ScalarField, tau: f64) -> Result<(ScalarField, ScalarField)> {
    let q = c_transform(p, tau)?.field;
    let pcc = cbar_transform(&q, tau)?.field;
    Ok((pcc, q))
}

/// Discrete transport map `T_p(y) = y − τ∇p^c(y)` stored as a displacement
/// field, with the consistency residual of the inverse relation
/// `T_p⁻¹(x) − x = τ∇p(x)` sampled along the map.
#[derive(Clone, Debug)]
pub struct TransportMap {
    pub grid: GridSpec,
    /// Displacement per node, one component per real axis.
    pub displacement: Vec<[f64; 2]>,
    pub tau: f64,
    /// max over nodes of |τ∇p(T_p(y)) − τ∇p^c(y)|.
    pub consistency_residual: f64,
}

pub fn transport_from_pressure(p: &ScalarField, q: &ScalarField, tau: f64) -> Result<TransportMap> {
    if p.grid != q.grid {
        return Err(Error::GridMismatch);
    }
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    let g = &p.grid;
    let gq = gradient(q);
    let gp = gradient(p);
    let mut displacement = vec![[0.0, 0.0]; g.len()];
    for k in 0..g.len() {
        for a in 0..g.dim {
            displacement[k][a] = -tau * gq[a].values[k];
        }
    }
    // Residual of the forward/inverse consistency, with ∇p interpolated at
    // the (clamped) target point.
    let mut residual = 0.0f64;
    for k in 0..g.len() {
        let y = g.pos(g.coords(k));
        let mut target = [0.0, 0.0];
        for a in 0..g.dim {
            target[a] = y[a] + displacement[k][a];
        }
        let mut err2 = 0.0;
        for a in 0..g.dim {
            let gp_at = interp_clamped(&gp[a], target);
            let d = tau * gp_at + displacement[k][a];
            err2 += d * d;
        }
        residual = residual.max(err2.sqrt());
    }
    Ok(TransportMap {
        grid: g.clone(),
        displacement,
        tau,
        consistency_residual: residual,
    })
}

/// Multilinear interpolation with clamping to the box.
pub fn interp_clamped(f: &ScalarField, x: [f64; 2]) -> f64 {
    let g = &f.grid;
    let h = g.h();
    let mut c = [0.0f64, 0.0];
    for a in 0..g.dim {
        c[a] = ((x[a] - g.origin[a]) / h[a]).clamp(0.0, (g.n[a] - 1) as f64);
    }
    let i0 = (c[0] as usize).min(g.n[0] - 2);
    let t0 = c[0] - i0 as f64;
    if g.dim == 1 {
        let a = f.values[i0];
        let b = f.values[(i0 + 1).min(g.n[0] - 1)];
        return a + t0 * (b - a);
    }
    let i1 = (c[1] as usize).min(g.n[1] - 2);
    let t1 = c[1] - i1 as f64;
    let v00 = f.values[g.idx([i0, i1])];
    let v01 = f.values[g.idx([i0, i1 + 1])];
    let v10 = f.values[g.idx([i0 + 1, i1])];
    let v11 = f.values[g.idx([i0 + 1, i1 + 1])];
    v00 * (1.0 - t0) * (1.0 - t1) + v01 * (1.0 - t0) * t1 + v10 * t0 * (1.0 - t1) + v11 * t0 * t1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Exhaustive separable minimization sharing the exact arithmetic
    /// association of the fast path.
    pub fn brute_c_transform(p: &ScalarField, tau: f64) -> (ScalarField, Vec<usize>) {
        let g = &p.grid;
        let h = g.h();
        let a0 = h[0] * h[0] / (2.0 * tau);
        let a1 = h[1] * h[1] / (2.0 * tau);
        let mut out = ScalarField::zeros(g);
        let mut arg = vec![ARG_NONE; g.len()];
        for j0 in 0..g.n[0] {
            for j1 in 0..g.n[1] {
                let mut best = f64::INFINITY;
                let mut best_i = ARG_NONE;
                for i0 in 0..g.n[0] {
                    for i1 in 0..g.n[1] {
                        let v = p.values[g.idx([i0, i1])];
                        if v >= EXT_CUTOFF {
                            continue;
                        }
                        let d0 = i0 as f64 - j0 as f64;
                        let d1 = i1 as f64 - j1 as f64;
                        let cost = (v + a0 * (d0 * d0)) + a1 * (d1 * d1);
                        if cost < best {
                            best = cost;
                            best_i = g.idx([i0, i1]);
                        }
                    }
                }
                out.values[g.idx([j0, j1])] = if best_i == ARG_NONE { EXT_SENTINEL } else { best };
                arg[g.idx([j0, j1])] = best_i;
            }
        }
        (out, arg)
    }

    #[test]
    fn constant_field_fixed() {
        let g = GridSpec::line(0.0, 1.0, 33).unwrap();
        let p = ScalarField::constant(&g, 2.0);
        let r = c_transform(&p, 0.3).unwrap();
        for (k, v) in r.field.values.iter().enumerate() {
            assert_eq!(*v, 2.0);
            assert_eq!(r.argnode[k], k);
        }
        let rb = cbar_transform(&p, 0.3).unwrap();
        for v in &rb.field.values {
            assert_eq!(*v, 2.0);
        }
    }

    #[test]
    fn three_node_example() {
        // Nodes {0,1,2} (h=1), p=(0,10,10), τ=0.5 → p^c=(0,1,4).
        let g = GridSpec::line(0.0, 2.0, 3).unwrap();
        let p = ScalarField::from_values(&g, vec![0.0, 10.0, 10.0]).unwrap();
        let r = c_transform(&p, 0.5).unwrap();
        assert_eq!(r.field.values, vec![0.0, 1.0, 4.0]);
        assert_eq!(r.argnode, vec![0, 0, 0]);
    }

    #[test]
    fn linear_field_interior_formula() {
        // p(x) = x, τ = 0.5: continuum argmin x* = y − 1/2, p^c(y) = y − 1/4.
        let g = GridSpec::line(0.0, 1.0, 401).unwrap();
        let p = ScalarField::from_fn(&g, |x| x[0]);
        let r = c_transform(&p, 0.5).unwrap();
        let h = g.h()[0];
        for k in 0..g.len() {
            let y = g.pos(g.coords(k))[0];
            if y > 0.55 && y < 0.95 {
                let expect = y - 0.25;
                assert!(
                    (r.field.values[k] - expect).abs() < 4.0 * h * h,
                    "y={y}: {} vs {}",
                    r.field.values[k],
                    expect
                );
            }
        }
    }

    #[test]
    fn matches_brute_force_small_grids() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for trial in 0..40 {
            let (grid, tau) = if trial % 2 == 0 {
                let n = rng.gen_range(3..=33);
                (GridSpec::line(-1.0, 2.0, n).unwrap(), rng.gen_range(0.05..1.0))
            } else {
                let n0 = rng.gen_range(3..=17);
                let n1 = rng.gen_range(3..=17);
                (
                    GridSpec::rect([0.0, -1.0], [1.0, 1.5], [n0, n1]).unwrap(),
                    rng.gen_range(0.05..1.0),
                )
            };
            let p = ScalarField::from_values(
                &grid,
                (0..grid.len()).map(|_| rng.gen_range(-3.0..3.0)).collect(),
            )
            .unwrap();
            let fast = c_transform(&p, tau).unwrap();
            let (brute, _) = brute_c_transform(&p, tau);
            assert_eq!(fast.field.values, brute.values, "trial {trial}");
        }
    }

    #[test]
    fn conjugacy_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let g = GridSpec::rect([0.0, 0.0], [1.0, 1.0], [13, 11]).unwrap();
            let tau = rng.gen_range(0.05..0.8);
            let p = ScalarField::from_values(
                &g,
                (0..g.len()).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            )
            .unwrap();
            let q = c_transform(&p, tau).unwrap().field;
            let pcc = cbar_transform(&q, tau).unwrap().field;
            // p^{cc̄} ≤ p.
            for k in 0..g.len() {
                assert!(pcc.values[k] <= p.values[k] + 1e-12);
            }
            // p^{cc̄c} = p^c.
            let q2 = c_transform(&pcc, tau).unwrap().field;
            for k in 0..g.len() {
                assert!((q2.values[k] - q.values[k]).abs() <= 1e-12);
            }
            // q ≤ q^{c̄c} and q^{c̄cc̄} = q^{c̄}.
            let qc = cbar_transform(&q, tau).unwrap().field;
            let qcc = c_transform(&qc, tau).unwrap().field;
            for k in 0..g.len() {
                assert!(q.values[k] <= qcc.values[k] + 1e-12);
            }
            let qccc = cbar_transform(&qcc, tau).unwrap().field;
            for k in 0..g.len() {
                assert!((qccc.values[k] - qc.values[k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn concavify_idempotent_and_spike() {
        let g = GridSpec::line(0.0, 1.0, 33).unwrap();
        let mut p = ScalarField::constant(&g, 1.0);
        p.values[16] = 5.0; // spike
        let once = c_concavify(&p, 0.1).unwrap();
        for k in 0..g.len() {
            assert!(once.values[k] <= p.values[k] + 1e-12);
        }
        assert!(once.values[16] < 5.0);
        let twice = c_concavify(&once, 0.1).unwrap();
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn sentinel_values_excluded() {
        let g = GridSpec::line(0.0, 2.0, 5).unwrap();
        let p = ScalarField::from_values(&g, vec![EXT_SENTINEL, 0.0, EXT_SENTINEL, EXT_SENTINEL, 1.0])
            .unwrap();
        let r = c_transform(&p, 0.5).unwrap();
        let (brute, barg) = brute_c_transform(&p, 0.5);
        assert_eq!(r.field.values, brute.values);
        assert_eq!(r.argnode, barg);
        // Fully excluded field → sentinel out.
        let all = ScalarField::constant(&g, EXT_SENTINEL);
        let r = c_transform(&all, 0.5).unwrap();
        assert!(r.field.values.iter().all(|&v| v >= EXT_CUTOFF));
    }

    #[test]
    fn transport_of_constant_and_linear() {
        let g = GridSpec::line(0.0, 1.0, 101).unwrap();
        let p = ScalarField::constant(&g, 3.0);
        let q = c_transform(&p, 0.2).unwrap().field;
        let map = transport_from_pressure(&p, &q, 0.2).unwrap();
        for d in &map.displacement {
            assert_eq!(d[0], 0.0);
        }
        assert!(map.consistency_residual < 1e-12);

        // p(x) = g·x: interior displacement −τg.
        let slope = 0.7;
        let tau = 0.2;
        let p = ScalarField::from_fn(&g, |x| slope * x[0]);
        let q = c_transform(&p, tau).unwrap().field;
        let map = transport_from_pressure(&p, &q, tau).unwrap();
        let h = g.h()[0];
        for k in 0..g.len() {
            let y = g.pos(g.coords(k))[0];
            if y > slope * tau + 0.1 && y < 0.9 {
                assert!(
                    (map.displacement[k][0] + tau * slope).abs() < 10.0 * h * h + 1e-12,
                    "y={y} disp={}",
                    map.displacement[k][0]
                );
            }
        }
        // Lipschitz bound |displacement|/τ ≤ Lip(p) + O(h).
        for d in &map.displacement {
            assert!(d[0].abs() / tau <= slope + 2.0 * h + 1e-12);
        }
    }
}
