//! Radial barrier construction: the auxiliary ODE profile `Q`, the
//! propagation constants `R*`, `c*`, refined barriers parameterized by a
//! steepness factor `A`, and the relaxation envelope `(Aₙ, Rₙ)` bounding
//! support growth of the discrete scheme.

use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField};
use crate::growth::GrowthModel;

/// Sampled majorant `G̃` of the growth rate together with the dense ODE
/// solution of `−Q″ = G̃(Q) + w`, `Q(0) = z_M`, `Q′(0) = 0`.
#[derive(Clone, Debug)]
pub struct BarrierProfile {
    pub tau: f64,
    /// Pressure height of the plateau: `G̃(z_M) = 0` and `(s*)′(z_M) ≥ ρ⁺`.
    pub z_m: f64,
    /// First zero of `Q`.
    pub w0: f64,
    /// Root of `Q(w) = (τ/2)|Q′(w)|²` in `(0, w0)`.
    pub w1: f64,
    /// Front speed bound `|Q′(w1)|`.
    pub c_star: f64,
    /// Minimal admissible barrier radius, `w1 + 1`.
    pub r_star: f64,
    energy: EnergyModel,
    // G̃ as a piecewise-linear table over strictly increasing z-samples.
    gt_z: Vec<f64>,
    gt_v: Vec<f64>,
    // Dense RK4 nodes: Q and Q′ at w = i·dw.
    dw: f64,
    qs: Vec<f64>,
    qps: Vec<f64>,
}

/// Refined barrier data for a steepness factor `A ≥ 1`.
#[derive(Clone, Debug)]
pub struct RefinedBarrier {
    pub a: f64,
    /// Root of `Q(w) = (A²τ/2)|Q′(w)|²` in `(0, w1]`.
    pub w_a: f64,
    /// Point where `|Q′(y_A)| = |Q′(w_A)|/2`.
    pub y_a: f64,
    /// Relaxation-rate constant verified for one step from this `A`.
    pub ctilde: f64,
}

/// Radial density evaluator `r ↦ ρ_{R,A}(r)`.
#[derive(Clone, Debug)]
pub struct BarrierDensity {
    profile: BarrierProfile,
    pub r: f64,
    pub a: f64,
    w_a: f64,
    dim: usize,
}

/// Relaxation envelope: the sequence `(Aₙ, Rₙ)` with the verified constant.
#[derive(Clone, Debug)]
pub struct PropagationEnvelope {
    pub ctilde: f64,
    /// `(Aₙ, Rₙ)` for `n = 0..=n_steps`.
    pub seq: Vec<(f64, f64)>,
}

const ODE_STEP_SCALE: f64 = 1e-4;

fn interp_table(z: &[f64], v: &[f64], x: f64) -> f64 {
    let n = z.len();
    if x <= z[0] {
        // Linear extrapolation with the first segment's slope.
        let s = (v[1] - v[0]) / (z[1] - z[0]);
        return v[0] + s * (x - z[0]);
    }
    if x >= z[n - 1] {
        let s = (v[n - 1] - v[n - 2]) / (z[n - 1] - z[n - 2]);
        return v[n - 1] + s * (x - z[n - 1]);
    }
    let i = z.partition_point(|&a| a < x).max(1);
    let t = (x - z[i - 1]) / (z[i] - z[i - 1]);
    v[i - 1] + t * (v[i] - v[i - 1])
}

/// Certified bisection: the bracket must show a sign change.
fn bisect(mut lo: f64, mut hi: f64, f: &dyn Fn(f64) -> f64, tol: f64) -> Result<f64> {
    let flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::Barrier(format!(
            "bisection bracket [{lo}, {hi}] has no sign change ({flo:.3e}, {fhi:.3e})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Smallest `z ≥ 0` with `(s*)′(z) ≥ rho_plus`.
fn pressure_for_density(e: &EnergyModel, rho_plus: f64) -> Result<f64> {
    if rho_plus <= 0.0 {
        return Ok(0.0);
    }
    if e.s_star_prime(0.0) >= rho_plus {
        return Ok(0.0);
    }
    // (s*)′ is nondecreasing; bracket by doubling.
    let mut hi = 1.0;
    let mut tries = 0;
    while e.s_star_prime(hi) < rho_plus {
        hi *= 2.0;
        tries += 1;
        if tries > 200 {
            return Err(Error::Barrier(format!(
                "plateau density {rho_plus} is not in the range of the dual derivative"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if e.s_star_prime(mid) >= rho_plus {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

fn integrate_ode(
    gt_z: &[f64],
    gt_v: &[f64],
    z_m: f64,
    tau: f64,
    energy: &EnergyModel,
) -> Result<BarrierProfile> {
    let gt = |z: f64| interp_table(gt_z, gt_v, z);
    let w_scale = (2.0 * z_m / gt(0.0).max(1e-12)).sqrt().max(1.0);
    let dw = ODE_STEP_SCALE * w_scale;
    let w_max = 50.0 * w_scale;
    let rhs = |w: f64, q: f64| -(gt(q) + w);
    let mut qs = vec![z_m];
    let mut qps = vec![0.0];
    let (mut q, mut p) = (z_m, 0.0f64);
    let mut w = 0.0;
    // Run past the first zero of Q so w0 and dense evaluation near it are
    // interior to the stored range.
    let floor = -0.25 * z_m - 0.1;
    while q > floor {
        // Classical RK4 on (Q, Q′).
        let k1q = p;
        let k1p = rhs(w, q);
        let k2q = p + 0.5 * dw * k1p;
        let k2p = rhs(w + 0.5 * dw, q + 0.5 * dw * k1q);
        let k3q = p + 0.5 * dw * k2p;
        let k3p = rhs(w + 0.5 * dw, q + 0.5 * dw * k2q);
        let k4q = p + dw * k3p;
        let k4p = rhs(w + dw, q + dw * k3q);
        q += dw / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
        p += dw / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
        w += dw;
        qs.push(q);
        qps.push(p);
        if w > w_max {
            return Err(Error::Barrier(
                "barrier ODE solution failed to cross zero".into(),
            ));
        }
    }

    let mut profile = BarrierProfile {
        tau,
        z_m,
        w0: 0.0,
        w1: 0.0,
        c_star: 0.0,
        r_star: 0.0,
        energy: energy.clone(),
        gt_z: gt_z.to_vec(),
        gt_v: gt_v.to_vec(),
        dw,
        qs,
        qps,
    };

    // First sign change of Q over the dense nodes brackets w0.
    let i0 = profile
        .qs
        .iter()
        .position(|&v| v <= 0.0)
        .ok_or_else(|| Error::Barrier("no zero of Q stored".into()))?;
    let lo = (i0 - 1) as f64 * dw;
    let hi = i0 as f64 * dw;
    profile.w0 = bisect(lo, hi, &|w| profile.q_eval(w), 1e-13 * w_scale)?;

    // w1: Q(w) − (τ/2)Q′(w)² decreases from z_M through zero before w0.
    let f1 = |w: f64| profile.q_eval(w) - 0.5 * tau * profile.qp_eval(w).powi(2);
    profile.w1 = bisect(1e-12, profile.w0, &f1, 1e-13 * w_scale)?;
    profile.c_star = profile.qp_eval(profile.w1).abs();
    profile.r_star = profile.w1 + 1.0;
    Ok(profile)
}

/// Profile from an exact majorant function `G̃` with a known plateau height
/// `z_m` (`G̃(z_m) = 0`). Used when `G̃` is specified directly rather than
/// derived from a growth model; no sampling margin is applied.
pub fn profile_from_gtilde(
    gtilde: &dyn Fn(f64) -> f64,
    z_m: f64,
    tau: f64,
    e: &EnergyModel,
) -> Result<BarrierProfile> {
    if !(z_m > 0.0) || !(tau > 0.0) {
        return Err(Error::Barrier("need z_m > 0 and tau > 0".into()));
    }
    if gtilde(z_m).abs() > 1e-9 * (1.0 + gtilde(0.0).abs()) {
        return Err(Error::Barrier(format!(
            "G̃(z_m) = {} is not zero",
            gtilde(z_m)
        )));
    }
    let n = 4001usize;
    let z_lo = -0.5 * z_m - 0.5;
    let z_hi = z_m + 1.0;
    let gt_z: Vec<f64> = (0..n)
        .map(|i| z_lo + (z_hi - z_lo) * i as f64 / (n - 1) as f64)
        .collect();
    let gt_v: Vec<f64> = gt_z.iter().map(|&z| gtilde(z)).collect();
    integrate_ode(&gt_z, &gt_v, z_m, tau, e)
}

/// Builds the barrier profile for a growth model: `G̃(z) = sup_x G(z,x)`
/// sampled over the model's domain plus a strict-majorization margin of
/// 1e−6, monotonized; `z_M` is the smallest zero of `G̃` whose plateau
/// density `(s*)′(z_M)` dominates `rho_plus` (the table is extended by a
/// linear ramp when the dual derivative needs a higher pressure).
pub fn build_profile(
    g: &GrowthModel,
    e: &EnergyModel,
    rho_plus: f64,
    tau: f64,
) -> Result<BarrierProfile> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    let margin = 1e-6;
    let z_hi_limit = g.b1 + 1.0;
    let nz = 20001usize;
    let z_lo = -(1.0f64.max(g.b1));
    let z_hi = z_hi_limit + 1.0;
    let dz = (z_hi - z_lo) / (nz - 1) as f64;
    let mut gt_z: Vec<f64> = (0..nz).map(|i| z_lo + dz * i as f64).collect();

    // Spatial sample set: the domain grid, coarsened to at most 64 nodes per
    // axis (G is monotone in z per sample, so the sup is robust to thinning).
    let d = &g.domain;
    let stride = [
        (d.n[0] / 64).max(1),
        if d.dim == 2 { (d.n[1] / 64).max(1) } else { 1 },
    ];
    let mut xs = Vec::new();
    let mut i0 = 0;
    while i0 < d.n[0] {
        let mut i1 = 0;
        while i1 < d.n[1] {
            xs.push(d.pos([i0, i1]));
            i1 += stride[1];
        }
        i0 += stride[0];
    }
    // Node value = sampled sup at z − dz: the sup is nonincreasing in z
    // (each G is), so the piecewise-linear interpolant of the shifted
    // samples certifiably majorizes the true sup on every segment, at the
    // price of an O(dz) over-estimate.
    let mut gt_v: Vec<f64> = gt_z
        .iter()
        .map(|&z| {
            xs.iter()
                .map(|&x| g.g(z - dz, x))
                .fold(f64::NEG_INFINITY, f64::max)
                + margin
        })
        .collect();
    // Monotonize: G̃ must be nonincreasing in z (running max from the right).
    for i in (0..nz - 1).rev() {
        gt_v[i] = gt_v[i].max(gt_v[i + 1]);
    }

    // Smallest zero of G̃, required below b₁ + 1.
    let root_idx = gt_v.iter().position(|&v| v <= 0.0).ok_or_else(|| {
        Error::Barrier(format!(
            "majorant G̃ has no zero below {z_hi_limit} (homeostatic pressure missing)"
        ))
    })?;
    if gt_z[root_idx] > z_hi_limit {
        return Err(Error::Barrier(format!(
            "first zero of G̃ at {} exceeds the admissible bound {z_hi_limit}",
            gt_z[root_idx]
        )));
    }
    let z_root = {
        let (za, zb) = (gt_z[root_idx - 1], gt_z[root_idx]);
        let (va, vb) = (gt_v[root_idx - 1], gt_v[root_idx]);
        za + (zb - za) * va / (va - vb)
    };

    let z_need = pressure_for_density(e, rho_plus)?;
    let z_m = z_root.max(z_need);
    if z_need > z_root {
        // Extend with a shallow linear ramp hitting zero at z_m; taking the
        // max keeps majorization and monotonicity.
        let slope = (gt_v[0] / z_m).min(1.0).max(1e-6);
        for (z, v) in gt_z.iter().zip(gt_v.iter_mut()) {
            *v = v.max(slope * (z_m - z));
        }
        if *gt_z.last().unwrap() < z_m + 0.5 {
            let mut z = *gt_z.last().unwrap();
            let dz = gt_z[1] - gt_z[0];
            while z < z_m + 1.0 {
                z += dz;
                gt_z.push(z);
                gt_v.push(slope * (z_m - z));
            }
        }
    }

    integrate_ode(&gt_z, &gt_v, z_m, tau, e)
}

impl BarrierProfile {
    pub fn gtilde(&self, z: f64) -> f64 {
        interp_table(&self.gt_z, &self.gt_v, z)
    }

    fn w_last(&self) -> f64 {
        (self.qs.len() - 1) as f64 * self.dw
    }

    fn segment(&self, w: f64) -> (usize, f64) {
        let t = (w / self.dw).clamp(0.0, (self.qs.len() - 2) as f64);
        let i = (t as usize).min(self.qs.len() - 2);
        (i, t - i as f64)
    }

    /// Dense evaluation of `Q` (cubic Hermite between RK4 nodes; the plateau
    /// value `z_M` for `w ≤ 0`).
    pub fn q_eval(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return self.z_m;
        }
        let w = w.min(self.w_last());
        let (i, t) = self.segment(w);
        let h = self.dw;
        let (q0, q1) = (self.qs[i], self.qs[i + 1]);
        let (p0, p1) = (self.qps[i], self.qps[i + 1]);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * q0
            + (t3 - 2.0 * t2 + t) * h * p0
            + (-2.0 * t3 + 3.0 * t2) * q1
            + (t3 - t2) * h * p1
    }

    /// Dense evaluation of `Q′` (Hermite on the slope samples, with end
    /// derivatives from the ODE).
    pub fn qp_eval(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return 0.0;
        }
        let w = w.min(self.w_last());
        let (i, t) = self.segment(w);
        let h = self.dw;
        let (p0, p1) = (self.qps[i], self.qps[i + 1]);
        let d0 = -(self.gtilde(self.qs[i]) + i as f64 * h);
        let d1 = -(self.gtilde(self.qs[i + 1]) + (i + 1) as f64 * h);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * p0
            + (t3 - 2.0 * t2 + t) * h * d0
            + (-2.0 * t3 + 3.0 * t2) * p1
            + (t3 - t2) * h * d1
    }

    /// `Q″` directly from the ODE: `−(G̃(Q(w)) + w)`.
    pub fn qpp_eval(&self, w: f64) -> f64 {
        if w <= 0.0 {
            return -self.gtilde(self.z_m).min(0.0);
        }
        -(self.gtilde(self.q_eval(w)) + w)
    }

    pub fn energy(&self) -> &EnergyModel {
        &self.energy
    }

    /// Plateau density `(s*)′(z_M)`.
    pub fn plateau_density(&self) -> f64 {
        self.energy.s_star_prime(self.z_m)
    }
}

/// `w_A`, `y_A`, and a one-step-verified relaxation constant for `A ≥ 1`.
pub fn refined_barrier(profile: &BarrierProfile, a: f64) -> Result<RefinedBarrier> {
    if a < 1.0 {
        return Err(Error::Barrier(format!("steepness factor A = {a} must be ≥ 1")));
    }
    let (w_a, y_a) = refined_raw(profile, a)?;
    // Bound from the defining equation: Q(w_A) ≤ z_M.
    let qp = profile.qp_eval(w_a).abs();
    let cap = profile
        .c_star
        .min((2.0 * profile.z_m / (a * a * profile.tau)).sqrt());
    if qp > cap + 1e-9 {
        return Err(Error::Barrier(format!(
            "|Q′(w_A)| = {qp} exceeds its structural bound {cap}"
        )));
    }
    let ctilde = find_ctilde(profile, a, a.max(2.0) * profile.w0 + 1.0, 1)?;
    Ok(RefinedBarrier { a, w_a, y_a, ctilde })
}

fn constraints_hold(profile: &BarrierProfile, a: f64, a_next: f64) -> Result<bool> {
    let tau = profile.tau;
    let ra = refined_raw(profile, a)?;
    let rb = refined_raw(profile, a_next)?;
    let qp_a = profile.qp_eval(ra.0).abs();
    // Appendix constraint on the relaxation rate of A.
    let ok2 = a <= a_next * (1.0 - tau * a_next * a_next * profile.qpp_eval(ra.1)) + 1e-12;
    // Appendix constraint that the widened transition ring still fits the
    // advanced radius: w_Ã/Ã ≤ w_A/A + (τA/2)|Q′(w_A)|.
    let ok1 = rb.0 / a_next <= ra.0 / a + 0.5 * tau * a * qp_a + 1e-12;
    Ok(ok1 && ok2)
}

/// (w_A, y_A) without the one-step constant search.
fn refined_raw(profile: &BarrierProfile, a: f64) -> Result<(f64, f64)> {
    let tau = profile.tau;
    let fa = |w: f64| profile.q_eval(w) - 0.5 * a * a * tau * profile.qp_eval(w).powi(2);
    // Bracket up to w0 (where the expression is strictly negative): for
    // A = 1 the root sits exactly at w1, which would be a degenerate
    // endpoint of the tighter bracket.
    let w_a = bisect(1e-12, profile.w0, &fa, 1e-13 * profile.w0.max(1.0))?.min(profile.w1);
    let target = 0.5 * profile.qp_eval(w_a).abs();
    let fy = |w: f64| profile.qp_eval(w).abs() - target;
    let y_a = bisect(0.0, w_a, &fy, 1e-13 * profile.w0.max(1.0))?;
    Ok((w_a, y_a))
}

/// Largest constant in a geometric ladder descending from 4.0 for which
/// the two structural constraints hold along `n_steps` of the relaxation
/// recursion started at `a0`. The decrease factor 0.9 keeps the found
/// constant within ~10% of the true supremum, which matters because the
/// rate at which `Aₙ` reaches 1 governs how fast the envelope increments
/// approach `τ·c*`.
fn find_ctilde(profile: &BarrierProfile, a0: f64, _r0: f64, n_steps: usize) -> Result<f64> {
    let tau = profile.tau;
    let mut ctilde = 4.0;
    'outer: while ctilde >= 1e-8 {
        let mut a = a0;
        for _ in 0..n_steps {
            let a_next = (a / (1.0 + ctilde * tau)).max(1.0);
            if !constraints_hold(profile, a, a_next)? {
                ctilde *= 0.9;
                continue 'outer;
            }
            a = a_next;
            if a == 1.0 {
                break;
            }
        }
        return Ok(ctilde);
    }
    Err(Error::Barrier(
        "no relaxation constant down to 1e-8 satisfies the envelope constraints".into(),
    ))
}

/// The relaxation sequence `Aₙ = max(1, A₀/(1+c̃τ)ⁿ)`,
/// `Rₙ = Rₙ₋₁ + τAₙ₋₁|Q′(w_{Aₙ₋₁})|`, with `c̃` found constructively by
/// per-step verification of the appendix constraints.
pub fn propagation_envelope(
    profile: &BarrierProfile,
    r0: f64,
    a0: f64,
    tau: f64,
    n_steps: usize,
) -> Result<PropagationEnvelope> {
    if a0 < 1.0 {
        return Err(Error::Barrier(format!("A0 = {a0} must be ≥ 1")));
    }
    if (tau - profile.tau).abs() > 1e-12 * profile.tau {
        return Err(Error::Barrier(format!(
            "envelope τ = {tau} does not match the profile τ = {}",
            profile.tau
        )));
    }
    let (w_a0, _) = refined_raw(profile, a0)?;
    if r0 < w_a0 / a0 + 1.0 - 1e-12 {
        return Err(Error::Barrier(format!(
            "R0 = {r0} is below the admissible minimum {}",
            w_a0 / a0 + 1.0
        )));
    }
    let ctilde = find_ctilde(profile, a0, r0, n_steps)?;
    let mut seq = Vec::with_capacity(n_steps + 1);
    let mut a = a0;
    let mut r = r0;
    seq.push((a, r));
    for n in 0..n_steps {
        let (w_a, _) = refined_raw(profile, a)?;
        r += tau * a * profile.qp_eval(w_a).abs();
        a = (a0 / (1.0 + ctilde * tau).powi(n as i32 + 1)).max(1.0);
        seq.push((a, r));
    }
    Ok(PropagationEnvelope { ctilde, seq })
}

/// Radial evaluator for the barrier density `ρ_{R,A}` in `dim` dimensions.
/// `A = 1` gives the basic barrier `ρ_R`.
pub fn barrier_density(profile: &BarrierProfile, r_radius: f64, dim: usize) -> Result<BarrierDensity> {
    barrier_density_refined(profile, 1.0, r_radius, dim)
}

pub fn barrier_density_refined(
    profile: &BarrierProfile,
    a: f64,
    r_radius: f64,
    dim: usize,
) -> Result<BarrierDensity> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::Barrier("barrier densities support dim 1 or 2".into()));
    }
    let (w_a, _) = refined_raw(profile, a)?;
    if r_radius < profile.r_star {
        return Err(Error::Barrier(format!(
            "barrier radius {r_radius} is below R* = {}",
            profile.r_star
        )));
    }
    Ok(BarrierDensity {
        profile: profile.clone(),
        r: r_radius,
        a,
        w_a,
        dim,
    })
}

impl BarrierDensity {
    /// The barrier pressure `q_{R,A}(r) = Q(A(r − R + w_A/A))` on the
    /// transition ring, `z_M` inside, continued by `Q` outside.
    pub fn pressure(&self, r: f64) -> f64 {
        let ring = self.w_a / self.a;
        if r <= self.r - ring {
            self.profile.z_m
        } else {
            self.profile.q_eval(self.a * (r - self.r + ring))
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        let p = &self.profile;
        let tau = p.tau;
        let ring = self.w_a / self.a;
        if r <= self.r - ring {
            return p.energy.s_star_prime(p.z_m);
        }
        if r > self.r {
            return 0.0;
        }
        let y = self.a * (r - self.r + ring);
        let q = p.q_eval(y);
        let qp = self.a * p.qp_eval(y);
        let qpp = self.a * self.a * p.qpp_eval(y);
        let radial = if self.dim == 2 {
            1.0 - tau * qp / r
        } else {
            1.0
        };
        (1.0 - tau * qpp) * radial / (1.0 + tau * p.gtilde(q))
            * p.energy.s_star_prime(q - 0.5 * tau * qp * qp)
    }

    /// Samples the radial profile onto a grid around `center`.
    pub fn sample(&self, grid: &GridSpec, center: [f64; 2]) -> ScalarField {
        ScalarField::from_fn(grid, |x| {
            let mut d2 = 0.0;
            for a in 0..grid.dim {
                d2 += (x[a] - center[a]) * (x[a] - center[a]);
            }
            self.eval(d2.sqrt())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::growth::SpaceFn;

    fn linear_gtilde_profile(tau: f64) -> BarrierProfile {
        let e = EnergyModel::hard_congestion();
        profile_from_gtilde(&|z| 1.0 - z, 1.0, tau, &e).unwrap()
    }

    #[test]
    fn closed_form_q_w0_and_signs() {
        // −Q″ = (1−Q) + w, Q(0)=1, Q′(0)=0 has Q = 1 + w − sinh(w).
        let p = linear_gtilde_profile(0.1);
        let mut w = 0.0;
        while w <= p.w0 {
            let exact = 1.0 + w - w.sinh();
            assert!((p.q_eval(w) - exact).abs() < 1e-8, "Q({w})");
            assert!((p.qp_eval(w) - (1.0 - w.cosh())).abs() < 1e-7, "Q'({w})");
            assert!(p.qp_eval(w) <= 0.0);
            assert!(p.qpp_eval(w) <= 1e-12);
            w += 0.01;
        }
        // w0 solves sinh w = 1 + w; recompute independently.
        let w0_ref = bisect(1.0, 3.0, &|w| 1.0 + w - w.sinh(), 1e-14).unwrap();
        assert!((p.w0 - w0_ref).abs() < 1e-6, "{} vs {w0_ref}", p.w0);
        assert!((w0_ref - 1.7295).abs() < 1e-3);
        // w1 solves Q = (τ/2)Q′² in closed form.
        let w1_ref = bisect(
            1e-9,
            w0_ref,
            &|w| 1.0 + w - w.sinh() - 0.05 * (1.0 - w.cosh()).powi(2),
            1e-14,
        )
        .unwrap();
        assert!((p.w1 - w1_ref).abs() < 1e-6);
        assert!((p.c_star - (w1_ref.cosh() - 1.0)).abs() < 1e-6);
        assert_eq!(p.r_star, p.w1 + 1.0);
    }

    #[test]
    fn ode_residual_of_dense_output() {
        let p = linear_gtilde_profile(0.1);
        // Richardson-extrapolated second difference of the dense output.
        let second = |w: f64, d: f64| {
            (p.q_eval(w + d) - 2.0 * p.q_eval(w) + p.q_eval(w - d)) / (d * d)
        };
        let mut w = 0.05;
        while w < p.w0 {
            let d = 1e-3;
            let r = (4.0 * second(w, d / 2.0) - second(w, d)) / 3.0;
            let res = -r - p.gtilde(p.q_eval(w)) - w;
            assert!(res.abs() < 1e-8, "residual {res:.2e} at w={w}");
            w += 0.11;
        }
    }

    #[test]
    fn w1_and_c_star_monotone_in_tau() {
        let taus = [0.2, 0.1, 0.05];
        let mut prev_w1 = f64::NEG_INFINITY;
        let mut prev_c = f64::NEG_INFINITY;
        let w0 = linear_gtilde_profile(0.1).w0;
        for &tau in &taus {
            let p = linear_gtilde_profile(tau);
            assert!(p.w1 > prev_w1 && p.w1 < p.w0);
            assert!(p.c_star > prev_c);
            prev_w1 = p.w1;
            prev_c = p.c_star;
        }
        // τ → 0 drives w1 toward w0.
        let tight = linear_gtilde_profile(1e-4);
        assert!((tight.w1 - w0).abs() < 0.02);
    }

    #[test]
    fn refined_barrier_family() {
        let p = linear_gtilde_profile(0.1);
        let r1 = refined_barrier(&p, 1.0).unwrap();
        assert!((r1.w_a - p.w1).abs() < 1e-9);
        let r4 = refined_barrier(&p, 4.0).unwrap();
        assert!(r4.w_a < p.w1);
        assert!(4.0 * p.qp_eval(r4.w_a).abs() > p.qp_eval(p.w1).abs());
        let mut prev_w = f64::INFINITY;
        let mut prev_speed = 0.0;
        for &a in &[1.0, 2.0, 4.0, 8.0, 16.0] {
            let r = refined_barrier(&p, a).unwrap();
            let qp = p.qp_eval(r.w_a).abs();
            assert!(qp <= p.c_star.min((2.0 * p.z_m / (a * a * p.tau)).sqrt()) + 1e-9);
            assert!(r.w_a < prev_w + 1e-12, "w_A not decreasing at A={a}");
            assert!(a * qp > prev_speed - 1e-12, "A|Q'(w_A)| not increasing at A={a}");
            assert!(r.y_a > 0.0 && r.y_a < r.w_a);
            assert!((p.qp_eval(r.y_a).abs() - 0.5 * qp).abs() < 1e-9);
            prev_w = r.w_a;
            prev_speed = a * qp;
        }
        assert!(refined_barrier(&p, 0.5).is_err());
    }

    #[test]
    fn barrier_density_shape() {
        let p = linear_gtilde_profile(0.1);
        let rr = p.r_star + 1.0;
        let b = barrier_density(&p, rr, 2).unwrap();
        // Plateau inside, zero outside, ≥ ρ⁺ = 1 inside B_{R−R*}.
        assert_eq!(b.eval(0.5), 1.0);
        assert_eq!(b.eval(rr - p.w1 - 1e-9), 1.0);
        assert_eq!(b.eval(rr + 1e-9), 0.0);
        let mut r = 0.05;
        while r <= rr - p.r_star {
            assert!(b.eval(r) >= 1.0 - 1e-12, "ρ_R({r}) = {}", b.eval(r));
            r += 0.05;
        }
        // The transition ring stays nonnegative and bounded.
        let mut r = rr - p.w1 + 1e-6;
        while r <= rr {
            let v = b.eval(r);
            assert!(v >= -1e-12 && v.is_finite());
            r += 0.01;
        }
        assert!(barrier_density(&p, p.r_star - 0.1, 2).is_err());
    }

    #[test]
    fn envelope_basic_and_relaxing() {
        let p = linear_gtilde_profile(0.1);
        // A0 = 1: the recursion degenerates to Rₙ = R0 + nτc*.
        let env = propagation_envelope(&p, 3.0, 1.0, 0.1, 20).unwrap();
        for (n, &(a, r)) in env.seq.iter().enumerate() {
            assert_eq!(a, 1.0);
            assert!((r - (3.0 + n as f64 * 0.1 * p.c_star)).abs() < 1e-9);
        }
        // A0 = 8: increments decay monotonically toward τc*, since
        // A|Q′(w_A)| increases in A and Aₙ relaxes downward.
        let env = propagation_envelope(&p, 3.0, 8.0, 0.1, 50).unwrap();
        assert!(env.ctilde >= 1e-8);
        let mut prev_inc = f64::INFINITY;
        for w in env.seq.windows(2) {
            let inc = w[1].1 - w[0].1;
            assert!(inc <= prev_inc + 1e-12, "increment grew");
            assert!(inc >= 0.1 * p.c_star - 1e-12);
            prev_inc = inc;
        }
        let last = env.seq[env.seq.len() - 1].1 - env.seq[env.seq.len() - 2].1;
        assert!((last - 0.1 * p.c_star).abs() / (0.1 * p.c_star) < 0.05);
        assert!(propagation_envelope(&p, 0.5, 8.0, 0.1, 5).is_err());
    }

    #[test]
    fn build_profile_from_growth_models() {
        let grid = GridSpec::line(-2.0, 2.0, 65).unwrap();
        let g = GrowthModel::affine(SpaceFn::constant(1.0), SpaceFn::constant(2.0), None, &grid)
            .unwrap();
        let e = EnergyModel::power_law(2.0).unwrap();
        // G(z) = 1 − z/2 vanishes at 2; (s*)′(2) = 1 ≥ 0.6.
        let p = build_profile(&g, &e, 0.6, 0.05).unwrap();
        assert!((p.z_m - 2.0).abs() < 1e-3, "z_m = {}", p.z_m);
        assert!(p.gtilde(0.0) >= 1.0);
        assert!(p.w0 > 0.0 && p.w1 > 0.0 && p.w1 < p.w0);
        // Majorization on samples.
        for i in 0..40 {
            let z = -0.5 + 0.1 * i as f64;
            assert!(p.gtilde(z) >= g.g(z, [0.0, 0.0]));
        }
        // Demand a higher plateau: (s*)′(z_M) ≥ 1.5 needs z_M ≥ 3 > z_root.
        let p2 = build_profile(&g, &e, 1.5, 0.05).unwrap();
        assert!(p2.z_m >= 3.0 - 1e-6);
        assert!(p2.plateau_density() >= 1.5 - 1e-9);
        assert!(p2.gtilde(p2.z_m).abs() < 1e-9);
        // Zero growth has no majorant zero with positive values: error.
        let gz = GrowthModel::zero(&grid);
        assert!(build_profile(&gz, &e, 0.1, 0.05).is_err());
    }
}
