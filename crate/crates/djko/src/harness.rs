//! Desk-scale verification of the scheme's structural properties:
//! comparison principles, L¹ contraction-type bounds, hard-congestion
//! monotonicity, propagation envelopes, and τ→0 convergence against
//! independent oracles (a shooting front oracle and an explicit
//! porous-medium scheme that share no code with the dual solver beyond the
//! field primitives).

use std::time::Instant;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::barriers::{barrier_density_refined, propagation_envelope, BarrierProfile};
use crate::dual_solver::SolverOptions;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::fields::{bv_seminorm, integrate, l1_diff, support_radius, GridSpec, ScalarField};
use crate::growth::{GrowthModel, SpaceFn};
use crate::stepper::{run, Trajectory, SUPPORT_TOL};

/// Outcome of one structural check. `pass` holds iff the worst violation is
/// within the stated tolerance.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    /// Largest violation found (negative means the check held with margin).
    pub worst: f64,
    /// `(step, node)` of the worst violation, when one is localized.
    pub location: Option<(usize, usize)>,
    pub tolerance: f64,
    pub runtime_secs: f64,
}

impl CheckReport {
    fn finish(
        name: &str,
        worst: f64,
        location: Option<(usize, usize)>,
        tolerance: f64,
        start: Instant,
    ) -> Self {
        CheckReport {
            name: name.to_string(),
            pass: worst <= tolerance,
            worst,
            location,
            tolerance,
            runtime_secs: start.elapsed().as_secs_f64(),
        }
    }
}

/// Tracks the worst violation and its location over a scan.
struct Worst {
    value: f64,
    location: Option<(usize, usize)>,
}

impl Worst {
    fn new() -> Self {
        Worst {
            value: f64::NEG_INFINITY,
            location: None,
        }
    }

    fn observe(&mut self, v: f64, step: usize, node: usize) {
        if v > self.value {
            self.value = v;
            self.location = Some((step, node));
        }
    }

    fn value(&self) -> f64 {
        if self.value.is_finite() {
            self.value
        } else {
            0.0
        }
    }
}

/// Grid Lipschitz constant: the largest one-sided difference quotient.
fn grid_lipschitz(f: &ScalarField) -> f64 {
    let g = &f.grid;
    let h = g.h();
    let mut lip = 0.0f64;
    for i0 in 0..g.n[0] {
        for i1 in 0..g.n[1] {
            let k = g.idx([i0, i1]);
            if i0 + 1 < g.n[0] {
                lip = lip.max((f.values[g.idx([i0 + 1, i1])] - f.values[k]).abs() / h[0]);
            }
            if g.dim == 2 && i1 + 1 < g.n[1] {
                lip = lip.max((f.values[g.idx([i0, i1 + 1])] - f.values[k]).abs() / h[1]);
            }
        }
    }
    lip
}

/// Smallest positive root of `z ↦ G(z, x_center)` (homeostatic pressure).
fn homeostatic_pressure(g: &GrowthModel, grid: &GridSpec) -> Result<f64> {
    let xc = grid.center();
    let hi = g.b1 + 1.0;
    let f0 = g.g(0.0, xc);
    if f0 <= 0.0 {
        return Ok(0.0);
    }
    if g.g(hi, xc) > 0.0 {
        return Err(Error::Growth(format!(
            "growth rate has no homeostatic zero below {hi}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, hi);
    while hi - lo > 1e-13 * (1.0 + hi) {
        let mid = 0.5 * (lo + hi);
        if g.g(mid, xc) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Runs the ordered pair and asserts `ρ_low ≤ ρ_high` and
/// `(p_low)₊ ≤ (p_high)₊` nodewise at every step, with tolerance
/// `1e−6 + 2h·Lip` where `Lip` is the grid Lipschitz constant of the
/// dominating field, uniform over the trajectory. Preconditions: ordered
/// initial data, and
/// `G_low ≤ G_high` on a sample lattice covering the physical pressure
/// range `[0, z_hom]` of both models.
#[allow(clippy::too_many_arguments)]
pub fn check_comparison(
    rho0_low: &ScalarField,
    rho0_high: &ScalarField,
    g_low: &GrowthModel,
    g_high: &GrowthModel,
    horizon: f64,
    tau: f64,
    e: &EnergyModel,
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let start = Instant::now();
    if rho0_low.grid != rho0_high.grid {
        return Err(Error::GridMismatch);
    }
    for (a, b) in rho0_low.values.iter().zip(&rho0_high.values) {
        if a > &(b + 1e-12) {
            return Err(Error::Feasibility(
                "initial data are not nodewise ordered".into(),
            ));
        }
    }
    let grid = &rho0_low.grid;
    let z_cap = homeostatic_pressure(g_low, grid)?.min(homeostatic_pressure(g_high, grid)?);
    let stride = [(grid.n[0] / 16).max(1), (grid.n[1] / 16).max(1)];
    for iz in 0..=32usize {
        let z = z_cap * iz as f64 / 32.0;
        let mut i0 = 0;
        while i0 < grid.n[0] {
            let mut i1 = 0;
            while i1 < grid.n[1] {
                let x = grid.pos([i0, i1]);
                if g_low.g(z, x) > g_high.g(z, x) + 1e-12 {
                    return Err(Error::Feasibility(format!(
                        "growth rates are not ordered at z = {z}, x = {x:?}"
                    )));
                }
                i1 += stride[1];
            }
            i0 += stride[0];
        }
    }

    let t_low = run(rho0_low, horizon, tau, e, g_low, opts)?;
    let t_high = run(rho0_high, horizon, tau, e, g_high, opts)?;
    let h = grid.max_h();
    // The discretization error of the comparison principle is governed by
    // the spatial regularity of the dominating solution uniformly over the
    // time window, so the Lipschitz constant in the `2h·Lip` slack is taken
    // as the maximum over the trajectory. A per-step constant degenerates:
    // at the step where the dominating pressure first activates it is still
    // identically zero, and a one-step onset offset (a single transport
    // facet, magnitude h²/(2τ)) would register as an O(1) violation.
    let n_cmp = t_low.n_steps().min(t_high.n_steps());
    let mut lip_rho = 0.0f64;
    let mut lip_p = 0.0f64;
    for n in 0..=n_cmp {
        lip_rho = lip_rho.max(grid_lipschitz(t_high.density(n)));
        if n >= 1 {
            lip_p = lip_p.max(grid_lipschitz(&t_high.records[n - 1].p));
        }
    }
    let slack = 2.0 * h * lip_rho;
    let slack_p = 2.0 * h * lip_p;
    let mut worst = Worst::new();
    for n in 0..=n_cmp {
        let (lo, hi) = (t_low.density(n), t_high.density(n));
        for k in 0..grid.len() {
            worst.observe(lo.values[k] - hi.values[k] - slack, n, k);
        }
        if n >= 1 {
            let (pl, ph) = (&t_low.records[n - 1].p, &t_high.records[n - 1].p);
            for k in 0..grid.len() {
                worst.observe(
                    pl.values[k].max(0.0) - ph.values[k].max(0.0) - slack_p,
                    n,
                    k,
                );
            }
        }
    }
    Ok(CheckReport::finish(
        "comparison",
        worst.value(),
        worst.location,
        1e-6,
        start,
    ))
}

/// Asserts the prefix bound
/// `∫₀ᵗ∫|ρ_a − ρ_b| ≤ (1/B)(e^{Bt}−1)(1+τB)‖ρ_a⁰−ρ_b⁰‖_{L¹}`
/// with 5% relative slack plus a grid term `2h·t·|ρ_a⁰−ρ_b⁰|_{BV}` for the
/// front cells the two trajectories smear differently.
pub fn check_contraction(
    rho0_a: &ScalarField,
    rho0_b: &ScalarField,
    horizon: f64,
    tau: f64,
    e: &EnergyModel,
    g: &GrowthModel,
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let start = Instant::now();
    if rho0_a.grid != rho0_b.grid {
        return Err(Error::GridMismatch);
    }
    let b = g.b_bound;
    let diff0 = rho0_a.zip(rho0_b, |x, y| x - y)?;
    let l1_0 = l1_diff(rho0_a, rho0_b)?;
    let bv0 = bv_seminorm(&diff0)?;
    let t_a = run(rho0_a, horizon, tau, e, g, opts)?;
    let t_b = run(rho0_b, horizon, tau, e, g, opts)?;
    let h = rho0_a.grid.max_h();
    let mut lhs = 0.0;
    let mut worst = Worst::new();
    for n in 1..=t_a.n_steps().min(t_b.n_steps()) {
        lhs += tau * l1_diff(t_a.density(n), t_b.density(n))?;
        let t = n as f64 * tau;
        let fac = if b > 0.0 { (b * t).exp_m1() / b } else { t };
        let rhs = fac * (1.0 + tau * b) * l1_0;
        let allowed = 1.05 * rhs + 2.0 * h * t * bv0;
        worst.observe(lhs - allowed, n, 0);
    }
    Ok(CheckReport::finish(
        "contraction",
        worst.value(),
        worst.location,
        1e-12,
        start,
    ))
}

/// Runs from `rho0` (which must be dominated by the barrier `ρ_{R0,A0}`)
/// and asserts `support_radius(ρⁿ) ≤ Rₙ + 2h` along the relaxation
/// envelope.
#[allow(clippy::too_many_arguments)]
pub fn check_propagation(
    rho0: &ScalarField,
    profile: &BarrierProfile,
    r0: f64,
    a0: f64,
    horizon: f64,
    tau: f64,
    e: &EnergyModel,
    g: &GrowthModel,
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let start = Instant::now();
    let grid = &rho0.grid;
    let center = grid.center();
    let barrier = barrier_density_refined(profile, a0, r0, grid.dim)?;
    let sampled = barrier.sample(grid, center);
    for (k, (a, b)) in rho0.values.iter().zip(&sampled.values).enumerate() {
        if a > &(b + 1e-9) {
            return Err(Error::Feasibility(format!(
                "initial datum exceeds the barrier at node {k}: {a} > {b}"
            )));
        }
    }
    let n_steps = (horizon / tau).ceil() as usize;
    let env = propagation_envelope(profile, r0, a0, tau, n_steps)?;
    let traj = run(rho0, horizon, tau, e, g, opts)?;
    let h = grid.max_h();
    let mut worst = Worst::new();
    for n in 0..=traj.n_steps() {
        let r = support_radius(traj.density(n), center, SUPPORT_TOL);
        worst.observe(r - env.seq[n].1 - 2.0 * h, n, 0);
    }
    Ok(CheckReport::finish(
        "propagation",
        worst.value(),
        worst.location,
        0.0,
        start,
    ))
}

/// Hard-congestion saturation dynamics: asserts `ρⁿ` and `(pₙ)₊` nodewise
/// nondecreasing in `n` (tolerance `1e−8 + h`), and — when `ρ₀` is an
/// indicator — that each `ρⁿ` stays `{0,1}`-valued except on a front band
/// of area at most `2h · perimeter(ρ₀ = 1)`. The composite violation is
/// reported as the worst excess over the per-part allowances.
pub fn check_sinf_monotone(
    rho0: &ScalarField,
    horizon: f64,
    tau: f64,
    g: &GrowthModel,
    opts: &SolverOptions,
) -> Result<CheckReport> {
    let start = Instant::now();
    let e = EnergyModel::hard_congestion();
    if rho0.values.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        return Err(Error::Feasibility(
            "hard congestion requires ρ₀ ∈ [0,1]".into(),
        ));
    }
    let indicator0 = rho0
        .values
        .iter()
        .all(|&v| v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12);
    let traj = run(rho0, horizon, tau, &e, g, opts)?;
    let grid = &rho0.grid;
    let h = grid.max_h();
    let cell = grid.cell();
    let tol_mono = 1e-8 + h;
    let mut worst = Worst::new();
    for n in 0..traj.n_steps() {
        let (before, after) = (traj.density(n), traj.density(n + 1));
        for k in 0..grid.len() {
            worst.observe(before.values[k] - after.values[k] - tol_mono, n + 1, k);
        }
        if n >= 1 {
            let (pa, pb) = (&traj.records[n - 1].p, &traj.records[n].p);
            for k in 0..grid.len() {
                worst.observe(
                    pa.values[k].max(0.0) - pb.values[k].max(0.0) - tol_mono,
                    n + 1,
                    k,
                );
            }
        }
    }
    if indicator0 {
        let perimeter = bv_seminorm(rho0)?;
        let allowed = 2.0 * h * perimeter;
        for n in 1..=traj.n_steps() {
            let rho = traj.density(n);
            let off_area = rho
                .values
                .iter()
                .filter(|&&v| v.min((v - 1.0).abs()) > 1e-6)
                .count() as f64
                * cell;
            worst.observe(off_area - allowed, n, usize::MAX);
        }
    }
    Ok(CheckReport::finish(
        "saturation-monotonicity",
        worst.value(),
        worst.location,
        0.0,
        start,
    ))
}

/// Free-boundary radius trajectory from the shooting oracle.
#[derive(Clone, Debug)]
pub struct FrontOracle {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
}

impl FrontOracle {
    /// Linear interpolation of `R(t)`.
    pub fn radius_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.radii[0];
        }
        if t >= self.times[n - 1] {
            return self.radii[n - 1];
        }
        let i = self.times.partition_point(|&s| s < t).max(1);
        let w = (t - self.times[i - 1]) / (self.times[i] - self.times[i - 1]);
        self.radii[i - 1] + w * (self.radii[i] - self.radii[i - 1])
    }
}

/// Pressure on a symmetric saturated patch `[−R, R]`: solves the two-point
/// problem `−p″ = G(p, x_c)`, `p′(0) = 0`, `p(R) = 0` by shooting on the
/// interior height `p(0)` with RK4 in `r` and certified bisection. Returns
/// `(p(R), p′(R))` for the converged shot.
fn saturated_pressure_slope(g: &GrowthModel, grid_center: [f64; 2], r_front: f64) -> Result<f64> {
    let z_hi = g.b1 + 1.0;
    let rhs = |p: f64| -g.g(p, grid_center);
    // Integrate p″ = −G(p) from (p0, 0) to r = R; returns (p(R), p′(R)).
    let shoot = |p0: f64| -> (f64, f64) {
        let n = 1600usize;
        let dr = r_front / n as f64;
        let (mut p, mut v) = (p0, 0.0f64);
        for _ in 0..n {
            let k1 = (v, rhs(p));
            let k2 = (v + 0.5 * dr * k1.1, rhs(p + 0.5 * dr * k1.0));
            let k3 = (v + 0.5 * dr * k2.1, rhs(p + 0.5 * dr * k2.0));
            let k4 = (v + dr * k3.1, rhs(p + dr * k3.0));
            p += dr / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0);
            v += dr / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1);
        }
        (p, v)
    };
    // p(R) is increasing in p0: bracket between 0 (undershoots, p(R) < 0
    // when G(0) > 0) and the homeostatic height (p stays positive).
    let f_hi = shoot(z_hi).0;
    if f_hi < 0.0 {
        return Err(Error::SolverFailure(format!(
            "front oracle shot from the homeostatic height undershoots: p(R) = {f_hi}"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, z_hi);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if shoot(mid).0 < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(shoot(0.5 * (lo + hi)).1)
}

/// Independent free-boundary oracle for the 1D saturated patch
/// `ρ₀ = 1_{[−r0, r0]}` under hard congestion: per time the interior
/// pressure solves `−p″ = G(p)` with `p = 0` at the front, and the front
/// moves with the Darcy speed `R′ = |p′(R)|`. Advanced by Heun's method
/// with step `dt ≤ 1e−4`; shares no code with the dual solver.
pub fn oracle_1d_front(
    g: &GrowthModel,
    grid_center: [f64; 2],
    r0: f64,
    horizon: f64,
    dt: f64,
) -> Result<FrontOracle> {
    if !(r0 > 0.0) || horizon < 0.0 {
        return Err(Error::Config(format!(
            "front oracle needs r0 > 0 and T ≥ 0, got r0 = {r0}, T = {horizon}"
        )));
    }
    if !(dt > 0.0 && dt <= 1e-4 + 1e-18) {
        return Err(Error::Config(format!("oracle step {dt} must be in (0, 1e−4]")));
    }
    let n = (horizon / dt).ceil() as usize;
    let mut times = Vec::with_capacity(n + 1);
    let mut radii = Vec::with_capacity(n + 1);
    let mut r = r0;
    times.push(0.0);
    radii.push(r);
    let static_patch = g.is_zero() || g.g(0.0, grid_center) <= 0.0;
    for i in 0..n {
        if !static_patch {
            let s1 = saturated_pressure_slope(g, grid_center, r)?.abs();
            let s2 = saturated_pressure_slope(g, grid_center, r + dt * s1)?.abs();
            r += 0.5 * dt * (s1 + s2);
        }
        times.push((i + 1) as f64 * dt);
        radii.push(r);
    }
    Ok(FrontOracle { times, radii })
}

/// One row of a τ-refinement study.
#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    /// Space-time L¹ error against the oracle.
    pub error: f64,
}

/// Successive error ratios `e(τᵢ₊₁)/e(τᵢ)`.
pub fn convergence_ratios(rows: &[ConvergenceRow]) -> Vec<f64> {
    rows.windows(2).map(|w| w[1].error / w[0].error).collect()
}

/// L¹(space × time) distance between the saturated set of a discrete
/// hard-congestion trajectory and the oracle front interval `[−R(t), R(t)]`.
/// Both sets are symmetric intervals, so the spatial L¹ distance per step is
/// the difference of their lengths. The discrete set's length is measured as
/// the patch mass (the density is 1 on the saturated interval, so measure
/// equals mass): this resolves the front below the cell width, whereas a
/// thresholded indicator set is quantized to whole cells and plateaus at
/// O(h) regardless of τ.
fn hc_front_error(traj: &Trajectory, oracle: &FrontOracle) -> Result<f64> {
    let mut err = 0.0;
    for n in 1..=traj.n_steps() {
        let t = n as f64 * traj.tau;
        let length = integrate(traj.density(n))?;
        err += traj.tau * (length - 2.0 * oracle.radius_at(t)).abs();
    }
    Ok(err)
}

/// τ-refinement study for the 1D hard-congestion front instance: runs the
/// scheme from `ρ₀ = 1_{|x−c| ≤ r0}` for each τ and reports the L¹(Q)
/// distance of its saturated set to the shooting oracle's front interval.
pub fn convergence_study_hc(
    grid: &GridSpec,
    r0: f64,
    horizon: f64,
    tau_list: &[f64],
    g: &GrowthModel,
    opts: &SolverOptions,
) -> Result<Vec<ConvergenceRow>> {
    if grid.dim != 1 {
        return Err(Error::Config("the front study is one-dimensional".into()));
    }
    if tau_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("tau_list must be strictly decreasing".into()));
    }
    for &tau in tau_list {
        if tau > g.max_tau() {
            return Err(Error::TauTooLarge {
                tau,
                bound: g.max_tau(),
                b: g.b_bound,
            });
        }
    }
    let center = grid.center();
    let e = EnergyModel::hard_congestion();
    let rho0 = ScalarField::from_fn(grid, |x| {
        if (x[0] - center[0]).abs() <= r0 {
            1.0
        } else {
            0.0
        }
    });
    let oracle = oracle_1d_front(g, center, r0, horizon, 1e-4)?;
    let mut rows = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let traj = run(&rho0, horizon, tau, &e, g, opts)?;
        rows.push(ConvergenceRow {
            tau,
            error: hc_front_error(&traj, &oracle)?,
        });
    }
    Ok(rows)
}

/// Explicit finite-difference oracle for the zero-growth power-law flow
/// `ρ_t = Δ(ρ^m)` with no-flux boundaries, advanced at a CFL-limited step
/// and sampled at the requested times (which must be nondecreasing).
pub fn pme_explicit_oracle(
    rho0: &ScalarField,
    m: f64,
    out_times: &[f64],
) -> Result<Vec<ScalarField>> {
    if !(m > 1.0) {
        return Err(Error::Config(format!("power-law exponent must be > 1, got {m}")));
    }
    if out_times.windows(2).any(|w| w[1] < w[0]) || out_times.iter().any(|&t| t < 0.0) {
        return Err(Error::Config("oracle times must be nonnegative and sorted".into()));
    }
    let grid = &rho0.grid;
    let h = grid.h();
    let rho_max = rho0.values.iter().cloned().fold(0.0f64, f64::max).max(1e-12);
    // Stability of the explicit step for Δ(ρ^m) linearized at ρ_max.
    let diffusivity = m * rho_max.powf(m - 1.0);
    let h_min2 = if grid.dim == 2 {
        1.0 / (1.0 / (h[0] * h[0]) + 1.0 / (h[1] * h[1]))
    } else {
        h[0] * h[0]
    };
    let dt = 0.2 * h_min2 / diffusivity;
    let mut rho = rho0.values.clone();
    let mut t = 0.0f64;
    let mut out = Vec::with_capacity(out_times.len());
    // Neumann walls: reflect the stencil at the boundary.
    let reflect = |i: isize, n: usize| -> usize {
        if i < 0 {
            1.min(n - 1)
        } else if i as usize >= n {
            n - 2
        } else {
            i as usize
        }
    };
    let laplace_step = |rho: &mut Vec<f64>, dt: f64| {
        let u: Vec<f64> = rho.iter().map(|&v| v.max(0.0).powf(m)).collect();
        let mut next = rho.clone();
        for i0 in 0..grid.n[0] {
            for i1 in 0..grid.n[1] {
                let k = grid.idx([i0, i1]);
                let xm = u[grid.idx([reflect(i0 as isize - 1, grid.n[0]), i1])];
                let xp = u[grid.idx([reflect(i0 as isize + 1, grid.n[0]), i1])];
                let mut lap = (xm - 2.0 * u[k] + xp) / (h[0] * h[0]);
                if grid.dim == 2 {
                    let ym = u[grid.idx([i0, reflect(i1 as isize - 1, grid.n[1])])];
                    let yp = u[grid.idx([i0, reflect(i1 as isize + 1, grid.n[1])])];
                    lap += (ym - 2.0 * u[k] + yp) / (h[1] * h[1]);
                }
                next[k] = (rho[k] + dt * lap).max(0.0);
            }
        }
        *rho = next;
    };
    for &t_out in out_times {
        while t < t_out - 1e-15 {
            let step = dt.min(t_out - t);
            laplace_step(&mut rho, step);
            t += step;
        }
        out.push(ScalarField::from_values(grid, rho.clone())?);
    }
    Ok(out)
}

/// τ-refinement study for the zero-growth power-law flow against the
/// explicit oracle: `e(τ) = τ Σₙ ‖ρ^τ(tₙ) − ρ_oracle(tₙ)‖_{L¹}`.
pub fn convergence_study_pme(
    rho0: &ScalarField,
    m: f64,
    horizon: f64,
    tau_list: &[f64],
    opts: &SolverOptions,
) -> Result<Vec<ConvergenceRow>> {
    if tau_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::Config("tau_list must be strictly decreasing".into()));
    }
    let e = EnergyModel::power_law(m)?;
    let g = GrowthModel::zero(&rho0.grid);
    let mut rows = Vec::with_capacity(tau_list.len());
    for &tau in tau_list {
        let traj = run(rho0, horizon, tau, &e, &g, opts)?;
        let times: Vec<f64> = (1..=traj.n_steps()).map(|n| n as f64 * tau).collect();
        let oracle = pme_explicit_oracle(rho0, m, &times)?;
        let mut err = 0.0;
        for (n, snap) in oracle.iter().enumerate() {
            err += tau * l1_diff(traj.density(n + 1), snap)?;
        }
        rows.push(ConvergenceRow { tau, error: err });
    }
    Ok(rows)
}

/// Measured L¹ modulus of continuity under grid shifts: pairs
/// `(k·h, ∫|f(·+k·h e₀) − f|)` for each requested shift count. Reported as
/// a trend only; no theorem supplies a rate to assert against.
pub fn equicontinuity_modulus(f: &ScalarField, shifts: &[usize]) -> Vec<(f64, f64)> {
    let grid = &f.grid;
    let h = grid.h()[0];
    let cell = grid.cell();
    shifts
        .iter()
        .map(|&s| {
            let mut total = 0.0;
            for i0 in 0..grid.n[0].saturating_sub(s) {
                for i1 in 0..grid.n[1] {
                    total += (f.values[grid.idx([i0 + s, i1])] - f.values[grid.idx([i0, i1])])
                        .abs()
                        * cell;
                }
            }
            (s as f64 * h, total)
        })
        .collect()
}

/// Instance for one seeded comparison trial: nested indicator data and
/// ordered affine growth laws on a shared grid.
pub struct ComparisonInstance {
    pub rho0_low: ScalarField,
    pub rho0_high: ScalarField,
    pub g_low: GrowthModel,
    pub g_high: GrowthModel,
}

/// Deterministic seeded instances: nested balls `B_r ⊂ B_R` at a random
/// interior center with ordered growth constants `g0_low ≤ g0_high` and
/// ordered homeostatic pressures.
pub fn seeded_comparison_instances(
    grid: &GridSpec,
    seed: u64,
    count: usize,
) -> Result<Vec<ComparisonInstance>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center = grid.center();
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let cx = center[0] + rng.gen_range(-0.1..0.1);
        let cy = if grid.dim == 2 {
            center[1] + rng.gen_range(-0.1..0.1)
        } else {
            0.0
        };
        let r_low = rng.gen_range(0.15..0.25);
        let r_high = r_low + rng.gen_range(0.05..0.15);
        let ball = |r: f64| {
            ScalarField::from_fn(grid, |x| {
                let mut d2 = (x[0] - cx) * (x[0] - cx);
                if grid.dim == 2 {
                    d2 += (x[1] - cy) * (x[1] - cy);
                }
                if d2.sqrt() <= r {
                    1.0
                } else {
                    0.0
                }
            })
        };
        let g0_low = rng.gen_range(0.4..0.8);
        let g0_high = g0_low + rng.gen_range(0.0..0.6);
        let bbar_low = rng.gen_range(1.5..2.0);
        let bbar_high = bbar_low + rng.gen_range(0.0..0.5);
        out.push(ComparisonInstance {
            rho0_low: ball(r_low),
            rho0_high: ball(r_high),
            g_low: GrowthModel::affine(
                SpaceFn::constant(g0_low),
                SpaceFn::constant(bbar_low),
                None,
                grid,
            )?,
            g_high: GrowthModel::affine(
                SpaceFn::constant(g0_high),
                SpaceFn::constant(bbar_high),
                None,
                grid,
            )?,
        });
    }
    Ok(out)
}
