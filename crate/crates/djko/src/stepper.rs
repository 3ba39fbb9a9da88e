//! Time loop: iterates the variational step, records the piecewise-constant
//! trajectory, and evaluates the per-step diagnostic ledgers (mass, energy
//! dissipation, dual-norm time increments).

use crate::dual_solver::{solve_step, SolverOptions, StepRecord};
use crate::energy::{EnergyKind, EnergyModel};
use crate::error::{Error, Result};
use crate::fields::{
    bv_seminorm, hminus1_norm, integrate, mean, support_boundary_margin, support_radius,
    ScalarField,
};
use crate::growth::GrowthModel;

/// Threshold defining the numerical support of a density.
pub const SUPPORT_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct DiagRow {
    pub step: usize,
    pub time: f64,
    pub mass: f64,
    pub energy: f64,
    /// `∫|∇p|²ρ` for the step's discrete map, evaluated exactly as `w2sq/τ²`.
    pub dissipation: f64,
    /// Source pairing `∫ p μ`.
    pub source_pairing: f64,
    pub bv: f64,
    pub max_pressure: f64,
    pub support_radius: f64,
    /// `‖(ρⁿ⁺¹ − ρⁿ)/τ‖_{H⁻¹}` of the mean-free part.
    pub hminus1_increment: f64,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub rho0: ScalarField,
    pub records: Vec<StepRecord>,
    pub tau: f64,
    pub horizon: f64,
    pub diagnostics: Vec<DiagRow>,
}

#[derive(Clone, Debug)]
pub struct LedgerRow {
    pub step: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

#[derive(Clone, Debug)]
pub struct LedgerReport {
    pub rows: Vec<LedgerRow>,
    pub tolerance: f64,
    pub pass: bool,
    pub worst: f64,
}

/// Energy used in diagnostics. Hard congestion is evaluated on the density
/// projected to `[0,1]`: scatter quadrature can exceed the cap by a
/// mesh-level amount and the extended-real energy would report +∞ for it.
pub fn diagnostic_energy(e: &EnergyModel, rho: &ScalarField) -> Result<f64> {
    match e.kind {
        EnergyKind::HardCongestion => Ok(0.0),
        _ => e.total_energy(rho),
    }
}

fn pairing(p: &ScalarField, mu: &ScalarField) -> f64 {
    let cell = p.grid.cell();
    p.values
        .iter()
        .zip(&mu.values)
        .map(|(&a, &b)| a * b)
        .sum::<f64>()
        * cell
}

fn hminus1_increment(next: &ScalarField, prev: &ScalarField, tau: f64) -> Result<f64> {
    let mut inc = next.zip(prev, |a, b| (a - b) / tau)?;
    // Growth makes increments non-mean-zero; the dual norm applies to the
    // mean-free part.
    let m = mean(&inc)?;
    for v in &mut inc.values {
        *v -= m;
    }
    hminus1_norm(&inc)
}

fn diag_row(
    step: usize,
    tau: f64,
    rho: &ScalarField,
    prev: Option<(&StepRecord, &ScalarField)>,
    e: &EnergyModel,
) -> Result<DiagRow> {
    let center = rho.grid.center();
    let (dissipation, source_pairing, max_pressure, hm1) = match prev {
        Some((rec, before)) => (
            rec.w2sq / (tau * tau),
            pairing(&rec.p, &rec.mu),
            rec.p.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            hminus1_increment(rho, before, tau)?,
        ),
        None => (0.0, 0.0, 0.0, 0.0),
    };
    Ok(DiagRow {
        step,
        time: step as f64 * tau,
        mass: integrate(rho)?,
        energy: diagnostic_energy(e, rho)?,
        dissipation,
        source_pairing,
        bv: bv_seminorm(rho)?,
        max_pressure,
        support_radius: support_radius(rho, center, SUPPORT_TOL),
        hminus1_increment: hm1,
    })
}

/// Advances `rho0` over `ceil(T/τ)` steps. Aborts with a domain error if the
/// support comes within `3h` of the boundary.
pub fn run(
    rho0: &ScalarField,
    horizon: f64,
    tau: f64,
    e: &EnergyModel,
    g: &GrowthModel,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    if !(tau > 0.0) {
        return Err(Error::NonPositiveTau(tau));
    }
    if horizon < 0.0 {
        return Err(Error::Config(format!("negative horizon {horizon}")));
    }
    let n_steps = (horizon / tau).ceil() as usize;
    let margin_floor = 3.0 * rho0.grid.max_h();
    let mut records = Vec::with_capacity(n_steps);
    let mut diagnostics = Vec::with_capacity(n_steps + 1);
    diagnostics.push(diag_row(0, tau, rho0, None, e)?);
    let mut rho = rho0.clone();
    for step in 1..=n_steps {
        let margin = support_boundary_margin(&rho, SUPPORT_TOL);
        if margin < margin_floor {
            return Err(Error::DomainTooSmall {
                step,
                margin,
            });
        }
        let rec = solve_step(&rho, tau, e, g, opts)?;
        diagnostics.push(diag_row(step, tau, &rec.rho_next, Some((&rec, &rho)), e)?);
        rho = rec.rho_next.clone();
        records.push(rec);
    }
    Ok(Trajectory {
        rho0: rho0.clone(),
        records,
        tau,
        horizon,
        diagnostics,
    })
}

impl Trajectory {
    /// Density after `n` steps (`n = 0` is the initial state).
    pub fn density(&self, n: usize) -> &ScalarField {
        if n == 0 {
            &self.rho0
        } else {
            &self.records[n - 1].rho_next
        }
    }

    pub fn n_steps(&self) -> usize {
        self.records.len()
    }

    /// CSV rows matching [`diagnostics_header`].
    pub fn diagnostics_rows(&self) -> Vec<Vec<f64>> {
        self.diagnostics
            .iter()
            .map(|d| {
                vec![
                    d.step as f64,
                    d.time,
                    d.mass,
                    d.energy,
                    d.dissipation,
                    d.source_pairing,
                    d.bv,
                    d.max_pressure,
                    d.support_radius,
                    d.hminus1_increment,
                ]
            })
            .collect()
    }
}

pub fn diagnostics_header() -> Vec<&'static str> {
    vec![
        "step",
        "time",
        "mass",
        "energy",
        "dissipation",
        "source_pairing",
        "bv",
        "max_pressure",
        "support_radius",
        "hminus1_increment",
    ]
}

/// Prefix energy inequality
/// `E(ρᴺ) + ½Σₙ τ·(w2sq/τ²) ≤ E(ρ₀) + Σₙ τ·∫pμ + tol`,
/// with tolerance `1e−6·(1 + |E(ρ₀)|)`.
pub fn dissipation_ledger(traj: &Trajectory, e: &EnergyModel) -> Result<LedgerReport> {
    let e0 = diagnostic_energy(e, &traj.rho0)?;
    let tolerance = 1e-6 * (1.0 + e0.abs());
    let tau = traj.tau;
    let mut rows = Vec::with_capacity(traj.n_steps());
    let mut dissip = 0.0;
    let mut source = 0.0;
    let mut worst = f64::NEG_INFINITY;
    for (i, rec) in traj.records.iter().enumerate() {
        dissip += rec.w2sq / tau;
        source += tau * pairing(&rec.p, &rec.mu);
        let lhs = diagnostic_energy(e, &rec.rho_next)? + 0.5 * dissip;
        let rhs = e0 + source;
        let slack = lhs - rhs;
        worst = worst.max(slack);
        rows.push(LedgerRow {
            step: i + 1,
            lhs,
            rhs,
            slack,
        });
    }
    let pass = rows.iter().all(|r| r.slack <= tolerance);
    Ok(LedgerReport {
        rows,
        tolerance,
        pass,
        worst: if worst.is_finite() { worst } else { 0.0 },
    })
}

/// Series `‖(ρⁿ⁺¹−ρⁿ)/τ‖_{H⁻¹}` and its τ-weighted square sum.
pub fn h_minus1_time_increments(traj: &Trajectory) -> (Vec<f64>, f64) {
    let series: Vec<f64> = traj
        .diagnostics
        .iter()
        .skip(1)
        .map(|d| d.hminus1_increment)
        .collect();
    let sum = series.iter().map(|v| v * v * traj.tau).sum();
    (series, sum)
}
