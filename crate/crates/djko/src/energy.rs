//! Internal energy densities `s`, their convex duals `s*`, subdifferential
//! selections, and total energies.

use crate::error::{Error, Result};
use crate::fields::{integrate, ScalarField};

/// Numerical tolerance for the hard-congestion cap `ρ ≤ 1`.
pub const CONGESTION_CAP_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EnergyKind {
    /// `s(z) = z^m/(m−1)` for `z ≥ 0` (+∞ below), `m > 1`.
    PowerLaw { m: f64 },
    /// `s(z) = 0` on `[0,1]`, +∞ otherwise.
    HardCongestion,
}

#[derive(Clone, Debug)]
pub struct EnergyModel {
    pub kind: EnergyKind,
}

impl EnergyModel {
    pub fn power_law(m: f64) -> Result<Self> {
        if !(m.is_finite() && m > 1.0) {
            return Err(Error::Config(format!("power-law exponent must be > 1, got {m}")));
        }
        let e = EnergyModel {
            kind: EnergyKind::PowerLaw { m },
        };
        // s(z)/z → 0 as z → 0⁺ must hold for the variational setup.
        let probe = e.s_eval(1e-12) / 1e-12;
        debug_assert!(probe.abs() < 1e-6);
        Ok(e)
    }

    pub fn hard_congestion() -> Self {
        EnergyModel {
            kind: EnergyKind::HardCongestion,
        }
    }

    /// Energy density `s(z)`; extended-real (`f64::INFINITY` off-domain).
    pub fn s_eval(&self, z: f64) -> f64 {
        match self.kind {
            EnergyKind::PowerLaw { m } => {
                if z < 0.0 {
                    f64::INFINITY
                } else {
                    z.powf(m) / (m - 1.0)
                }
            }
            EnergyKind::HardCongestion => {
                if (0.0..=1.0).contains(&z) {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Legendre transform `s*(p)`; finite everywhere, 0 for `p ≤ 0`.
    pub fn s_star_eval(&self, p: f64) -> f64 {
        match self.kind {
            EnergyKind::PowerLaw { m } => {
                if p <= 0.0 {
                    0.0
                } else {
                    ((m - 1.0) * p / m).powf(1.0 / (m - 1.0)) * p * (m - 1.0) / m
                }
            }
            EnergyKind::HardCongestion => p.max(0.0),
        }
    }

    /// Nondecreasing single-valued selection of `∂s*`. For hard congestion
    /// the midpoint value 1/2 is reported at the kink `p = 0`; the scheme
    /// never inverts the pressure there (densities come from pushforward),
    /// so the selection only affects diagnostics.
    pub fn s_star_prime(&self, p: f64) -> f64 {
        match self.kind {
            EnergyKind::PowerLaw { m } => {
                if p <= 0.0 {
                    0.0
                } else {
                    ((m - 1.0) * p / m).powf(1.0 / (m - 1.0))
                }
            }
            EnergyKind::HardCongestion => {
                if p < 0.0 {
                    0.0
                } else if p > 0.0 {
                    1.0
                } else {
                    0.5
                }
            }
        }
    }

    /// `s′(z)` where defined (power law only; hard congestion has no
    /// single-valued derivative at the cap).
    pub fn s_prime(&self, z: f64) -> Option<f64> {
        match self.kind {
            EnergyKind::PowerLaw { m } => {
                if z >= 0.0 {
                    Some(m / (m - 1.0) * z.powf(m - 1.0))
                } else {
                    None
                }
            }
            EnergyKind::HardCongestion => None,
        }
    }

    /// Smallest element of `∂s(z)`, used for the pressure upper bound
    /// `P = max(inf ∂s(‖ρ‖_∞), b₁)`. For hard congestion `∂s(z) = {0}` for
    /// `z < 1` and `[0,∞)` at `z = 1`, so the infimum is 0.
    pub fn inf_partial_s(&self, z: f64) -> f64 {
        match self.kind {
            EnergyKind::PowerLaw { m } => m / (m - 1.0) * z.max(0.0).powf(m - 1.0),
            EnergyKind::HardCongestion => 0.0,
        }
    }

    /// `liminf_{b→∞} ∂s*(b)`: the upper edge of the feasibility window for
    /// mean density (∞ for power law, 1 for hard congestion).
    pub fn feasible_mean_sup(&self) -> f64 {
        match self.kind {
            EnergyKind::PowerLaw { .. } => f64::INFINITY,
            EnergyKind::HardCongestion => 1.0,
        }
    }

    /// `∫ s(ρ)`; +∞ if the congestion cap is exceeded beyond tolerance.
    pub fn total_energy(&self, rho: &ScalarField) -> Result<f64> {
        if rho.values.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidField("total_energy requires a nonnegative density".into()));
        }
        match self.kind {
            EnergyKind::PowerLaw { .. } => {
                let s = rho.map(|z| self.s_eval(z));
                integrate(&s)
            }
            EnergyKind::HardCongestion => {
                let max = rho.values.iter().cloned().fold(0.0, f64::max);
                if max > 1.0 + CONGESTION_CAP_TOL {
                    Ok(f64::INFINITY)
                } else {
                    Ok(0.0)
                }
            }
        }
    }

    pub fn is_hard_congestion(&self) -> bool {
        matches!(self.kind, EnergyKind::HardCongestion)
    }
}
