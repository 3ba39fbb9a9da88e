//! Run configuration: a single TOML key tree describing the grid, energy,
//! growth law, initial condition, time discretization, solver options, and
//! output options. Structural constraints — notably the stability bound
//! `τ ≤ 1/(2B)` — are enforced at load time.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::barriers::{build_profile, barrier_density_refined};
use crate::dual_solver::SolverOptions;
use crate::energy::EnergyModel;
use crate::error::{Error, Result};
use crate::fields::{GridSpec, ScalarField};
use crate::growth::{GrowthModel, SpaceFn};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridCfg {
    /// Lower corner per axis (1 or 2 entries).
    pub origin: Vec<f64>,
    /// Upper corner per axis; same arity as `origin`.
    pub corner: Vec<f64>,
    /// Nodes per axis; same arity as `origin`.
    pub n: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnergyCfg {
    /// "power_law" or "hard_congestion".
    pub kind: String,
    /// Exponent for the power law (> 1); ignored otherwise.
    pub m: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GrowthCfg {
    /// "affine", "table", or "zero".
    pub kind: String,
    /// Affine: coefficient expressions in x0/x1 (e.g. "1.0", "0.5+0.1*x0").
    pub g0: Option<String>,
    pub bbar: Option<String>,
    /// Optional explicit bound B overriding the inferred one.
    pub b: Option<f64>,
    /// Table: sample pressures (strictly increasing) and rates.
    pub z: Option<Vec<f64>>,
    pub g: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct InitialCfg {
    /// "ball" (indicator), "plateau" (height < cap on a ball), "bump"
    /// (compact paraboloid), or "barrier" (the radial barrier ρ_{R,A}).
    pub kind: String,
    /// Center per axis; defaults to the domain center.
    pub center: Option<Vec<f64>>,
    pub radius: f64,
    /// Height for plateau/bump (default 1).
    pub height: Option<f64>,
    /// Barrier steepness A ≥ 1 (default 1).
    pub a: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimeCfg {
    pub horizon: f64,
    pub tau: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SolverCfg {
    pub max_iters: Option<usize>,
    pub tol_rel: Option<f64>,
    pub sigma0: Option<f64>,
    pub precond_weight: Option<f64>,
    pub raw_gradient: Option<bool>,
    pub hc_softening: Option<f64>,
}

fn default_snapshot_every() -> usize {
    1
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OutputCfg {
    /// Artifact directory, created if absent.
    pub dir: String,
    /// Write a snapshot every k steps (0 disables snapshots).
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
    /// Also write 8-bit PGM previews next to each snapshot.
    #[serde(default)]
    pub pgm: bool,
}

impl Default for OutputCfg {
    fn default() -> Self {
        OutputCfg {
            dir: "out".into(),
            snapshot_every: 1,
            pgm: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridCfg,
    pub energy: EnergyCfg,
    pub growth: GrowthCfg,
    pub initial: InitialCfg,
    pub time: TimeCfg,
    #[serde(default)]
    pub solver: SolverCfg,
    #[serde(default)]
    pub output: OutputCfg,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    /// Parses and validates; every constructor failure (grid, energy,
    /// growth, τ-bound) is a load-time error.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| Error::Config(format!("TOML parse error: {e}")))?;
        // Build every component once to surface constructor errors now.
        let grid = cfg.grid_spec()?;
        let energy = cfg.energy_model()?;
        let growth = cfg.growth_model(&grid)?;
        if !(cfg.time.tau > 0.0) {
            return Err(Error::NonPositiveTau(cfg.time.tau));
        }
        if cfg.time.horizon < 0.0 {
            return Err(Error::Config(format!(
                "negative horizon {}",
                cfg.time.horizon
            )));
        }
        let bound = growth.max_tau();
        if cfg.time.tau > bound {
            return Err(Error::TauTooLarge {
                tau: cfg.time.tau,
                bound,
                b: growth.b_bound,
            });
        }
        cfg.initial_field(&grid, &energy, &growth)?;
        Ok(cfg)
    }

    pub fn grid_spec(&self) -> Result<GridSpec> {
        let d = self.grid.origin.len();
        if !(d == 1 || d == 2) || self.grid.corner.len() != d || self.grid.n.len() != d {
            return Err(Error::Config(
                "grid origin/corner/n must share arity 1 or 2".into(),
            ));
        }
        if d == 1 {
            GridSpec::line(self.grid.origin[0], self.grid.corner[0], self.grid.n[0])
        } else {
            GridSpec::rect(
                [self.grid.origin[0], self.grid.origin[1]],
                [self.grid.corner[0], self.grid.corner[1]],
                [self.grid.n[0], self.grid.n[1]],
            )
        }
    }

    pub fn energy_model(&self) -> Result<EnergyModel> {
        match self.energy.kind.as_str() {
            "hard_congestion" => Ok(EnergyModel::hard_congestion()),
            "power_law" => {
                let m = self
                    .energy
                    .m
                    .ok_or_else(|| Error::Config("power_law energy needs key energy.m".into()))?;
                EnergyModel::power_law(m)
            }
            other => Err(Error::Config(format!("unknown energy kind '{other}'"))),
        }
    }

    pub fn growth_model(&self, grid: &GridSpec) -> Result<GrowthModel> {
        match self.growth.kind.as_str() {
            "zero" => Ok(GrowthModel::zero(grid)),
            "affine" => {
                let g0 = SpaceFn::parse(
                    self.growth
                        .g0
                        .as_deref()
                        .ok_or_else(|| Error::Config("affine growth needs key growth.g0".into()))?,
                )?;
                let bbar = SpaceFn::parse(self.growth.bbar.as_deref().ok_or_else(|| {
                    Error::Config("affine growth needs key growth.bbar".into())
                })?)?;
                GrowthModel::affine(g0, bbar, self.growth.b, grid)
            }
            "table" => {
                let z = self
                    .growth
                    .z
                    .clone()
                    .ok_or_else(|| Error::Config("table growth needs key growth.z".into()))?;
                let g = self
                    .growth
                    .g
                    .clone()
                    .ok_or_else(|| Error::Config("table growth needs key growth.g".into()))?;
                GrowthModel::table(z, g, self.growth.b, grid)
            }
            other => Err(Error::Config(format!("unknown growth kind '{other}'"))),
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        let d = SolverOptions::default();
        SolverOptions {
            max_iters: self.solver.max_iters.unwrap_or(d.max_iters),
            tol_rel: self.solver.tol_rel.unwrap_or(d.tol_rel),
            sigma0: self.solver.sigma0.unwrap_or(d.sigma0),
            precond_weight: self.solver.precond_weight.unwrap_or(d.precond_weight),
            raw_gradient: self.solver.raw_gradient.unwrap_or(d.raw_gradient),
            hc_softening: self.solver.hc_softening.unwrap_or(d.hc_softening),
            ..d
        }
    }

    fn center(&self, grid: &GridSpec) -> Result<[f64; 2]> {
        match &self.initial.center {
            None => Ok(grid.center()),
            Some(c) => {
                if c.len() != grid.dim {
                    return Err(Error::Config(
                        "initial.center arity must match the grid dimension".into(),
                    ));
                }
                Ok([c[0], if grid.dim == 2 { c[1] } else { 0.0 }])
            }
        }
    }

    /// Samples the named initial-condition primitive on the grid.
    pub fn initial_field(
        &self,
        grid: &GridSpec,
        energy: &EnergyModel,
        growth: &GrowthModel,
    ) -> Result<ScalarField> {
        let c = self.center(grid)?;
        let r = self.initial.radius;
        if !(r > 0.0) {
            return Err(Error::Config(format!("initial.radius {r} must be positive")));
        }
        let height = self.initial.height.unwrap_or(1.0);
        let dist = move |x: [f64; 2]| {
            let mut d2 = (x[0] - c[0]) * (x[0] - c[0]);
            if grid.dim == 2 {
                d2 += (x[1] - c[1]) * (x[1] - c[1]);
            }
            d2.sqrt()
        };
        match self.initial.kind.as_str() {
            "ball" => Ok(ScalarField::from_fn(grid, |x| {
                if dist(x) <= r {
                    1.0
                } else {
                    0.0
                }
            })),
            "plateau" => {
                if !(height > 0.0) {
                    return Err(Error::Config("plateau height must be positive".into()));
                }
                Ok(ScalarField::from_fn(grid, |x| {
                    if dist(x) <= r {
                        height
                    } else {
                        0.0
                    }
                }))
            }
            "bump" => Ok(ScalarField::from_fn(grid, |x| {
                let d = dist(x);
                (height * (1.0 - (d / r) * (d / r))).max(0.0)
            })),
            "barrier" => {
                let a = self.initial.a.unwrap_or(1.0);
                let profile = build_profile(growth, energy, 1.0, self.time.tau)?;
                let b = barrier_density_refined(&profile, a, r, grid.dim)?;
                Ok(b.sample(grid, c))
            }
            other => Err(Error::Config(format!(
                "unknown initial-condition kind '{other}'"
            ))),
        }
    }
}
