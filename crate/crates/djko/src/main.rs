//! Command-line entry points: `run` advances a configured trajectory and
//! writes artifacts; `verify` executes named structural checks on bundled
//! instances; `barrier` dumps the barrier ODE profile and propagation
//! envelope; `converge` runs a τ-refinement study.
//!
//! Exit codes: 0 success (and, for `verify`, all selected checks passed);
//! 1 configuration or check failure; 2 domain too small for the configured
//! run; 3 solver failure. The `DJKO_THREADS` environment variable caps the
//! subprocess fan-out of `verify all`.

use clap::{Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use djko::barriers::{profile_from_gtilde, propagation_envelope, BarrierProfile};
use djko::config::RunConfig;
use djko::dual_solver::{solve_step, SolverOptions};
use djko::energy::EnergyModel;
use djko::error::Error;
use djko::fields::{GridSpec, ScalarField};
use djko::growth::{GrowthModel, SpaceFn};
use djko::harness::{
    check_comparison, check_contraction, check_propagation, check_sinf_monotone,
    convergence_ratios, convergence_study_hc, convergence_study_pme, CheckReport,
};
use djko::io::{write_csv, write_pgm, write_snapshot, SnapshotMeta};
use djko::stepper::{diagnostics_header, dissipation_ledger, run};

#[derive(Parser)]
#[command(name = "djko", version, about = "Dual variational solver for Darcy flow with growth")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

const CHECK_NAMES: [&str; 6] = [
    "comparison",
    "contraction",
    "monotonicity",
    "propagation",
    "dissipation",
    "duality",
];

#[derive(Subcommand)]
enum Cmd {
    /// Advance the configured trajectory and write snapshots, diagnostics
    /// CSV, and a run manifest.
    Run {
        /// TOML run configuration.
        config: PathBuf,
    },
    /// Run a named structural check (or `all`) on bundled desk-scale
    /// instances and print a report.
    Verify {
        /// One of: all, comparison, contraction, monotonicity, propagation,
        /// dissipation, duality.
        #[arg(default_value = "all")]
        check: String,
        /// Emit the machine-readable JSON report instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Dump the barrier ODE profile (w, Q, Q′), its constants, and the
    /// propagation envelope (Aₙ, Rₙ) as CSV.
    Barrier {
        /// Majorant G̃ as `affine:g0,b` meaning G̃(z) = g0·(1 − z/b).
        #[arg(long)]
        gtilde: String,
        #[arg(long)]
        tau: f64,
        /// Initial envelope radius; defaults to R* when omitted.
        #[arg(long)]
        r0: Option<f64>,
        /// Initial steepness A₀ ≥ 1.
        #[arg(long, default_value_t = 1.0)]
        a0: f64,
        /// Envelope length in steps.
        #[arg(long, default_value_t = 50)]
        steps: usize,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// τ-refinement study for the configured instance against the matching
    /// independent oracle (front oracle for hard congestion, explicit
    /// scheme for power laws with zero growth).
    Converge {
        /// TOML run configuration; `time.tau` is the coarsest level.
        config: PathBuf,
        /// Number of τ-halvings to run.
        #[arg(long, default_value_t = 4)]
        levels: usize,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.cmd {
        Cmd::Run { config } => cmd_run(&config),
        Cmd::Verify { check, json } => cmd_verify(&check, json),
        Cmd::Barrier {
            gtilde,
            tau,
            r0,
            a0,
            steps,
            out,
        } => cmd_barrier(&gtilde, tau, r0, a0, steps, &out),
        Cmd::Converge { config, levels } => cmd_converge(&config, levels),
    };
    match code {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::DomainTooSmall { .. } => 2,
                Error::SolverFailure(_) => 3,
                _ => 1,
            })
        }
    }
}

#[derive(Serialize)]
struct RunManifest {
    version: String,
    config_sha256: String,
    seed: u64,
    dim: usize,
    n: Vec<usize>,
    tau: f64,
    horizon: f64,
    n_steps: usize,
    energy: String,
    growth: String,
    snapshots: Vec<String>,
}

fn cmd_run(config_path: &Path) -> Result<ExitCode, Error> {
    let text = std::fs::read_to_string(config_path)?;
    let cfg = RunConfig::from_toml(&text)?;
    let grid = cfg.grid_spec()?;
    let e = cfg.energy_model()?;
    let g = cfg.growth_model(&grid)?;
    let rho0 = cfg.initial_field(&grid, &e, &g)?;
    let opts = cfg.solver_options();
    let out = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out)?;

    let traj = run(&rho0, cfg.time.horizon, cfg.time.tau, &e, &g, &opts)?;

    let energy_name = match cfg.energy.kind.as_str() {
        "power_law" => format!("power_law:{}", cfg.energy.m.unwrap_or(f64::NAN)),
        other => other.to_string(),
    };
    let mut snapshots = Vec::new();
    if cfg.output.snapshot_every > 0 {
        for n in 0..=traj.n_steps() {
            if n % cfg.output.snapshot_every != 0 && n != traj.n_steps() {
                continue;
            }
            let name = format!("snap_{n:05}.fld");
            let path = out.join(&name);
            let meta = SnapshotMeta {
                step: n,
                time: n as f64 * cfg.time.tau,
                energy_model: energy_name.clone(),
                growth_model: cfg.growth.kind.clone(),
            };
            write_snapshot(&path, traj.density(n), &meta)?;
            if cfg.output.pgm {
                write_pgm(&out.join(format!("snap_{n:05}.pgm")), traj.density(n))?;
            }
            snapshots.push(name);
        }
    }
    write_csv(
        &out.join("diagnostics.csv"),
        &diagnostics_header(),
        &traj.diagnostics_rows(),
    )?;

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: hex(&Sha256::digest(text.as_bytes())),
        seed: cfg.seed,
        dim: grid.dim,
        n: grid.n[..grid.dim].to_vec(),
        tau: cfg.time.tau,
        horizon: cfg.time.horizon,
        n_steps: traj.n_steps(),
        energy: energy_name,
        growth: cfg.growth.kind.clone(),
        snapshots,
    };
    let mj = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(out.join("run_manifest.json"), mj)?;
    println!(
        "run complete: {} steps, artifacts in {}",
        traj.n_steps(),
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

// ---------------------------------------------------------------------------
// verify: bundled desk-scale check instances
// ---------------------------------------------------------------------------

fn affine(grid: &GridSpec, g0: f64, bbar: f64) -> Result<GrowthModel, Error> {
    GrowthModel::affine(SpaceFn::constant(g0), SpaceFn::constant(bbar), None, grid)
}

fn ball(grid: &GridSpec, r: f64) -> ScalarField {
    let c = grid.center();
    ScalarField::from_fn(grid, |x| {
        let mut d2 = (x[0] - c[0]) * (x[0] - c[0]);
        if grid.dim == 2 {
            d2 += (x[1] - c[1]) * (x[1] - c[1]);
        }
        if d2.sqrt() <= r {
            1.0
        } else {
            0.0
        }
    })
}

fn run_check(name: &str) -> Result<CheckReport, Error> {
    let opts = SolverOptions::default();
    match name {
        "comparison" => {
            // Nested hard-congestion indicators under a shared growth law.
            let grid = GridSpec::rect([-2.0, -2.0], [2.0, 2.0], [129, 129])?;
            let g = affine(&grid, 1.0, 2.0)?;
            check_comparison(
                &ball(&grid, 0.2),
                &ball(&grid, 0.3),
                &g,
                &g,
                0.3,
                1.0 / 32.0,
                &EnergyModel::hard_congestion(),
                &opts,
            )
        }
        "contraction" => {
            // Two indicators differing by a thin annulus.
            let grid = GridSpec::line(-2.0, 2.0, 257)?;
            let g = affine(&grid, 1.0, 2.0)?;
            check_contraction(
                &ball(&grid, 0.40),
                &ball(&grid, 0.45),
                0.25,
                1.0 / 32.0,
                &EnergyModel::hard_congestion(),
                &g,
                &opts,
            )
        }
        "monotonicity" => {
            // 1D saturated indicator: density and positive pressure must be
            // nodewise nondecreasing along the run.
            let grid = GridSpec::line(-2.0, 2.0, 257)?;
            let g = affine(&grid, 1.0, 2.0)?;
            check_sinf_monotone(&ball(&grid, 0.5), 3.0 / 32.0, 1.0 / 32.0, &g, &opts)
        }
        "propagation" => {
            let grid = GridSpec::line(-12.0, 12.0, 385)?;
            let e = EnergyModel::hard_congestion();
            let g = affine(&grid, 1.0, 2.0)?;
            let tau = 1.0 / 16.0;
            let profile = djko::barriers::build_profile(&g, &e, 1.0, tau)?;
            let r0 = profile.r_star + 0.5;
            let rho0 = djko::barriers::barrier_density_refined(&profile, 1.0, r0, 1)?
                .sample(&grid, grid.center());
            check_propagation(&rho0, &profile, r0, 1.0, 20.0 * tau, tau, &e, &g, &opts)
        }
        "dissipation" => {
            let start = std::time::Instant::now();
            let grid = GridSpec::line(-2.0, 2.0, 257)?;
            let e = EnergyModel::power_law(2.0)?;
            let g = affine(&grid, 1.0, 2.0)?;
            let rho0 = ScalarField::from_fn(&grid, |x| {
                0.8 * (1.0 - 4.0 * x[0] * x[0]).max(0.0)
            });
            let traj = run(&rho0, 0.2, 1.0 / 32.0, &e, &g, &opts)?;
            let ledger = dissipation_ledger(&traj, &e)?;
            Ok(CheckReport {
                name: "dissipation".into(),
                pass: ledger.pass,
                worst: ledger.worst,
                location: None,
                tolerance: ledger.tolerance,
                runtime_secs: start.elapsed().as_secs_f64(),
            })
        }
        "duality" => {
            // Bundled small instance: the relative duality gap certifies the
            // step.
            let start = std::time::Instant::now();
            let grid = GridSpec::line(0.0, 1.0, 65)?;
            let e = EnergyModel::power_law(2.0)?;
            let g = affine(&grid, 1.0, 2.0)?;
            let rho0 = ScalarField::constant(&grid, 0.5);
            let rec = solve_step(&rho0, 0.05, &e, &g, &opts)?;
            let rel_gap = rec.gap.abs() / (1.0 + rec.dual_value.abs());
            Ok(CheckReport {
                name: "duality".into(),
                pass: rel_gap < 1e-5 && rec.gap >= -1e-6,
                worst: rel_gap,
                location: None,
                tolerance: 1e-5,
                runtime_secs: start.elapsed().as_secs_f64(),
            })
        }
        other => Err(Error::Config(format!(
            "unknown check '{other}'; known: {}",
            CHECK_NAMES.join(", ")
        ))),
    }
}

fn print_table(reports: &[CheckReport]) {
    println!(
        "{:<16} {:>6} {:>14} {:>12} {:>9}",
        "check", "pass", "worst", "tolerance", "secs"
    );
    for r in reports {
        println!(
            "{:<16} {:>6} {:>14.3e} {:>12.3e} {:>9.2}",
            r.name,
            if r.pass { "ok" } else { "FAIL" },
            r.worst,
            r.tolerance,
            r.runtime_secs
        );
    }
}

/// Fan-out width for `verify all`, capped by `DJKO_THREADS`.
fn fanout_width() -> usize {
    std::env::var("DJKO_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(4)
        .min(CHECK_NAMES.len())
}

/// `verify all` runs each check in its own subprocess (`djko verify <name>
/// --json`) so one check's state cannot leak into another; the fan-out is
/// capped by `DJKO_THREADS`.
fn verify_all(json: bool) -> Result<ExitCode, Error> {
    let exe = std::env::current_exe()?;
    let width = fanout_width();
    let mut reports: Vec<CheckReport> = Vec::new();
    let mut pending: Vec<&str> = CHECK_NAMES.to_vec();
    pending.reverse();
    let mut running: Vec<(String, std::process::Child)> = Vec::new();
    loop {
        while running.len() < width {
            let Some(name) = pending.pop() else { break };
            let child = std::process::Command::new(&exe)
                .args(["verify", name, "--json"])
                .stdout(std::process::Stdio::piped())
                .spawn()?;
            running.push((name.to_string(), child));
        }
        if running.is_empty() {
            break;
        }
        let (name, child) = running.remove(0);
        let out = child.wait_with_output()?;
        let parsed: Result<CheckReport, _> = serde_json::from_slice(&out.stdout);
        match parsed {
            Ok(r) => reports.push(r),
            Err(_) => reports.push(CheckReport {
                name: name.clone(),
                pass: false,
                worst: f64::INFINITY,
                location: None,
                tolerance: 0.0,
                runtime_secs: 0.0,
            }),
        }
    }
    reports.sort_by_key(|r| CHECK_NAMES.iter().position(|n| *n == r.name));
    let all_pass = reports.iter().all(|r| r.pass);
    if json {
        let doc = serde_json::json!({ "pass": all_pass, "checks": reports });
        println!("{}", serde_json::to_string_pretty(&doc).unwrap());
    } else {
        print_table(&reports);
        println!("overall: {}", if all_pass { "ok" } else { "FAIL" });
    }
    Ok(if all_pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_verify(check: &str, json: bool) -> Result<ExitCode, Error> {
    if check == "all" {
        return verify_all(json);
    }
    let report = run_check(check)?;
    if json {
        println!("{}", serde_json::to_string_pretty(&report).unwrap());
    } else {
        print_table(std::slice::from_ref(&report));
    }
    Ok(if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

// ---------------------------------------------------------------------------
// barrier
// ---------------------------------------------------------------------------

fn parse_gtilde(spec: &str, tau: f64) -> Result<BarrierProfile, Error> {
    let e = EnergyModel::hard_congestion();
    let rest = spec
        .strip_prefix("affine:")
        .ok_or_else(|| Error::Config(format!("unsupported G̃ spec '{spec}'; use affine:g0,b")))?;
    let parts: Vec<&str> = rest.split(',').collect();
    if parts.len() != 2 {
        return Err(Error::Config("affine G̃ needs two parameters g0,b".into()));
    }
    let g0: f64 = parts[0]
        .parse()
        .map_err(|_| Error::Config(format!("bad g0 '{}'", parts[0])))?;
    let b: f64 = parts[1]
        .parse()
        .map_err(|_| Error::Config(format!("bad b '{}'", parts[1])))?;
    if !(g0 > 0.0 && b > 0.0) {
        return Err(Error::Config("affine G̃ needs g0 > 0 and b > 0".into()));
    }
    profile_from_gtilde(&move |z: f64| g0 * (1.0 - z / b), b, tau, &e)
}

fn cmd_barrier(
    gtilde: &str,
    tau: f64,
    r0: Option<f64>,
    a0: f64,
    steps: usize,
    out: &Path,
) -> Result<ExitCode, Error> {
    let profile = parse_gtilde(gtilde, tau)?;
    std::fs::create_dir_all(out)?;
    write_csv(
        out.join("barrier_constants.csv").as_path(),
        &["z_m", "w0", "w1", "c_star", "r_star", "tau"],
        &[vec![
            profile.z_m,
            profile.w0,
            profile.w1,
            profile.c_star,
            profile.r_star,
            profile.tau,
        ]],
    )?;
    let n_prof = 400usize;
    let rows: Vec<Vec<f64>> = (0..=n_prof)
        .map(|i| {
            let w = profile.w0 * i as f64 / n_prof as f64;
            vec![w, profile.q_eval(w), profile.qp_eval(w)]
        })
        .collect();
    write_csv(out.join("barrier_profile.csv").as_path(), &["w", "q", "qp"], &rows)?;
    let r0 = r0.unwrap_or(profile.r_star);
    let env = propagation_envelope(&profile, r0, a0, tau, steps)?;
    let rows: Vec<Vec<f64>> = env
        .seq
        .iter()
        .enumerate()
        .map(|(n, &(a, r))| vec![n as f64, a, r])
        .collect();
    write_csv(out.join("barrier_envelope.csv").as_path(), &["n", "a", "r"], &rows)?;
    println!(
        "z_m = {:.6}, w0 = {:.6}, w1 = {:.6}, c* = {:.6}, R* = {:.6}, c~ = {:.6}",
        profile.z_m, profile.w0, profile.w1, profile.c_star, profile.r_star, env.ctilde
    );
    println!("artifacts in {}", out.display());
    Ok(ExitCode::SUCCESS)
}

// ---------------------------------------------------------------------------
// converge
// ---------------------------------------------------------------------------

fn cmd_converge(config_path: &Path, levels: usize) -> Result<ExitCode, Error> {
    if levels < 2 {
        return Err(Error::Config("need at least 2 refinement levels".into()));
    }
    let cfg = RunConfig::from_path(config_path)?;
    let grid = cfg.grid_spec()?;
    let e = cfg.energy_model()?;
    let g = cfg.growth_model(&grid)?;
    let opts = cfg.solver_options();
    let tau_list: Vec<f64> = (0..levels)
        .map(|i| cfg.time.tau / (1u32 << i) as f64)
        .collect();
    let rows = if e.is_hard_congestion() {
        convergence_study_hc(
            &grid,
            cfg.initial.radius,
            cfg.time.horizon,
            &tau_list,
            &g,
            &opts,
        )?
    } else {
        if !g.is_zero() {
            return Err(Error::Config(
                "the power-law study runs against the zero-growth oracle; set growth.kind = \"zero\"".into(),
            ));
        }
        let m = cfg.energy.m.unwrap_or(2.0);
        let rho0 = cfg.initial_field(&grid, &e, &g)?;
        convergence_study_pme(&rho0, m, cfg.time.horizon, &tau_list, &opts)?
    };
    let ratios = convergence_ratios(&rows);
    let out = PathBuf::from(&cfg.output.dir);
    std::fs::create_dir_all(&out)?;
    let csv_rows: Vec<Vec<f64>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                r.tau,
                r.error,
                if i == 0 { f64::NAN } else { ratios[i - 1] },
            ]
        })
        .collect();
    write_csv(out.join("convergence.csv").as_path(), &["tau", "error", "ratio"], &csv_rows)?;
    println!("{:>12} {:>14} {:>8}", "tau", "error", "ratio");
    for (i, r) in rows.iter().enumerate() {
        if i == 0 {
            println!("{:>12.6} {:>14.6e} {:>8}", r.tau, r.error, "-");
        } else {
            println!("{:>12.6} {:>14.6e} {:>8.3}", r.tau, r.error, ratios[i - 1]);
        }
    }
    Ok(ExitCode::SUCCESS)
}
