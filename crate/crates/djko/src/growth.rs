//! Growth laws `G(z,x)` with their structural assumptions, the antiderivative
//! `Ḡ`, and the convex dual growth penalty `f` whose derivative inverts `G`.

use crate::error::{Error, Result};
use crate::fields::GridSpec;

/// Affine-in-x scalar coefficient: `c0 + cx·x0 + cy·x1`, parsed from a small
/// expression string ("1.0", "0.5 + 0.1*x0 - 0.2*x1", "x1", ...).
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceFn {
    pub c0: f64,
    pub cx: f64,
    pub cy: f64,
}

impl SpaceFn {
    pub fn constant(c: f64) -> Self {
        SpaceFn { c0: c, cx: 0.0, cy: 0.0 }
    }

    pub fn parse(s: &str) -> Result<Self> {
        let compact: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        if compact.is_empty() {
            return Err(Error::Config("empty coefficient expression".into()));
        }
        // Split into signed terms.
        let mut terms: Vec<String> = Vec::new();
        let mut cur = String::new();
        for (i, ch) in compact.chars().enumerate() {
            if (ch == '+' || ch == '-') && i > 0 && !matches!(compact.as_bytes()[i - 1], b'e' | b'E') {
                terms.push(cur.clone());
                cur.clear();
            }
            cur.push(ch);
        }
        terms.push(cur);
        let mut out = SpaceFn { c0: 0.0, cx: 0.0, cy: 0.0 };
        for t in terms {
            let (coef_str, var) = if let Some(stripped) = t.strip_suffix("*x0") {
                (stripped.to_string(), 1)
            } else if let Some(stripped) = t.strip_suffix("*x1") {
                (stripped.to_string(), 2)
            } else if t == "x0" || t == "+x0" {
                ("1".to_string(), 1)
            } else if t == "-x0" {
                ("-1".to_string(), 1)
            } else if t == "x1" || t == "+x1" {
                ("1".to_string(), 2)
            } else if t == "-x1" {
                ("-1".to_string(), 2)
            } else {
                (t.clone(), 0)
            };
            let coef: f64 = coef_str
                .parse()
                .map_err(|_| Error::Config(format!("cannot parse coefficient term '{t}'")))?;
            match var {
                0 => out.c0 += coef,
                1 => out.cx += coef,
                2 => out.cy += coef,
                _ => unreachable!(),
            }
        }
        Ok(out)
    }

    #[inline]
    pub fn eval(&self, x: [f64; 2]) -> f64 {
        self.c0 + self.cx * x[0] + self.cy * x[1]
    }

    pub fn is_constant(&self) -> bool {
        self.cx == 0.0 && self.cy == 0.0
    }
}

#[derive(Clone, Debug)]
pub enum GrowthKind {
    /// `G(z,x) = g0(x)·(1 − z/b̄(x))`, clamped to `[−B, B]` so the global
    /// bound (G4) holds on all of `z ∈ ℝ`.
    Affine { g0: SpaceFn, bbar: SpaceFn },
    /// Space-independent Lipschitz law given by samples `(z_i, g_i)` with
    /// linear interpolation and constant extension beyond the ends.
    Table { z: Vec<f64>, g: Vec<f64> },
    /// Test mode `G ≡ 0`: reduces the scheme to a pure JKO step for oracle
    /// comparison. Violates (G1); `validate` flags it.
    Zero,
}

#[derive(Clone, Debug)]
pub struct GrowthModel {
    pub kind: GrowthKind,
    /// Global bound `sup |G| ≤ B`.
    pub b_bound: f64,
    /// Range of the homeostatic pressure `b(x)` over the domain.
    pub b0: f64,
    pub b1: f64,
    /// Domain the model is defined over (membership checked by `g_eval`).
    pub domain: GridSpec,
    /// `sup_x G(0, x)`: the largest growth rate at zero pressure, used by the
    /// discrete total-variation step bound and the barrier construction.
    pub g0_sup: f64,
}

impl GrowthModel {
    pub fn affine(g0: SpaceFn, bbar: SpaceFn, b_override: Option<f64>, domain: &GridSpec) -> Result<Self> {
        let mut g0_min = f64::INFINITY;
        let mut g0_max = f64::NEG_INFINITY;
        let mut bb_min = f64::INFINITY;
        let mut bb_max = f64::NEG_INFINITY;
        for k in 0..domain.len() {
            let x = domain.pos(domain.coords(k));
            let gv = g0.eval(x);
            let bv = bbar.eval(x);
            g0_min = g0_min.min(gv);
            g0_max = g0_max.max(gv);
            bb_min = bb_min.min(bv);
            bb_max = bb_max.max(bv);
        }
        if g0_min <= 0.0 {
            return Err(Error::Growth(format!(
                "g0 must be strictly positive on the domain (min = {g0_min})"
            )));
        }
        if bb_min <= 0.0 {
            return Err(Error::Growth(format!(
                "bbar must be strictly positive on the domain (min = {bb_min})"
            )));
        }
        let b_bound = match b_override {
            Some(b) => {
                if b < g0_max {
                    return Err(Error::Growth(format!(
                        "growth bound override B = {b} is below sup g0 = {g0_max}"
                    )));
                }
                b
            }
            None => g0_max,
        };
        Ok(GrowthModel {
            kind: GrowthKind::Affine { g0, bbar },
            b_bound,
            b0: bb_min,
            b1: bb_max,
            domain: domain.clone(),
            g0_sup: g0_max,
        })
    }

    pub fn table(z: Vec<f64>, g: Vec<f64>, b_override: Option<f64>, domain: &GridSpec) -> Result<Self> {
        if z.len() != g.len() || z.len() < 2 {
            return Err(Error::Growth("table needs at least two (z, g) samples".into()));
        }
        if !z.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::Growth("table z-samples must be strictly increasing".into()));
        }
        let g_max_abs = g.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        let b_bound = b_override.unwrap_or(g_max_abs).max(g_max_abs);
        // Homeostatic pressure: first down-crossing of zero; for a plateau
        // where G = 0 on an interval, its left endpoint is used.
        let mut b_root = None;
        for i in 0..z.len() {
            if g[i] <= 0.0 {
                if i == 0 {
                    b_root = Some(z[0]);
                } else if g[i] == 0.0 {
                    b_root = Some(z[i]);
                } else {
                    let t = g[i - 1] / (g[i - 1] - g[i]);
                    b_root = Some(z[i - 1] + t * (z[i] - z[i - 1]));
                }
                break;
            }
        }
        let b = b_root.ok_or_else(|| {
            Error::Growth("table growth law has no zero (violates (G3))".into())
        })?;
        // Rate at zero pressure by the same clamped linear interpolation the
        // evaluator uses.
        let g_at_zero = {
            if 0.0 <= z[0] {
                g[0]
            } else if 0.0 >= *z.last().unwrap() {
                *g.last().unwrap()
            } else {
                let i = z.partition_point(|&v| v < 0.0);
                let t = (0.0 - z[i - 1]) / (z[i] - z[i - 1]);
                g[i - 1] + t * (g[i] - g[i - 1])
            }
        };
        Ok(GrowthModel {
            kind: GrowthKind::Table { z, g },
            b_bound,
            b0: b,
            b1: b,
            domain: domain.clone(),
            g0_sup: g_at_zero.max(0.0),
        })
    }

    pub fn zero(domain: &GridSpec) -> Self {
        GrowthModel {
            kind: GrowthKind::Zero,
            b_bound: 0.0,
            b0: 0.0,
            b1: 0.0,
            domain: domain.clone(),
            g0_sup: 0.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self.kind, GrowthKind::Zero)
    }

    /// Largest stable time step `1/(2B)`; ∞ in test mode.
    pub fn max_tau(&self) -> f64 {
        if self.b_bound > 0.0 {
            1.0 / (2.0 * self.b_bound)
        } else {
            f64::INFINITY
        }
    }

    fn check_in_domain(&self, x: [f64; 2]) -> Result<()> {
        let d = &self.domain;
        for a in 0..d.dim {
            let lo = d.origin[a];
            let hi = d.origin[a] + d.extent[a];
            let tol = 1e-9 * (1.0 + d.extent[a]);
            if x[a] < lo - tol || x[a] > hi + tol {
                return Err(Error::Growth(format!(
                    "point ({}, {}) lies outside the domain",
                    x[0], x[1]
                )));
            }
        }
        Ok(())
    }

    /// `G(z, x)`, checked for domain membership.
    pub fn g_eval(&self, z: f64, x: [f64; 2]) -> Result<f64> {
        self.check_in_domain(x)?;
        Ok(self.g(z, x))
    }

    /// `G(z, x)` (hot path, no domain check).
    #[inline]
    pub fn g(&self, z: f64, x: [f64; 2]) -> f64 {
        match &self.kind {
            GrowthKind::Affine { g0, bbar } => {
                let a = g0.eval(x);
                let b = bbar.eval(x);
                (a * (1.0 - z / b)).clamp(-self.b_bound, self.b_bound)
            }
            GrowthKind::Table { z: zs, g } => {
                if z <= zs[0] {
                    g[0]
                } else if z >= zs[zs.len() - 1] {
                    g[g.len() - 1]
                } else {
                    let i = zs.partition_point(|&v| v < z).max(1);
                    let t = (z - zs[i - 1]) / (zs[i] - zs[i - 1]);
                    g[i - 1] + t * (g[i] - g[i - 1])
                }
            }
            GrowthKind::Zero => 0.0,
        }
    }

    /// Antiderivative `Ḡ(z,x)` with `Ḡ(0,x) = 0`.
    pub fn gbar_eval(&self, z: f64, x: [f64; 2]) -> Result<f64> {
        self.check_in_domain(x)?;
        Ok(self.gbar(z, x))
    }

    #[inline]
    pub fn gbar(&self, z: f64, x: [f64; 2]) -> f64 {
        match &self.kind {
            GrowthKind::Affine { g0, bbar } => {
                let a = g0.eval(x);
                let b = bbar.eval(x);
                let bb = self.b_bound;
                // Kinks where the affine law saturates at ±B.
                let z_lo = b * (1.0 - bb / a);
                let z_hi = b * (1.0 + bb / a);
                let core = |z: f64| a * z - a * z * z / (2.0 * b);
                if z < z_lo {
                    core(z_lo) + bb * (z - z_lo)
                } else if z > z_hi {
                    core(z_hi) - bb * (z - z_hi)
                } else {
                    core(z)
                }
            }
            GrowthKind::Table { z: zs, g } => {
                // Exact integral of the piecewise-linear interpolant from 0.
                table_integral(zs, g, z)
            }
            GrowthKind::Zero => 0.0,
        }
    }

    /// Dual growth penalty `f(z,x)`: convex, `f(G(0,x),x) = 0`,
    /// `∂_z f(z,x) = −b` where `z = G(b,x)`; +∞ off the range of `G(·,x)`.
    pub fn f_eval(&self, z: f64, x: [f64; 2]) -> Result<f64> {
        self.check_in_domain(x)?;
        Ok(self.f(z, x))
    }

    pub fn f(&self, z: f64, x: [f64; 2]) -> f64 {
        match &self.kind {
            GrowthKind::Affine { g0, bbar } => {
                let a = g0.eval(x);
                let b = bbar.eval(x);
                let bb = self.b_bound;
                if z > bb || z < -bb {
                    f64::INFINITY
                } else {
                    b * (z - a) * (z - a) / (2.0 * a)
                }
            }
            GrowthKind::Table { z: zs, g } => {
                let g_max = g[0];
                let g_min = g[g.len() - 1];
                if z > g_max || z < g_min {
                    return f64::INFINITY;
                }
                // f(z) = ∫_{G(0)}^{z} (−b(u)) du with b(u) the (left-endpoint
                // on plateaus) inverse of the interpolated table.
                let g0v = self.g(0.0, x);
                let steps = 2000;
                let mut acc = 0.0;
                let dz = (z - g0v) / steps as f64;
                for i in 0..steps {
                    let u0 = g0v + dz * i as f64;
                    let u1 = g0v + dz * (i + 1) as f64;
                    acc += 0.5 * (-table_inverse(zs, g, u0) - table_inverse(zs, g, u1)) * dz;
                }
                acc
            }
            GrowthKind::Zero => {
                if z == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Bound on `‖G‖_{W^{1,∞}}` over pressures `[0, p_max]` and the domain,
    /// used by the BV step inequality. Estimated by sampling.
    pub fn w1inf_bound(&self, p_max: f64) -> f64 {
        let mut bound = 0.0f64;
        let nz = 64;
        let dz = p_max.max(1e-12) / nz as f64;
        let d = &self.domain;
        let stride = (d.len() / 1024).max(1);
        let h = d.h();
        for k in (0..d.len()).step_by(stride) {
            let x = d.pos(d.coords(k));
            for iz in 0..=nz {
                let z = iz as f64 * dz;
                bound = bound.max(self.g(z, x).abs());
                // z-slope.
                bound = bound.max(((self.g(z + dz, x) - self.g(z, x)) / dz).abs());
                // x-slope toward a neighboring node.
                for a in 0..d.dim {
                    let mut xn = x;
                    xn[a] += h[a] * if x[a] < d.origin[a] + 0.5 * d.extent[a] { 1.0 } else { -1.0 };
                    bound = bound.max(((self.g(z, xn) - self.g(z, x)) / h[a]).abs());
                }
            }
        }
        bound
    }

    /// Validates assumptions (G1)–(G4) and the Fenchel identity
    /// `zG(z,x) + f(G(z,x),x) = Ḡ(z,x)` on a sampling lattice.
    pub fn validate(&self, grid: &GridSpec) -> GrowthReport {
        let mut failures = Vec::new();
        let test_mode = self.is_zero();
        let nz = 48;
        let z_lo = -self.b_bound - 1.0;
        let z_hi = self.b1 + self.b_bound + 2.0;
        let stride_x = (grid.len() / 512).max(1);
        let mut obs1_residual = 0.0f64;
        let mut seen_g1 = true;
        let mut seen_g2 = true;
        let mut seen_g3 = true;
        let mut seen_g4 = true;
        for k in (0..grid.len()).step_by(stride_x) {
            let x = grid.pos(grid.coords(k));
            if self.g(0.0, x) <= 0.0 && !test_mode {
                seen_g1 = false;
            }
            let mut prev = f64::INFINITY;
            let mut sign_change = test_mode;
            for iz in 0..=nz {
                let z = z_lo + (z_hi - z_lo) * iz as f64 / nz as f64;
                let gv = self.g(z, x);
                if gv > prev + 1e-12 {
                    seen_g2 = false;
                }
                prev = gv;
                if gv.abs() > self.b_bound + 1e-12 {
                    seen_g4 = false;
                }
                if z >= 0.0 && z <= self.b1 + 1e-9 && gv <= 1e-12 {
                    sign_change = true;
                }
                // Fenchel identity on the feasible range.
                let fv = self.f(gv, x);
                if fv.is_finite() {
                    let res = (z * gv + fv - self.gbar(z, x)).abs();
                    obs1_residual = obs1_residual.max(res);
                }
            }
            if !sign_change && self.g(self.b1 + 1e-9, x) > 1e-12 {
                seen_g3 = false;
            }
        }
        if !seen_g1 {
            failures.push("G1: G(0,x) must be strictly positive".to_string());
        }
        if !seen_g2 {
            failures.push("G2: G must be nonincreasing in z".to_string());
        }
        if !seen_g3 {
            failures.push("G3: G(·,x) must reach zero by b1".to_string());
        }
        if !seen_g4 {
            failures.push(format!("G4: |G| must stay within the bound B = {}", self.b_bound));
        }
        GrowthReport {
            pass: failures.is_empty(),
            failures,
            obs1_residual,
            test_mode,
        }
    }
}

fn table_integral(zs: &[f64], g: &[f64], z: f64) -> f64 {
    // ∫_0^z of the piecewise-linear interpolant with constant extension.
    let interp = |z: f64| -> f64 {
        if z <= zs[0] {
            g[0]
        } else if z >= zs[zs.len() - 1] {
            g[g.len() - 1]
        } else {
            let i = zs.partition_point(|&v| v < z).max(1);
            let t = (z - zs[i - 1]) / (zs[i] - zs[i - 1]);
            g[i - 1] + t * (g[i] - g[i - 1])
        }
    };
    let (a, b, sign) = if z >= 0.0 { (0.0, z, 1.0) } else { (z, 0.0, -1.0) };
    // Collect breakpoints within [a, b].
    let mut pts = vec![a];
    for &zk in zs {
        if zk > a && zk < b {
            pts.push(zk);
        }
    }
    pts.push(b);
    let mut acc = 0.0;
    for w in pts.windows(2) {
        acc += 0.5 * (interp(w[0]) + interp(w[1])) * (w[1] - w[0]);
    }
    sign * acc
}

fn table_inverse(zs: &[f64], g: &[f64], u: f64) -> f64 {
    // Smallest b with interpolated G(b) = u (G nonincreasing): scan segments
    // left to right; plateaus resolve to their left endpoint.
    if u >= g[0] {
        return zs[0];
    }
    let last = g.len() - 1;
    if u <= g[last] {
        // Left endpoint of the terminal plateau / final sample.
        for i in (0..=last).rev() {
            if g[i] > g[last] {
                return zs[i + 1];
            }
        }
        return zs[0];
    }
    for i in 1..g.len() {
        if g[i] <= u {
            if g[i] == g[i - 1] {
                return zs[i - 1];
            }
            let t = (g[i - 1] - u) / (g[i - 1] - g[i]);
            return zs[i - 1] + t * (zs[i] - zs[i - 1]);
        }
    }
    zs[last]
}

#[derive(Clone, Debug)]
pub struct GrowthReport {
    pub pass: bool,
    pub failures: Vec<String>,
    pub obs1_residual: f64,
    pub test_mode: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::rect([-1.0, -1.0], [2.0, 2.0], [17, 17]).unwrap()
    }

    fn affine_12() -> GrowthModel {
        GrowthModel::affine(
            SpaceFn::constant(1.0),
            SpaceFn::constant(2.0),
            None,
            &grid(),
        )
        .unwrap()
    }

    #[test]
    fn space_fn_parsing() {
        let f = SpaceFn::parse("0.5 + 0.1*x0 - 0.2*x1").unwrap();
        assert_eq!(f.eval([1.0, 2.0]), 0.5 + 0.1 - 0.4);
        assert_eq!(SpaceFn::parse("1.0").unwrap().eval([3.0, 4.0]), 1.0);
        assert_eq!(SpaceFn::parse("x1").unwrap().eval([3.0, 4.0]), 4.0);
        assert_eq!(SpaceFn::parse("-x0+2").unwrap().eval([3.0, 0.0]), -1.0);
        assert!(SpaceFn::parse("x0*x1").is_err());
    }

    #[test]
    fn affine_values() {
        let m = affine_12();
        let x = [0.0, 0.0];
        assert_eq!(m.g_eval(0.0, x).unwrap(), 1.0);
        assert_eq!(m.g_eval(2.0, x).unwrap(), 0.0);
        assert_eq!(m.g_eval(4.0, x).unwrap(), -1.0);
        // Clamped beyond the kink; bounded by B = sup g0.
        assert_eq!(m.g_eval(10.0, x).unwrap(), -1.0);
        assert_eq!(m.g_eval(-5.0, x).unwrap(), 1.0);
        assert!(m.g_eval(0.0, [10.0, 0.0]).is_err());
    }

    #[test]
    fn affine_monotone_in_z() {
        let m = GrowthModel::affine(
            SpaceFn::parse("1.0 + 0.1*x0").unwrap(),
            SpaceFn::parse("2.0 - 0.2*x1").unwrap(),
            None,
            &grid(),
        )
        .unwrap();
        let x = [0.5, -0.5];
        let mut prev = f64::INFINITY;
        for i in -20..40 {
            let z = 0.2 * i as f64;
            let v = m.g(z, x);
            assert!(v <= prev + 1e-14);
            assert!(v.abs() <= m.b_bound + 1e-14);
            prev = v;
        }
    }

    #[test]
    fn gbar_matches_quadrature_and_differences() {
        let m = affine_12();
        let x = [0.3, -0.2];
        assert_eq!(m.gbar_eval(0.0, x).unwrap(), 0.0);
        assert!((m.gbar_eval(2.0, x).unwrap() - 1.0).abs() < 1e-12);
        // Centered difference of Ḡ matches G.
        for i in -10..30 {
            let z = 0.17 * i as f64;
            let d = 1e-6;
            let fd = (m.gbar(z + d, x) - m.gbar(z - d, x)) / (2.0 * d);
            assert!((fd - m.g(z, x)).abs() < 1e-6);
        }
        // Independent numeric quadrature of G from 0 to 2.
        let steps = 200000;
        let mut acc = 0.0;
        for i in 0..steps {
            let z0 = 2.0 * i as f64 / steps as f64;
            let z1 = 2.0 * (i + 1) as f64 / steps as f64;
            acc += 0.5 * (m.g(z0, x) + m.g(z1, x)) * (z1 - z0);
        }
        assert!((m.gbar(2.0, x) - acc).abs() < 1e-9);
    }

    #[test]
    fn f_closed_form_and_convexity() {
        let m = affine_12();
        let x = [0.0, 0.0];
        assert_eq!(m.f_eval(m.g(0.0, x), x).unwrap(), 0.0);
        // g0=1, b̄=2 gives f(z) = (z−1)².
        assert!((m.f_eval(0.0, x).unwrap() - 1.0).abs() < 1e-12);
        assert!((m.f_eval(0.5, x).unwrap() - 0.25).abs() < 1e-12);
        // The rate bound B = sup g0 = 1 truncates the domain of f.
        assert_eq!(m.f_eval(1.0, x).unwrap(), 0.0);
        assert!(m.f_eval(1.5, x).unwrap().is_infinite());
        assert!(m.f_eval(2.0, x).unwrap().is_infinite());
        // Convexity via second differences on the feasible range.
        let d = 0.01;
        for i in -90..90 {
            let z = i as f64 * d;
            let second = m.f(z + d, x) - 2.0 * m.f(z, x) + m.f(z - d, x);
            if second.is_finite() {
                assert!(second >= -1e-8);
            }
        }
    }

    #[test]
    fn validate_affine_passes_and_flags_violations() {
        let m = affine_12();
        let report = m.validate(&grid());
        assert!(report.pass, "{:?}", report.failures);
        assert!(report.obs1_residual < 1e-8, "obs1 residual {}", report.obs1_residual);

        // Constructed violation: a table that increases in z fails G2.
        let bad = GrowthModel::table(
            vec![0.0, 1.0, 2.0],
            vec![-0.5, 0.2, -1.0],
            None,
            &grid(),
        )
        .unwrap();
        let rep = bad.validate(&grid());
        assert!(!rep.pass);
        assert!(rep.failures.iter().any(|f| f.contains("G2")));

        // G(0,x) = 0 (not strictly positive) fails G1.
        let flat = GrowthModel::table(vec![0.0, 1.0], vec![0.0, -1.0], None, &grid()).unwrap();
        let rep = flat.validate(&grid());
        assert!(rep.failures.iter().any(|f| f.contains("G1")));
    }

    #[test]
    fn zero_mode_flagged() {
        let m = GrowthModel::zero(&grid());
        let rep = m.validate(&grid());
        assert!(rep.test_mode);
        assert_eq!(m.g(3.0, [0.0, 0.0]), 0.0);
        assert!(m.max_tau().is_infinite());
    }

    #[test]
    fn table_matches_affine_shape() {
        // Table sampling of G(z) = 1 − z/2 should reproduce affine behavior.
        let zs: Vec<f64> = (0..=40).map(|i| i as f64 * 0.1).collect();
        let gs: Vec<f64> = zs.iter().map(|z| 1.0 - z / 2.0).collect();
        let m = GrowthModel::table(zs, gs, None, &grid()).unwrap();
        assert!((m.b0 - 2.0).abs() < 1e-12);
        let x = [0.0, 0.0];
        assert!((m.g(1.0, x) - 0.5).abs() < 1e-12);
        assert!((m.gbar(2.0, x) - 1.0).abs() < 1e-12);
        // f from numeric inversion close to the affine closed form (z−1)².
        for &z in &[0.0, 0.4, 0.9, 1.0] {
            let expect = (z - 1.0) * (z - 1.0);
            assert!((m.f(z, x) - expect).abs() < 1e-3, "z={z}");
        }
        let rep = m.validate(&grid());
        assert!(rep.pass, "{:?}", rep.failures);
    }

    #[test]
    fn g3_bracket_holds() {
        let m = affine_12();
        for k in 0..m.domain.len() {
            let x = m.domain.pos(m.domain.coords(k));
            assert!(m.g(m.b1, x) <= 1e-12);
            assert!(m.g(m.b0, x) >= -1e-12);
        }
    }
}
