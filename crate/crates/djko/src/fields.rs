//! Uniform-grid scalar fields over an axis-aligned box with the integration,
//! norm, and discrete differential operations used by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral;

/// Uniform node-centered grid over an axis-aligned box in 1 or 2 dimensions.
///
/// Nodes along axis `a` sit at `origin[a] + i * h[a]` for `i = 0..n[a]`,
/// with spacing `h[a] = extent[a] / (n[a] - 1)`. For 1D grids the second
/// axis is degenerate (`n[1] = 1`, unit spacing) so that indexing code is
/// uniform across dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dim: usize,
    pub origin: [f64; 2],
    pub extent: [f64; 2],
    pub n: [usize; 2],
}

impl GridSpec {
    /// 1D grid over `[start, end]`.
    pub fn line(start: f64, end: f64, n: usize) -> Result<Self> {
        let g = GridSpec {
            dim: 1,
            origin: [start, 0.0],
            extent: [end - start, 0.0],
            n: [n, 1],
        };
        g.validate()?;
        Ok(g)
    }

    /// 2D grid over the box `[origin, corner]`.
    pub fn rect(origin: [f64; 2], corner: [f64; 2], n: [usize; 2]) -> Result<Self> {
        let g = GridSpec {
            dim: 2,
            origin,
            extent: [corner[0] - origin[0], corner[1] - origin[1]],
            n,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidGrid(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        for a in 0..self.dim {
            if self.n[a] < 3 {
                return Err(Error::InvalidGrid(format!(
                    "need at least 3 nodes per axis, got {} on axis {a}",
                    self.n[a]
                )));
            }
            if !(self.extent[a].is_finite() && self.extent[a] > 0.0) {
                return Err(Error::InvalidGrid(format!(
                    "extent must be finite and positive, got {} on axis {a}",
                    self.extent[a]
                )));
            }
            if !self.origin[a].is_finite() {
                return Err(Error::InvalidGrid("origin must be finite".into()));
            }
        }
        if self.dim == 1 && self.n[1] != 1 {
            return Err(Error::InvalidGrid("1D grid must have n[1] = 1".into()));
        }
        Ok(())
    }

    /// Node spacing per axis; degenerate axes report unit spacing.
    pub fn h(&self) -> [f64; 2] {
        let mut h = [1.0, 1.0];
        for a in 0..self.dim {
            h[a] = self.extent[a] / (self.n[a] - 1) as f64;
        }
        h
    }

    /// Quadrature cell volume (product of spacings over real axes).
    pub fn cell(&self) -> f64 {
        let h = self.h();
        (0..self.dim).map(|a| h[a]).product()
    }

    /// Domain volume |Ω|.
    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.extent[a]).product()
    }

    pub fn len(&self) -> usize {
        self.n[0] * self.n[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn idx(&self, i: [usize; 2]) -> usize {
        i[0] * self.n[1] + i[1]
    }

    #[inline]
    pub fn coords(&self, k: usize) -> [usize; 2] {
        [k / self.n[1], k % self.n[1]]
    }

    #[inline]
    pub fn pos(&self, i: [usize; 2]) -> [f64; 2] {
        let h = self.h();
        let mut x = [0.0, 0.0];
        for a in 0..self.dim {
            x[a] = self.origin[a] + i[a] as f64 * h[a];
        }
        x
    }

    pub fn max_h(&self) -> f64 {
        let h = self.h();
        (0..self.dim).map(|a| h[a]).fold(0.0, f64::max)
    }

    pub fn center(&self) -> [f64; 2] {
        let mut c = [0.0, 0.0];
        for a in 0..self.dim {
            c[a] = self.origin[a] + 0.5 * self.extent[a];
        }
        c
    }
}

/// A real-valued function sampled at the nodes of a [`GridSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![0.0; grid.len()],
        }
    }

    pub fn constant(grid: &GridSpec, v: f64) -> Self {
        ScalarField {
            grid: grid.clone(),
            values: vec![v; grid.len()],
        }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn([f64; 2]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            values.push(f(grid.pos(grid.coords(k))));
        }
        ScalarField {
            grid: grid.clone(),
            values,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(ScalarField {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Rectangle-rule integral `Σ v · ∏h`. Exact for piecewise-constant mass
/// bookkeeping on node-centered grids.
pub fn integrate(f: &ScalarField) -> Result<f64> {
    if !f.all_finite() {
        return Err(Error::InvalidField("integrate requires finite values".into()));
    }
    Ok(f.values.iter().sum::<f64>() * f.grid.cell())
}

/// Mean value over the box, `integrate(f)/|Ω|` computed with the quadrature
/// weights actually used (cell volume times node count).
pub fn mean(f: &ScalarField) -> Result<f64> {
    Ok(integrate(f)? / (f.grid.cell() * f.grid.len() as f64))
}

/// Discrete total variation via one-sided differences:
/// `Σ_axes Σ |f(i+e_a) − f(i)| · ∏h / h_a`.
pub fn bv_seminorm(f: &ScalarField) -> Result<f64> {
    if !f.all_finite() {
        return Err(Error::InvalidField("bv_seminorm requires finite values".into()));
    }
    let g = &f.grid;
    let h = g.h();
    let cell = g.cell();
    let mut tv = 0.0;
    for a in 0..g.dim {
        let w = cell / h[a];
        let mut sum = 0.0;
        for i0 in 0..g.n[0] {
            for i1 in 0..g.n[1] {
                let i = [i0, i1];
                let mut j = i;
                j[a] += 1;
                if j[a] < g.n[a] {
                    sum += (f.values[g.idx(j)] - f.values[g.idx(i)]).abs();
                }
            }
        }
        tv += sum * w;
    }
    Ok(tv)
}

/// H⁻¹ norm of a mean-zero field: `(∫|∇u|²)^{1/2}` where `−Δu = f` with
/// zero-Neumann boundary and mean-zero `u`, solved in the cosine basis.
pub fn hminus1_norm(f: &ScalarField) -> Result<f64> {
    if !f.all_finite() {
        return Err(Error::InvalidField("hminus1_norm requires finite values".into()));
    }
    let m = mean(f)?;
    let scale = linf(f).max(1.0);
    if m.abs() > 1e-8 * scale {
        return Err(Error::InvalidField(format!(
            "hminus1_norm requires a mean-zero field (mean = {m:.3e})"
        )));
    }
    let u = spectral::neumann_solve(f, 0.0)?;
    // The ghost-node stencil is self-adjoint in the trapezoid-weighted inner
    // product, where the discrete Dirichlet energy is exactly ⟨f, u⟩_w.
    let g = &f.grid;
    let cell = g.cell();
    let e: f64 = (0..g.len())
        .map(|k| trapezoid_weight(g, k) * f.values[k] * u.values[k])
        .sum::<f64>()
        * cell;
    Ok(e.max(0.0).sqrt())
}

/// Product trapezoid quadrature weight of a node: 1/2 per real axis on which
/// the node sits at the boundary.
pub fn trapezoid_weight(g: &GridSpec, k: usize) -> f64 {
    let i = g.coords(k);
    let mut w = 1.0;
    for a in 0..g.dim {
        if i[a] == 0 || i[a] + 1 == g.n[a] {
            w *= 0.5;
        }
    }
    w
}

pub fn linf(f: &ScalarField) -> f64 {
    f.values.iter().fold(0.0, |m, &v| m.max(v.abs()))
}

pub fn l1_diff(f: &ScalarField, g: &ScalarField) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::GridMismatch);
    }
    Ok(f.values
        .iter()
        .zip(&g.values)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<f64>()
        * f.grid.cell())
}

/// Max distance from `center` over nodes with `f > threshold`; 0 if none.
pub fn support_radius(f: &ScalarField, center: [f64; 2], threshold: f64) -> f64 {
    let g = &f.grid;
    let mut r = 0.0f64;
    for k in 0..g.len() {
        if f.values[k] > threshold {
            let x = g.pos(g.coords(k));
            let mut d2 = 0.0;
            for a in 0..g.dim {
                d2 += (x[a] - center[a]).powi(2);
            }
            r = r.max(d2.sqrt());
        }
    }
    r
}

/// Shortest distance from the support of `f` to the boundary of the box.
pub fn support_boundary_margin(f: &ScalarField, threshold: f64) -> f64 {
    let g = &f.grid;
    let mut margin = f64::INFINITY;
    let mut any = false;
    for k in 0..g.len() {
        if f.values[k] > threshold {
            any = true;
            let x = g.pos(g.coords(k));
            for a in 0..g.dim {
                margin = margin.min(x[a] - g.origin[a]);
                margin = margin.min(g.origin[a] + g.extent[a] - x[a]);
            }
        }
    }
    if any {
        margin
    } else {
        f64::INFINITY
    }
}

/// Centered-difference gradient with one-sided stencils at the boundary.
/// Returns one component field per real axis.
pub fn gradient(f: &ScalarField) -> Vec<ScalarField> {
    let g = &f.grid;
    let h = g.h();
    let mut out = Vec::new();
    for a in 0..g.dim {
        let mut comp = ScalarField::zeros(g);
        for i0 in 0..g.n[0] {
            for i1 in 0..g.n[1] {
                let i = [i0, i1];
                let ia = i[a];
                let v = if ia == 0 {
                    let mut j = i;
                    j[a] = 1;
                    (f.values[g.idx(j)] - f.values[g.idx(i)]) / h[a]
                } else if ia == g.n[a] - 1 {
                    let mut j = i;
                    j[a] = ia - 1;
                    (f.values[g.idx(i)] - f.values[g.idx(j)]) / h[a]
                } else {
                    let mut jp = i;
                    jp[a] = ia + 1;
                    let mut jm = i;
                    jm[a] = ia - 1;
                    (f.values[g.idx(jp)] - f.values[g.idx(jm)]) / (2.0 * h[a])
                };
                comp.values[g.idx(i)] = v;
            }
        }
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square(n: usize) -> GridSpec {
        GridSpec::rect([0.0, 0.0], [1.0, 1.0], [n, n]).unwrap()
    }

    #[test]
    fn integrate_constant_unit_square() {
        let g = unit_square(33);
        let f = ScalarField::constant(&g, 1.0);
        // Rectangle rule over n nodes of spacing 1/(n-1) overcounts the unit
        // box by (n/(n-1))^2; the weights are the documented quadrature.
        let expect = (33.0f64 / 32.0).powi(2);
        assert!((integrate(&f).unwrap() - expect).abs() < 1e-12);
        let z = ScalarField::zeros(&g);
        assert_eq!(integrate(&z).unwrap(), 0.0);
    }

    #[test]
    fn integrate_matches_independent_summation() {
        let g = GridSpec::line(0.0, 1.0, 101).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        // Re-sum in reverse order with compensated accumulation.
        let cell = g.cell();
        let mut acc = 0.0f64;
        for v in f.values.iter().rev() {
            acc += v * cell;
        }
        assert!((integrate(&f).unwrap() - acc).abs() < 1e-12);
    }

    #[test]
    fn integrate_is_linear() {
        let g = unit_square(9);
        let f = ScalarField::from_fn(&g, |x| x[0] * x[1] + 0.3);
        let h = ScalarField::from_fn(&g, |x| (x[0] - x[1]).sin());
        let lhs = integrate(&f.zip(&h, |a, b| 2.0 * a - 3.0 * b).unwrap()).unwrap();
        let rhs = 2.0 * integrate(&f).unwrap() - 3.0 * integrate(&h).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
    }

    #[test]
    fn bv_of_indicator_is_jump_height() {
        let g = GridSpec::line(0.0, 1.0, 101).unwrap();
        let f = ScalarField::from_fn(&g, |x| if x[0] > 0.5 { 1.0 } else { 0.0 });
        assert!((bv_seminorm(&f).unwrap() - 1.0).abs() < 1e-12);
        let c = ScalarField::constant(&g, 4.2);
        assert_eq!(bv_seminorm(&c).unwrap(), 0.0);
        let f3 = f.map(|v| -3.0 * v);
        assert!((bv_seminorm(&f3).unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bv_triangle_inequality() {
        let g = unit_square(17);
        let f = ScalarField::from_fn(&g, |x| (7.0 * x[0]).sin() + x[1]);
        let h = ScalarField::from_fn(&g, |x| (5.0 * x[1]).cos() * x[0]);
        let sum = f.zip(&h, |a, b| a + b).unwrap();
        assert!(
            bv_seminorm(&sum).unwrap()
                <= bv_seminorm(&f).unwrap() + bv_seminorm(&h).unwrap() + 1e-12
        );
    }

    #[test]
    fn support_radius_of_ball_indicator() {
        let g = GridSpec::rect([-1.0, -1.0], [2.0, 2.0], [65, 65]).unwrap();
        let f = ScalarField::from_fn(&g, |x| {
            if x[0] * x[0] + x[1] * x[1] <= 0.3 * 0.3 {
                1.0
            } else {
                0.0
            }
        });
        let r = support_radius(&f, [0.0, 0.0], 1e-12);
        assert!((r - 0.3).abs() <= g.max_h());
    }

    #[test]
    fn linf_and_l1_basics() {
        let g = GridSpec::line(0.0, 1.0, 11).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0]);
        assert_eq!(linf(&f), 1.0);
        assert_eq!(l1_diff(&f, &f).unwrap(), 0.0);
    }

    #[test]
    fn gradient_of_linear_field() {
        let g = unit_square(21);
        let f = ScalarField::from_fn(&g, |x| 2.0 * x[0] - 0.5 * x[1]);
        let grad = gradient(&f);
        for v in &grad[0].values {
            assert!((v - 2.0).abs() < 1e-10);
        }
        for v in &grad[1].values {
            assert!((v + 0.5).abs() < 1e-10);
        }
    }
}
