//! Tensor grids on the centered box [-L, L]^d with second-order finite differences.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    /// Nodes include both box faces; the outer layer is held at zero.
    Dirichlet,
    /// Nodes wrap around; the face at +L is identified with -L.
    Periodic,
}

impl std::fmt::Display for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Dirichlet => write!(f, "dirichlet"),
            Boundary::Periodic => write!(f, "periodic"),
        }
    }
}

impl std::str::FromStr for Boundary {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dirichlet" => Ok(Boundary::Dirichlet),
            "periodic" => Ok(Boundary::Periodic),
            other => Err(format!("unknown boundary '{other}'")),
        }
    }
}

/// Box parameters without the dimension, as they appear in configs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridParams {
    pub half_width: f64,
    pub points_per_axis: usize,
    pub boundary: Boundary,
}

impl GridParams {
    pub fn build(&self, dim: usize) -> Result<Arc<Grid>> {
        build_grid(dim, self.half_width, self.points_per_axis, self.boundary)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub dim: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
    pub boundary: Boundary,
    pub spacing: f64,
    coords: Vec<f64>,
    axis_weights: Vec<f64>,
    weights: Vec<f64>,
}

/// Build a grid. Returned behind an `Arc` since every field holds a reference to it.
pub fn build_grid(dim: usize, half_width: f64, points_per_axis: usize, boundary: Boundary) -> Result<Arc<Grid>> {
    if !(1..=3).contains(&dim) {
        return Err(Error::InvalidDimension(dim));
    }
    if points_per_axis < 8 {
        return Err(Error::TooFewPoints { needed: 8, got: points_per_axis });
    }
    if !(half_width.is_finite() && half_width > 0.0) {
        return Err(Error::InvalidGrid(format!("half_width must be positive, got {half_width}")));
    }
    let n = points_per_axis;
    let (spacing, axis_weights) = match boundary {
        Boundary::Dirichlet => {
            let h = 2.0 * half_width / (n - 1) as f64;
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            (h, w)
        }
        Boundary::Periodic => {
            let h = 2.0 * half_width / n as f64;
            (h, vec![h; n])
        }
    };
    let coords: Vec<f64> = (0..n).map(|i| -half_width + i as f64 * spacing).collect();
    let total = n.pow(dim as u32);
    let mut weights = vec![1.0; total];
    for (idx, w) in weights.iter_mut().enumerate() {
        let mut rest = idx;
        for _ in 0..dim {
            *w *= axis_weights[rest % n];
            rest /= n;
        }
    }
    Ok(Arc::new(Grid { dim, half_width, points_per_axis, boundary, spacing, coords, axis_weights, weights }))
}

impl Grid {
    pub fn node_count(&self) -> usize {
        self.weights.len()
    }

    /// Quadrature weight of every node, in node order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn axis_coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn axis_weights(&self) -> &[f64] {
        &self.axis_weights
    }

    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dim as i32)
    }

    /// Stride of `axis` in the row-major node ordering (last axis fastest).
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.dim - 1 - axis) as u32)
    }

    /// Per-axis indices of node `idx`; unused trailing entries are zero.
    pub fn multi_index(&self, idx: usize) -> [usize; 3] {
        let n = self.points_per_axis;
        let mut out = [0; 3];
        let mut rest = idx;
        for k in (0..self.dim).rev() {
            out[k] = rest % n;
            rest /= n;
        }
        out
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        multi[..self.dim].iter().fold(0, |acc, &i| acc * self.points_per_axis + i)
    }

    /// Position of node `idx`; unused trailing coordinates are zero.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let m = self.multi_index(idx);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.coords[m[k]];
        }
        x
    }

    pub fn is_boundary(&self, idx: usize) -> bool {
        if self.boundary == Boundary::Periodic {
            return false;
        }
        let m = self.multi_index(idx);
        let last = self.points_per_axis - 1;
        m[..self.dim].iter().any(|&i| i == 0 || i == last)
    }

    /// Nearest node to `x` and whether `x` lay outside the box (and was clamped).
    pub fn nearest_node(&self, x: &[f64]) -> (usize, bool) {
        let n = self.points_per_axis;
        let mut outside = false;
        let mut idx = 0usize;
        for &xk in &x[..self.dim] {
            let t = (xk + self.half_width) / self.spacing;
            let mut i = t.round();
            match self.boundary {
                Boundary::Periodic => {
                    if !(-self.half_width..self.half_width).contains(&xk) {
                        outside = true;
                    }
                    i = i.rem_euclid(n as f64);
                    if i >= n as f64 {
                        i = 0.0;
                    }
                }
                Boundary::Dirichlet => {
                    if xk.abs() > self.half_width {
                        outside = true;
                    }
                    i = i.clamp(0.0, (n - 1) as f64);
                }
            }
            idx = idx * n + i as usize;
        }
        (idx, outside)
    }

    /// Iterate over the 1D lines along `axis` as (first node, stride).
    pub fn lines(&self, axis: usize) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.points_per_axis;
        let stride = self.stride(axis);
        let outer = self.node_count() / (n * stride);
        (0..outer).flat_map(move |o| (0..stride).map(move |i| (o * n * stride + i, stride)))
    }

    pub fn field_from_fn(self: &Arc<Self>, f: impl Fn(&[f64]) -> f64) -> GridField {
        let values = (0..self.node_count())
            .map(|i| {
                let x = self.position(i);
                f(&x[..self.dim])
            })
            .collect();
        GridField { grid: Arc::clone(self), values }
    }

    pub fn constant(self: &Arc<Self>, c: f64) -> GridField {
        GridField { grid: Arc::clone(self), values: vec![c; self.node_count()] }
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        std::ptr::eq(self, other)
            || (self.dim == other.dim
                && self.points_per_axis == other.points_per_axis
                && self.boundary == other.boundary
                && self.half_width == other.half_width)
    }
}

/// Real values on the nodes of a grid.
#[derive(Debug, Clone)]
pub struct GridField {
    pub grid: Arc<Grid>,
    pub values: Vec<f64>,
}

impl GridField {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::DimensionMismatch { expected: grid.node_count(), got: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid field"));
        }
        Ok(GridField { grid, values })
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        grid.constant(0.0)
    }

    pub fn integrate(&self) -> f64 {
        integrate(self)
    }

    /// Weighted inner product Σ w f g.
    pub fn dot(&self, other: &GridField) -> Result<f64> {
        self.check_same(other)?;
        Ok(weighted_dot(self.grid.weights(), &self.values, &other.values))
    }

    pub fn norm_sq(&self) -> f64 {
        weighted_dot(self.grid.weights(), &self.values, &self.values)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GridField {
        GridField { grid: Arc::clone(&self.grid), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &GridField, f: impl Fn(f64, f64) -> f64) -> Result<GridField> {
        self.check_same(other)?;
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(GridField { grid: Arc::clone(&self.grid), values })
    }

    /// Square of the field as a density check: nonnegative and unit mass within `tol`.
    pub fn check_density(&self, tol: f64) -> Result<()> {
        if self.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::NotADensity("negative or non-finite entries".into()));
        }
        let mass = self.integrate();
        if (mass - 1.0).abs() > tol {
            return Err(Error::NotADensity(format!("mass {mass} differs from 1")));
        }
        Ok(())
    }

    /// Scale to unit L² norm. Fails on the zero field.
    pub fn normalized(mut self) -> Result<GridField> {
        let n = self.norm_sq().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::param("field", "cannot normalize a zero or non-finite field"));
        }
        self.values.iter_mut().for_each(|v| *v /= n);
        Ok(self)
    }

    pub fn check_same(&self, other: &GridField) -> Result<()> {
        if self.grid.same_as(&other.grid) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

pub(crate) fn weighted_dot(w: &[f64], a: &[f64], b: &[f64]) -> f64 {
    w.iter().zip(a).zip(b).map(|((w, a), b)| w * a * b).sum()
}

pub fn integrate(field: &GridField) -> f64 {
    field.grid.weights().iter().zip(&field.values).map(|(w, v)| w * v).sum()
}

/// Σ_axes Σ_edges h^d (Δφ/h)², with forward differences along every axis.
///
/// Periodic lines include the wrap-around edge. With the three-point Laplacian
/// this satisfies summation by parts exactly.
pub fn gradient_sq_norm(field: &GridField) -> f64 {
    let g = &field.grid;
    let n = g.points_per_axis;
    let h = g.spacing;
    let cell = h.powi(g.dim as i32);
    let v = &field.values;
    let mut total = 0.0;
    for axis in 0..g.dim {
        for (start, stride) in g.lines(axis) {
            let edges = match g.boundary {
                Boundary::Periodic => n,
                Boundary::Dirichlet => n - 1,
            };
            for i in 0..edges {
                let a = v[start + i * stride];
                let b = v[start + ((i + 1) % n) * stride];
                total += (b - a) * (b - a);
            }
        }
    }
    total * cell / (h * h)
}

/// a times the second-difference Laplacian.
///
/// Dirichlet boundary nodes map to zero; their values still enter neighbouring
/// stencils.
pub fn apply_generator(field: &GridField, a: f64) -> GridField {
    let mut out = vec![0.0; field.values.len()];
    laplacian_into(&field.grid, &field.values, &mut out);
    out.iter_mut().for_each(|v| *v *= a);
    GridField { grid: Arc::clone(&field.grid), values: out }
}

/// out = Δ_h v (no scaling).
pub(crate) fn laplacian_into(g: &Grid, v: &[f64], out: &mut [f64]) {
    let n = g.points_per_axis;
    let inv_h2 = 1.0 / (g.spacing * g.spacing);
    out.iter_mut().for_each(|o| *o = 0.0);
    for axis in 0..g.dim {
        for (start, stride) in g.lines(axis) {
            match g.boundary {
                Boundary::Periodic => {
                    for i in 0..n {
                        let c = start + i * stride;
                        let l = start + ((i + n - 1) % n) * stride;
                        let r = start + ((i + 1) % n) * stride;
                        out[c] += (v[l] - 2.0 * v[c] + v[r]) * inv_h2;
                    }
                }
                Boundary::Dirichlet => {
                    for i in 1..n - 1 {
                        let c = start + i * stride;
                        out[c] += (v[c - stride] - 2.0 * v[c] + v[c + stride]) * inv_h2;
                    }
                }
            }
        }
    }
    if g.boundary == Boundary::Dirichlet {
        for (i, o) in out.iter_mut().enumerate() {
            if g.is_boundary(i) {
                *o = 0.0;
            }
        }
    }
}

/// Zero the Dirichlet boundary layer in place (no-op for periodic grids).
#[cfg(test)]
pub(crate) fn zero_boundary(g: &Grid, v: &mut [f64]) {
    if g.boundary == Boundary::Dirichlet {
        for (i, x) in v.iter_mut().enumerate() {
            if g.is_boundary(i) {
                *x = 0.0;
            }
        }
    }
}
