//! Uniform collocated grid on the channel (0, L) x (0, 2), grid functions and
//! the discrete differential operators built on them.
//!
//! Nodes are `x_i = i hx`, `y_j = j hy` with `0 <= i <= nx`, `0 <= j <= ny`; the
//! flat index is `i (ny + 1) + j`, so a column of constant `x` is contiguous.
//! First derivatives are second-order centred in the interior with
//! second-order one-sided closures; second derivatives use the centred
//! three-point stencil with the four-point one-sided closure
//! `(2, -5, 4, -1) / h^2`. Quadrature is the composite trapezoid rule.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Channel height (fixed).
pub const HEIGHT: f64 = 2.0;

/// Uniform tensor-product grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub length: f64,
    pub hx: f64,
    pub hy: f64,
}

impl Grid {
    /// Build a grid with `nx` x `ny` cells on (0, length) x (0, 2).
    pub fn new(nx: usize, ny: usize, length: f64) -> Result<Self> {
        if nx < 8 || ny < 8 {
            return Err(Error::InvalidParameter(format!(
                "grid needs at least 8 cells per direction, got {nx} x {ny}"
            )));
        }
        if !(length > 0.0 && length <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "channel length must lie in (0, 1], got {length}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            length,
            hx: length / nx as f64,
            hy: HEIGHT / ny as f64,
        })
    }

    /// Square-cell-count convenience constructor (`n` cells in each direction).
    pub fn square(n: usize, length: f64) -> Result<Self> {
        Self::new(n, n, length)
    }

    /// Number of nodes.
    pub fn len(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Whether the grid has no nodes (never true for a valid grid).
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat node index.
    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        i * (self.ny + 1) + j
    }

    #[inline]
    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.hx
    }

    #[inline]
    pub fn y(&self, j: usize) -> f64 {
        j as f64 * self.hy
    }

    /// Node coordinates along x.
    pub fn xs(&self) -> Vec<f64> {
        (0..=self.nx).map(|i| self.x(i)).collect()
    }

    /// Node coordinates along y.
    pub fn ys(&self) -> Vec<f64> {
        (0..=self.ny).map(|j| self.y(j)).collect()
    }

    /// Whether node (i, j) lies on the boundary.
    pub fn is_boundary(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Number of nodes along a side.
    pub fn side_len(&self, side: Side) -> usize {
        match side {
            Side::X0 | Side::XL => self.ny + 1,
            Side::Y0 | Side::Y2 => self.nx + 1,
        }
    }

    /// Spacing along a side.
    pub fn side_spacing(&self, side: Side) -> f64 {
        match side {
            Side::X0 | Side::XL => self.hy,
            Side::Y0 | Side::Y2 => self.hx,
        }
    }

    /// Flat index of the `k`-th node along a side.
    pub fn side_node(&self, side: Side, k: usize) -> usize {
        match side {
            Side::X0 => self.idx(0, k),
            Side::XL => self.idx(self.nx, k),
            Side::Y0 => self.idx(k, 0),
            Side::Y2 => self.idx(k, self.ny),
        }
    }

    /// Trapezoid weight of node (i, j).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        let wx = if i == 0 || i == self.nx { 0.5 } else { 1.0 };
        let wy = if j == 0 || j == self.ny { 0.5 } else { 1.0 };
        wx * wy * self.hx * self.hy
    }

    /// Field sampled from a function of (x, y).
    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        let mut values = Vec::with_capacity(self.len());
        for i in 0..=self.nx {
            for j in 0..=self.ny {
                values.push(f(self.x(i), self.y(j)));
            }
        }
        ScalarField { grid: *self, values }
    }

    /// Zero field.
    pub fn zeros(&self) -> ScalarField {
        ScalarField {
            grid: *self,
            values: vec![0.0; self.len()],
        }
    }

    /// Constant field.
    pub fn constant(&self, c: f64) -> ScalarField {
        ScalarField {
            grid: *self,
            values: vec![c; self.len()],
        }
    }
}

/// One of the four sides of the channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    /// Inflow boundary x = 0.
    X0,
    /// Outflow boundary x = L.
    XL,
    /// Lower wall y = 0.
    Y0,
    /// Upper wall y = 2.
    Y2,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::X0, Side::XL, Side::Y0, Side::Y2];

    pub fn name(&self) -> &'static str {
        match self {
            Side::X0 => "x=0",
            Side::XL => "x=L",
            Side::Y0 => "y=0",
            Side::Y2 => "y=2",
        }
    }

    /// Whether the side is normal to x.
    pub fn is_x_side(&self) -> bool {
        matches!(self, Side::X0 | Side::XL)
    }
}

/// Restriction of a grid function to one side, ordered by the tangential coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub side: Side,
    /// Node spacing along the side.
    pub h: f64,
    pub values: Vec<f64>,
}

impl Trace {
    pub fn new(side: Side, h: f64, values: Vec<f64>) -> Self {
        Trace { side, h, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1D trapezoid integral along the side.
    pub fn integrate(&self) -> f64 {
        trapezoid(&self.values, self.h)
    }

    /// Maximum absolute value.
    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// First derivative along the side.
    pub fn d1(&self) -> Trace {
        Trace::new(self.side, self.h, diff1(&self.values, self.h))
    }

    /// Second derivative along the side.
    pub fn d2(&self) -> Trace {
        Trace::new(self.side, self.h, diff2(&self.values, self.h))
    }
}

/// Grid function sampled at the nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    /// Wrap raw node values; the length must match the grid.
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "field has {} values but grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.idx(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.idx(i, j);
        self.values[k] = v;
    }

    /// Column `x = x_i` as a slice (contiguous in memory).
    pub fn column(&self, i: usize) -> &[f64] {
        let n = self.grid.ny + 1;
        &self.values[i * n..(i + 1) * n]
    }

    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        let n = self.grid.ny + 1;
        &mut self.values[i * n..(i + 1) * n]
    }

    /// Row `y = y_j` (copied, strided in memory).
    pub fn row(&self, j: usize) -> Vec<f64> {
        (0..=self.grid.nx).map(|i| self.at(i, j)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip(&self, other: &ScalarField, f: impl Fn(f64, f64) -> f64) -> ScalarField {
        debug_assert_eq!(self.grid, other.grid);
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// Node-wise map with coordinates.
    pub fn map_xy(&self, f: impl Fn(f64, f64, f64) -> f64) -> ScalarField {
        let g = self.grid;
        let mut out = self.clone();
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                let k = g.idx(i, j);
                out.values[k] = f(g.x(i), g.y(j), self.values[k]);
            }
        }
        out
    }

    pub fn add(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> ScalarField {
        self.map(|v| c * v)
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &ScalarField) -> ScalarField {
        self.zip(other, |a, b| a + c * b)
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.values)
    }

    /// Maximum absolute value over interior nodes only.
    pub fn max_abs_interior(&self) -> f64 {
        let g = self.grid;
        let mut m = 0.0f64;
        for i in 1..g.nx {
            for j in 1..g.ny {
                m = m.max(self.at(i, j).abs());
            }
        }
        m
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Restriction to a side.
    pub fn trace(&self, side: Side) -> Trace {
        let g = self.grid;
        let values = (0..g.side_len(side))
            .map(|k| self.values[g.side_node(side, k)])
            .collect();
        Trace::new(side, g.side_spacing(side), values)
    }
}

/// Pair of grid functions on one grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorField {
    pub u: ScalarField,
    pub v: ScalarField,
}

impl VectorField {
    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        if u.grid != v.grid {
            return Err(Error::InvalidParameter(
                "vector components live on different grids".into(),
            ));
        }
        Ok(VectorField { u, v })
    }

    pub fn zeros(grid: &Grid) -> Self {
        VectorField {
            u: grid.zeros(),
            v: grid.zeros(),
        }
    }

    pub fn grid(&self) -> Grid {
        self.u.grid
    }

    pub fn add(&self, o: &VectorField) -> VectorField {
        VectorField {
            u: self.u.add(&o.u),
            v: self.v.add(&o.v),
        }
    }

    pub fn sub(&self, o: &VectorField) -> VectorField {
        VectorField {
            u: self.u.sub(&o.u),
            v: self.v.sub(&o.v),
        }
    }

    pub fn scale(&self, c: f64) -> VectorField {
        VectorField {
            u: self.u.scale(c),
            v: self.v.scale(c),
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.u.max_abs().max(self.v.max_abs())
    }
}

// ---------------------------------------------------------------------------
// 1D stencils
// ---------------------------------------------------------------------------

/// Second-order first derivative of uniformly spaced samples.
pub fn diff1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 3, "first derivative needs at least 3 samples");
    let mut out = vec![0.0; n];
    let c = 0.5 / h;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) * c;
    for k in 1..n - 1 {
        out[k] = (f[k + 1] - f[k - 1]) * c;
    }
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) * c;
    out
}

/// Second-order second derivative of uniformly spaced samples.
pub fn diff2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 4, "second derivative needs at least 4 samples");
    let mut out = vec![0.0; n];
    let c = 1.0 / (h * h);
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) * c;
    for k in 1..n - 1 {
        out[k] = (f[k - 1] - 2.0 * f[k] + f[k + 1]) * c;
    }
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) * c;
    out
}

/// Composite trapezoid rule.
pub fn trapezoid(f: &[f64], h: f64) -> f64 {
    let n = f.len();
    if n < 2 {
        return 0.0;
    }
    let inner: f64 = f[1..n - 1].iter().sum();
    h * (inner + 0.5 * (f[0] + f[n - 1]))
}

/// Running trapezoid integral starting at 0.
pub fn cumulative_trapezoid(f: &[f64], h: f64) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for k in 1..f.len() {
        out[k] = out[k - 1] + 0.5 * h * (f[k] + f[k - 1]);
    }
    out
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

// ---------------------------------------------------------------------------
// 2D operators
// ---------------------------------------------------------------------------

fn apply_x(f: &ScalarField, op: fn(&[f64], f64) -> Vec<f64>) -> ScalarField {
    let g = f.grid;
    let mut out = g.zeros();
    let mut line = vec![0.0; g.nx + 1];
    for j in 0..=g.ny {
        for (i, l) in line.iter_mut().enumerate() {
            *l = f.at(i, j);
        }
        let d = op(&line, g.hx);
        for (i, &val) in d.iter().enumerate() {
            out.set(i, j, val);
        }
    }
    out
}

fn apply_y(f: &ScalarField, op: fn(&[f64], f64) -> Vec<f64>) -> ScalarField {
    let g = f.grid;
    let mut out = g.zeros();
    for i in 0..=g.nx {
        let d = op(f.column(i), g.hy);
        out.column_mut(i).copy_from_slice(&d);
    }
    out
}

/// Discrete ∂x.
pub fn dx(f: &ScalarField) -> ScalarField {
    apply_x(f, diff1)
}

/// Discrete ∂y.
pub fn dy(f: &ScalarField) -> ScalarField {
    apply_y(f, diff1)
}

/// Discrete ∂xx (three-point with four-point closures).
pub fn dxx(f: &ScalarField) -> ScalarField {
    apply_x(f, diff2)
}

/// Discrete ∂yy (three-point with four-point closures).
pub fn dyy(f: &ScalarField) -> ScalarField {
    apply_y(f, diff2)
}

/// Discrete ∂xy = ∂x ∂y (the two first-derivative operators commute exactly).
pub fn dxy(f: &ScalarField) -> ScalarField {
    dx(&dy(f))
}

/// Five-point Laplacian with one-sided closures.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    dxx(f).add(&dyy(f))
}

/// div w = u_x + v_y.
pub fn divergence(w: &VectorField) -> ScalarField {
    dx(&w.u).add(&dy(&w.v))
}

/// Scalar curl in the convention `u_y - v_x`.
pub fn curl2d(w: &VectorField) -> ScalarField {
    dy(&w.u).sub(&dx(&w.v))
}

/// Gradient (f_x, f_y).
pub fn gradient(f: &ScalarField) -> VectorField {
    VectorField {
        u: dx(f),
        v: dy(f),
    }
}

/// Trapezoid quadrature over the channel.
pub fn integrate(f: &ScalarField) -> f64 {
    let g = f.grid;
    let mut s = 0.0;
    for i in 0..=g.nx {
        for j in 0..=g.ny {
            s += g.weight(i, j) * f.at(i, j);
        }
    }
    s
}

/// Restriction of a field to a side.
pub fn extract_trace(f: &ScalarField, side: Side) -> Trace {
    f.trace(side)
}
