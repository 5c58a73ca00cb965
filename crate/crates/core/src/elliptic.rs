//! Sparse direct solvers for the scalar Poisson problems of the linear
//! construction and the biharmonic homogenization problems, with per-side
//! Dirichlet / Neumann conditions. Factorizations are built once and reused.

use crate::error::{Error, Result};
use crate::grid::{self, Grid, ScalarField, Side, VectorField};
use crate::sparse::{CsrMatrix, SparseLu};
use serde::{Deserialize, Serialize};

/// Default relative tolerance for residual and boundary-defect checks.
pub const SOLVER_TOL: f64 = 1e-10;
/// Default tolerance for consistency diagnostics.
pub const CONSISTENCY_TOL: f64 = 1e-6;

fn d1_matrix(n: usize, h: f64) -> CsrMatrix {
    let c = 0.5 / h;
    let rows = (0..=n)
        .map(|k| {
            if k == 0 {
                vec![(0, -3.0 * c), (1, 4.0 * c), (2, -c)]
            } else if k == n {
                vec![(n, 3.0 * c), (n - 1, -4.0 * c), (n - 2, c)]
            } else {
                vec![(k - 1, -c), (k + 1, c)]
            }
        })
        .collect();
    CsrMatrix::from_rows(n + 1, rows)
}

fn d2_matrix(n: usize, h: f64) -> CsrMatrix {
    let c = 1.0 / (h * h);
    let rows = (0..=n)
        .map(|k| {
            if k == 0 {
                vec![(0, 2.0 * c), (1, -5.0 * c), (2, 4.0 * c), (3, -c)]
            } else if k == n {
                vec![(n, 2.0 * c), (n - 1, -5.0 * c), (n - 2, 4.0 * c), (n - 3, -c)]
            } else {
                vec![(k - 1, c), (k, -2.0 * c), (k + 1, c)]
            }
        })
        .collect();
    CsrMatrix::from_rows(n + 1, rows)
}

/// Matrix forms of the grid's difference operators (node-major ordering
/// identical to [`Grid::idx`]).
#[derive(Debug, Clone)]
pub struct Operators {
    pub grid: Grid,
    pub dx: CsrMatrix,
    pub dy: CsrMatrix,
    pub dxx: CsrMatrix,
    pub dyy: CsrMatrix,
    /// Compact Laplacian ∂xx + ∂yy (three-point stencils).
    pub compact: CsrMatrix,
    /// Composed Laplacian Dx∘Dx + Dy∘Dy; exact partner of the first-order
    /// operators, so div∘grad and curl∘rot reproduce it identically.
    pub composed: CsrMatrix,
    /// The 1D y-derivative on one column.
    pub dy_line: CsrMatrix,
}

impl Operators {
    pub fn new(g: &Grid) -> Self {
        let ix = CsrMatrix::identity(g.nx + 1);
        let iy = CsrMatrix::identity(g.ny + 1);
        let dx = CsrMatrix::kron(&d1_matrix(g.nx, g.hx), &iy);
        let dy_line = d1_matrix(g.ny, g.hy);
        let dy = CsrMatrix::kron(&ix, &dy_line);
        let dxx = CsrMatrix::kron(&d2_matrix(g.nx, g.hx), &iy);
        let dyy = CsrMatrix::kron(&ix, &d2_matrix(g.ny, g.hy));
        let compact = CsrMatrix::lin_comb(1.0, &dxx, 1.0, &dyy);
        let composed = CsrMatrix::lin_comb(1.0, &dx.matmul(&dx), 1.0, &dy.matmul(&dy));
        Operators {
            grid: *g,
            dx,
            dy,
            dxx,
            dyy,
            compact,
            composed,
            dy_line,
        }
    }

    pub fn apply(&self, m: &CsrMatrix, f: &ScalarField) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: m.matvec(&f.values),
        }
    }
}

/// Which Laplacian discretization a Poisson problem uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatorKind {
    Compact,
    Composed,
}

/// Type of a condition on one side. Neumann prescribes the coordinate
/// derivative (∂x on the x-sides, ∂y on the y-sides).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BcKind {
    Dirichlet,
    Neumann,
}

/// Condition types on the four sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SideKinds {
    pub x0: BcKind,
    pub xl: BcKind,
    pub y0: BcKind,
    pub y2: BcKind,
}

impl SideKinds {
    pub fn get(&self, s: Side) -> BcKind {
        match s {
            Side::X0 => self.x0,
            Side::XL => self.xl,
            Side::Y0 => self.y0,
            Side::Y2 => self.y2,
        }
    }

    pub fn all_neumann(&self) -> bool {
        Side::ALL.iter().all(|&s| self.get(s) == BcKind::Neumann)
    }
}

/// The side whose condition a boundary node carries: a Dirichlet side wins,
/// otherwise the x-side.
pub fn governing_side(g: &Grid, kinds: &SideKinds, i: usize, j: usize) -> Option<Side> {
    let mut cand = Vec::with_capacity(2);
    if i == 0 {
        cand.push(Side::X0);
    }
    if i == g.nx {
        cand.push(Side::XL);
    }
    if j == 0 {
        cand.push(Side::Y0);
    }
    if j == g.ny {
        cand.push(Side::Y2);
    }
    cand.iter()
        .copied()
        .find(|&s| kinds.get(s) == BcKind::Dirichlet)
        .or_else(|| cand.first().copied())
}

/// A boundary row: node, governing side, condition type.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryRow {
    pub node: usize,
    pub i: usize,
    pub j: usize,
    pub side: Side,
    pub kind: BcKind,
}

/// Rank-two correction K = K₀ + u₁v₁ᵀ + u₂v₂ᵀ with v₁ the last unit vector:
/// K⁻¹b = y − Z C⁻¹ Vᵀy with y = K₀⁻¹b, Z = K₀⁻¹[u₁ u₂], C = I + VᵀZ.
struct BorderCorrection {
    z: [Vec<f64>; 2],
    v2: Vec<f64>,
    last: usize,
    cinv: [[f64; 2]; 2],
}

impl BorderCorrection {
    fn new(lu0: &SparseLu, u: [Vec<f64>; 2], v2: Vec<f64>, last: usize) -> Result<Self> {
        let z0 = lu0.solve(&u[0])?;
        let z1 = lu0.solve(&u[1])?;
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let c = [
            [1.0 + z0[last], z1[last]],
            [dot(&v2, &z0), 1.0 + dot(&v2, &z1)],
        ];
        let det = c[0][0] * c[1][1] - c[0][1] * c[1][0];
        let scale = c.iter().flatten().fold(1.0f64, |a, v| a.max(v.abs()));
        if !(det.abs() > 1e-14 * scale * scale) {
            return Err(Error::Singular("pure-Neumann gauge correction is singular".into()));
        }
        let cinv = [[c[1][1] / det, -c[0][1] / det], [-c[1][0] / det, c[0][0] / det]];
        Ok(BorderCorrection {
            z: [z0, z1],
            v2,
            last,
            cinv,
        })
    }

    fn solve(&self, lu0: &SparseLu, b: &[f64]) -> Result<Vec<f64>> {
        let mut y = lu0.solve(b)?;
        let vy = [y[self.last], self.v2.iter().zip(&y).map(|(p, q)| p * q).sum::<f64>()];
        let a0 = self.cinv[0][0] * vy[0] + self.cinv[0][1] * vy[1];
        let a1 = self.cinv[1][0] * vy[0] + self.cinv[1][1] * vy[1];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi -= a0 * self.z[0][i] + a1 * self.z[1][i];
        }
        Ok(y)
    }
}

/// A factorized Poisson-type operator with its boundary rows.
pub struct PoissonSolver {
    pub grid: Grid,
    pub kinds: SideKinds,
    pub rows: Vec<BoundaryRow>,
    pub matrix: CsrMatrix,
    lu: SparseLu,
    /// Pure-Neumann problems carry an extra gauge row and multiplier column.
    bordered: bool,
    /// Low-rank correction from the factored sparse border to the true one.
    border: Option<BorderCorrection>,
    /// Rounds of iterative refinement per solve.
    pub refine: usize,
}

impl std::fmt::Debug for PoissonSolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PoissonSolver")
            .field("grid", &self.grid)
            .field("kinds", &self.kinds)
            .finish()
    }
}

impl PoissonSolver {
    /// Factor `interior` with boundary rows replaced by the side conditions.
    pub fn new(ops: &Operators, interior: &CsrMatrix, kinds: SideKinds) -> Result<Self> {
        let g = ops.grid;
        let mut rows = Vec::new();
        let mut repl = Vec::new();
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                let Some(side) = governing_side(&g, &kinds, i, j) else { continue };
                let node = g.idx(i, j);
                let kind = kinds.get(side);
                let row = match kind {
                    BcKind::Dirichlet => vec![(node, 1.0)],
                    BcKind::Neumann => {
                        if side.is_x_side() {
                            ops.dx.row_vec(node)
                        } else {
                            ops.dy.row_vec(node)
                        }
                    }
                };
                rows.push(BoundaryRow { node, i, j, side, kind });
                repl.push((node, row));
            }
        }
        let bordered = kinds.all_neumann();
        let mut matrix = interior.with_rows_replaced(&repl);
        let mut border = None;
        let lu = if bordered {
            // Mean-zero gauge via a Lagrange multiplier acting on interior rows:
            // K = [A e; wᵀ 0] with w the quadrature weights. The dense border
            // would ruin the sparse factorization, so K₀ = [A s; sᵀ 0] is
            // factored with s supported on a 2×2 block of interior nodes
            // (one per parity class of the composed stencil, unequal weights,
            // so that no oscillatory near-null mode is orthogonal to it) and K = K₀ + u₁v₁ᵀ + u₂v₂ᵀ
            // is recovered by a rank-two (Woodbury) correction.
            let n = g.len();
            let (ci, cj) = (g.nx / 3, g.ny / 3);
            let spot = [
                (g.idx(ci, cj), 1.0),
                (g.idx(ci, cj + 1), 2.0),
                (g.idx(ci + 1, cj), 3.0),
                (g.idx(ci + 1, cj + 1), 5.0),
            ];
            let boundary: std::collections::HashSet<usize> = rows.iter().map(|r| r.node).collect();
            let base: Vec<Vec<(usize, f64)>> = (0..n).map(|r| matrix.row_vec(r)).collect();
            let weights: Vec<(usize, f64)> = (0..=g.nx)
                .flat_map(|i| (0..=g.ny).map(move |j| (i, j)))
                .map(|(i, j)| (g.idx(i, j), g.weight(i, j)))
                .collect();
            let mut full = base.clone();
            for (r, row) in full.iter_mut().enumerate() {
                if !boundary.contains(&r) {
                    row.push((n, 1.0));
                }
            }
            full.push(weights.clone());
            let mut sparse = base;
            for &(c, w) in &spot {
                sparse[c].push((n, w));
            }
            sparse.push(spot.to_vec());
            let k0 = CsrMatrix::from_rows(n + 1, sparse);
            let lu0 = SparseLu::new(&k0)?;
            let mut u1: Vec<f64> = (0..=n).map(|r| if r < n && !boundary.contains(&r) { 1.0 } else { 0.0 }).collect();
            for &(c, w) in &spot {
                u1[c] -= w;
            }
            let mut v2 = vec![0.0; n + 1];
            for &(c, w) in &weights {
                v2[c] = w;
            }
            for &(c, w) in &spot {
                v2[c] -= w;
            }
            let mut u2 = vec![0.0; n + 1];
            u2[n] = 1.0;
            border = Some(BorderCorrection::new(&lu0, [u1, u2], v2, n)?);
            matrix = CsrMatrix::from_rows(n + 1, full);
            lu0
        } else {
            SparseLu::new(&matrix)?
        };
        Ok(PoissonSolver {
            grid: g,
            kinds,
            rows,
            matrix,
            lu,
            bordered,
            border,
            refine: 0,
        })
    }

    /// Solve the assembled system, with `refine` rounds of refinement
    /// against the true matrix.
    fn solve_system(&self, b: &[f64]) -> Result<Vec<f64>> {
        let Some(bc) = &self.border else {
            return self.lu.solve_refined(&self.matrix, b, self.refine);
        };
        let mut x = bc.solve(&self.lu, b)?;
        for _ in 0..self.refine {
            let ax = self.matrix.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = bc.solve(&self.lu, &r)?;
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Ok(x)
    }

    /// Convenience constructor for a Laplacian of the given kind.
    pub fn laplacian(ops: &Operators, op: OperatorKind, kinds: SideKinds) -> Result<Self> {
        let m = match op {
            OperatorKind::Compact => &ops.compact,
            OperatorKind::Composed => &ops.composed,
        };
        Self::new(ops, m, kinds)
    }

    /// Solve with interior right-hand side `rhs` and boundary values
    /// `bc(side, i, j)` on every boundary node.
    pub fn solve(&self, rhs: &ScalarField, bc: &dyn Fn(Side, usize, usize) -> f64) -> Result<ScalarField> {
        let mut b = rhs.values.clone();
        for r in &self.rows {
            b[r.node] = bc(r.side, r.i, r.j);
        }
        if self.bordered {
            b.push(0.0);
        }
        let mut x = self.solve_system(&b)?;
        x.truncate(self.grid.len());
        ScalarField::from_values(self.grid, x)
    }

    /// Solve with homogeneous side conditions.
    pub fn solve_homogeneous(&self, rhs: &ScalarField) -> Result<ScalarField> {
        self.solve(rhs, &|_, _, _| 0.0)
    }

    /// Max-norm residual of the assembled system (interior and boundary rows).
    pub fn residual(&self, sol: &ScalarField, rhs: &ScalarField, bc: &dyn Fn(Side, usize, usize) -> f64) -> f64 {
        let mut b = rhs.values.clone();
        for r in &self.rows {
            b[r.node] = bc(r.side, r.i, r.j);
        }
        let mut x = sol.values.clone();
        if self.bordered {
            x.push(0.0);
        }
        let ax = self.matrix.matvec(&x);
        ax.iter()
            .zip(&b)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Boundary data of a Poisson problem, one trace per side.
#[derive(Debug, Clone)]
pub struct PoissonBc {
    pub kinds: SideKinds,
    pub x0: Vec<f64>,
    pub xl: Vec<f64>,
    pub y0: Vec<f64>,
    pub y2: Vec<f64>,
}

impl PoissonBc {
    pub fn homogeneous(g: &Grid, kinds: SideKinds) -> Self {
        PoissonBc {
            kinds,
            x0: vec![0.0; g.ny + 1],
            xl: vec![0.0; g.ny + 1],
            y0: vec![0.0; g.nx + 1],
            y2: vec![0.0; g.nx + 1],
        }
    }

    pub fn value(&self, s: Side, i: usize, j: usize) -> f64 {
        match s {
            Side::X0 => self.x0[j],
            Side::XL => self.xl[j],
            Side::Y0 => self.y0[i],
            Side::Y2 => self.y2[i],
        }
    }
}

/// A self-contained Poisson problem.
#[derive(Debug, Clone)]
pub struct PoissonProblem {
    pub op: OperatorKind,
    pub rhs: ScalarField,
    pub bc: PoissonBc,
    /// Pure-Neumann compatibility tolerance (absolute).
    pub compat_tol: f64,
}

/// Assemble, factor and solve a single Poisson problem. Pure-Neumann problems
/// must satisfy ∫rhs = ∮flux within `compat_tol`; the mean-zero solution is
/// returned.
pub fn solve_poisson(p: &PoissonProblem) -> Result<ScalarField> {
    let g = p.rhs.grid;
    if p.bc.kinds.all_neumann() {
        let total = grid::integrate(&p.rhs);
        // Outward flux: -∂x on x = 0, +∂x on x = L, likewise in y.
        let flux = grid::trapezoid(&p.bc.xl, g.hy) - grid::trapezoid(&p.bc.x0, g.hy)
            + grid::trapezoid(&p.bc.y2, g.hx)
            - grid::trapezoid(&p.bc.y0, g.hx);
        if (total - flux).abs() > p.compat_tol {
            return Err(Error::Singular(format!(
                "pure-Neumann data incompatible: integral of rhs {total:.6e} vs boundary flux {flux:.6e}"
            )));
        }
    }
    let ops = Operators::new(&g);
    let s = PoissonSolver::laplacian(&ops, p.op, p.bc.kinds)?;
    s.solve(&p.rhs, &|side, i, j| p.bc.value(side, i, j))
}

// ---------------------------------------------------------------------------
// Biharmonic problems
// ---------------------------------------------------------------------------

/// Pair of conditions on one side of a biharmonic problem. Derivatives are
/// taken in the coordinate normal to the side (∂x on x-sides, ∂y on y-sides);
/// every array has one entry per side node.
#[derive(Debug, Clone, PartialEq)]
pub enum BiharmonicSide {
    /// Value and first derivative.
    Clamped { value: Vec<f64>, d1: Vec<f64> },
    /// Value and second derivative.
    Hinged { value: Vec<f64>, d2: Vec<f64> },
    /// First and third derivative (no value condition).
    Free { d1: Vec<f64>, d3: Vec<f64> },
}

impl BiharmonicSide {
    fn value(&self) -> Option<&[f64]> {
        match self {
            BiharmonicSide::Clamped { value, .. } | BiharmonicSide::Hinged { value, .. } => Some(value),
            BiharmonicSide::Free { .. } => None,
        }
    }

    fn len(&self) -> usize {
        match self {
            BiharmonicSide::Clamped { value, .. } | BiharmonicSide::Hinged { value, .. } => value.len(),
            BiharmonicSide::Free { d1, .. } => d1.len(),
        }
    }
}

/// Biharmonic problem Δ²u = rhs with two conditions per side.
#[derive(Debug, Clone)]
pub struct BiharmonicProblem {
    pub rhs: ScalarField,
    pub x0: BiharmonicSide,
    pub xl: BiharmonicSide,
    pub y0: BiharmonicSide,
    pub y2: BiharmonicSide,
}

/// Linear combination of real nodes plus a constant.
type Combo = (Vec<(usize, f64)>, f64);

impl BiharmonicProblem {
    fn side(&self, s: Side) -> &BiharmonicSide {
        match s {
            Side::X0 => &self.x0,
            Side::XL => &self.xl,
            Side::Y0 => &self.y0,
            Side::Y2 => &self.y2,
        }
    }

    /// Express the (possibly ghost) node (i, j) through real nodes. At most
    /// one of the indices lies outside the grid.
    fn resolve(&self, g: &Grid, i: isize, j: isize) -> Result<Combo> {
        let (nx, ny) = (g.nx as isize, g.ny as isize);
        let in_x = (0..=nx).contains(&i);
        let in_y = (0..=ny).contains(&j);
        if in_x && in_y {
            return Ok((vec![(g.idx(i as usize, j as usize), 1.0)], 0.0));
        }
        if !in_x && !in_y {
            return Err(Error::Singular("corner ghost node requested".into()));
        }
        // Work in the normal coordinate: position k along the normal, m along
        // the side, n the last index, h the spacing.
        let (side, k, m, n, h) = if !in_x {
            if i < 0 {
                (Side::X0, i, j as usize, nx, g.hx)
            } else {
                (Side::XL, i, j as usize, nx, g.hx)
            }
        } else if j < 0 {
            (Side::Y0, j, i as usize, ny, g.hy)
        } else {
            (Side::Y2, j, i as usize, ny, g.hy)
        };
        let node = |kk: isize| -> Result<Combo> {
            if side.is_x_side() {
                self.resolve(g, kk, j)
            } else {
                self.resolve(g, i, kk)
            }
        };
        let lo = matches!(side, Side::X0 | Side::Y0);
        // Offset from the boundary (1 or 2) and the mirror helpers.
        let off = if lo { -k } else { k - n };
        let at = |o: isize| if lo { o } else { n - o }; // o-th node inward... signed
        let sgn = if lo { 1.0 } else { -1.0 };
        let mut terms: Vec<(Combo, f64)> = Vec::new();
        let mut constant = 0.0;
        match (self.side(side), off) {
            (BiharmonicSide::Clamped { d1, .. }, 1) => {
                // u_{-1} = u_1 - 2h b (low side), u_{n+1} = u_{n-1} + 2h b (high side).
                terms.push((node(at(1))?, 1.0));
                constant -= sgn * 2.0 * h * d1[m];
            }
            (BiharmonicSide::Hinged { d2, .. }, 1) => {
                terms.push((node(at(1))?, -1.0));
                terms.push((node(at(0))?, 2.0));
                constant += h * h * d2[m];
            }
            (BiharmonicSide::Free { d1, .. }, 1) => {
                terms.push((node(at(1))?, 1.0));
                constant -= sgn * 2.0 * h * d1[m];
            }
            (BiharmonicSide::Free { d3, .. }, 2) => {
                // u_{-2} = u_2 - 2u_1 + 2u_{-1} - 2h³d, mirrored on the high side.
                terms.push((node(at(2))?, 1.0));
                terms.push((node(at(1))?, -2.0));
                terms.push((node(at(-1))?, 2.0));
                constant -= sgn * 2.0 * h * h * h * d3[m];
            }
            _ => {
                return Err(Error::Singular(format!(
                    "ghost node at depth {off} beyond side {} is not determined by its conditions",
                    side.name()
                )))
            }
        }
        let mut out: Vec<(usize, f64)> = Vec::new();
        for ((c, k0), w) in terms {
            constant += w * k0;
            out.extend(c.into_iter().map(|(n, v)| (n, v * w)));
        }
        Ok((out, constant))
    }

    /// Assemble the 13-point system.
    pub fn assemble(&self) -> Result<(CsrMatrix, Vec<f64>)> {
        let g = self.rhs.grid;
        for s in Side::ALL {
            if self.side(s).len() != g.side_len(s) {
                return Err(Error::InvalidParameter(format!(
                    "biharmonic data on side {} has {} entries, expected {}",
                    s.name(),
                    self.side(s).len(),
                    g.side_len(s)
                )));
            }
        }
        let (hx4, hy4, hxy) = (g.hx.powi(4), g.hy.powi(4), g.hx * g.hx * g.hy * g.hy);
        let w2 = [1.0, -2.0, 1.0];
        let w4 = [1.0, -4.0, 6.0, -4.0, 1.0];
        let mut rows = Vec::with_capacity(g.len());
        let mut b = vec![0.0; g.len()];
        for i in 0..=g.nx {
            for j in 0..=g.ny {
                let node = g.idx(i, j);
                // Value conditions: x-side first, then y-side.
                let mut value = None;
                for (on, s, m) in [
                    (i == 0, Side::X0, j),
                    (i == g.nx, Side::XL, j),
                    (j == 0, Side::Y0, i),
                    (j == g.ny, Side::Y2, i),
                ] {
                    if on && value.is_none() {
                        if let Some(v) = self.side(s).value() {
                            value = Some(v[m]);
                        }
                    }
                }
                if let Some(v) = value {
                    rows.push(vec![(node, 1.0)]);
                    b[node] = v;
                    continue;
                }
                let (ii, jj) = (i as isize, j as isize);
                let mut row: Vec<(usize, f64)> = Vec::with_capacity(25);
                let mut constant = 0.0;
                let mut add = |di: isize, dj: isize, w: f64| -> Result<()> {
                    let (c, k) = self.resolve(&g, ii + di, jj + dj)?;
                    constant += w * k;
                    row.extend(c.into_iter().map(|(n, v)| (n, v * w)));
                    Ok(())
                };
                for (a, &w) in w4.iter().enumerate() {
                    add(a as isize - 2, 0, w / hx4)?;
                    add(0, a as isize - 2, w / hy4)?;
                }
                for (a, &wa) in w2.iter().enumerate() {
                    for (c, &wc) in w2.iter().enumerate() {
                        add(a as isize - 1, c as isize - 1, 2.0 * wa * wc / hxy)?;
                    }
                }
                // Rows scaled by hx²hy² to balance them against the value rows.
                let sc = hxy;
                rows.push(row.into_iter().map(|(n, v)| (n, v * sc)).collect());
                b[node] = (self.rhs.values[node] - constant) * sc;
            }
        }
        Ok((CsrMatrix::from_rows(g.len(), rows), b))
    }
}

/// Solve a biharmonic problem directly.
pub fn solve_biharmonic(p: &BiharmonicProblem) -> Result<ScalarField> {
    let (m, b) = p.assemble()?;
    let lu = SparseLu::new(&m)?;
    let x = lu.solve_refined(&m, &b, 3)?;
    let res = m.matvec(&x);
    let scale = b.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    let r = res.iter().zip(&b).map(|(a, c)| (a - c).abs()).fold(0.0, f64::max);
    if r > 1e-6 * scale {
        return Err(Error::Singular(format!(
            "biharmonic solve residual {r:.3e} relative to data scale {scale:.3e}"
        )));
    }
    ScalarField::from_values(p.rhs.grid, x)
}

/// Diagnostic for the harmonic gauge field F: if div F = curl F = 0 and F
/// vanishes, the momentum equations are recovered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaugeReport {
    pub div: f64,
    pub curl: f64,
    pub norm: f64,
    pub tol: f64,
    pub harmonic: bool,
    pub pass: bool,
}

/// Max-norms of div F and curl F on interior nodes and of F itself against `tol`.
pub fn harmonic_gauge_check(f: &VectorField, tol: f64) -> GaugeReport {
    let div = grid::divergence(f).max_abs_interior();
    let curl = grid::curl2d(f).max_abs_interior();
    let norm = f.max_abs();
    GaugeReport {
        div,
        curl,
        norm,
        tol,
        harmonic: div <= tol && curl <= tol,
        pass: div <= tol && curl <= tol && norm <= tol,
    }
}
