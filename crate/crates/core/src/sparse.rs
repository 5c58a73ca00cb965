//! Minimal sparse-matrix toolkit: CSR assembly and algebra, a direct sparse
//! LU backend (faer), restarted GMRES for matrix-free operators and a
//! tridiagonal solver for the column sweeps of the transport step.

use crate::error::{Error, Result};
use faer::prelude::SpSolver;
use faer::sparse::SparseColMat;

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, trip: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(r, c, v) in trip {
            debug_assert!(r < nrows && c < ncols);
            rows[r].push((c, v));
        }
        Self::from_rows(ncols, rows)
    }

    /// Assemble from per-row (col, value) lists.
    pub fn from_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let mut k = 0;
            while k < row.len() {
                let c = row[k].0;
                let mut s = 0.0;
                while k < row.len() && row[k].0 == c {
                    s += row[k].1;
                    k += 1;
                }
                if s != 0.0 {
                    indices.push(c);
                    data.push(s);
                }
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            data,
        }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix {
            nrows: n,
            ncols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            data: vec![1.0; n],
        }
    }

    /// Entries of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b]
            .iter()
            .copied()
            .zip(self.data[a..b].iter().copied())
    }

    pub fn row_vec(&self, r: usize) -> Vec<(usize, f64)> {
        self.row(r).collect()
    }

    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    /// y = A x.
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols);
        (0..self.nrows)
            .map(|r| self.row(r).map(|(c, v)| v * x[c]).sum())
            .collect()
    }

    /// C = A B.
    pub fn matmul(&self, b: &CsrMatrix) -> CsrMatrix {
        assert_eq!(self.ncols, b.nrows);
        let mut acc = vec![0.0; b.ncols];
        let mut mark = vec![usize::MAX; b.ncols];
        let mut rows = Vec::with_capacity(self.nrows);
        for r in 0..self.nrows {
            let mut cols = Vec::new();
            for (k, a) in self.row(r) {
                for (c, v) in b.row(k) {
                    if mark[c] != r {
                        mark[c] = r;
                        acc[c] = 0.0;
                        cols.push(c);
                    }
                    acc[c] += a * v;
                }
            }
            rows.push(cols.into_iter().map(|c| (c, acc[c])).collect());
        }
        CsrMatrix::from_rows(b.ncols, rows)
    }

    /// a A + b B.
    pub fn lin_comb(a: f64, ma: &CsrMatrix, b: f64, mb: &CsrMatrix) -> CsrMatrix {
        assert_eq!((ma.nrows, ma.ncols), (mb.nrows, mb.ncols));
        let rows = (0..ma.nrows)
            .map(|r| {
                ma.row(r)
                    .map(|(c, v)| (c, a * v))
                    .chain(mb.row(r).map(|(c, v)| (c, b * v)))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(ma.ncols, rows)
    }

    /// diag(d) A.
    pub fn scale_rows(&self, d: &[f64]) -> CsrMatrix {
        let mut out = self.clone();
        for r in 0..self.nrows {
            for k in out.indptr[r]..out.indptr[r + 1] {
                out.data[k] *= d[r];
            }
        }
        out
    }

    /// Replace selected rows.
    pub fn with_rows_replaced(&self, replacements: &[(usize, Vec<(usize, f64)>)]) -> CsrMatrix {
        let mut rows: Vec<Vec<(usize, f64)>> = (0..self.nrows).map(|r| self.row_vec(r)).collect();
        for (r, row) in replacements {
            rows[*r] = row.clone();
        }
        CsrMatrix::from_rows(self.ncols, rows)
    }

    /// Kronecker product A ⊗ B.
    pub fn kron(a: &CsrMatrix, b: &CsrMatrix) -> CsrMatrix {
        let mut rows = Vec::with_capacity(a.nrows * b.nrows);
        for ra in 0..a.nrows {
            for rb in 0..b.nrows {
                let mut row = Vec::new();
                for (ca, va) in a.row(ra) {
                    for (cb, vb) in b.row(rb) {
                        row.push((ca * b.ncols + cb, va * vb));
                    }
                }
                rows.push(row);
            }
        }
        CsrMatrix::from_rows(a.ncols * b.ncols, rows)
    }
}

/// Factorised square sparse matrix (LU with fill-reducing ordering).
pub struct SparseLu {
    n: usize,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl std::fmt::Debug for SparseLu {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "SparseLu {{ n: {} }}", self.n)
    }
}

impl SparseLu {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Singular(format!(
                "matrix is {} x {}, not square",
                a.nrows, a.ncols
            )));
        }
        let mut trip = Vec::with_capacity(a.nnz());
        for r in 0..a.nrows {
            for (c, v) in a.row(r) {
                trip.push((r, c, v));
            }
        }
        let m = SparseColMat::<usize, f64>::try_new_from_triplets(a.nrows, a.ncols, &trip)
            .map_err(|e| Error::Singular(format!("assembly failed: {e:?}")))?;
        let lu = m
            .sp_lu()
            .map_err(|e| Error::Singular(format!("LU factorisation failed: {e:?}")))?;
        Ok(SparseLu { n: a.nrows, lu })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solve A x = b.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        assert_eq!(b.len(), self.n);
        let mut x = b.to_vec();
        {
            let xm = faer::mat::from_column_major_slice_mut::<f64>(&mut x, self.n, 1);
            self.lu.solve_in_place(xm);
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Singular(
                "direct solve produced non-finite values".into(),
            ));
        }
        Ok(x)
    }
}

impl SparseLu {
    /// Solve A x = b followed by `steps` rounds of iterative refinement
    /// against the unfactored matrix `a`.
    pub fn solve_refined(&self, a: &CsrMatrix, b: &[f64], steps: usize) -> Result<Vec<f64>> {
        let mut x = self.solve(b)?;
        for _ in 0..steps {
            let ax = a.matvec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.solve(&r)?;
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
        }
        Ok(x)
    }
}

/// Outcome of a GMRES solve.
#[derive(Debug, Clone)]
pub struct GmresInfo {
    pub iterations: usize,
    pub relative_residual: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Restarted GMRES (modified Gram-Schmidt, Givens rotations) for `A x = b`
/// with a matrix-free operator, starting from `x0`.
pub fn gmres(
    op: &mut dyn FnMut(&[f64]) -> Result<Vec<f64>>,
    b: &[f64],
    x0: &[f64],
    rtol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<(Vec<f64>, GmresInfo)> {
    let n = b.len();
    let bnorm = norm2(b);
    let mut x = x0.to_vec();
    if bnorm == 0.0 && norm2(&x) == 0.0 {
        return Ok((
            x,
            GmresInfo {
                iterations: 0,
                relative_residual: 0.0,
            },
        ));
    }
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let mut total = 0;
    loop {
        let ax = op(&x)?;
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect();
        let beta = norm2(&r);
        if beta / scale <= rtol {
            return Ok((
                x,
                GmresInfo {
                    iterations: total,
                    relative_residual: beta / scale,
                },
            ));
        }
        if total >= max_iter {
            return Err(Error::NoConvergence(format!(
                "GMRES reached {max_iter} iterations, relative residual {:.3e}",
                beta / scale
            )));
        }
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<f64>> = vec![r.iter().map(|v| v / beta).collect()];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = op(&basis[k])?;
            for (i, bi) in basis.iter().enumerate() {
                let hik = dot(&w, bi);
                h[i][k] = hik;
                for (wj, bj) in w.iter_mut().zip(bi) {
                    *wj -= hik * bj;
                }
            }
            let hn = norm2(&w);
            h[k + 1][k] = hn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                cs[k] = 1.0;
                sn[k] = 0.0;
            } else {
                cs[k] = h[k][k] / denom;
                sn[k] = h[k + 1][k] / denom;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            total += 1;
            k_used = k + 1;
            let happy = hn <= 1e-300;
            if !happy {
                basis.push(w.iter().map(|v| v / hn).collect());
            }
            if g[k + 1].abs() / scale <= rtol * 0.5 || happy {
                break;
            }
        }
        // Back substitution for the Krylov coefficients.
        let mut yk = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * yk[j];
            }
            yk[i] = s / h[i][i];
        }
        for (i, yi) in yk.iter().enumerate() {
            for (xj, bj) in x.iter_mut().zip(&basis[i]) {
                *xj += yi * bj;
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NoConvergence("GMRES produced non-finite iterate".into()));
        }
        let _ = n;
    }
}

/// Solve a tridiagonal system (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut piv = diag[0];
    if piv.abs() < 1e-300 {
        return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
    }
    c[0] = upper[0] / piv;
    d[0] = rhs[0] / piv;
    for k in 1..n {
        piv = diag[k] - lower[k] * c[k - 1];
        if piv.abs() < 1e-300 {
            return Err(Error::Singular("zero pivot in tridiagonal solve".into()));
        }
        c[k] = if k + 1 < n { upper[k] / piv } else { 0.0 };
        d[k] = (rhs[k] - lower[k] * d[k - 1]) / piv;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        x[k] = d[k] - c[k] * x[k + 1];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i > 0 {
                t.push((i, i - 1, -1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = CsrMatrix::from_triplets(2, 2, &[(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.matvec(&[1.0, 0.0]), vec![3.0, 0.0]);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = lap1d(5);
        let c = a.matmul(&a);
        let x = [1.0, -2.0, 0.5, 3.0, 1.0];
        let lhs = c.matvec(&x);
        let rhs = a.matvec(&a.matvec(&x));
        for (l, r) in lhs.iter().zip(&rhs) {
            assert!((l - r).abs() < 1e-12);
        }
    }

    #[test]
    fn kron_identity() {
        let a = lap1d(3);
        let i = CsrMatrix::identity(2);
        let k = CsrMatrix::kron(&a, &i);
        assert_eq!(k.nrows, 6);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = k.matvec(&x);
        assert_eq!(y[0], 2.0 * 1.0 - 3.0);
    }

    #[test]
    fn lu_solves() {
        let a = lap1d(50);
        let lu = SparseLu::new(&a).unwrap();
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        let b = a.matvec(&x);
        let s = lu.solve(&b).unwrap();
        for (p, q) in s.iter().zip(&x) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric() {
        let n = 40;
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 3.0));
            if i > 0 {
                t.push((i, i - 1, -1.5));
            }
            if i + 1 < n {
                t.push((i, i + 1, -0.5));
            }
        }
        let a = CsrMatrix::from_triplets(n, n, &t);
        let x: Vec<f64> = (0..n).map(|i| 1.0 + i as f64 * 0.1).collect();
        let b = a.matvec(&x);
        let mut op = |v: &[f64]| Ok(a.matvec(v));
        let (s, info) = gmres(&mut op, &b, &vec![0.0; n], 1e-12, 10, 500).unwrap();
        assert!(info.relative_residual <= 1e-12);
        for (p, q) in s.iter().zip(&x) {
            assert!((p - q).abs() < 1e-9);
        }
    }

    #[test]
    fn tridiagonal_matches_lu() {
        let n = 12;
        let lower = vec![-1.0; n];
        let diag = vec![4.0; n];
        let upper = vec![-2.0; n];
        let x: Vec<f64> = (0..n).map(|i| (i as f64).cos()).collect();
        let mut b = vec![0.0; n];
        for i in 0..n {
            b[i] = diag[i] * x[i];
            if i > 0 {
                b[i] += lower[i] * x[i - 1];
            }
            if i + 1 < n {
                b[i] += upper[i] * x[i + 1];
            }
        }
        let s = solve_tridiagonal(&lower, &diag, &upper, &b).unwrap();
        for (p, q) in s.iter().zip(&x) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
