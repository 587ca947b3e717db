//! Compressed-row sparse matrices and symmetric solvers.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_unstable_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut cols = Vec::with_capacity(sorted.len());
        let mut vals: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of range");
            if last == Some((r, c)) {
                *vals.last_mut().expect("non-empty") += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..nrows {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_triplets(n, n, &[])
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        let t: Vec<_> = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(d.len(), d.len(), &t)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    /// Dimension of a square matrix.
    pub fn dim(&self) -> usize {
        debug_assert_eq!(self.nrows, self.ncols);
        self.nrows
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        (0..self.nrows)
            .flat_map(|i| self.row(i).map(move |(j, v)| (i, j, v)))
            .collect()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// xᵀ A y
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        (0..self.nrows)
            .map(|i| x[i] * self.row(i).map(|(j, v)| v * y[j]).sum::<f64>())
            .sum()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// self + s * other (patterns are merged).
    pub fn add_scaled(&self, other: &CsrMatrix, s: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut t = self.triplets();
        t.extend(other.triplets().into_iter().map(|(i, j, v)| (i, j, s * v)));
        CsrMatrix::from_triplets(self.nrows, self.ncols, &t)
    }

    pub fn add_diagonal(&self, d: &[f64]) -> CsrMatrix {
        self.add_scaled(&CsrMatrix::from_diagonal(d), 1.0)
    }

    pub fn scaled(&self, s: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.vals.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// max |a_ij - a_ji| relative to max |a_ij|.
    pub fn symmetry_error(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut err = 0.0f64;
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                err = err.max((v - self.get(j, i)).abs());
            }
        }
        err / scale
    }

    /// Rows `rows` and columns `cols` of the matrix, renumbered.
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> CsrMatrix {
        let mut col_map = vec![usize::MAX; self.ncols];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut t = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            for (c, v) in self.row(r) {
                if col_map[c] != usize::MAX {
                    t.push((ri, col_map[c], v));
                }
            }
        }
        CsrMatrix::from_triplets(rows.len(), cols.len(), &t)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows, self.ncols);
        for i in 0..self.nrows {
            for (j, v) in self.row(i) {
                d[(i, j)] += v;
            }
        }
        d
    }

    /// Adjacency lists of the symmetric pattern (diagonal excluded).
    fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nrows];
        for i in 0..self.nrows {
            for (j, _) in self.row(i) {
                if i != j {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct CgReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub used_dense_fallback: bool,
}

/// Solves `A x = b` for symmetric positive-definite `A` by Jacobi-preconditioned
/// conjugate gradients to `‖Ax − b‖ ≤ tol‖b‖`. If the iteration stalls and the
/// dimension is at most 2000, a dense Cholesky solve is used instead.
pub fn solve_spd(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    solve_spd_report(a, b, tol).map(|(x, _)| x)
}

pub fn solve_spd_report(a: &CsrMatrix, b: &[f64], tol: f64) -> Result<(Vec<f64>, CgReport)> {
    let n = a.dim();
    if b.len() != n {
        return Err(Error::SizeMismatch {
            what: "right-hand side",
            expected: n,
            found: b.len(),
        });
    }
    if !(tol > 0.0 && tol <= 1e-6) {
        return Err(Error::InvalidParameter(format!(
            "CG tolerance must lie in (0, 1e-6], got {tol}"
        )));
    }
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((
            vec![0.0; n],
            CgReport {
                iterations: 0,
                relative_residual: 0.0,
                used_dense_fallback: false,
            },
        ));
    }
    let diag = a.diagonal();
    if let Some(&d) = diag.iter().find(|d| !(**d > 0.0)) {
        return Err(Error::Indefinite {
            iteration: 0,
            curvature: d,
        });
    }
    let max_iter = 10 * n;
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut rel = 1.0;
    for it in 0..max_iter {
        a.mul_vec_into(&p, &mut ap);
        let curv = dot(&p, &ap);
        if !(curv > 0.0) {
            return Err(Error::Indefinite {
                iteration: it,
                curvature: curv,
            });
        }
        let alpha = rz / curv;
        for k in 0..n {
            x[k] += alpha * p[k];
            r[k] -= alpha * ap[k];
        }
        rel = norm(&r) / bnorm;
        if rel <= tol {
            // Confirm with the true residual; recursive residuals drift.
            let ax = a.mul_vec(&x);
            let true_rel = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / bnorm;
            if true_rel <= tol {
                return Ok((
                    x,
                    CgReport {
                        iterations: it + 1,
                        relative_residual: true_rel,
                        used_dense_fallback: false,
                    },
                ));
            }
            r = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
        }
        for k in 0..n {
            z[k] = r[k] / diag[k];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for k in 0..n {
            p[k] = z[k] + beta * p[k];
        }
    }
    if n <= 2000 {
        let x = dense_cholesky_solve(a, b)?;
        let ax = a.mul_vec(&x);
        let rel = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() / bnorm;
        return Ok((
            x,
            CgReport {
                iterations: max_iter,
                relative_residual: rel,
                used_dense_fallback: true,
            },
        ));
    }
    Err(Error::NotConverged {
        what: "preconditioned conjugate gradient",
        iterations: max_iter,
        residual: rel,
    })
}

fn dense_cholesky_solve(a: &CsrMatrix, b: &[f64]) -> Result<Vec<f64>> {
    let chol = a.to_dense().cholesky().ok_or(Error::Indefinite {
        iteration: 0,
        curvature: f64::NAN,
    })?;
    Ok(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Reverse Cuthill–McKee ordering: `perm[new] = old`.
pub fn reverse_cuthill_mckee(a: &CsrMatrix) -> Vec<usize> {
    let n = a.nrows();
    let adj = a.adjacency();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| (degree[i], i))
            .expect("unvisited vertex");
        let start = pseudo_peripheral(seed, &adj);
        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&w| !visited[w]).collect();
            nbrs.sort_by_key(|&w| (degree[w], w));
            for w in nbrs {
                visited[w] = true;
                queue.push_back(w);
            }
        }
    }
    order.reverse();
    order
}

fn bfs_levels(start: usize, adj: &[Vec<usize>]) -> (usize, usize) {
    let mut dist = vec![usize::MAX; adj.len()];
    dist[start] = 0;
    let mut queue = VecDeque::from([start]);
    let mut last = start;
    while let Some(v) = queue.pop_front() {
        last = v;
        for &w in &adj[v] {
            if dist[w] == usize::MAX {
                dist[w] = dist[v] + 1;
                queue.push_back(w);
            }
        }
    }
    (last, dist[last])
}

fn pseudo_peripheral(seed: usize, adj: &[Vec<usize>]) -> usize {
    let (mut v, mut ecc) = bfs_levels(seed, adj);
    for _ in 0..8 {
        let (w, e) = bfs_levels(v, adj);
        if e <= ecc {
            break;
        }
        v = w;
        ecc = e;
    }
    v
}

/// Envelope (profile) LDLᵀ factorization of a symmetric matrix under a
/// reverse Cuthill–McKee ordering. No pivoting: suited to positive-definite
/// and mildly indefinite systems whose leading minors stay nonsingular.
#[derive(Debug, Clone)]
pub struct EnvelopeLdl {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    lower: Vec<f64>,
    d: Vec<f64>,
}

impl EnvelopeLdl {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let perm = reverse_cuthill_mckee(a);
        let mut inv = vec![0usize; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let mut first: Vec<usize> = (0..n).collect();
        for old in 0..n {
            let i = inv[old];
            for (c, _) in a.row(old) {
                let j = inv[c];
                if j < i {
                    first[i] = first[i].min(j);
                } else if i < j {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut offset = vec![0usize; n + 1];
        for i in 0..n {
            offset[i + 1] = offset[i] + (i - first[i]);
        }
        let mut lower = vec![0.0; offset[n]];
        let mut d = vec![0.0; n];
        for old in 0..n {
            let i = inv[old];
            for (c, v) in a.row(old) {
                let j = inv[c];
                if j < i {
                    lower[offset[i] + j - first[i]] += v;
                } else if j == i {
                    d[i] += v;
                }
            }
        }
        let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        // Row-by-row: L[i, j] = (a_ij − Σ_k L_ik D_k L_jk) / D_j.
        let mut work = vec![0.0; n];
        for i in 0..n {
            let fi = first[i];
            for j in fi..i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let row_j = &lower[offset[j]..offset[j + 1]];
                let mut s = lower[offset[i] + j - fi];
                for k in k0..j {
                    s -= work[k] * row_j[k - fj];
                }
                // work[k] holds L_ik D_k for k < j.
                let lij = s / d[j];
                work[j] = s;
                lower[offset[i] + j - fi] = lij;
            }
            let mut di = d[i];
            for j in fi..i {
                di -= work[j] * lower[offset[i] + j - fi];
            }
            if !(di.abs() > 1e-14 * scale) {
                return Err(Error::Singular(format!(
                    "zero pivot {di:e} at position {i} of {n}"
                )));
            }
            d[i] = di;
        }
        Ok(Self {
            perm,
            first,
            offset,
            lower,
            d,
        })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Number of negative pivots, which equals the number of negative
    /// eigenvalues of the factored matrix (Sylvester's law of inertia).
    pub fn negative_pivots(&self) -> usize {
        self.d.iter().filter(|&&v| v < 0.0).count()
    }

    pub fn is_positive_definite(&self) -> bool {
        self.negative_pivots() == 0
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut y: Vec<f64> = self.perm.iter().map(|&old| b[old]).collect();
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.lower[self.offset[i]..self.offset[i + 1]];
            let mut s = y[i];
            for (k, l) in row.iter().enumerate() {
                s -= l * y[fi + k];
            }
            y[i] = s;
        }
        for i in 0..n {
            y[i] /= self.d[i];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let yi = y[i];
            let row = &self.lower[self.offset[i]..self.offset[i + 1]];
            for (k, l) in row.iter().enumerate() {
                y[fi + k] -= l * yi;
            }
        }
        let mut x = vec![0.0; n];
        for (new, &old) in self.perm.iter().enumerate() {
            x[old] = y[new];
        }
        x
    }
}

/// Linear solver backend for symmetric systems.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverKind {
    /// Envelope LDLᵀ under RCM ordering; factor once, solve many times.
    #[default]
    Direct,
    /// Jacobi-preconditioned CG to the given relative residual.
    Pcg { tol: f64 },
}

#[derive(Debug, Clone)]
enum Backend {
    Ldl(EnvelopeLdl),
    Pcg(f64),
}

/// A symmetric matrix prepared for repeated solves.
#[derive(Debug, Clone)]
pub struct SymmetricSolver {
    matrix: CsrMatrix,
    backend: Backend,
}

impl SymmetricSolver {
    /// Prepares a positive-definite solve; indefiniteness is reported as an error.
    pub fn spd(matrix: CsrMatrix, kind: SolverKind) -> Result<Self> {
        let backend = match kind {
            SolverKind::Direct => {
                let f = EnvelopeLdl::factor(&matrix)?;
                if !f.is_positive_definite() {
                    let curvature = f.d.iter().copied().fold(f64::INFINITY, f64::min);
                    return Err(Error::Indefinite {
                        iteration: 0,
                        curvature,
                    });
                }
                Backend::Ldl(f)
            }
            SolverKind::Pcg { tol } => Backend::Pcg(tol),
        };
        Ok(Self { matrix, backend })
    }

    /// Prepares a direct solve of a symmetric, possibly indefinite, matrix.
    pub fn symmetric(matrix: CsrMatrix) -> Result<Self> {
        let f = EnvelopeLdl::factor(&matrix)?;
        Ok(Self {
            matrix,
            backend: Backend::Ldl(f),
        })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        match &self.backend {
            Backend::Ldl(f) => {
                if b.len() != f.dim() {
                    return Err(Error::SizeMismatch {
                        what: "right-hand side",
                        expected: f.dim(),
                        found: b.len(),
                    });
                }
                Ok(f.solve(b))
            }
            Backend::Pcg(tol) => solve_spd(&self.matrix, b, *tol),
        }
    }
}
