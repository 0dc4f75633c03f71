//! Compressed-row symmetric matrices, Jacobi-preconditioned conjugate
//! gradients, and a sparse Cholesky wrapper.

use std::io::{self, Write};

use faer::prelude::*;
use faer::sparse::SparseColMat;
use faer::{Mat, Side};

use crate::error::SolveError;

/// Square sparse matrix in compressed-row layout with sorted column indices.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Builds the pattern from element connectivities, values zeroed.
    pub fn from_elements<'a, I>(n: usize, elements: I) -> Self
    where
        I: IntoIterator<Item = &'a [usize]>,
    {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for el in elements {
            for &a in el {
                for &b in el {
                    rows[a].push(b);
                }
            }
        }
        for (i, r) in rows.iter_mut().enumerate() {
            r.push(i);
            r.sort_unstable();
            r.dedup();
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        for r in rows {
            cols.extend_from_slice(&r);
            row_ptr.push(cols.len());
        }
        let vals = vec![0.0; cols.len()];
        Self { n, row_ptr, cols, vals }
    }

    /// Diagonal matrix.
    pub fn diagonal(d: &[f64]) -> Self {
        let n = d.len();
        Self { n, row_ptr: (0..=n).collect(), cols: (0..n).collect(), vals: d.to_vec() }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.cols[lo..hi].binary_search(&j).ok().map(|p| lo + p)
    }

    /// Adds `v` at `(i, j)`; the entry must be in the pattern.
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let p = self.position(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside pattern"));
        self.vals[p] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.vals[p])
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diag(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut s = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[p] * x[self.cols[p]];
            }
            y[i] = s;
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec(x, &mut y);
        y
    }

    pub fn quad_form(&self, x: &[f64]) -> f64 {
        dot(x, &self.apply(x))
    }

    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.apply(y))
    }

    /// Rows and columns listed in `keep` (ascending), renumbered in that order.
    pub fn principal_submatrix(&self, keep: &[usize]) -> SparseSym {
        let mut index = vec![usize::MAX; self.n];
        for (r, &i) in keep.iter().enumerate() {
            index[i] = r;
        }
        let mut row_ptr = Vec::with_capacity(keep.len() + 1);
        row_ptr.push(0);
        let (mut cols, mut vals) = (Vec::new(), Vec::new());
        for &i in keep {
            for (j, v) in self.row(i) {
                if index[j] != usize::MAX {
                    cols.push(index[j]);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        SparseSym { n: keep.len(), row_ptr, cols, vals }
    }

    /// `self + alpha * other`, with merged pattern.
    pub fn add(&self, other: &SparseSym, alpha: f64) -> SparseSym {
        assert_eq!(self.n, other.n, "dimension mismatch");
        let mut row_ptr = Vec::with_capacity(self.n + 1);
        row_ptr.push(0);
        let mut cols = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut vals = Vec::with_capacity(cols.capacity());
        for i in 0..self.n {
            let (mut p, pe) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let (mut q, qe) = (other.row_ptr[i], other.row_ptr[i + 1]);
            while p < pe || q < qe {
                let cp = if p < pe { self.cols[p] } else { usize::MAX };
                let cq = if q < qe { other.cols[q] } else { usize::MAX };
                if cp == cq {
                    cols.push(cp);
                    vals.push(self.vals[p] + alpha * other.vals[q]);
                    p += 1;
                    q += 1;
                } else if cp < cq {
                    cols.push(cp);
                    vals.push(self.vals[p]);
                    p += 1;
                } else {
                    cols.push(cq);
                    vals.push(alpha * other.vals[q]);
                    q += 1;
                }
            }
            row_ptr.push(cols.len());
        }
        SparseSym { n: self.n, row_ptr, cols, vals }
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }

    /// Writes `row col value` triplets, one per line.
    pub fn write_triplets<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{} {} {}", self.n, self.n, self.nnz())?;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                writeln!(w, "{i} {j} {v:.17e}")?;
            }
        }
        Ok(())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOptions {
    pub rel_tol: f64,
    /// Iteration cap as a multiple of the dimension.
    pub max_iter_factor: usize,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-9, max_iter_factor: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub rel_residual: f64,
}

/// Solves `a x = b` by conjugate gradients with the diagonal of `a` as
/// preconditioner, starting from the contents of `x`.
pub fn cg_jacobi(a: &SparseSym, b: &[f64], x: &mut [f64], opts: CgOptions) -> Result<CgStats, SolveError> {
    let n = a.dim();
    if b.len() != n || x.len() != n {
        return Err(SolveError::Dimension(format!("matrix {n}, rhs {}, x {}", b.len(), x.len())));
    }
    let diag = a.diag();
    let mut inv = Vec::with_capacity(n);
    for (row, &v) in diag.iter().enumerate() {
        if !(v > 0.0) {
            return Err(SolveError::NonPositiveDiagonal { row, value: v });
        }
        inv.push(1.0 / v);
    }
    let bnorm = norm2(b);
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(CgStats { iterations: 0, rel_residual: 0.0 });
    }
    let mut r = a.apply(x);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut q = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let max_iter = opts.max_iter_factor.saturating_mul(n).max(1);
    let mut res = norm2(&r) / bnorm;
    let mut it = 0;
    while res > opts.rel_tol {
        if it >= max_iter {
            return Err(SolveError::NotConverged { iterations: it, residual: res });
        }
        a.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if !(pq > 0.0) {
            return Err(SolveError::NotConverged { iterations: it, residual: res });
        }
        let alpha = rz / pq;
        let mut rr = 0.0;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
            z[i] = r[i] * inv[i];
            rr += r[i] * r[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
        res = rr.sqrt() / bnorm;
    }
    Ok(CgStats { iterations: it, rel_residual: res })
}

/// Sparse Cholesky factor of a symmetric positive definite matrix (fill-reducing ordering).
pub struct Cholesky {
    n: usize,
    factor: faer::sparse::linalg::solvers::Cholesky<usize, f64>,
}

impl Cholesky {
    pub fn new(a: &SparseSym) -> Result<Self, SolveError> {
        let n = a.dim();
        let mut triplets = Vec::with_capacity(a.nnz());
        for i in 0..n {
            triplets.extend(a.row(i).filter(|&(j, _)| j <= i).map(|(j, v)| (i, j, v)));
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
            .map_err(|e| SolveError::Dimension(format!("sparse pattern: {e:?}")))?;
        let factor = mat.sp_cholesky(Side::Lower).map_err(|_| SolveError::NotPositiveDefinite)?;
        Ok(Self { n, factor })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves for every column of `cols` at once.
    pub fn solve_columns(&self, cols: &mut [Vec<f64>]) {
        let mut b = Mat::<f64>::from_fn(self.n, cols.len(), |i, j| cols[j][i]);
        self.factor.solve_in_place(b.as_mut());
        for (j, c) in cols.iter_mut().enumerate() {
            for (i, v) in c.iter_mut().enumerate() {
                *v = b.read(i, j);
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut cols = vec![b.to_vec()];
        self.solve_columns(&mut cols);
        cols.pop().expect("one column")
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize, shift: f64) -> SparseSym {
        let els: Vec<[usize; 2]> = (0..n - 1).map(|i| [i, i + 1]).collect();
        let mut a = SparseSym::from_elements(n, els.iter().map(|e| &e[..]));
        for e in &els {
            a.add_to(e[0], e[0], 1.0);
            a.add_to(e[1], e[1], 1.0);
            a.add_to(e[0], e[1], -1.0);
            a.add_to(e[1], e[0], -1.0);
        }
        for i in 0..n {
            a.add_to(i, i, shift);
        }
        a
    }

    #[test]
    fn principal_submatrix_keeps_only_inner_couplings() {
        let a = laplace_1d(6, 0.5);
        let keep = [1, 2, 4];
        let s = a.principal_submatrix(&keep);
        assert_eq!(s.dim(), 3);
        assert_eq!(s.nnz(), 5);
        for (r, &i) in keep.iter().enumerate() {
            for (c, &j) in keep.iter().enumerate() {
                assert_eq!(s.get(r, c), a.get(i, j));
            }
        }
    }

    #[test]
    fn cg_solves_shifted_chain() {
        let a = laplace_1d(50, 0.1);
        let xe: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.apply(&xe);
        let mut x = vec![0.0; 50];
        let st = cg_jacobi(&a, &b, &mut x, CgOptions::default()).unwrap();
        assert!(st.rel_residual <= 1e-9);
        for (u, v) in x.iter().zip(&xe) {
            assert!((u - v).abs() < 1e-6);
        }
    }

    #[test]
    fn singular_system_reports_failure() {
        let a = laplace_1d(10, 0.0);
        let b = vec![1.0; 10];
        let mut x = vec![0.0; 10];
        let err = cg_jacobi(&a, &b, &mut x, CgOptions { rel_tol: 1e-12, max_iter_factor: 10 });
        assert!(err.is_err());
    }

    #[test]
    fn zero_diagonal_rejected() {
        let a = SparseSym::diagonal(&[1.0, 0.0]);
        let mut x = vec![0.0; 2];
        assert!(matches!(
            cg_jacobi(&a, &[1.0, 1.0], &mut x, CgOptions::default()),
            Err(SolveError::NonPositiveDiagonal { row: 1, .. })
        ));
    }

    #[test]
    fn merge_add() {
        let a = laplace_1d(4, 0.0);
        let mut b = SparseSym::from_elements(4, [&[0usize, 3][..]]);
        b.add_to(0, 3, 2.0);
        b.add_to(3, 0, 2.0);
        let c = a.add(&b, 0.5);
        assert_eq!(c.get(0, 3), 1.0);
        assert_eq!(c.get(0, 1), -1.0);
        assert_eq!(c.asymmetry(), 0.0);
    }
}
