//! Compressed sparse row matrices, triplet assembly, a restarted GMRES
//! solver with diagonal preconditioning, and a small dense LU reference
//! solver used for desk-scale cross-checks.

use crate::{Error, Result};

/// Accumulates (row, col, value) triplets; duplicates are summed on build.
pub struct CooBuilder {
    n: usize,
    triplets: Vec<(usize, usize, f64)>,
}

impl CooBuilder {
    pub fn new(n: usize) -> Self {
        CooBuilder {
            n,
            triplets: Vec::new(),
        }
    }

    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        debug_assert!(row < self.n && col < self.n);
        self.triplets.push((row, col, value));
    }

    /// Sorts, merges duplicates, and produces CSR storage. Entries that sum
    /// to exactly zero are kept so that structural zeros (e.g. the diagonal
    /// pair of a square split into two right triangles) remain addressable.
    pub fn build(mut self) -> CsrMatrix {
        self.triplets
            .sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0usize; self.n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in self.triplets {
            if last == Some((r, c)) {
                *values.last_mut().expect("entry exists when key repeats") += v;
            } else {
                // per-row counts first; prefix-summed into offsets below
                row_ptr[r + 1] += 1;
                col_idx.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            n: self.n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Square sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entry (i, j); 0.0 when outside the sparsity pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => 0.0,
        }
    }

    /// (column, value) pairs of row i.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// y = A x
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            y[i] = acc;
        }
    }

    /// xᵀ A x (quadratic form).
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.n {
            let mut row = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                row += self.values[k] * x[self.col_idx[k]];
            }
            acc += x[i] * row;
        }
        acc
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Largest off-diagonal entry (not absolute value); `f64::NEG_INFINITY`
    /// for a diagonal-only matrix.
    pub fn max_offdiagonal(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                if j != i && v > m {
                    m = v;
                }
            }
        }
        m
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; self.n]; self.n];
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[i][j] = v;
            }
        }
        a
    }

    pub fn has_nan(&self) -> bool {
        self.values.iter().any(|v| !v.is_finite())
    }
}

/// Outcome of an iterative solve: solution, iterations used, final relative
/// residual ‖b − Ax‖ / max(‖b‖, 1).
pub struct SolveStats {
    pub x: Vec<f64>,
    pub iters: usize,
    pub residual: f64,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Restarted GMRES with right diagonal (Jacobi) preconditioning.
///
/// Right preconditioning keeps the least-squares residual equal to the true
/// residual, so the convergence test needs no extra matrix applications
/// inside a cycle. The true residual is still re-verified on exit.
pub fn gmres(a: &CsrMatrix, b: &[f64], tol: f64, max_iter: usize, restart: usize) -> Result<SolveStats> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::InvalidArgument(format!(
            "rhs length {} does not match matrix size {}",
            b.len(),
            n
        )));
    }
    if a.has_nan() || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "non-finite entries in linear system".into(),
        ));
    }
    let scale = norm2(b).max(1.0);
    let mut x = vec![0.0; n];
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok(SolveStats {
            x,
            iters: 0,
            residual: 0.0,
        });
    }
    // Jacobi weights; diagonal is strictly positive for the step systems
    // (β·w_n plus a nonnegative stiffness diagonal), guard anyway.
    let inv_diag: Vec<f64> = a
        .diagonal()
        .iter()
        .map(|&d| if d.abs() > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let m = restart.max(1);
    let mut iters = 0usize;
    let mut r = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    loop {
        // r = b - A x
        a.mul_vec(&x, &mut r);
        for i in 0..n {
            r[i] = b[i] - r[i];
        }
        let beta = norm2(&r);
        if beta / scale <= tol {
            return Ok(SolveStats {
                x,
                iters,
                residual: beta / scale,
            });
        }
        if iters >= max_iter {
            return Err(Error::SolverFailure {
                residual: beta / scale,
                iters,
                tol,
            });
        }

        // Arnoldi on A·D⁻¹ with modified Gram-Schmidt and Givens rotations.
        let mut v: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        v.push(r.iter().map(|x| x / beta).collect());
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k_used = 0;

        for k in 0..m {
            if iters >= max_iter {
                break;
            }
            iters += 1;
            for i in 0..n {
                tmp[i] = inv_diag[i] * v[k][i];
            }
            let mut w = vec![0.0; n];
            a.mul_vec(&tmp, &mut w);
            for i in 0..=k {
                let hik: f64 = w.iter().zip(v[i].iter()).map(|(a, b)| a * b).sum();
                h[i][k] = hik;
                for (wj, vj) in w.iter_mut().zip(v[i].iter()) {
                    *wj -= hik * vj;
                }
            }
            let hkk = norm2(&w);
            h[k + 1][k] = hkk;

            // apply accumulated rotations to the new column
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let denom = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if denom == 0.0 {
                k_used = k + 1;
                break;
            }
            cs[k] = h[k][k] / denom;
            sn[k] = h[k + 1][k] / denom;
            h[k][k] = denom;
            h[k + 1][k] = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] *= cs[k];
            k_used = k + 1;

            let lucky = hkk <= 1e-14 * denom.max(1.0);
            if g[k + 1].abs() / scale <= tol || lucky {
                break;
            }
            v.push(w.iter().map(|x| x / hkk).collect());
        }

        // back-substitute the k_used × k_used triangular system
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s -= h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        // x += D⁻¹ · V y
        for i in 0..n {
            let mut s = 0.0;
            for (j, yj) in y.iter().enumerate() {
                s += v[j][i] * yj;
            }
            x[i] += inv_diag[i] * s;
        }
    }
}

/// Dense LU solve with partial pivoting. Reference path for cross-checking
/// the iterative solver on meshes small enough to afford O(n³).
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    if a.len() != n || a.iter().any(|row| row.len() != n) {
        return None;
    }
    for col in 0..n {
        let (pivot_row, pivot) = (col..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))?;
        if pivot == 0.0 {
            return None;
        }
        a.swap(col, pivot_row);
        b.swap(col, pivot_row);
        for r in col + 1..n {
            let factor = a[r][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for c in col..n {
                a[r][c] -= factor * a[col][c];
            }
            b[r] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = b[i];
        for j in i + 1..n {
            s -= a[i][j] * x[j];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_matrix() -> CsrMatrix {
        // [ 4 -1  0 ]
        // [-1  4 -1 ]
        // [ 0 -1  4 ]
        let mut b = CooBuilder::new(3);
        for i in 0..3 {
            b.add(i, i, 4.0);
        }
        b.add(0, 1, -1.0);
        b.add(1, 0, -1.0);
        b.add(1, 2, -1.0);
        b.add(2, 1, -1.0);
        b.build()
    }

    #[test]
    fn builder_sums_duplicate_triplets() {
        let mut b = CooBuilder::new(2);
        b.add(0, 0, 1.0);
        b.add(0, 0, 2.5);
        b.add(1, 0, -1.0);
        let m = b.build();
        assert_eq!(m.get(0, 0), 3.5);
        assert_eq!(m.get(1, 0), -1.0);
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.nnz(), 2);
    }

    #[test]
    fn builder_keeps_structural_zeros() {
        let mut b = CooBuilder::new(2);
        b.add(0, 1, 1.0);
        b.add(0, 1, -1.0);
        let m = b.build();
        assert_eq!(m.nnz(), 1);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn mul_vec_matches_dense() {
        let m = toy_matrix();
        let x = [1.0, 2.0, -1.0];
        let mut y = [0.0; 3];
        m.mul_vec(&x, &mut y);
        assert_eq!(y, [2.0, 8.0, -6.0]);
    }

    #[test]
    fn gmres_solves_spd_system() {
        let m = toy_matrix();
        let b = vec![1.0, 0.0, 2.0];
        let s = gmres(&m, &b, 1e-12, 100, 30).unwrap();
        let mut r = vec![0.0; 3];
        m.mul_vec(&s.x, &mut r);
        for i in 0..3 {
            assert!((r[i] - b[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        // positive-definite symmetric part plus a skew block, the shape the
        // step systems take
        let mut bld = CooBuilder::new(4);
        for i in 0..4 {
            bld.add(i, i, 2.0);
        }
        bld.add(0, 1, 1.0);
        bld.add(1, 0, -1.0);
        bld.add(2, 3, 0.5);
        bld.add(3, 2, -0.5);
        bld.add(0, 2, -0.3);
        bld.add(2, 0, -0.3);
        let a = bld.build();
        let b = vec![1.0, -2.0, 0.5, 3.0];
        let s = gmres(&a, &b, 1e-12, 200, 30).unwrap();
        let dense = dense_solve(a.to_dense(), b.clone()).unwrap();
        for i in 0..4 {
            assert!((s.x[i] - dense[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn gmres_zero_rhs_returns_zero() {
        let m = toy_matrix();
        let s = gmres(&m, &[0.0; 3], 1e-12, 10, 5).unwrap();
        assert_eq!(s.x, vec![0.0; 3]);
        assert_eq!(s.iters, 0);
    }

    #[test]
    fn gmres_reports_exhausted_budget() {
        let m = toy_matrix();
        let r = gmres(&m, &[1.0, 1.0, 1.0], 1e-16, 1, 1);
        assert!(matches!(r, Err(Error::SolverFailure { .. })));
    }

    #[test]
    fn gmres_rejects_nan_system() {
        let mut b = CooBuilder::new(2);
        b.add(0, 0, f64::NAN);
        b.add(1, 1, 1.0);
        let m = b.build();
        let r = gmres(&m, &[1.0, 1.0], 1e-10, 10, 5);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dense_solve_handles_pivoting() {
        // leading zero forces a row swap
        let a = vec![vec![0.0, 1.0], vec![2.0, 1.0]];
        let x = dense_solve(a, vec![3.0, 4.0]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn dense_solve_rejects_singular() {
        let a = vec![vec![1.0, 2.0], vec![2.0, 4.0]];
        assert!(dense_solve(a, vec![1.0, 1.0]).is_none());
    }
}
