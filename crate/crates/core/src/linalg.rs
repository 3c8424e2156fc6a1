//! Flat row-major `f64` matrices and the small kernel set the crate runs on.
//!
//! Every kernel accumulates each output element in ascending index order of
//! the contracted dimension. That ordering is part of the contract: it is what
//! makes single-threaded runs bit-reproducible and lets `A·B` computed with a
//! materialized transpose match `matmul_tn` bit for bit.

use alloc::vec;
use alloc::vec::Vec;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a flat row-major buffer. Panics if the length is wrong.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data length mismatch");
        Matrix { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Matrix { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn sub_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a -= *b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        for a in &mut self.data {
            *a *= s;
        }
    }

    /// `self += s * other`, elementwise.
    pub fn axpy(&mut self, s: f64, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += s * *b;
        }
    }

    pub fn hadamard_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a *= *b;
        }
    }

    /// Adds `bias[i]` to every element of row `i`.
    pub fn add_row_broadcast(&mut self, bias: &[f64]) {
        debug_assert_eq!(bias.len(), self.rows);
        for i in 0..self.rows {
            let b = bias[i];
            for v in self.row_mut(i) {
                *v += b;
            }
        }
    }

    /// Sum of each row (used for batch-summed bias gradients).
    pub fn row_sums(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows);
        for i in 0..self.rows {
            out.push(self.row(i).iter().sum());
        }
        out
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        debug_assert_eq!(self.shape(), other.shape());
        let mut m = 0.0f64;
        for (a, b) in self.data.iter().zip(&other.data) {
            let d = libm::fabs(a - b);
            if d > m {
                m = d;
            }
        }
        m
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j));
            }
        }
        out
    }
}

/// `c = a · b` (or `c += a · b` when `accumulate`).
///
/// `a` is (m, k), `b` is (k, n), `c` is (m, n). Zero entries of `a` are
/// skipped; sparse branch banks rely on this.
pub fn matmul_into(a: &Matrix, b: &Matrix, c: &mut Matrix, accumulate: bool) {
    assert_eq!(a.cols, b.rows, "matmul inner dimension");
    assert_eq!((c.rows, c.cols), (a.rows, b.cols), "matmul output shape");
    if !accumulate {
        c.data.fill(0.0);
    }
    let n = b.cols;
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        let crow = &mut c.data[i * n..(i + 1) * n];
        for (k, &aik) in arow.iter().enumerate() {
            if aik == 0.0 {
                continue;
            }
            let brow = &b.data[k * n..(k + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aik * bv;
            }
        }
    }
}

/// `c = aᵀ · b` (or `c += aᵀ · b`), without materializing the transpose.
///
/// `a` is (k, m), `b` is (k, n), `c` is (m, n). Per output element the
/// accumulation order over `k` is identical to [`matmul_into`] on a
/// materialized `aᵀ`, so the two routes agree bit for bit.
pub fn matmul_tn_into(a: &Matrix, b: &Matrix, c: &mut Matrix, accumulate: bool) {
    assert_eq!(a.rows, b.rows, "matmul_tn inner dimension");
    assert_eq!((c.rows, c.cols), (a.cols, b.cols), "matmul_tn output shape");
    if !accumulate {
        c.data.fill(0.0);
    }
    let m = a.cols;
    let n = b.cols;
    for k in 0..a.rows {
        let arow = &a.data[k * m..(k + 1) * m];
        let brow = &b.data[k * n..(k + 1) * n];
        for i in 0..m {
            let aki = arow[i];
            if aki == 0.0 {
                continue;
            }
            let crow = &mut c.data[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv += aki * bv;
            }
        }
    }
}

/// `c = a · bᵀ` (or `c += a · bᵀ`): plain dot products of rows.
///
/// `a` is (m, k), `b` is (n, k), `c` is (m, n). This is the batch outer
/// product: with states stored units-by-batch, `post · preᵀ` sums the
/// per-sample outer products over the batch.
pub fn matmul_nt_into(a: &Matrix, b: &Matrix, c: &mut Matrix, accumulate: bool) {
    assert_eq!(a.cols, b.cols, "matmul_nt inner dimension");
    assert_eq!((c.rows, c.cols), (a.rows, b.rows), "matmul_nt output shape");
    for i in 0..a.rows {
        let arow = &a.data[i * a.cols..(i + 1) * a.cols];
        for j in 0..b.rows {
            let brow = &b.data[j * b.cols..(j + 1) * b.cols];
            let mut acc = 0.0;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x * y;
            }
            let slot = &mut c.data[i * c.cols + j];
            if accumulate {
                *slot += acc;
            } else {
                *slot = acc;
            }
        }
    }
}

/// Solves `A x = b` by Gaussian elimination with partial pivoting.
///
/// Returns `None` for (numerically) singular systems. Only used by the
/// fixed-point oracles; sizes there are tiny.
pub fn solve(a: &Matrix, b: &[f64]) -> Option<Vec<f64>> {
    assert_eq!(a.rows, a.cols, "solve needs a square system");
    assert_eq!(a.rows, b.len(), "solve rhs length");
    let n = a.rows;
    let mut m = a.clone();
    let mut x: Vec<f64> = b.to_vec();

    for col in 0..n {
        let mut pivot = col;
        let mut best = libm::fabs(m.get(col, col));
        for r in (col + 1)..n {
            let v = libm::fabs(m.get(r, col));
            if v > best {
                best = v;
                pivot = r;
            }
        }
        if best < 1e-300 {
            return None;
        }
        if pivot != col {
            for j in 0..n {
                let tmp = m.get(col, j);
                m.set(col, j, m.get(pivot, j));
                m.set(pivot, j, tmp);
            }
            x.swap(col, pivot);
        }
        let d = m.get(col, col);
        for r in (col + 1)..n {
            let f = m.get(r, col) / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                let v = m.get(r, j) - f * m.get(col, j);
                m.set(r, j, v);
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = x[col];
        for j in (col + 1)..n {
            acc -= m.get(col, j) * x[j];
        }
        x[col] = acc / m.get(col, col);
    }
    Some(x)
}

/// Power-iteration estimate of the spectral radius of a square matrix.
///
/// Adequate for the oracle's contraction check (the coupling matrices there
/// are symmetric, so the dominant eigenvalue is real).
pub fn spectral_radius_estimate(a: &Matrix, iters: usize) -> f64 {
    assert_eq!(a.rows, a.cols);
    let n = a.rows;
    if n == 0 {
        return 0.0;
    }
    // Deterministic, mildly irregular start vector.
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.37 * (i as f64 % 7.0)).collect();
    let mut w = vec![0.0; n];
    let mut lambda = 0.0;
    for _ in 0..iters {
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a.get(i, j) * v[j];
            }
            w[i] = acc;
        }
        let norm = libm::sqrt(w.iter().map(|x| x * x).sum::<f64>());
        if norm == 0.0 {
            return 0.0;
        }
        lambda = norm / libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        for i in 0..n {
            v[i] = w[i] / norm;
        }
    }
    lambda
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

pub fn norm(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
        let mut c = Matrix::zeros(a.rows(), b.cols());
        for i in 0..a.rows() {
            for j in 0..b.cols() {
                let mut acc = 0.0;
                for k in 0..a.cols() {
                    acc += a.get(i, k) * b.get(k, j);
                }
                c.set(i, j, acc);
            }
        }
        c
    }

    fn arb(rows: usize, cols: usize, seed: u64) -> Matrix {
        // Small deterministic pseudo-random fill, no RNG dependency here.
        let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        Matrix::from_fn(rows, cols, |_, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        })
    }

    #[test]
    fn matmul_matches_scalar_loop() {
        let a = arb(5, 7, 1);
        let b = arb(7, 4, 2);
        let mut c = Matrix::zeros(5, 4);
        matmul_into(&a, &b, &mut c, false);
        let expected = naive_matmul(&a, &b);
        assert!(c.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn matmul_tn_matches_materialized_transpose_bitwise() {
        let a = arb(6, 5, 3);
        let b = arb(6, 4, 4);
        let mut c1 = Matrix::zeros(5, 4);
        matmul_tn_into(&a, &b, &mut c1, false);
        let at = a.transpose();
        let mut c2 = Matrix::zeros(5, 4);
        matmul_into(&at, &b, &mut c2, false);
        assert_eq!(c1.data(), c2.data(), "transpose routes must agree bitwise");
    }

    #[test]
    fn matmul_nt_matches_scalar_loop() {
        let a = arb(3, 6, 5);
        let b = arb(4, 6, 6);
        let mut c = Matrix::zeros(3, 4);
        matmul_nt_into(&a, &b, &mut c, false);
        let bt = b.transpose();
        let expected = naive_matmul(&a, &bt);
        assert!(c.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn accumulate_adds_on_top() {
        let a = arb(3, 3, 7);
        let b = arb(3, 3, 8);
        let mut c = Matrix::zeros(3, 3);
        matmul_into(&a, &b, &mut c, false);
        let once = c.clone();
        matmul_into(&a, &b, &mut c, true);
        let mut doubled = once.clone();
        doubled.scale(2.0);
        assert!(c.max_abs_diff(&doubled) < 1e-12);
    }

    #[test]
    fn solve_recovers_known_solution() {
        let a = Matrix::from_vec(3, 3, vec![4.0, 1.0, 0.0, 1.0, 3.0, 1.0, 0.0, 1.0, 2.0]);
        let x_true = [1.0, -2.0, 3.0];
        let mut b = vec![0.0; 3];
        for i in 0..3 {
            b[i] = (0..3).map(|j| a.get(i, j) * x_true[j]).sum();
        }
        let x = solve(&a, &b).expect("well-conditioned system");
        for (got, want) in x.iter().zip(&x_true) {
            assert!((got - want).abs() < 1e-12, "got {got}, want {want}");
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Matrix::from_vec(2, 2, vec![1.0, 2.0, 2.0, 4.0]);
        assert!(solve(&a, &[1.0, 2.0]).is_none());
    }

    #[test]
    fn spectral_radius_of_diagonal() {
        let a = Matrix::from_vec(3, 3, vec![0.5, 0.0, 0.0, 0.0, -0.9, 0.0, 0.0, 0.0, 0.2]);
        let r = spectral_radius_estimate(&a, 200);
        assert!((r - 0.9).abs() < 1e-6, "estimate {r}");
    }
}
