//! Dense row-major lower-triangular routines used by the GP.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;


/// Square matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix { n, data: vec![0.0; n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Matrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Leading `k x k` block.
    pub fn leading(&self, k: usize) -> Matrix {
        assert!(k <= self.n);
        let mut data = Vec::with_capacity(k * k);
        for i in 0..k {
            data.extend_from_slice(&self.row(i)[..k]);
        }
        Matrix { n: k, data }
    }

    /// Copy with one extra row and column, zero-filled.
    pub fn grown(&self) -> Matrix {
        let m = self.n + 1;
        let mut out = Matrix::zeros(m);
        for i in 0..self.n {
            out.row_mut(i)[..self.n].copy_from_slice(self.row(i));
        }
        out
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `L Lᵀ` for a lower-triangular `self`.
    pub fn lower_times_transpose(&self) -> Matrix {
        let n = self.n;
        Matrix::from_fn(n, |i, j| {
            let k = i.min(j) + 1;
            dot(&self.row(i)[..k], &self.row(j)[..k])
        })
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// In-place Cholesky of the lower triangle of `a`. Returns the failing
/// pivot index when the matrix is not positive definite.
pub fn cholesky_in_place(a: &mut Matrix) -> Result<(), usize> {
    let n = a.n;
    for i in 0..n {
        for j in 0..=i {
            let (head, tail) = a.data.split_at_mut(i * n);
            let row_i = &tail[..n];
            let s = if j == i {
                row_i[i] - dot(&row_i[..j], &row_i[..j])
            } else {
                let row_j = &head[j * n..j * n + n];
                (row_i[j] - dot(&row_i[..j], &row_j[..j])) / row_j[j]
            };
            if j == i {
                if !(s > 0.0) || !s.is_finite() {
                    return Err(i);
                }
                tail[i] = s.sqrt();
            } else {
                tail[j] = s;
            }
        }
        // Upper triangle is not used; keep it zero so the factor is clean.
        for v in &mut a.data[i * n + i + 1..(i + 1) * n] {
            *v = 0.0;
        }
    }
    Ok(())
}

/// Solves `L x = b` in place, using only the leading `b.len()` block of `l`.
pub fn forward_solve(l: &Matrix, b: &mut [f64]) {
    for i in 0..b.len() {
        let row = l.row(i);
        b[i] = (b[i] - dot(&row[..i], &b[..i])) / row[i];
    }
}

/// Solves `Lᵀ x = b` in place.
pub fn backward_solve(l: &Matrix, b: &mut [f64]) {
    for i in (0..b.len()).rev() {
        let row = l.row(i);
        b[i] /= row[i];
        let xi = b[i];
        for (bk, lk) in b[..i].iter_mut().zip(&row[..i]) {
            *bk -= lk * xi;
        }
    }
}

/// Solves `(L Lᵀ) x = b` in place.
pub fn cholesky_solve(l: &Matrix, b: &mut [f64]) {
    forward_solve(l, b);
    backward_solve(l, b);
}

/// Replaces `L` by the factor of `L Lᵀ + x xᵀ` (rank-one update).
pub fn rank_one_update(l: &mut Matrix, x: &mut [f64]) {
    let n = l.n;
    for k in 0..n {
        let lkk = l.get(k, k);
        let r = (lkk * lkk + x[k] * x[k]).sqrt();
        let c = r / lkk;
        let s = x[k] / lkk;
        l.set(k, k, r);
        for i in k + 1..n {
            let lik = (l.get(i, k) + s * x[i]) / c;
            x[i] = c * x[i] - s * lik;
            l.set(i, k, lik);
        }
    }
}
