//! Minimal dense row-major matrix support.
//!
//! The embedder and the loss need exactly three GEMM shapes plus a handful of
//! vector helpers, all at desk scale, so this stays hand-rolled and cache
//! friendly instead of pulling in a linear-algebra stack.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmath;

/// Dense row-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat { rows, cols, data: vec![0.0; rows * cols] }
    }

    /// Builds from a flat row-major buffer. Panics if the length mismatches.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat buffer length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged rows");
            data.extend_from_slice(row);
        }
        Mat { rows: r, cols: c, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols)
    }

    pub fn fill(&mut self, v: f64) {
        self.data.fill(v);
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self * b^T` where `self` is `m x k` and `b` is `n x k`; result `m x n`.
    pub fn gemm_nt(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.cols, "gemm_nt inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (j, b_row) in b.iter_rows().enumerate() {
                out_row[j] = dot(a_row, b_row);
            }
        }
        out
    }

    /// `self * b` where `self` is `m x k` and `b` is `k x n`; result `m x n`.
    pub fn gemm_nn(&self, b: &Mat) -> Mat {
        assert_eq!(self.cols, b.rows, "gemm_nn inner dimension mismatch");
        let mut out = Mat::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let out_row = out.row_mut(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik != 0.0 {
                    axpy(a_ik, b.row(k), out_row);
                }
            }
        }
        out
    }

    /// `self^T * b` where `self` is `m x k` and `b` is `m x n`; result `k x n`.
    pub fn gemm_tn(&self, b: &Mat) -> Mat {
        assert_eq!(self.rows, b.rows, "gemm_tn row-count mismatch");
        let mut out = Mat::zeros(self.cols, b.cols);
        for i in 0..self.rows {
            let a_row = self.row(i);
            let b_row = b.row(i);
            for (k, &a_ik) in a_row.iter().enumerate() {
                if a_ik != 0.0 {
                    axpy(a_ik, b_row, out.row_mut(k));
                }
            }
        }
        out
    }

    /// Symmetric matrix-vector product helper for square matrices.
    pub fn matvec(&self, v: &[f64], out: &mut [f64]) {
        assert_eq!(self.cols, v.len());
        assert_eq!(self.rows, out.len());
        for (o, row) in out.iter_mut().zip(self.iter_rows()) {
            *o = dot(row, v);
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for v in x {
        *v *= alpha;
    }
}

pub fn l2_norm(x: &[f64]) -> f64 {
    fmath::sqrt(dot(x, x))
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s += d * d;
    }
    fmath::sqrt(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_shapes_and_values() {
        let a = Mat::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Mat::from_vec(2, 3, vec![1.0, 0.0, -1.0, 0.5, 0.5, 0.5]);
        let nt = a.gemm_nt(&b); // 2x2
        assert_eq!(nt.get(0, 0), 1.0 - 3.0);
        assert_eq!(nt.get(1, 1), 0.5 * (4.0 + 5.0 + 6.0));

        let c = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let nn = a.gemm_nn(&c); // 2x2
        assert_eq!(nn.get(0, 0), 1.0 + 6.0 + 15.0);

        let tn = a.gemm_tn(&b); // 3x3
        assert_eq!(tn.get(0, 0), 1.0 * 1.0 + 4.0 * 0.5);
    }

    #[test]
    fn vector_helpers() {
        let mut y = vec![1.0, 1.0];
        axpy(2.0, &[3.0, -1.0], &mut y);
        assert_eq!(y, vec![7.0, -1.0]);
        assert_eq!(l2_norm(&[3.0, 4.0]), 5.0);
        assert_eq!(euclidean_distance(&[0.0, 0.0], &[3.0, 4.0]), 5.0);
    }
}
