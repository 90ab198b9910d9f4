//! Dense row-major 2-D tensors and the GEMM wrappers the tape builds on.

use alloc::vec;
use alloc::vec::Vec;

/// Row-major `rows x cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Tensor {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Tensor { rows, cols, data: vec![value; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data length does not match shape");
        Tensor { rows, cols, data }
    }

    pub fn scalar(value: f64) -> Self {
        Tensor { rows: 1, cols: 1, data: vec![value] }
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum_squares(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `c = a · b` (or `c += a · b` when `accumulate`), with optional transposes.
///
/// Every output element is reduced over the shared dimension in the same
/// order regardless of how many rows `a` has, so per-row results do not
/// depend on the other rows in the batch.
pub fn gemm(a: &Tensor, trans_a: bool, b: &Tensor, trans_b: bool, c: &mut Tensor, accumulate: bool) {
    let (m, k) = if trans_a { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if trans_b { (b.cols, b.rows) } else { (b.rows, b.cols) };
    assert_eq!(k, kb, "gemm inner dimensions differ");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape mismatch");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c.data.iter_mut().for_each(|v| *v = 0.0);
        }
        return;
    }
    let (rsa, csa) = if trans_a { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if trans_b { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the strides and extents above describe exactly the buffers of
    // `a`, `b` and `c`, whose lengths were checked against their shapes.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            c.cols as isize,
            1,
        );
    }
}

pub fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let mut c = Tensor::zeros(a.rows, b.cols);
    gemm(a, false, b, false, &mut c, false);
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &Tensor, b: &Tensor) -> Tensor {
        let mut c = Tensor::zeros(a.rows, b.cols);
        for i in 0..a.rows {
            for j in 0..b.cols {
                let mut s = 0.0;
                for k in 0..a.cols {
                    s += a.get(i, k) * b.get(k, j);
                }
                c.data[i * b.cols + j] = s;
            }
        }
        c
    }

    fn pseudo(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut s = seed;
        let data = (0..rows * cols)
            .map(|_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
            })
            .collect();
        Tensor::from_vec(rows, cols, data)
    }

    #[test]
    fn matches_naive_product() {
        let a = pseudo(7, 5, 1);
        let b = pseudo(5, 3, 2);
        let c = matmul(&a, &b);
        let r = naive(&a, &b);
        for (x, y) in c.data.iter().zip(&r.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_operands() {
        let a = pseudo(5, 7, 3);
        let b = pseudo(3, 5, 4);
        let mut c = Tensor::zeros(7, 3);
        gemm(&a, true, &b, true, &mut c, false);
        let at = Tensor::from_vec(7, 5, (0..35).map(|i| a.get(i % 5, i / 5)).collect());
        let bt = Tensor::from_vec(5, 3, (0..15).map(|i| b.get(i % 3, i / 3)).collect());
        let r = naive(&at, &bt);
        for (x, y) in c.data.iter().zip(&r.data) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn row_results_independent_of_batch_size() {
        let w = pseudo(64, 48, 9);
        let big = pseudo(37, 64, 10);
        let full = matmul(&big, &w);
        for start in [0usize, 3, 11, 30] {
            let rows = 7.min(37 - start);
            let sub = Tensor::from_vec(rows, 64, big.data[start * 64..(start + rows) * 64].to_vec());
            let part = matmul(&sub, &w);
            for r in 0..rows {
                assert_eq!(part.row(r), full.row(start + r));
            }
        }
    }
}
