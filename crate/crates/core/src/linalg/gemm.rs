//! Strided dense matrix product on top of `matrixmultiply::dgemm`.
//!
//! Large products are split into fixed blocks of output rows and evaluated
//! with rayon. Each output element is accumulated by the same kernel over the
//! same `k` order whatever the split, so results do not depend on the thread
//! count.

use rayon::prelude::*;

const ROW_BLOCK: usize = 64;
const PARALLEL_WORK: usize = 1 << 18;

/// Read-only strided view of a matrix stored in a flat slice.
#[derive(Clone, Copy, Debug)]
pub struct MatRef<'a> {
    pub data: &'a [f64],
    pub rows: usize,
    pub cols: usize,
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> MatRef<'a> {
    pub fn row_major(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows, cols, row_stride: cols, col_stride: 1 }
    }

    /// The transpose of a row-major `[rows, cols]` block, as a `[cols, rows]` view.
    pub fn transposed(data: &'a [f64], rows: usize, cols: usize) -> Self {
        MatRef { data, rows: cols, cols: rows, row_stride: 1, col_stride: cols }
    }

    pub fn t(self) -> Self {
        MatRef {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            row_stride: self.col_stride,
            col_stride: self.row_stride,
        }
    }

    fn check(&self) {
        if self.rows > 0 && self.cols > 0 {
            let last = (self.rows - 1) * self.row_stride + (self.cols - 1) * self.col_stride;
            assert!(last < self.data.len(), "matrix view exceeds its buffer");
        }
    }

    fn rows_from(self, start: usize, count: usize) -> Self {
        let offset = start * self.row_stride;
        MatRef { data: &self.data[offset.min(self.data.len())..], rows: count, ..self }
    }
}

/// `c <- alpha * a * b + beta * c` with `c` row-major `[a.rows, b.cols]`.
pub fn gemm(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64]) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n, "output buffer has the wrong length");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    a.check();
    b.check();

    if m > ROW_BLOCK && m * n * k >= PARALLEL_WORK {
        c.par_chunks_mut(ROW_BLOCK * n).enumerate().for_each(|(blk, chunk)| {
            let rows = chunk.len() / n;
            kernel(alpha, a.rows_from(blk * ROW_BLOCK, rows), b, beta, chunk, n);
        });
    } else {
        kernel(alpha, a, b, beta, c, n);
    }
}

fn kernel(alpha: f64, a: MatRef<'_>, b: MatRef<'_>, beta: f64, c: &mut [f64], n: usize) {
    a.check();
    debug_assert_eq!(c.len(), a.rows * n);
    // SAFETY: `check` above proves every strided index of `a` and `b` lies
    // inside its slice, and `c` holds exactly `a.rows * n` contiguous values.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            n,
            alpha,
            a.data.as_ptr(),
            a.row_stride as isize,
            a.col_stride as isize,
            b.data.as_ptr(),
            b.row_stride as isize,
            b.col_stride as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
