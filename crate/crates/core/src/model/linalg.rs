//! Thin safe layer over `matrixmultiply::dgemm` for row-major buffers and
//! strided sub-views.

#[derive(Clone, Copy)]
pub struct View<'a> {
    pub data: &'a [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> View<'a> {
    pub fn dense(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    /// Rows `[r0, r0 + rows)` and columns `[c0, c0 + cols)` of a row-major
    /// matrix with `ld` columns.
    pub fn block(data: &'a [f64], ld: usize, r0: usize, rows: usize, c0: usize, cols: usize) -> Self {
        Self {
            data,
            offset: r0 * ld + c0,
            rows,
            cols,
            rs: ld,
            cs: 1,
        }
    }

    pub fn t(self) -> Self {
        Self {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    fn check(&self, len: usize) {
        if self.rows > 0 && self.cols > 0 {
            let last = self.offset + (self.rows - 1) * self.rs + (self.cols - 1) * self.cs;
            assert!(last < len, "view out of bounds: {last} >= {len}");
        }
    }
}

pub struct ViewMut<'a> {
    pub data: &'a mut [f64],
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> ViewMut<'a> {
    pub fn dense(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        Self {
            data,
            offset: 0,
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn block(data: &'a mut [f64], ld: usize, r0: usize, rows: usize, c0: usize, cols: usize) -> Self {
        Self {
            data,
            offset: r0 * ld + c0,
            rows,
            cols,
            rs: ld,
            cs: 1,
        }
    }
}

/// `C ← alpha·A·B + beta·C`. With `beta == 0` the prior contents of `C` are
/// ignored (NaNs included).
pub fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    assert_eq!((a.rows, b.cols), (c.rows, c.cols), "output shape mismatch");
    a.check(a.data.len());
    b.check(b.data.len());
    if c.rows > 0 && c.cols > 0 {
        let last = c.offset + (c.rows - 1) * c.rs + (c.cols - 1) * c.cs;
        assert!(last < c.data.len(), "output view out of bounds");
    } else {
        return;
    }
    // SAFETY: all three views were bounds-checked above; `c` is uniquely
    // borrowed and cannot alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
            a.rows,
            a.cols,
            b.cols,
            alpha,
            a.data.as_ptr().add(a.offset),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr().add(b.offset),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr().add(c.offset),
            c.rs as isize,
            c.cs as isize,
        );
    }
}

/// `C (m×n) = A (m×k) · B (k×n)`, or accumulate into `C` when `acc`.
pub fn matmul(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, acc: bool) {
    gemm(
        1.0,
        View::dense(a, m, k),
        View::dense(b, k, n),
        if acc { 1.0 } else { 0.0 },
        ViewMut::dense(c, m, n),
    );
}

/// `C (m×n) = A (m×k) · Bᵀ` with `B` stored `n×k`.
pub fn matmul_nt(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, acc: bool) {
    gemm(
        1.0,
        View::dense(a, m, k),
        View::dense(b, n, k).t(),
        if acc { 1.0 } else { 0.0 },
        ViewMut::dense(c, m, n),
    );
}

/// `C (m×n) = Aᵀ · B` with `A` stored `k×m` and `B` stored `k×n`.
pub fn matmul_tn(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize, acc: bool) {
    gemm(
        1.0,
        View::dense(a, k, m).t(),
        View::dense(b, k, n),
        if acc { 1.0 } else { 0.0 },
        ViewMut::dense(c, m, n),
    );
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|p| a[i * k + p] * b[p * n + j]).sum();
            }
        }
        c
    }

    fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = a[i * c + j];
            }
        }
        t
    }

    #[test]
    fn variants_agree_with_naive() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let want = naive(&a, &b, m, k, n);
        let mut c = vec![f64::NAN; m * n];
        matmul(&a, &b, &mut c, m, k, n, false);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let bt = transpose(&b, k, n);
        matmul_nt(&a, &bt, &mut c, m, k, n, false);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-12);
        }
        let at = transpose(&a, m, k);
        matmul_tn(&at, &b, &mut c, m, k, n, true);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - 2.0 * y).abs() < 1e-12);
        }
    }

    #[test]
    fn strided_blocks() {
        // 4x6 matrix, multiply the 2x3 block at (1, 2) by a 3x2 dense matrix.
        let a: Vec<f64> = (0..24).map(|i| i as f64).collect();
        let b = vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0];
        let mut c = vec![0.0; 4];
        gemm(
            1.0,
            View::block(&a, 6, 1, 2, 2, 3),
            View::dense(&b, 3, 2),
            0.0,
            ViewMut::dense(&mut c, 2, 2),
        );
        // rows [8,9,10] and [14,15,16]
        assert_eq!(c, vec![18.0, 19.0, 30.0, 31.0]);
    }

    #[test]
    #[should_panic]
    fn out_of_bounds_view_panics() {
        let a = vec![0.0; 4];
        let mut c = vec![0.0; 4];
        gemm(
            1.0,
            View::block(&a, 2, 1, 2, 0, 2),
            View::dense(&a, 2, 2),
            0.0,
            ViewMut::dense(&mut c, 2, 2),
        );
    }
}
