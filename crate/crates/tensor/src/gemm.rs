//! Strided matrix views over flat buffers and a tiled, rayon-parallel GEMM.
//!
//! Each output element is produced by exactly one task with a fixed inner
//! loop order, so results are bitwise identical for any thread count.

use rayon::prelude::*;

use crate::Float;

/// Below this many multiply-adds a product runs on the calling thread.
const PAR_THRESHOLD: usize = 1 << 20;

#[derive(Clone, Copy)]
pub(crate) struct Mat<'a, T> {
    data: &'a [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Float> Mat<'a, T> {
    pub(crate) fn new(data: &'a [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert_fits(data.len(), rows, cols, rs, cs);
        Self { data, rows, cols, rs, cs }
    }

    pub(crate) fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self::new(data, rows, cols, cols, 1)
    }

    pub(crate) fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }
}

pub(crate) struct MatMut<'a, T> {
    data: &'a mut [T],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a, T: Float> MatMut<'a, T> {
    pub(crate) fn new(data: &'a mut [T], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        assert_fits(data.len(), rows, cols, rs, cs);
        Self { data, rows, cols, rs, cs }
    }

    pub(crate) fn row_major(data: &'a mut [T], rows: usize, cols: usize) -> Self {
        Self::new(data, rows, cols, cols, 1)
    }
}

fn assert_fits(len: usize, rows: usize, cols: usize, rs: usize, cs: usize) {
    if rows > 0 && cols > 0 {
        let last = (rows - 1) * rs + (cols - 1) * cs;
        assert!(last < len, "strided view exceeds buffer ({last} >= {len})");
    }
}

#[derive(Clone, Copy)]
struct SendPtr<T>(*mut T);
unsafe impl<T> Send for SendPtr<T> {}
unsafe impl<T> Sync for SendPtr<T> {}

/// `c <- alpha * a * b + beta * c`.
pub(crate) fn gemm<T: Float>(alpha: T, a: Mat<'_, T>, b: Mat<'_, T>, beta: T, c: MatMut<'_, T>) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(b.rows, k, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for i in 0..m {
            for j in 0..n {
                let v = &mut c.data[i * c.rs + j * c.cs];
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }

    let threads = rayon::current_num_threads();
    let work = m.saturating_mul(k).saturating_mul(n);
    let cptr = SendPtr(c.data.as_mut_ptr());
    let (rsc, csc) = (c.rs, c.cs);

    let run = move |r0: usize, r1: usize, c0: usize, c1: usize| {
        let cptr = cptr;
        // Sub-blocks of disjoint (row, column) ranges never overlap in `c`,
        // and every index stays within the extents checked by the views.
        unsafe {
            T::gemm_raw(
                r1 - r0,
                k,
                c1 - c0,
                alpha,
                a.data.as_ptr().add(r0 * a.rs),
                a.rs as isize,
                a.cs as isize,
                b.data.as_ptr().add(c0 * b.cs),
                b.rs as isize,
                b.cs as isize,
                beta,
                cptr.0.add(r0 * rsc + c0 * csc),
                rsc as isize,
                csc as isize,
            )
        }
    };

    if threads <= 1 || work < PAR_THRESHOLD {
        run(0, m, 0, n);
        return;
    }

    let tasks = threads * 2;
    if n >= m {
        let block = n.div_ceil(tasks).max(16);
        let starts: Vec<usize> = (0..n).step_by(block).collect();
        starts
            .into_par_iter()
            .for_each(|c0| run(0, m, c0, (c0 + block).min(n)));
    } else {
        let block = m.div_ceil(tasks).max(16);
        let starts: Vec<usize> = (0..m).step_by(block).collect();
        starts
            .into_par_iter()
            .for_each(|r0| run(r0, (r0 + block).min(m), 0, n));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let mut c = vec![0.0; m * n];
        gemm(
            1.0,
            Mat::row_major(&a, m, k),
            Mat::row_major(&b, k, n),
            0.0,
            MatMut::row_major(&mut c, m, n),
        );
        for (x, y) in c.iter().zip(naive(&a, &b, m, k, n)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_views() {
        // (A^T)^T B with A stored transposed.
        let a = [1.0, 3.0, 2.0, 4.0]; // column-major [[1,2],[3,4]]
        let b = [5.0, 6.0];
        let mut c = [0.0; 2];
        gemm(
            1.0,
            Mat::row_major(&a, 2, 2).t(),
            Mat::row_major(&b, 2, 1),
            0.0,
            MatMut::row_major(&mut c, 2, 1),
        );
        assert_eq!(c, [17.0, 39.0]);
    }
}
