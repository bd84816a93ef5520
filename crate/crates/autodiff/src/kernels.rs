//! Dense row-major kernels shared by forward and backward rules.

use crate::Scalar;

/// Row-major view of a matrix stored either as is or transposed.
#[derive(Clone, Copy)]
pub(crate) enum Layout {
    /// `rows×cols` stored row-major.
    Normal,
    /// Stored as its `cols×rows` transpose.
    Transposed,
}

fn strides(layout: Layout, rows: usize, cols: usize) -> [isize; 2] {
    match layout {
        Layout::Normal => [cols as isize, 1],
        Layout::Transposed => [1, rows as isize],
    }
}

/// `c[m×n] += op(a)[m×k] · op(b)[k×n]`.
pub(crate) fn gemm<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], la: Layout, b: &[T], lb: Layout, c: &mut [T]) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n, "gemm operand too short");
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    // SAFETY: the assertion above bounds every index reached through the
    // row-major or transposed strides, and `c` is a distinct &mut borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            a.as_ptr(),
            strides(la, m, k),
            b.as_ptr(),
            strides(lb, k, n),
            T::one(),
            c.as_mut_ptr(),
            [n as isize, 1],
        )
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`.
pub(crate) fn gemm_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm(m, k, n, a, Layout::Normal, b, Layout::Normal, c)
}

/// Transpose a `rows×cols` block into `cols×rows`.
#[cfg(test)]
pub(crate) fn transpose<T: Scalar>(rows: usize, cols: usize, src: &[T]) -> Vec<T> {
    let mut dst = vec![T::zero(); rows * cols];
    transpose_into(rows, cols, src, &mut dst);
    dst
}

pub(crate) fn transpose_into<T: Scalar>(rows: usize, cols: usize, src: &[T], dst: &mut [T]) {
    const TILE: usize = 32;
    for r0 in (0..rows).step_by(TILE) {
        for c0 in (0..cols).step_by(TILE) {
            for r in r0..(r0 + TILE).min(rows) {
                for c in c0..(c0 + TILE).min(cols) {
                    dst[c * rows + r] = src[r * cols + c];
                }
            }
        }
    }
}

/// `c[m×n] += a[m×k] · b[n×k]ᵀ`.
pub(crate) fn gemm_nt_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm(m, k, n, a, Layout::Normal, b, Layout::Transposed, c)
}

/// `c[m×n] += a[k×m]ᵀ · b[k×n]`.
pub(crate) fn gemm_tn_acc<T: Scalar>(m: usize, k: usize, n: usize, a: &[T], b: &[T], c: &mut [T]) {
    gemm(m, k, n, a, Layout::Transposed, b, Layout::Normal, c)
}
