//! Raw dense kernels shared by forward ops and their backward rules.
//! All matrices are row-major.

use crate::scalar::Scalar;

/// c[m,n] = a[m,k] * b[k,n]
pub(crate) fn matmul<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let c_row = &mut c[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            let b_row = &b[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj = *cj + aip * bj;
            }
        }
    }
}

/// c[m,n] += a[m,k] * b[n,k]^T   (b transposed)
pub(crate) fn matmul_nt<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&x, &y) in a_row.iter().zip(b_row) {
                acc = acc + x * y;
            }
            c[i * n + j] = c[i * n + j] + acc;
        }
    }
}

/// c[k,n] += a[m,k]^T * b[m,n]   (a transposed)
pub(crate) fn matmul_tn<T: Scalar>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    debug_assert_eq!(c.len(), k * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let b_row = &b[i * n..(i + 1) * n];
        for (p, &aip) in a_row.iter().enumerate() {
            let c_row = &mut c[p * n..(p + 1) * n];
            for (cj, &bj) in c_row.iter_mut().zip(b_row) {
                *cj = *cj + aip * bj;
            }
        }
    }
}

/// y[m] = w[m,n] * x[n]
pub(crate) fn matvec<T: Scalar>(w: &[T], x: &[T], m: usize, n: usize, y: &mut [T]) {
    debug_assert_eq!(w.len(), m * n);
    debug_assert_eq!(x.len(), n);
    debug_assert_eq!(y.len(), m);
    for (i, yi) in y.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        let mut acc = T::zero();
        for (&wv, &xv) in row.iter().zip(x) {
            acc = acc + wv * xv;
        }
        *yi = acc;
    }
}

/// y[n] += w[m,n]^T * g[m]
pub(crate) fn matvec_t_acc<T: Scalar>(w: &[T], g: &[T], m: usize, n: usize, y: &mut [T]) {
    debug_assert_eq!(w.len(), m * n);
    debug_assert_eq!(g.len(), m);
    debug_assert_eq!(y.len(), n);
    for (i, &gi) in g.iter().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        for (yj, &wv) in y.iter_mut().zip(row) {
            *yj = *yj + wv * gi;
        }
    }
}

/// w[m,n] += g[m] outer x[n]
pub(crate) fn outer_acc<T: Scalar>(g: &[T], x: &[T], m: usize, n: usize, w: &mut [T]) {
    debug_assert_eq!(w.len(), m * n);
    for (i, &gi) in g.iter().enumerate() {
        let row = &mut w[i * n..(i + 1) * n];
        for (wv, &xv) in row.iter_mut().zip(x) {
            *wv = *wv + gi * xv;
        }
    }
    debug_assert_eq!(g.len(), m);
}
