//! Small dense solvers for the normal-equation systems used by the sidelobe
//! filter design, the Gaussian peak fitter and the polynomial fits.

use crate::Real;

/// Solves `A x = b` for symmetric positive-definite `A` (row-major, n by n)
/// by Cholesky factorization. `a` and `b` are overwritten; on success `b`
/// holds the solution. Returns the ratio of the largest to smallest Cholesky
/// pivot (a cheap conditioning estimate), or `None` when a pivot collapses,
/// i.e. the system is not numerically positive definite.
pub(crate) fn cholesky_solve<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Option<T> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);

    let mut pivot_min = T::infinity();
    let mut pivot_max = T::zero();
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if d <= T::zero() {
            return None;
        }
        let l = d.sqrt();
        pivot_min = pivot_min.min(l);
        pivot_max = pivot_max.max(l);
        a[j * n + j] = l;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / l;
        }
    }

    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * n + k] * b[k];
        }
        b[i] = s / a[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= a[k * n + i] * b[k];
        }
        b[i] = s / a[i * n + i];
    }

    Some((pivot_max / pivot_min) * (pivot_max / pivot_min))
}
