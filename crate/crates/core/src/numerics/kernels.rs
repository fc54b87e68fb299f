//! Small dense kernels over row-major slices.

use super::Real;

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// `y += A x` for a `rows x cols` row-major `A`.
#[inline]
pub fn gemv_acc<T: Real>(a: &[T], cols: usize, x: &[T], y: &mut [T]) {
    debug_assert_eq!(a.len(), y.len() * cols);
    debug_assert_eq!(x.len(), cols);
    for (row, out) in a.chunks_exact(cols).zip(y.iter_mut()) {
        *out += dot(row, x);
    }
}

/// `y += Aᵀ x` for a `rows x cols` row-major `A`.
#[inline]
pub fn gemv_t_acc<T: Real>(a: &[T], cols: usize, x: &[T], y: &mut [T]) {
    debug_assert_eq!(a.len(), x.len() * cols);
    debug_assert_eq!(y.len(), cols);
    for (row, &xi) in a.chunks_exact(cols).zip(x) {
        if xi != T::zero() {
            axpy(xi, row, y);
        }
    }
}

/// `A += u vᵀ`.
#[inline]
pub fn ger_acc<T: Real>(a: &mut [T], u: &[T], v: &[T]) {
    let cols = v.len();
    debug_assert_eq!(a.len(), u.len() * cols);
    for (row, &ui) in a.chunks_exact_mut(cols).zip(u) {
        if ui != T::zero() {
            axpy(ui, v, row);
        }
    }
}

/// `y += alpha x`.
#[inline]
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (o, &v) in y.iter_mut().zip(x) {
        *o += alpha * v;
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Numerically stable in-place softmax; returns the log-normaliser.
pub fn softmax_in_place<T: Real>(v: &mut [T]) -> T {
    let max = v.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    let inv = T::one() / sum;
    for x in v.iter_mut() {
        *x *= inv;
    }
    max + sum.ln()
}

pub fn l2_norm<T: Real>(v: &[T]) -> T {
    dot(v, v).sqrt()
}
