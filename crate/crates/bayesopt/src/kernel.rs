//! Matérn covariance with smoothness 5/2.

use crate::scalar::Scalar;

/// Scaled Euclidean distance `‖(x1 − x2) / ℓ‖` with one length-scale per dimension.
pub fn scaled_distance<T: Scalar>(x1: &[T], x2: &[T], lengthscales: &[T]) -> T {
    debug_assert_eq!(x1.len(), x2.len());
    debug_assert_eq!(x1.len(), lengthscales.len());
    x1.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let d = (*a - *b) / *l;
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// Matérn-5/2 correlation as a function of the scaled distance `r`:
/// `(1 + √5 r + 5r²/3) · exp(−√5 r)`.
#[inline]
pub fn matern52_r<T: Scalar>(r: T) -> T {
    let s5 = T::lit(5.0).sqrt();
    let sr = s5 * r;
    (T::one() + sr + T::lit(5.0 / 3.0) * r * r) * (-sr).exp()
}

/// Unit-variance Matérn-5/2 kernel `k(x1, x2)`; `k(x, x) = 1`.
#[inline]
pub fn matern52<T: Scalar>(x1: &[T], x2: &[T], lengthscales: &[T]) -> T {
    matern52_r(scaled_distance(x1, x2, lengthscales))
}
