//! Zero-mean, unit-variance Gaussian process with a Matérn-5/2 kernel.
//!
//! The posterior is
//!
//! ```text
//! μ(x)  = k(x)ᵀ K⁻¹ f
//! σ²(x) = k(x, x) − k(x)ᵀ K⁻¹ k(x)
//! ```
//!
//! where `K = [k(x_p, x_q)] + jitter · I` is factorized once at fit time.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::matern52;
use crate::linalg::Cholesky;
use crate::scalar::Scalar;

/// Posterior mean and standard deviation at a query point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior<T> {
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> Posterior<T> {
    pub fn variance(&self) -> T {
        self.std * self.std
    }
}

#[derive(Debug, Clone)]
pub struct GaussianProcess<T> {
    dim: usize,
    points: Vec<Vec<T>>,
    values: Vec<T>,
    lengthscales: Vec<T>,
    jitter: T,
    chol: Option<Cholesky<T>>,
    alpha: Vec<T>,
}

impl<T: Scalar> GaussianProcess<T> {
    /// Prior-only process over `dim` dimensions.
    pub fn prior(dim: usize, lengthscales: Vec<T>) -> Self {
        assert_eq!(lengthscales.len(), dim);
        Self {
            dim,
            points: Vec::new(),
            values: Vec::new(),
            lengthscales,
            jitter: T::zero(),
            chol: None,
            alpha: Vec::new(),
        }
    }

    pub fn fit(points: Vec<Vec<T>>, values: Vec<T>, lengthscales: Vec<T>, jitter: T) -> Result<Self> {
        let dim = lengthscales.len();
        if points.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: points.len(), got: values.len() });
        }
        if let Some(bad) = points.iter().find(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }
        let n = points.len();
        if n == 0 {
            return Ok(Self::prior(dim, lengthscales));
        }
        let mut k = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..i {
                let v = matern52(&points[i], &points[j], &lengthscales);
                k[i * n + j] = v;
                k[j * n + i] = v;
            }
            k[i * n + i] = T::one() + jitter;
        }
        let chol = Cholesky::factor(&k, n).ok_or(Error::NotPositiveDefinite { jitter: jitter.as_f64() })?;
        let alpha = chol.solve(&values);
        Ok(Self { dim, points, values, lengthscales, jitter, chol: Some(chol), alpha })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn lengthscales(&self) -> &[T] {
        &self.lengthscales
    }

    pub fn jitter(&self) -> T {
        self.jitter
    }

    fn cross_covariance(&self, x: &[T]) -> Vec<T> {
        self.points.iter().map(|p| matern52(p, x, &self.lengthscales)).collect()
    }

    pub fn posterior(&self, x: &[T]) -> Posterior<T> {
        debug_assert_eq!(x.len(), self.dim);
        let Some(chol) = &self.chol else {
            return Posterior { mean: T::zero(), std: T::one() };
        };
        let kx = self.cross_covariance(x);
        let mean = kx.iter().zip(&self.alpha).map(|(a, b)| *a * *b).sum::<T>();
        let mut v = kx;
        chol.solve_lower_in_place(&mut v);
        let reduction = v.iter().map(|a| *a * *a).sum::<T>();
        let var = (T::one() - reduction).max(T::zero());
        Posterior { mean, std: var.sqrt() }
    }

    /// `log p(f | X) = −½ fᵀK⁻¹f − ½ log|K| − n/2 log 2π`.
    pub fn log_marginal_likelihood(&self) -> T {
        let Some(chol) = &self.chol else {
            return T::zero();
        };
        let half = T::lit(0.5);
        let n = T::from_usize(self.len()).unwrap();
        let fit = self.values.iter().zip(&self.alpha).map(|(a, b)| *a * *b).sum::<T>();
        -half * fit - half * chol.log_det() - half * n * T::lit(std::f64::consts::TAU).ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_interpolates() {
        let gp = GaussianProcess::fit(vec![vec![0.4f64, 0.2]], vec![1.7], vec![0.5, 0.5], 1e-12).unwrap();
        let p = gp.posterior(&[0.4, 0.2]);
        assert!((p.mean - 1.7).abs() < 1e-9);
        assert!(p.std < 1e-5);
    }

    #[test]
    fn far_query_recovers_prior() {
        let gp = GaussianProcess::fit(vec![vec![0.0f64]], vec![3.0], vec![0.01], 1e-10).unwrap();
        let p = gp.posterior(&[1.0]);
        assert!(p.mean.abs() < 1e-12);
        assert!((p.std - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_process_is_prior() {
        let gp = GaussianProcess::<f64>::prior(3, vec![1.0; 3]);
        let p = gp.posterior(&[0.1, 0.2, 0.3]);
        assert_eq!(p, Posterior { mean: 0.0, std: 1.0 });
    }

    #[test]
    fn duplicate_points_without_jitter_fail() {
        let err = GaussianProcess::fit(vec![vec![0.5], vec![0.5]], vec![1.0, 1.0], vec![1.0], 0.0).unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
        assert!(err.to_string().contains("increase the jitter"));
    }

    #[test]
    fn dimension_mismatch_reported() {
        let err = GaussianProcess::fit(vec![vec![0.5, 0.1]], vec![1.0], vec![1.0], 1e-8).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { expected: 1, got: 2 }));
    }

    #[test]
    fn f32_instantiation() {
        let gp = GaussianProcess::fit(vec![vec![0.1f32], vec![0.8]], vec![1.0, -1.0], vec![0.3], 1e-6).unwrap();
        let p = gp.posterior(&[0.1]);
        assert!((p.mean - 1.0).abs() < 1e-3);
    }
}
