//! Surrogate model wrapping a [`GaussianProcess`] with output standardization and
//! periodic length-scale/jitter selection by log marginal likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::{GaussianProcess, Posterior};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Hyperparameters are re-selected once this many points were added since the last selection.
    pub refit_every: usize,
    pub lengthscale_grid: Vec<f64>,
    /// Candidate diagonal jitters in standardized units; the smallest must be ≥ 1e-8.
    pub jitter_grid: Vec<f64>,
    /// Coordinate-ascent sweeps over the per-dimension length-scales.
    pub sweeps: usize,
    pub initial_lengthscale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            refit_every: 10,
            lengthscale_grid: vec![0.05, 0.1, 0.2, 0.35, 0.5, 0.8, 1.2, 2.0, 4.0],
            jitter_grid: vec![1e-8, 1e-6, 1e-4, 1e-2, 1e-1],
            sweeps: 2,
            initial_lengthscale: 0.3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Surrogate<T> {
    dim: usize,
    config: SurrogateConfig,
    points: Vec<Vec<T>>,
    values: Vec<T>,
    offset: T,
    scale: T,
    lengthscales: Vec<T>,
    jitter: T,
    added_since_refit: usize,
    gp: GaussianProcess<T>,
}

impl<T: Scalar> Surrogate<T> {
    pub fn new(dim: usize, config: SurrogateConfig) -> Self {
        let lengthscales = vec![T::lit(config.initial_lengthscale); dim];
        let jitter = T::lit(config.jitter_grid.first().copied().unwrap_or(1e-8).max(1e-8));
        Self {
            dim,
            points: Vec::new(),
            values: Vec::new(),
            offset: T::zero(),
            scale: T::one(),
            gp: GaussianProcess::prior(dim, lengthscales.clone()),
            lengthscales,
            jitter,
            added_since_refit: 0,
            config,
        }
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

    pub fn gp(&self) -> &GaussianProcess<T> {
        &self.gp
    }

    pub fn add(&mut self, x: Vec<T>, f: T) -> Result<()> {
        self.extend(std::iter::once((x, f)))
    }

    /// Adds several observations and refits once.
    pub fn extend(&mut self, data: impl IntoIterator<Item = (Vec<T>, T)>) -> Result<()> {
        for (x, f) in data {
            if x.len() != self.dim {
                return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
            }
            self.points.push(x);
            self.values.push(f);
            self.added_since_refit += 1;
        }
        self.refit()
    }

    /// Replaces the value of an existing observation (used when a per-setting best changes).
    pub fn set_value(&mut self, index: usize, f: T) -> Result<()> {
        self.values[index] = f;
        self.refit()
    }

    fn standardize(&mut self) -> Vec<T> {
        let n = T::from_usize(self.values.len().max(1)).unwrap();
        let mean = self.values.iter().copied().sum::<T>() / n;
        let var = self.values.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / n;
        let sd = var.sqrt();
        self.offset = mean;
        self.scale = if sd > T::epsilon() * (T::one() + mean.abs()) { sd } else { T::one() };
        self.values.iter().map(|v| (*v - self.offset) / self.scale).collect()
    }

    fn refit(&mut self) -> Result<()> {
        let standardized = self.standardize();
        let due = self.added_since_refit >= self.config.refit_every
            || (self.points.len() >= 2 && self.points.len() == self.added_since_refit);
        if due && self.points.len() >= 2 {
            self.select_hyperparameters(&standardized);
            self.added_since_refit = 0;
        }
        self.gp = self.fit_with(&standardized, &self.lengthscales, self.jitter).or_else(|_| {
            // escalate jitter until the factorization succeeds
            let mut last = Error::NotPositiveDefinite { jitter: self.jitter.as_f64() };
            for &j in &self.config.jitter_grid {
                if T::lit(j) <= self.jitter {
                    continue;
                }
                match self.fit_with(&standardized, &self.lengthscales, T::lit(j)) {
                    Ok(gp) => {
                        self.jitter = T::lit(j);
                        return Ok(gp);
                    }
                    Err(e) => last = e,
                }
            }
            Err(last)
        })?;
        Ok(())
    }

    fn fit_with(&self, standardized: &[T], lengthscales: &[T], jitter: T) -> Result<GaussianProcess<T>> {
        GaussianProcess::fit(self.points.clone(), standardized.to_vec(), lengthscales.to_vec(), jitter)
    }

    fn score(&self, standardized: &[T], lengthscales: &[T], jitter: T) -> f64 {
        match self.fit_with(standardized, lengthscales, jitter) {
            Ok(gp) => {
                let v = gp.log_marginal_likelihood().as_f64();
                if v.is_finite() {
                    v
                } else {
                    f64::NEG_INFINITY
                }
            }
            Err(_) => f64::NEG_INFINITY,
        }
    }

    fn select_hyperparameters(&mut self, standardized: &[T]) {
        let grid: Vec<T> = self.config.lengthscale_grid.iter().map(|&l| T::lit(l)).collect();
        let jitters: Vec<T> = self.config.jitter_grid.iter().map(|&j| T::lit(j.max(1e-8))).collect();
        let mut best_ls = self.lengthscales.clone();
        let mut best_jitter = self.jitter;
        let mut best = self.score(standardized, &best_ls, best_jitter);

        for &l in &grid {
            for &j in &jitters {
                let ls = vec![l; self.dim];
                let s = self.score(standardized, &ls, j);
                if s > best {
                    best = s;
                    best_ls = ls;
                    best_jitter = j;
                }
            }
        }
        for _ in 0..self.config.sweeps {
            for d in 0..self.dim {
                for &l in &grid {
                    let mut ls = best_ls.clone();
                    ls[d] = l;
                    let s = self.score(standardized, &ls, best_jitter);
                    if s > best {
                        best = s;
                        best_ls = ls;
                    }
                }
            }
            for &j in &jitters {
                let s = self.score(standardized, &best_ls, j);
                if s > best {
                    best = s;
                    best_jitter = j;
                }
            }
        }
        self.lengthscales = best_ls;
        self.jitter = best_jitter;
    }

    /// Posterior in the original objective units.
    pub fn predict(&self, x: &[T]) -> Posterior<T> {
        let p = self.gp.posterior(x);
        Posterior { mean: p.mean * self.scale + self.offset, std: p.std * self.scale }
    }
}

/// One cell of a two-variable cut through a surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlicePoint<T> {
    pub a: T,
    pub b: T,
    pub mean: T,
    pub std: T,
}

impl<T: Scalar> Surrogate<T> {
    /// Evaluates `(μ, σ)` on a `resolution × resolution` grid over dimensions
    /// `dim_a` and `dim_b`, holding the other coordinates at `base`.
    pub fn slice(&self, base: &[T], dim_a: usize, dim_b: usize, resolution: usize) -> Vec<SlicePoint<T>> {
        let steps = resolution.max(2);
        let denom = T::from_usize(steps - 1).unwrap();
        let mut out = Vec::with_capacity(steps * steps);
        for i in 0..steps {
            for j in 0..steps {
                let mut x = base.to_vec();
                x[dim_a] = T::from_usize(i).unwrap() / denom;
                x[dim_b] = T::from_usize(j).unwrap() / denom;
                let p = self.predict(&x);
                out.push(SlicePoint { a: x[dim_a], b: x[dim_b], mean: p.mean, std: p.std });
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardization_round_trips_at_data() {
        let mut s = Surrogate::<f64>::new(1, SurrogateConfig::default());
        s.extend(vec![(vec![0.1], 100.0), (vec![0.5], 250.0), (vec![0.9], 120.0)]).unwrap();
        for (x, f) in s.points().to_vec().iter().zip(s.values().to_vec()) {
            let p = s.predict(x);
            assert!((p.mean - f).abs() < 1e-2 * 150.0, "{} vs {}", p.mean, f);
        }
    }

    #[test]
    fn constant_values_do_not_break() {
        let mut s = Surrogate::<f64>::new(2, SurrogateConfig::default());
        s.extend(vec![(vec![0.1, 0.1], 5.0), (vec![0.9, 0.4], 5.0)]).unwrap();
        let p = s.predict(&[0.5, 0.5]);
        assert!((p.mean - 5.0).abs() < 1e-9);
    }

    #[test]
    fn duplicate_points_escalate_jitter() {
        let mut s = Surrogate::<f64>::new(1, SurrogateConfig::default());
        s.extend(vec![(vec![0.3], 1.0), (vec![0.3], 1.0), (vec![0.7], 2.0)]).unwrap();
        assert!(s.predict(&[0.5]).mean.is_finite());
    }

    #[test]
    fn rejects_wrong_dimension() {
        let mut s = Surrogate::<f64>::new(2, SurrogateConfig::default());
        assert!(s.add(vec![0.1], 1.0).is_err());
    }
}
