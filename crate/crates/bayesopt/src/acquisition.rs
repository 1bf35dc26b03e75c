//! Upper-confidence-bound acquisition `A(x) = μ(x) + κ σ(x)` and its maximization
//! over a (possibly partially frozen) box.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sobol::Sobol;
use crate::surrogate::Surrogate;

/// `κ_n = sqrt(2 log(π² n^{2 + d/2} / (3δ)))`.
pub fn kappa(n: usize, dim: usize, delta: f64) -> f64 {
    assert!(n >= 1, "iteration index starts at 1");
    let n = n as f64;
    let d = dim as f64;
    let arg = std::f64::consts::PI.powi(2) * n.powf(2.0 + d / 2.0) / (3.0 * delta);
    (2.0 * arg.ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaSchedule {
    pub delta: f64,
    /// Once this many iterations have run, κ is limited to 1.
    pub cap_after: Option<usize>,
}

impl Default for KappaSchedule {
    fn default() -> Self {
        Self { delta: 0.1, cap_after: None }
    }
}

impl KappaSchedule {
    pub fn value(&self, n: usize, dim: usize) -> f64 {
        let k = kappa(n, dim, self.delta);
        match self.cap_after {
            Some(after) if n > after => k.min(1.0),
            _ => k,
        }
    }
}

#[inline]
pub fn ucb<T: Scalar>(surrogate: &Surrogate<T>, x: &[T], kappa: T) -> T {
    let p = surrogate.predict(x);
    p.mean + kappa * p.std
}

/// Axis-aligned search region inside `[0, 1]^D` with optionally frozen coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub frozen: Vec<Option<T>>,
}

impl<T: Scalar> SearchBox<T> {
    pub fn unit(dim: usize) -> Self {
        Self { lower: vec![T::zero(); dim], upper: vec![T::one(); dim], frozen: vec![None; dim] }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn freeze(mut self, index: usize, value: T) -> Self {
        self.frozen[index] = Some(value);
        self
    }

    pub fn free_dims(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| self.frozen[i].is_none()).collect()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && (0..self.dim()).all(|i| match self.frozen[i] {
                Some(v) => x[i] == v,
                None => x[i] >= self.lower[i] && x[i] <= self.upper[i],
            })
    }

    /// Maps free coordinates from `[0,1]` into the box; frozen ones are copied.
    fn embed(&self, free_dims: &[usize], u: &[T]) -> Vec<T> {
        let mut x: Vec<T> = self.frozen.iter().map(|f| f.unwrap_or(T::zero())).collect();
        for (k, &i) in free_dims.iter().enumerate() {
            x[i] = self.lower[i] * (T::one() - u[k]) + self.upper[i] * u[k];
        }
        x
    }

    fn clamp(&self, i: usize, v: T) -> T {
        v.max(self.lower[i]).min(self.upper[i])
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchSettings {
    pub sobol_starts: usize,
    pub random_starts: usize,
    /// Number of best starting points that get coordinate-wise refinement.
    pub refine: usize,
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for SearchSettings {
    fn default() -> Self {
        Self { sobol_starts: 64, random_starts: 64, refine: 5, tolerance: 1e-4, seed: 0 }
    }
}

/// Approximate maximizer of UCB over the free coordinates of `bounds`.
pub fn next_point<T: Scalar>(
    surrogate: &Surrogate<T>,
    kappa: T,
    bounds: &SearchBox<T>,
    settings: &SearchSettings,
) -> Result<Vec<T>> {
    if bounds.dim() != surrogate.dim() {
        return Err(Error::DimensionMismatch { expected: surrogate.dim(), got: bounds.dim() });
    }
    let free = bounds.free_dims();
    if free.is_empty() {
        return Ok(bounds.embed(&free, &[]));
    }
    let score = |x: &[T]| ucb(surrogate, x, kappa);

    let mut starts: Vec<Vec<T>> = Vec::new();
    let mut sobol = Sobol::new(free.len())?;
    for _ in 0..settings.sobol_starts.max(1) {
        let u: Vec<T> = sobol.next_point();
        starts.push(bounds.embed(&free, &u));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    for _ in 0..settings.random_starts {
        let u: Vec<T> = (0..free.len()).map(|_| T::lit(rng.random::<f64>())).collect();
        starts.push(bounds.embed(&free, &u));
    }
    // observed points projected onto the box act as exploitation starts
    for p in surrogate.points() {
        let mut x: Vec<T> = (0..bounds.dim()).map(|i| bounds.clamp(i, p[i])).collect();
        for (i, f) in bounds.frozen.iter().enumerate() {
            if let Some(v) = f {
                x[i] = *v;
            }
        }
        starts.push(x);
    }

    let mut scored: Vec<(T, usize)> = starts.iter().enumerate().map(|(i, x)| (score(x), i)).collect();
    // stable: ties keep generation order
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal).then(a.1.cmp(&b.1)));

    let (mut best_val, best_idx) = scored[0];
    let mut best = starts[best_idx].clone();
    let tol = T::lit(settings.tolerance);
    for &(val, idx) in scored.iter().take(settings.refine) {
        let (x, v) = refine(&score, bounds, &free, starts[idx].clone(), val, tol);
        if v > best_val {
            best_val = v;
            best = x;
        }
    }
    Ok(best)
}

/// Compass search with step halving until the step is below `tol`.
fn refine<T: Scalar>(
    score: &impl Fn(&[T]) -> T,
    bounds: &SearchBox<T>,
    free: &[usize],
    mut x: Vec<T>,
    mut fx: T,
    tol: T,
) -> (Vec<T>, T) {
    let mut steps: Vec<T> = free.iter().map(|&i| (bounds.upper[i] - bounds.lower[i]) * T::lit(0.25)).collect();
    let half = T::lit(0.5);
    while steps.iter().any(|s| *s >= tol) {
        let mut improved = false;
        for (k, &i) in free.iter().enumerate() {
            if steps[k] < tol {
                continue;
            }
            for dir in [T::one(), -T::one()] {
                let mut y = x.clone();
                y[i] = bounds.clamp(i, x[i] + dir * steps[k]);
                if y[i] == x[i] {
                    continue;
                }
                let fy = score(&y);
                if fy > fx {
                    x = y;
                    fx = fy;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            for s in &mut steps {
                *s *= half;
            }
        }
    }
    (x, fx)
}
