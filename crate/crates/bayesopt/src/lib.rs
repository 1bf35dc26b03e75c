//! Bayesian optimization building blocks: a Matérn-5/2 Gaussian process,
//! UCB acquisition with the `κ_n` schedule, Sobol initial designs, and a
//! two-level optimizer in which an inner profit search runs inside an outer
//! welfare search.
//!
//! Everything is generic over the floating-point type (see [`Scalar`]); the
//! `f64` aliases below are what the rest of the workspace uses.

pub mod acquisition;
pub mod error;
pub mod gp;
pub mod kernel;
pub mod linalg;
pub mod nested;
pub mod scalar;
pub mod sobol;
pub mod surrogate;

pub use acquisition::{kappa, next_point, ucb, KappaSchedule, SearchBox, SearchSettings};
pub use error::{Error, Result};
pub use gp::Posterior;
pub use kernel::{matern52, matern52_r};
pub use nested::{
    optimize_operator_cold, Checkpoint, Evaluation, Hyperplane, Incumbent, NestedConfig, Observation,
    OperatorOutcome, Stage, TraceEntry, TwoLevelProblem,
};
pub use scalar::Scalar;
pub use sobol::{corners, initial_design, sobol_points, Sobol};
pub use surrogate::{SlicePoint, SurrogateConfig};

pub type GaussianProcess = gp::GaussianProcess<f64>;
pub type GaussianProcessF32 = gp::GaussianProcess<f32>;
pub type Surrogate = surrogate::Surrogate<f64>;
pub type SurrogateF32 = surrogate::Surrogate<f32>;
pub type NestedOptimizer<'p, P> = nested::NestedOptimizer<'p, f64, P>;
