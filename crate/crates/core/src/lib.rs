//! Stochastic estimation of (entropically regularized) optimal-transport
//! costs between a source measure known only through samples and a discrete
//! target measure with finite support.
//!
//! The regularized cost is maximized in its semi-dual form over a single
//! potential vector `v` of length `J` (the target support size), which turns
//! the problem into stochastic optimization of an expectation and lets a
//! Robbins-Monro iteration estimate both the optimal potential and the cost
//! itself from a stream of source samples, together with online confidence
//! intervals. Deterministic baselines (Sinkhorn scaling, Greenkhorn, full
//! gradient ascent, tiny brute-force oracles) are provided for validation,
//! plus Laguerre-cell assignment for semi-discrete transport maps.
//!
//! Modules:
//! - [`measures`]: discrete measures, sample sources, cost functions, CSV I/O
//! - [`semidual`]: the semi-dual objective, its gradient/Hessian, soft assignments
//! - [`rmsolver`]: Robbins-Monro iteration, Polyak averaging, online estimators
//! - [`baselines`]: Sinkhorn / Greenkhorn / ascent reference solvers
//! - [`laguerre`]: Laguerre-cell assignment of source points to target atoms
//!
//! All numerics are generic over the scalar type through the [`Real`] trait;
//! `f64` is the precision every documented tolerance refers to.

pub mod baselines;
pub mod laguerre;
pub mod measures;
pub mod rmsolver;
pub mod semidual;

mod scalar;

pub use scalar::Real;

/// Formats a number with 12 significant digits, the precision used by all
/// CSV and console output.
pub fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

pub type Measure32 = measures::DiscreteMeasure<f32>;
pub type Measure64 = measures::DiscreteMeasure<f64>;
pub type Potential32 = semidual::DualPotential<f32>;
pub type Potential64 = semidual::DualPotential<f64>;
pub type Plan32 = baselines::TransportPlan<f32>;
pub type Plan64 = baselines::TransportPlan<f64>;
pub type RunConfig64 = rmsolver::RunConfig<f64>;
pub type SolverState64 = rmsolver::SolverState<f64>;
