//! The semi-dual objective of entropic optimal transport against a discrete
//! target, its softmax assignment weights, gradient and Hessian, and full
//! expectations for discrete source measures.
//!
//! For a target measure `nu` on atoms `y_1..y_J`, a potential `v` in `R^J`
//! and regularization `eps > 0`, the per-sample objective is
//!
//! ```text
//! h_eps(x, v) = sum_j v_j nu_j - eps * log( sum_j nu_j exp((v_j - c(x, y_j)) / eps) ) - eps
//! ```
//!
//! and for `eps = 0` the soft minimum becomes a hard minimum:
//! `h_0(x, v) = sum_j v_j nu_j + min_j { c(x, y_j) - v_j }`. The transport
//! cost is the maximum over `v` of `E[h_eps(X, v)]`. All exponentials go
//! through a max-subtracted log-sum-exp, so small `eps` does not overflow.

use thiserror::Error;

use crate::measures::{CostSpec, DiscreteMeasure, MeasureError};
use crate::Real;

/// Relative threshold that triggers re-centering of a zero-mean potential.
const ZERO_MEAN_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SemidualError {
    #[error("regularization must be strictly positive")]
    NonPositiveEpsilon,
    #[error("regularization must be nonnegative")]
    NegativeEpsilon,
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A dual potential vector of length `J`, optionally pinned to the zero-mean
/// hyperplane (the objective is invariant under adding a constant to `v`, so
/// the maximizer is only determined inside that hyperplane).
#[derive(Debug, Clone, PartialEq)]
pub struct DualPotential<T> {
    values: Vec<T>,
    zero_mean: bool,
}

impl<T: Real> DualPotential<T> {
    /// Wraps raw coefficients without a zero-mean constraint.
    pub fn new(values: Vec<T>) -> Self {
        Self {
            values,
            zero_mean: false,
        }
    }

    /// The zero vector of length `j`, flagged zero-mean.
    pub fn zero(j: usize) -> Self {
        Self {
            values: vec![T::zero(); j],
            zero_mean: true,
        }
    }

    /// The unit vector along the all-ones direction, `1/sqrt(J)` per entry.
    pub fn unit_direction(j: usize) -> Self {
        let c = T::one() / T::of_usize(j).sqrt();
        Self {
            values: vec![c; j],
            zero_mean: false,
        }
    }

    /// Projects the coefficients onto the zero-mean hyperplane and keeps them
    /// there under [`DualPotential::recenter`].
    pub fn recentered(mut values: Vec<T>) -> Self {
        let mean = mean(&values);
        for v in &mut values {
            *v -= mean;
        }
        Self {
            values,
            zero_mean: true,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn is_zero_mean(&self) -> bool {
        self.zero_mean
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().sum()
    }

    /// Subtracts the mean when the constraint is active and the accumulated
    /// drift `|sum v_j|` exceeds `1e-9 * max(1, ||v||)`.
    pub fn recenter(&mut self) {
        if !self.zero_mean {
            return;
        }
        let s = self.sum();
        let norm = l2_norm(&self.values);
        if s.abs() > T::of(ZERO_MEAN_TOL) * T::one().max(norm) {
            let m = s / T::of_usize(self.values.len());
            for v in &mut self.values {
                *v -= m;
            }
        }
    }

    /// Every coefficient shifted by `t` (the assignment is invariant under
    /// this; the objective is too).
    pub fn shifted(&self, t: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v + t).collect(),
            zero_mean: false,
        }
    }
}

pub(crate) fn mean<T: Real>(v: &[T]) -> T {
    v.iter().copied().sum::<T>() / T::of_usize(v.len())
}

pub(crate) fn l2_norm<T: Real>(v: &[T]) -> T {
    v.iter().map(|&x| x * x).sum::<T>().sqrt()
}

/// Softmax assignment weights of one source point over the target atoms:
/// strictly positive, summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftAssignment<T> {
    pi: Vec<T>,
}

impl<T: Real> SoftAssignment<T> {
    pub fn weights(&self) -> &[T] {
        &self.pi
    }

    pub fn into_weights(self) -> Vec<T> {
        self.pi
    }
}

/// Scratch buffers reused across semi-dual evaluations in hot loops.
#[derive(Debug, Clone)]
pub(crate) struct Workspace<T> {
    logits: Vec<T>,
}

impl<T> Default for Workspace<T> {
    fn default() -> Self {
        Self { logits: Vec::new() }
    }
}

/// Fused evaluation for `eps > 0`: returns `h_eps(x, v)` and, when requested,
/// writes the assignment weights into `pi_out`.
pub(crate) fn eval_regularized<T: Real>(
    x: &[T],
    v: &[T],
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
    ws: &mut Workspace<T>,
    mut pi_out: Option<&mut Vec<T>>,
) -> Result<T, SemidualError> {
    debug_assert!(eps > T::zero());
    let j_count = nu.len();
    ws.logits.clear();
    let mut v_dot_nu = T::zero();
    let mut max_logit = T::neg_infinity();
    for j in 0..j_count {
        let c = cost.cost(x, nu.point(j))?;
        let logit = (v[j] - c) / eps + nu.log_weight(j);
        ws.logits.push(logit);
        max_logit = max_logit.max(logit);
        v_dot_nu += v[j] * nu.weight(j);
    }
    let mut total = T::zero();
    for l in &mut ws.logits {
        *l = (*l - max_logit).exp();
        total += *l;
    }
    if let Some(pi) = pi_out.as_deref_mut() {
        pi.clear();
        pi.extend(ws.logits.iter().map(|&e| e / total));
    }
    let lse = max_logit + total.ln();
    Ok(v_dot_nu - eps * lse - eps)
}

/// Fused evaluation for `eps = 0`: returns `h_0(x, v)` and the smallest
/// index attaining `min_j { c(x, y_j) - v_j }`.
pub(crate) fn eval_unregularized<T: Real>(
    x: &[T],
    v: &[T],
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<(T, usize), SemidualError> {
    let mut v_dot_nu = T::zero();
    let mut best = T::infinity();
    let mut best_j = 0usize;
    for j in 0..nu.len() {
        let c = cost.cost(x, nu.point(j))?;
        let slack = c - v[j];
        if slack < best {
            best = slack;
            best_j = j;
        }
        v_dot_nu += v[j] * nu.weight(j);
    }
    Ok((v_dot_nu + best, best_j))
}

/// The assignment weights `pi_j(x, v)`, proportional to
/// `nu_j exp((v_j - c(x, y_j)) / eps)` and normalized to sum one.
pub fn soft_assignment<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<SoftAssignment<T>, SemidualError> {
    if !(eps > T::zero()) {
        return Err(SemidualError::NonPositiveEpsilon);
    }
    let mut ws = Workspace::default();
    let mut pi = Vec::with_capacity(nu.len());
    eval_regularized(x, v.values(), nu, cost, eps, &mut ws, Some(&mut pi))?;
    Ok(SoftAssignment { pi })
}

/// The per-sample semi-dual objective; `eps = 0` uses the hard minimum.
pub fn h_eps<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<T, SemidualError> {
    if eps < T::zero() {
        return Err(SemidualError::NegativeEpsilon);
    }
    if eps == T::zero() {
        return Ok(eval_unregularized(x, v.values(), nu, cost)?.0);
    }
    let mut ws = Workspace::default();
    eval_regularized(x, v.values(), nu, cost, eps, &mut ws, None)
}

/// Gradient of `h_eps` in `v`: `nu - pi(x, v)`. Sums to zero and has
/// Euclidean norm at most 2.
pub fn grad_h<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<Vec<T>, SemidualError> {
    let pi = soft_assignment(x, v, nu, cost, eps)?;
    Ok(nu
        .weights()
        .iter()
        .zip(pi.weights())
        .map(|(&w, &p)| w - p)
        .collect())
}

/// Hessian of `h_eps` in `v`: `(pi pi^T - diag(pi)) / eps`. Symmetric,
/// negative semi-definite, annihilates the all-ones vector.
pub fn hessian_h<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<Vec<Vec<T>>, SemidualError> {
    let pi = soft_assignment(x, v, nu, cost, eps)?;
    let p = pi.weights();
    let j_count = p.len();
    let mut h = vec![vec![T::zero(); j_count]; j_count];
    for a in 0..j_count {
        for b in 0..j_count {
            let mut val = p[a] * p[b];
            if a == b {
                val -= p[a];
            }
            h[a][b] = val / eps;
        }
    }
    Ok(h)
}

/// A supergradient of the unregularized objective `h_0(x, .)` at `v`:
/// `nu - e_{j*}` where `j*` is the smallest index attaining
/// `min_j { c(x, y_j) - v_j }`.
pub fn supergrad_h0<T: Real>(
    x: &[T],
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<Vec<T>, SemidualError> {
    let (_, j_star) = eval_unregularized(x, v.values(), nu, cost)?;
    let mut g: Vec<T> = nu.weights().to_vec();
    g[j_star] -= T::one();
    Ok(g)
}

/// Full expectation of `h_eps` under a discrete source measure.
pub fn exact_h<T: Real>(
    mu: &DiscreteMeasure<T>,
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<T, SemidualError> {
    if eps < T::zero() {
        return Err(SemidualError::NegativeEpsilon);
    }
    let mut ws = Workspace::default();
    let mut acc = T::zero();
    for i in 0..mu.len() {
        let hi = if eps == T::zero() {
            eval_unregularized(mu.point(i), v.values(), nu, cost)?.0
        } else {
            eval_regularized(mu.point(i), v.values(), nu, cost, eps, &mut ws, None)?
        };
        acc += mu.weight(i) * hi;
    }
    Ok(acc)
}

/// Gradient of the full objective for a discrete source:
/// `nu - E_mu[pi(X, v)]`.
pub fn exact_grad_h<T: Real>(
    mu: &DiscreteMeasure<T>,
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<Vec<T>, SemidualError> {
    if !(eps > T::zero()) {
        return Err(SemidualError::NonPositiveEpsilon);
    }
    let mut ws = Workspace::default();
    let mut pi = Vec::with_capacity(nu.len());
    let mut mean_pi = vec![T::zero(); nu.len()];
    for i in 0..mu.len() {
        eval_regularized(mu.point(i), v.values(), nu, cost, eps, &mut ws, Some(&mut pi))?;
        for (m, &p) in mean_pi.iter_mut().zip(&pi) {
            *m += mu.weight(i) * p;
        }
    }
    Ok(nu
        .weights()
        .iter()
        .zip(&mean_pi)
        .map(|(&w, &m)| w - m)
        .collect())
}

/// Hessian of the full objective for a discrete source:
/// `E_mu[(pi pi^T - diag(pi))] / eps`.
pub fn exact_hessian_h<T: Real>(
    mu: &DiscreteMeasure<T>,
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<Vec<Vec<T>>, SemidualError> {
    if !(eps > T::zero()) {
        return Err(SemidualError::NonPositiveEpsilon);
    }
    let j_count = nu.len();
    let mut ws = Workspace::default();
    let mut pi = Vec::with_capacity(j_count);
    let mut h = vec![vec![T::zero(); j_count]; j_count];
    for i in 0..mu.len() {
        eval_regularized(mu.point(i), v.values(), nu, cost, eps, &mut ws, Some(&mut pi))?;
        let wi = mu.weight(i);
        for a in 0..j_count {
            for b in 0..j_count {
                let mut val = pi[a] * pi[b];
                if a == b {
                    val -= pi[a];
                }
                h[a][b] += wi * val / eps;
            }
        }
    }
    Ok(h)
}

/// Euclidean norm of the full gradient; convergence measure for ascent.
pub fn exact_grad_norm<T: Real>(
    mu: &DiscreteMeasure<T>,
    v: &DualPotential<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
) -> Result<T, SemidualError> {
    Ok(l2_norm(&exact_grad_h(mu, v, nu, cost, eps)?))
}
