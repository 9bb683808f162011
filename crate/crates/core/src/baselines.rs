//! Deterministic reference solvers: Sinkhorn matrix scaling, Greenkhorn
//! greedy coordinate scaling (and its randomized variant), full-gradient
//! semi-dual ascent, and a brute-force primal oracle for 2x2 instances.
//!
//! All solvers report the regularized primal value
//!
//! ```text
//! G_eps(pi) = sum_ij pi_ij C_ij + eps * sum_ij pi_ij (log(pi_ij / (mu_i nu_j)) - 1)
//! ```
//!
//! whose relative-entropy term carries a `-1` inside, so that the value of
//! transporting a point mass onto itself at zero cost is exactly `-eps`.
//! The semi-dual objective in [`crate::semidual`] uses the same convention,
//! which keeps stochastic estimates and these baselines directly comparable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::measures::{CostMatrix, CostSpec, DiscreteMeasure, MeasureError};
use crate::semidual::{self, DualPotential, SemidualError};
use crate::Real;

/// Below this regularization the Sinkhorn iteration runs in the log domain.
pub const LOG_DOMAIN_EPS: f64 = 0.05;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("regularization must be strictly positive")]
    NonPositiveEpsilon,
    #[error("solver did not converge: marginal violation {violation:.3e} after {iters} iterations")]
    NotConverged { violation: f64, iters: u64 },
    #[error("expected a {want_rows}x{want_cols} problem, got {rows}x{cols}")]
    WrongSize {
        rows: usize,
        cols: usize,
        want_rows: usize,
        want_cols: usize,
    },
    #[error("kernel entries underflowed; use a larger eps or the log-domain path")]
    KernelUnderflow,
    #[error(transparent)]
    Semidual(#[from] SemidualError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// A coupling of two discrete measures together with its (regularized)
/// transport cost.
#[derive(Debug, Clone)]
pub struct TransportPlan<T> {
    matrix: Vec<T>,
    rows: usize,
    cols: usize,
    value: T,
}

impl<T: Real> TransportPlan<T> {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.matrix[i * self.cols + j]
    }

    pub fn value(&self) -> T {
        self.value
    }

    pub fn row_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.rows];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[i] += self.at(i, j);
            }
        }
        out
    }

    pub fn col_sums(&self) -> Vec<T> {
        let mut out = vec![T::zero(); self.cols];
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[j] += self.at(i, j);
            }
        }
        out
    }

    /// l1 distances of the plan marginals to the prescribed ones.
    pub fn marginal_violation(&self, mu: &DiscreteMeasure<T>, nu: &DiscreteMeasure<T>) -> (T, T) {
        let row = self
            .row_sums()
            .iter()
            .zip(mu.weights())
            .map(|(&s, &m)| (s - m).abs())
            .sum();
        let col = self
            .col_sums()
            .iter()
            .zip(nu.weights())
            .map(|(&s, &m)| (s - m).abs())
            .sum();
        (row, col)
    }
}

/// Per-iteration convergence record of a baseline solver.
#[derive(Debug, Clone, Copy)]
pub struct IterRecord<T> {
    pub iter: u64,
    pub violation: T,
    pub value: T,
}

fn check_sizes<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
) -> Result<(), BaselineError> {
    if cost.rows() != mu.len() || cost.cols() != nu.len() {
        return Err(BaselineError::WrongSize {
            rows: cost.rows(),
            cols: cost.cols(),
            want_rows: mu.len(),
            want_cols: nu.len(),
        });
    }
    Ok(())
}

/// Regularized primal value from the log-plan `L_ij = log pi_ij`.
fn value_from_log_plan<T: Real>(
    log_plan: &[T],
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
) -> T {
    let cols = nu.len();
    let mut acc = T::zero();
    for i in 0..mu.len() {
        for j in 0..cols {
            let lp = log_plan[i * cols + j];
            let p = lp.exp();
            if p > T::zero() {
                let kl_term = lp - mu.log_weight(i) - nu.log_weight(j) - T::one();
                acc += p * (cost.at(i, j) + eps * kl_term);
            }
        }
    }
    acc
}

fn plan_from_log<T: Real>(
    log_plan: Vec<T>,
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
) -> TransportPlan<T> {
    let value = value_from_log_plan(&log_plan, mu, nu, cost, eps);
    TransportPlan {
        matrix: log_plan.into_iter().map(|l| l.exp()).collect(),
        rows: mu.len(),
        cols: nu.len(),
        value,
    }
}

/// Alternating scaling until the worst l1 marginal violation drops below
/// `tol`. Runs in the log domain for `eps <= 0.05` (or when the kernel would
/// underflow), in plain scaling form otherwise.
pub fn sinkhorn<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
) -> Result<TransportPlan<T>, BaselineError> {
    Ok(sinkhorn_logged(mu, nu, cost, eps, tol, max_iters, 0)?.0)
}

/// As [`sinkhorn`], also recording `(iter, violation, value)` every
/// `record_every` iterations (`0` disables recording).
pub fn sinkhorn_logged<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    record_every: u64,
) -> Result<(TransportPlan<T>, Vec<IterRecord<T>>), BaselineError> {
    if !(eps > T::zero()) {
        return Err(BaselineError::NonPositiveEpsilon);
    }
    check_sizes(mu, nu, cost)?;
    let (i_count, j_count) = (mu.len(), nu.len());

    let c_max = cost
        .values()
        .iter()
        .copied()
        .fold(T::zero(), |a, b| a.max(b));
    let log_domain = eps <= T::of(LOG_DOMAIN_EPS) || c_max / eps > T::of(700.0);

    let mut records = Vec::new();
    // Potentials in log scale: log pi_ij = (f_i + g_j - C_ij) / eps. The
    // plain scaling path stores f = eps log u, g = eps log v.
    let mut f = vec![T::zero(); i_count];
    let mut g = vec![T::zero(); j_count];

    if log_domain {
        let mut logits = vec![T::zero(); j_count.max(i_count)];
        for iter in 1..=max_iters {
            for i in 0..i_count {
                for j in 0..j_count {
                    logits[j] = (g[j] - cost.at(i, j)) / eps;
                }
                f[i] = eps * mu.log_weight(i) - eps * log_sum_exp(&logits[..j_count]);
            }
            for j in 0..j_count {
                for i in 0..i_count {
                    logits[i] = (f[i] - cost.at(i, j)) / eps;
                }
                g[j] = eps * nu.log_weight(j) - eps * log_sum_exp(&logits[..i_count]);
            }
            let violation = row_violation_log(&f, &g, mu, nu, cost, eps);
            if record_every > 0 && iter % record_every == 0 {
                let lp = log_plan(&f, &g, cost, eps);
                records.push(IterRecord {
                    iter,
                    violation,
                    value: value_from_log_plan(&lp, mu, nu, cost, eps),
                });
            }
            if violation <= tol {
                let lp = log_plan(&f, &g, cost, eps);
                return Ok((plan_from_log(lp, mu, nu, cost, eps), records));
            }
        }
        let violation = row_violation_log(&f, &g, mu, nu, cost, eps);
        return Err(BaselineError::NotConverged {
            violation: violation.as_f64(),
            iters: max_iters,
        });
    }

    // Plain scaling path.
    let kernel = build_kernel(cost, eps)?;
    let mut u = vec![T::one(); i_count];
    let mut v = vec![T::one(); j_count];
    let mut kv = mat_vec(&kernel, &v, i_count, j_count);
    for iter in 1..=max_iters {
        for i in 0..i_count {
            u[i] = mu.weight(i) / kv[i];
        }
        let ktu = mat_t_vec(&kernel, &u, i_count, j_count);
        for j in 0..j_count {
            v[j] = nu.weight(j) / ktu[j];
        }
        kv = mat_vec(&kernel, &v, i_count, j_count);
        let mut violation = T::zero();
        for i in 0..i_count {
            violation += (u[i] * kv[i] - mu.weight(i)).abs();
        }
        let log_plan_now = || -> Vec<T> {
            let mut lp = vec![T::zero(); i_count * j_count];
            for i in 0..i_count {
                for j in 0..j_count {
                    lp[i * j_count + j] = u[i].ln() + v[j].ln() - cost.at(i, j) / eps;
                }
            }
            lp
        };
        if record_every > 0 && iter % record_every == 0 {
            let lp = log_plan_now();
            records.push(IterRecord {
                iter,
                violation,
                value: value_from_log_plan(&lp, mu, nu, cost, eps),
            });
        }
        if violation <= tol {
            let lp = log_plan_now();
            return Ok((plan_from_log(lp, mu, nu, cost, eps), records));
        }
    }
    let mut violation = T::zero();
    for i in 0..i_count {
        violation += (u[i] * kv[i] - mu.weight(i)).abs();
    }
    Err(BaselineError::NotConverged {
        violation: violation.as_f64(),
        iters: max_iters,
    })
}

fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), |a, b| a.max(b));
    let s: T = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

fn log_plan<T: Real>(f: &[T], g: &[T], cost: &CostMatrix<T>, eps: T) -> Vec<T> {
    let (i_count, j_count) = (f.len(), g.len());
    let mut lp = vec![T::zero(); i_count * j_count];
    for i in 0..i_count {
        for j in 0..j_count {
            lp[i * j_count + j] = (f[i] + g[j] - cost.at(i, j)) / eps;
        }
    }
    lp
}

fn row_violation_log<T: Real>(
    f: &[T],
    g: &[T],
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
) -> T {
    let mut violation = T::zero();
    for i in 0..mu.len() {
        let mut row = T::zero();
        for j in 0..nu.len() {
            row += ((f[i] + g[j] - cost.at(i, j)) / eps).exp();
        }
        violation += (row - mu.weight(i)).abs();
    }
    violation
}

fn build_kernel<T: Real>(cost: &CostMatrix<T>, eps: T) -> Result<Vec<T>, BaselineError> {
    let mut kernel = Vec::with_capacity(cost.values().len());
    for &c in cost.values() {
        let k = (-c / eps).exp();
        if !(k > T::zero()) {
            return Err(BaselineError::KernelUnderflow);
        }
        kernel.push(k);
    }
    Ok(kernel)
}

fn mat_vec<T: Real>(kernel: &[T], v: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); rows];
    for i in 0..rows {
        let mut acc = T::zero();
        for j in 0..cols {
            acc += kernel[i * cols + j] * v[j];
        }
        out[i] = acc;
    }
    out
}

fn mat_t_vec<T: Real>(kernel: &[T], u: &[T], rows: usize, cols: usize) -> Vec<T> {
    let mut out = vec![T::zero(); cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j] += kernel[i * cols + j] * u[i];
        }
    }
    out
}

/// Incrementally maintained scaling state shared by the greedy and
/// randomized coordinate solvers. Row/column updates touch `O(I + J)`
/// kernel entries; no full-matrix pass happens between updates.
struct CoordState<'a, T> {
    kernel: Vec<T>,
    mu: &'a DiscreteMeasure<T>,
    nu: &'a DiscreteMeasure<T>,
    u: Vec<T>,
    v: Vec<T>,
    kv: Vec<T>,
    ktu: Vec<T>,
    row_gap: Vec<T>,
    col_gap: Vec<T>,
    row_total: T,
    col_total: T,
    /// Kernel entries read by update steps; exposed for cost accounting.
    touches: u64,
}

impl<'a, T: Real> CoordState<'a, T> {
    fn new(
        mu: &'a DiscreteMeasure<T>,
        nu: &'a DiscreteMeasure<T>,
        cost: &CostMatrix<T>,
        eps: T,
    ) -> Result<Self, BaselineError> {
        let kernel = build_kernel(cost, eps)?;
        let (i_count, j_count) = (mu.len(), nu.len());
        let u = vec![T::one(); i_count];
        let v = vec![T::one(); j_count];
        let kv = mat_vec(&kernel, &v, i_count, j_count);
        let ktu = mat_t_vec(&kernel, &u, i_count, j_count);
        let mut state = Self {
            kernel,
            mu,
            nu,
            u,
            v,
            kv,
            ktu,
            row_gap: vec![T::zero(); i_count],
            col_gap: vec![T::zero(); j_count],
            row_total: T::zero(),
            col_total: T::zero(),
            touches: 0,
        };
        state.recompute_gaps();
        Ok(state)
    }

    fn rows(&self) -> usize {
        self.u.len()
    }

    fn cols(&self) -> usize {
        self.v.len()
    }

    fn recompute_gaps(&mut self) {
        self.row_total = T::zero();
        for i in 0..self.rows() {
            self.row_gap[i] = (self.u[i] * self.kv[i] - self.mu.weight(i)).abs();
            self.row_total += self.row_gap[i];
        }
        self.col_total = T::zero();
        for j in 0..self.cols() {
            self.col_gap[j] = (self.v[j] * self.ktu[j] - self.nu.weight(j)).abs();
            self.col_total += self.col_gap[j];
        }
    }

    /// Recomputes the matrix-vector products exactly, clearing incremental
    /// drift; used before accepting convergence.
    fn refresh(&mut self) {
        let (i_count, j_count) = (self.rows(), self.cols());
        self.kv = mat_vec(&self.kernel, &self.v, i_count, j_count);
        self.ktu = mat_t_vec(&self.kernel, &self.u, i_count, j_count);
        self.recompute_gaps();
    }

    fn violation(&self) -> T {
        self.row_total.max(self.col_total)
    }

    fn rescale_row(&mut self, i: usize) {
        let cols = self.cols();
        let new_u = self.mu.weight(i) / self.kv[i];
        let du = new_u - self.u[i];
        self.u[i] = new_u;
        self.row_total -= self.row_gap[i];
        self.row_gap[i] = T::zero();
        self.col_total = T::zero();
        for j in 0..cols {
            self.ktu[j] += du * self.kernel[i * cols + j];
            self.col_gap[j] = (self.v[j] * self.ktu[j] - self.nu.weight(j)).abs();
            self.col_total += self.col_gap[j];
        }
        self.touches += cols as u64;
    }

    fn rescale_col(&mut self, j: usize) {
        let cols = self.cols();
        let new_v = self.nu.weight(j) / self.ktu[j];
        let dv = new_v - self.v[j];
        self.v[j] = new_v;
        self.col_total -= self.col_gap[j];
        self.col_gap[j] = T::zero();
        self.row_total = T::zero();
        for i in 0..self.rows() {
            self.kv[i] += dv * self.kernel[i * cols + j];
            self.row_gap[i] = (self.u[i] * self.kv[i] - self.mu.weight(i)).abs();
            self.row_total += self.row_gap[i];
        }
        self.touches += self.rows() as u64;
    }

    fn greedy_index(&self) -> (bool, usize) {
        let mut best = T::neg_infinity();
        let mut pick = (true, 0usize);
        for (i, &gap) in self.row_gap.iter().enumerate() {
            if gap > best {
                best = gap;
                pick = (true, i);
            }
        }
        for (j, &gap) in self.col_gap.iter().enumerate() {
            if gap > best {
                best = gap;
                pick = (false, j);
            }
        }
        pick
    }

    /// Samples a row or column index with probability proportional to its
    /// marginal gap.
    fn sampled_index(&self, rng: &mut ChaCha8Rng) -> (bool, usize) {
        let total = (self.row_total + self.col_total).as_f64();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0f64;
        for (i, &gap) in self.row_gap.iter().enumerate() {
            acc += gap.as_f64();
            if acc > target {
                return (true, i);
            }
        }
        for (j, &gap) in self.col_gap.iter().enumerate() {
            acc += gap.as_f64();
            if acc > target {
                return (false, j);
            }
        }
        (false, self.cols() - 1)
    }

    fn apply(&mut self, pick: (bool, usize)) {
        if pick.0 {
            self.rescale_row(pick.1);
        } else {
            self.rescale_col(pick.1);
        }
    }

    fn into_plan(self, cost: &CostMatrix<T>, eps: T) -> TransportPlan<T> {
        let (i_count, j_count) = (self.rows(), self.cols());
        let mut lp = vec![T::zero(); i_count * j_count];
        for i in 0..i_count {
            for j in 0..j_count {
                lp[i * j_count + j] = self.u[i].ln() + self.v[j].ln() - cost.at(i, j) / eps;
            }
        }
        plan_from_log(lp, self.mu, self.nu, cost, eps)
    }
}

/// Outcome of a coordinate-scaling solve, with iteration accounting.
pub struct CoordSolve<T> {
    pub plan: TransportPlan<T>,
    pub iters: u64,
    /// Kernel entries read inside update steps; stays `O((I + J) * iters)`.
    pub kernel_touches: u64,
    pub records: Vec<IterRecord<T>>,
}

fn coord_descent<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    mut rng: Option<ChaCha8Rng>,
    record_every: u64,
) -> Result<CoordSolve<T>, BaselineError> {
    if !(eps > T::zero()) {
        return Err(BaselineError::NonPositiveEpsilon);
    }
    check_sizes(mu, nu, cost)?;
    let mut state = CoordState::new(mu, nu, cost, eps)?;
    let mut records = Vec::new();
    let mut iters = 0u64;
    while iters < max_iters {
        if state.violation() <= tol {
            state.refresh();
            if state.violation() <= tol {
                let touches = state.touches;
                return Ok(CoordSolve {
                    plan: state.into_plan(cost, eps),
                    iters,
                    kernel_touches: touches,
                    records,
                });
            }
        }
        let pick = match rng.as_mut() {
            None => state.greedy_index(),
            Some(r) => state.sampled_index(r),
        };
        state.apply(pick);
        iters += 1;
        if record_every > 0 && iters % record_every == 0 {
            let lp = {
                let mut lp = vec![T::zero(); state.rows() * state.cols()];
                for i in 0..state.rows() {
                    for j in 0..state.cols() {
                        lp[i * state.cols() + j] =
                            state.u[i].ln() + state.v[j].ln() - cost.at(i, j) / eps;
                    }
                }
                lp
            };
            records.push(IterRecord {
                iter: iters,
                violation: state.violation(),
                value: value_from_log_plan(&lp, mu, nu, cost, eps),
            });
        }
    }
    state.refresh();
    if state.violation() <= tol {
        let touches = state.touches;
        return Ok(CoordSolve {
            plan: state.into_plan(cost, eps),
            iters,
            kernel_touches: touches,
            records,
        });
    }
    Err(BaselineError::NotConverged {
        violation: state.violation().as_f64(),
        iters,
    })
}

/// Greedy coordinate scaling: each iteration rescales the single row or
/// column whose marginal entry violates its target most (l1 gap), at
/// `O(I + J)` cost per iteration.
pub fn greenkhorn<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
) -> Result<TransportPlan<T>, BaselineError> {
    Ok(greenkhorn_detailed(mu, nu, cost, eps, tol, max_iters, 0)?.plan)
}

/// As [`greenkhorn`], exposing iteration counts and the per-iteration log.
pub fn greenkhorn_detailed<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    record_every: u64,
) -> Result<CoordSolve<T>, BaselineError> {
    coord_descent(mu, nu, cost, eps, tol, max_iters, None, record_every)
}

/// Randomized coordinate scaling: rows and columns are drawn with
/// probability proportional to their marginal violation, so the worst
/// offenders are updated most often. A zero-violation state returns
/// immediately (the selection distribution would have no mass).
pub fn stochastic_greenkhorn<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    seed: u64,
) -> Result<TransportPlan<T>, BaselineError> {
    Ok(stochastic_greenkhorn_detailed(mu, nu, cost, eps, tol, max_iters, seed, 0)?.plan)
}

#[allow(clippy::too_many_arguments)]
pub fn stochastic_greenkhorn_detailed<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    seed: u64,
    record_every: u64,
) -> Result<CoordSolve<T>, BaselineError> {
    let rng = ChaCha8Rng::seed_from_u64(seed);
    coord_descent(mu, nu, cost, eps, tol, max_iters, Some(rng), record_every)
}

/// Deterministic maximization of the full semi-dual objective by gradient
/// ascent with Armijo backtracking, used as ground truth on discrete
/// instances. Returns the zero-mean maximizer and the objective value.
pub fn full_gradient_ascent<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
    tol: T,
    max_iters: u64,
) -> Result<(DualPotential<T>, T), BaselineError> {
    full_gradient_ascent_logged(mu, nu, cost, eps, tol, max_iters, 0).map(|(v, h, _)| (v, h))
}

/// As [`full_gradient_ascent`], recording `(iter, gradient norm, value)`
/// every `record_every` iterations.
#[allow(clippy::type_complexity)]
pub fn full_gradient_ascent_logged<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
    tol: T,
    max_iters: u64,
    record_every: u64,
) -> Result<(DualPotential<T>, T, Vec<IterRecord<T>>), BaselineError> {
    if !(eps > T::zero()) {
        return Err(BaselineError::NonPositiveEpsilon);
    }
    let mut records = Vec::new();
    let j_count = nu.len();
    let mut v = DualPotential::zero(j_count);
    let half = T::of(0.5);
    let sufficient = T::of(1e-4);
    // The gradient is (1/eps)-Lipschitz, so a step of eps always passes the
    // Armijo test; the trial step starts from a Barzilai-Borwein estimate of
    // the inverse curvature along the last displacement, which copes with the
    // flat directions these objectives develop at small eps.
    let mut step = eps;
    let mut prev: Option<(Vec<T>, Vec<T>)> = None; // (v, g) one iteration back
    let mut grad_norm = T::infinity();
    for iter in 1..=max_iters {
        let g = semidual::exact_grad_h(mu, &v, nu, cost, eps)?;
        grad_norm = semidual::l2_norm(&g);
        if record_every > 0 && iter % record_every == 0 {
            records.push(IterRecord {
                iter,
                violation: grad_norm,
                value: semidual::exact_h(mu, &v, nu, cost, eps)?,
            });
        }
        if grad_norm <= tol {
            let value = semidual::exact_h(mu, &v, nu, cost, eps)?;
            return Ok((v, value, records));
        }
        if let Some((v_old, g_old)) = &prev {
            let mut dv_dv = T::zero();
            let mut dv_dg = T::zero();
            for k in 0..j_count {
                let dv = v.values()[k] - v_old[k];
                let dg = g[k] - g_old[k];
                dv_dv += dv * dv;
                dv_dg += dv * dg;
            }
            if dv_dg < T::zero() {
                step = (dv_dv / -dv_dg).max(eps).min(eps * T::of(1e12));
            }
        }
        prev = Some((v.values().to_vec(), g.clone()));

        let h_here = semidual::exact_h(mu, &v, nu, cost, eps)?;
        let gg = grad_norm * grad_norm;
        let mut s = step;
        loop {
            let cand: Vec<T> = v
                .values()
                .iter()
                .zip(&g)
                .map(|(&vi, &gi)| vi + s * gi)
                .collect();
            let cand = DualPotential::recentered(cand);
            let h_cand = semidual::exact_h(mu, &cand, nu, cost, eps)?;
            if h_cand >= h_here + sufficient * s * gg || s <= eps * half {
                v = cand;
                break;
            }
            s *= half;
        }
    }
    Err(BaselineError::NotConverged {
        violation: grad_norm.as_f64(),
        iters: max_iters,
    })
}

/// Brute-force primal value on a 2x2 instance. A 2x2 coupling has one free
/// parameter `t = pi_11`, constrained to `[max(0, mu_1 + nu_1 - 1),
/// min(mu_1, nu_1)]`; the objective is minimized over `t` by golden-section
/// search to an interval of width `1e-10`.
pub fn brute_force_primal_2x2<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostMatrix<T>,
    eps: T,
) -> Result<T, BaselineError> {
    if mu.len() != 2 || nu.len() != 2 || cost.rows() != 2 || cost.cols() != 2 {
        return Err(BaselineError::WrongSize {
            rows: cost.rows(),
            cols: cost.cols(),
            want_rows: 2,
            want_cols: 2,
        });
    }
    if eps < T::zero() {
        return Err(BaselineError::Semidual(SemidualError::NegativeEpsilon));
    }
    let (m1, n1) = (mu.weight(0), nu.weight(0));
    let lo = T::zero().max(m1 + n1 - T::one());
    let hi = m1.min(n1);

    let objective = |t: T| -> T {
        let plan = [
            [t, m1 - t],
            [n1 - t, T::one() - m1 - n1 + t],
        ];
        let mut acc = T::zero();
        for i in 0..2 {
            for j in 0..2 {
                let p = plan[i][j].max(T::zero());
                acc += p * cost.at(i, j);
                if eps > T::zero() && p > T::zero() {
                    let reference = mu.weight(i) * nu.weight(j);
                    acc += eps * p * ((p / reference).ln() - T::one());
                }
            }
        }
        acc
    };

    if hi - lo <= T::of(1e-15) {
        return Ok(objective(lo));
    }
    // golden-section bracketing
    let phi = T::of(0.5 * (5f64.sqrt() - 1.0));
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while (b - a) > T::of(1e-10) {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = objective(d);
        }
    }
    let mid = objective((a + b) / T::of(2.0));
    Ok(mid.min(objective(lo)).min(objective(hi)))
}
