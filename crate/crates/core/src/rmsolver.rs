//! Robbins-Monro stochastic ascent on the semi-dual objective, with Polyak
//! iterate averaging and online estimation of the transport cost and its
//! asymptotic variance.
//!
//! One step consumes one source sample `x` and updates
//!
//! ```text
//! v_{n+1} = v_n + gamma_{n+1} * ( grad_v h_eps(x, v_n) - alpha <v_n, u> u )
//! ```
//!
//! where `u = 1/sqrt(J) * ones` and `gamma_n = gamma / n^c`. With `alpha = 0`
//! the gradient keeps the iterate inside the zero-mean hyperplane (the iterate
//! is re-centered to cancel floating-point drift); with `alpha > 0` the
//! penalty pulls the mean component to zero instead, and both variants follow
//! the same trajectory when started from a zero-mean point.
//!
//! The running estimates use the *pre-step* potential: after `n` steps,
//! `w_hat = (1/n) sum_k h_eps(X_k, v_{k-1})`, and `sigma2_hat` is the running
//! mean of `h_eps^2` minus `w_hat^2`, which feeds two-sided normal confidence
//! intervals `w_hat ± z sigma_hat / sqrt(n)`. For `eps = 0` the same
//! machinery runs on `h_0` and a supergradient; the normal approximation is
//! then a conjecture, not a guarantee, and callers should label it as such.

use std::io::{self, Write};

use thiserror::Error;

use crate::measures::{
    CostSpec, DiscreteMeasure, MeasureError, SampleSource, Sampler, SourceKind,
};
use crate::semidual::{
    self, eval_regularized, eval_unregularized, DualPotential, SemidualError, Workspace,
};
use crate::Real;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("regularization must be strictly positive for this entry point")]
    NonPositiveEpsilon,
    #[error("regularization must be zero for this entry point")]
    PositiveEpsilon,
    #[error("step sizes are defined for n >= 1")]
    ZeroIteration,
    #[error("confidence intervals need at least 2 samples")]
    InsufficientSamples,
    #[error("confidence level must lie strictly between 0 and 1")]
    InvalidLevel,
    #[error("inconsistent run configuration: {0}")]
    ConfigInconsistent(String),
    #[error(transparent)]
    Semidual(#[from] SemidualError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Polynomially decaying step sizes `gamma_n = gamma / n^c` with
/// `gamma > 0` and `1/2 < c <= 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSchedule<T> {
    gamma: T,
    c: T,
}

impl<T: Real> StepSchedule<T> {
    pub fn new(gamma: T, c: T) -> Result<Self, SolverError> {
        if !(gamma > T::zero()) {
            return Err(SolverError::ConfigInconsistent(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(c > T::of(0.5) && c <= T::one()) {
            return Err(SolverError::ConfigInconsistent(format!(
                "exponent c must lie in (1/2, 1], got {c}"
            )));
        }
        Ok(Self { gamma, c })
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn exponent(&self) -> T {
        self.c
    }

    /// `gamma / n^c`, strictly decreasing in `n`.
    pub fn step_size(&self, n: u64) -> Result<T, SolverError> {
        if n == 0 {
            return Err(SolverError::ZeroIteration);
        }
        Ok(self.gamma * T::of(n as f64).powf(-self.c))
    }
}

/// The step scale used in all reference runs: `eps / (2 nu_min)` in the
/// regularized case, `eps_min / (4 nu_min)` when `eps = 0`.
pub fn default_gamma<T: Real>(eps: T, nu: &DiscreteMeasure<T>, eps_min: T) -> T {
    let nu_min = nu.min_weight();
    if eps > T::zero() {
        eps / (T::of(2.0) * nu_min)
    } else {
        eps_min / (T::of(4.0) * nu_min)
    }
}

/// Fallback regularization scale entering the `eps = 0` step size.
pub const DEFAULT_EPS_MIN: f64 = 0.01;

/// Default exponent of the step schedule.
pub const DEFAULT_C: f64 = 0.51;

/// Initial potential policy.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPotential<T> {
    /// Zero vector (zero-mean; the usual start for the penalty-free variant).
    Zero,
    /// `1/sqrt(J)` in every coordinate (not zero-mean; pair with `alpha > 0`).
    UnitDirection,
    Given(Vec<T>),
}

/// Everything a solver run depends on besides the data itself.
#[derive(Debug, Clone)]
pub struct RunConfig<T> {
    pub eps: T,
    /// Mean-penalty strength; `0` selects the projection-free variant.
    pub alpha: T,
    pub schedule: StepSchedule<T>,
    pub n_iters: u64,
    pub seed: u64,
    pub init: InitPotential<T>,
    /// Snapshot stride for traces; `0` records only the first and last state.
    pub record_every: u64,
    /// Two-sided level of the confidence intervals recorded in traces.
    pub ci_level: T,
}

impl<T: Real> RunConfig<T> {
    /// Reference parameters: `c = 0.51`, `gamma` from [`default_gamma`],
    /// `alpha = 0`, zero initial potential, snapshots every 1000 steps.
    pub fn standard(
        eps: T,
        nu: &DiscreteMeasure<T>,
        n_iters: u64,
        seed: u64,
    ) -> Result<Self, SolverError> {
        let gamma = default_gamma(eps, nu, T::of(DEFAULT_EPS_MIN));
        Ok(Self {
            eps,
            alpha: T::zero(),
            schedule: StepSchedule::new(gamma, T::of(DEFAULT_C))?,
            n_iters,
            seed,
            init: InitPotential::Zero,
            record_every: 1000,
            ci_level: T::of(0.95),
        })
    }

    /// Checks internal consistency against a target support of size `j`.
    pub fn validate(&self, j: usize) -> Result<(), SolverError> {
        if self.eps < T::zero() {
            return Err(SolverError::ConfigInconsistent(
                "eps must be nonnegative".into(),
            ));
        }
        if self.alpha < T::zero() {
            return Err(SolverError::ConfigInconsistent(
                "alpha must be nonnegative".into(),
            ));
        }
        if !(self.ci_level > T::zero() && self.ci_level < T::one()) {
            return Err(SolverError::InvalidLevel);
        }
        if let InitPotential::Given(v) = &self.init {
            if v.len() != j {
                return Err(SolverError::ConfigInconsistent(format!(
                    "initial potential has length {}, target support has {j}",
                    v.len()
                )));
            }
        }
        if self.alpha == T::zero() {
            // the penalty-free variant only converges inside the zero-mean hyperplane
            let zero_mean = match &self.init {
                InitPotential::Zero => true,
                InitPotential::UnitDirection => false,
                InitPotential::Given(v) => {
                    let sum: T = v.iter().copied().sum();
                    sum.abs() <= T::of(1e-9) * T::one().max(semidual::l2_norm(v))
                }
            };
            if !zero_mean {
                return Err(SolverError::ConfigInconsistent(
                    "alpha = 0 requires a zero-mean initial potential".into(),
                ));
            }
        }
        Ok(())
    }

    fn initial_potential(&self, j: usize) -> DualPotential<T> {
        match &self.init {
            InitPotential::Zero => DualPotential::zero(j),
            InitPotential::UnitDirection => DualPotential::unit_direction(j),
            InitPotential::Given(v) => {
                if self.alpha == T::zero() {
                    DualPotential::recentered(v.clone())
                } else {
                    DualPotential::new(v.clone())
                }
            }
        }
    }
}

/// Mutable state of one stochastic run after `n` steps.
#[derive(Debug, Clone)]
pub struct SolverState<T> {
    v_hat: DualPotential<T>,
    v_bar: DualPotential<T>,
    n: u64,
    w_hat: T,
    h2_mean: T,
}

impl<T: Real> SolverState<T> {
    pub fn new(init: DualPotential<T>) -> Self {
        let v_bar = DualPotential::new(init.values().to_vec());
        Self {
            v_hat: init,
            v_bar,
            n: 0,
            w_hat: T::zero(),
            h2_mean: T::zero(),
        }
    }

    pub fn from_parts(
        v_hat: DualPotential<T>,
        v_bar: DualPotential<T>,
        n: u64,
        w_hat: T,
        h2_mean: T,
    ) -> Self {
        Self {
            v_hat,
            v_bar,
            n,
            w_hat,
            h2_mean,
        }
    }

    /// Current iterate.
    pub fn v_hat(&self) -> &DualPotential<T> {
        &self.v_hat
    }

    /// Polyak average of the iterates produced so far (the initial potential
    /// is excluded from the average).
    pub fn v_bar(&self) -> &DualPotential<T> {
        &self.v_bar
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// Running estimate of the transport cost.
    pub fn w_hat(&self) -> T {
        self.w_hat
    }

    /// Running mean of the squared per-sample objective.
    pub fn h2_mean(&self) -> T {
        self.h2_mean
    }

    /// Variance estimate, clamped at zero against roundoff for tiny `n`.
    pub fn sigma2_hat(&self) -> T {
        (self.h2_mean - self.w_hat * self.w_hat).max(T::zero())
    }

    pub fn sigma_hat(&self) -> T {
        self.sigma2_hat().sqrt()
    }
}

/// Reusable buffers for the per-step evaluation.
#[derive(Debug, Clone)]
pub struct StepScratch<T> {
    ws: Workspace<T>,
    pi: Vec<T>,
}

impl<T> Default for StepScratch<T> {
    fn default() -> Self {
        Self {
            ws: Workspace::default(),
            pi: Vec::new(),
        }
    }
}

fn step_inner<T: Real>(
    state: &mut SolverState<T>,
    x: &[T],
    config: &RunConfig<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    scratch: &mut StepScratch<T>,
) -> Result<(), SolverError> {
    let n_next = state.n + 1;
    let gamma = config.schedule.step_size(n_next)?;
    let count = T::of(n_next as f64);

    // Per-sample objective and ascent direction at the pre-step potential.
    let h = if config.eps > T::zero() {
        eval_regularized(
            x,
            state.v_hat.values(),
            nu,
            cost,
            config.eps,
            &mut scratch.ws,
            Some(&mut scratch.pi),
        )?
    } else {
        let (h, j_star) = eval_unregularized(x, state.v_hat.values(), nu, cost)?;
        scratch.pi.clear();
        scratch.pi.resize(nu.len(), T::zero());
        scratch.pi[j_star] = T::one();
        h
    };

    // Online statistics consume the pre-step potential.
    state.w_hat += (h - state.w_hat) / count;
    state.h2_mean += (h * h - state.h2_mean) / count;

    let penalty = if config.alpha > T::zero() {
        config.alpha * semidual::mean(state.v_hat.values())
    } else {
        T::zero()
    };
    {
        let v = state.v_hat.values_mut();
        for j in 0..nu.len() {
            let grad_j = nu.weight(j) - scratch.pi[j];
            v[j] += gamma * (grad_j - penalty);
        }
    }
    if config.alpha == T::zero() {
        state.v_hat.recenter();
    }

    {
        let v = state.v_hat.values();
        let bar = state.v_bar.values_mut();
        for j in 0..v.len() {
            bar[j] += (v[j] - bar[j]) / count;
        }
    }
    state.n = n_next;
    Ok(())
}

/// One Robbins-Monro step for `eps > 0`.
pub fn rm_step<T: Real>(
    state: &mut SolverState<T>,
    x: &[T],
    config: &RunConfig<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<(), SolverError> {
    if !(config.eps > T::zero()) {
        return Err(SolverError::NonPositiveEpsilon);
    }
    step_inner(state, x, config, nu, cost, &mut StepScratch::default())
}

/// One stochastic supergradient step for `eps = 0`.
pub fn rm_step_unregularized<T: Real>(
    state: &mut SolverState<T>,
    x: &[T],
    config: &RunConfig<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<(), SolverError> {
    if config.eps != T::zero() {
        return Err(SolverError::PositiveEpsilon);
    }
    step_inner(state, x, config, nu, cost, &mut StepScratch::default())
}

/// Quantile of the standard normal distribution (rational approximation,
/// relative error below `1.2e-9`).
pub fn standard_normal_quantile<T: Real>(p: T) -> Result<T, SolverError> {
    let p = p.as_f64();
    if !(0.0..=1.0).contains(&p) || p == 0.0 || p == 1.0 {
        return Err(SolverError::InvalidLevel);
    }
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    Ok(T::of(x))
}

/// Two-sided normal confidence interval `w_hat ± z sigma_hat / sqrt(n)`.
pub fn confidence_interval<T: Real>(
    state: &SolverState<T>,
    level: T,
) -> Result<(T, T), SolverError> {
    if state.n < 2 {
        return Err(SolverError::InsufficientSamples);
    }
    let z = standard_normal_quantile((T::one() + level) / T::of(2.0))?;
    let half = z * state.sigma_hat() / T::of(state.n as f64).sqrt();
    Ok((state.w_hat - half, state.w_hat + half))
}

/// One recorded snapshot of a run.
#[derive(Debug, Clone)]
pub struct TraceRow<T> {
    pub n: u64,
    pub w_hat: T,
    pub sigma_hat: Option<T>,
    pub ci: Option<(T, T)>,
    /// Norm of the full objective gradient; only available when the source
    /// measure is discrete and `eps > 0`.
    pub grad_norm: Option<T>,
    pub v_hat: Vec<T>,
    pub v_bar: Vec<T>,
}

/// Snapshots of a stochastic run plus its final state.
#[derive(Debug, Clone)]
pub struct RunTrace<T> {
    pub rows: Vec<TraceRow<T>>,
    pub final_state: SolverState<T>,
    /// Set when a finite sample stream ran out before the iteration budget.
    pub stream_exhausted: bool,
}

impl<T: Real> RunTrace<T> {
    /// Writes `n,w_hat,sigma_hat,ci_lo,ci_hi,grad_norm,v_0..v_{J-1}` with
    /// 12 significant digits; unavailable fields are left empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let j = self.final_state.v_hat().len();
        write!(w, "n,w_hat,sigma_hat,ci_lo,ci_hi,grad_norm")?;
        for k in 0..j {
            write!(w, ",v_{k}")?;
        }
        writeln!(w)?;
        let fmt_opt = |v: Option<T>| v.map_or(String::new(), |x| crate::sig12(x.as_f64()));
        for row in &self.rows {
            write!(
                w,
                "{},{},{},{},{},{}",
                row.n,
                crate::sig12(row.w_hat.as_f64()),
                fmt_opt(row.sigma_hat),
                fmt_opt(row.ci.map(|c| c.0)),
                fmt_opt(row.ci.map(|c| c.1)),
                fmt_opt(row.grad_norm),
            )?;
            for &v in &row.v_hat {
                write!(w, ",{}", crate::sig12(v.as_f64()))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

fn snapshot<T: Real>(
    state: &SolverState<T>,
    config: &RunConfig<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    mu: Option<&DiscreteMeasure<T>>,
) -> Result<TraceRow<T>, SolverError> {
    let sigma_hat = (state.n >= 1).then(|| state.sigma_hat());
    let ci = if state.n >= 2 {
        Some(confidence_interval(state, config.ci_level)?)
    } else {
        None
    };
    let grad_norm = match mu {
        Some(m) if config.eps > T::zero() => Some(semidual::exact_grad_norm(
            m,
            state.v_hat(),
            nu,
            cost,
            config.eps,
        )?),
        _ => None,
    };
    Ok(TraceRow {
        n: state.n,
        w_hat: state.w_hat(),
        sigma_hat,
        ci,
        grad_norm,
        v_hat: state.v_hat().values().to_vec(),
        v_bar: state.v_bar().values().to_vec(),
    })
}

/// Runs the stochastic solver against an arbitrary sample stream.
///
/// Passing the source measure in `mu` (when it is discrete and known) adds
/// the exact gradient norm to each snapshot. A finite stream that ends early
/// stops the run and marks the trace accordingly.
pub fn run_with_sampler<T: Real>(
    config: &RunConfig<T>,
    sampler: &mut dyn Sampler<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    mu: Option<&DiscreteMeasure<T>>,
) -> Result<RunTrace<T>, SolverError> {
    config.validate(nu.len())?;
    let mut state = SolverState::new(config.initial_potential(nu.len()));
    let mut scratch = StepScratch::default();
    let mut x: Vec<T> = Vec::with_capacity(sampler.dim());
    let mut rows = vec![snapshot(&state, config, nu, cost, mu)?];
    let mut exhausted = false;
    for i in 1..=config.n_iters {
        match sampler.sample_into(&mut x) {
            Ok(()) => {}
            Err(MeasureError::StreamExhausted) => {
                exhausted = true;
                break;
            }
            Err(e) => return Err(e.into()),
        }
        step_inner(&mut state, &x, config, nu, cost, &mut scratch)?;
        if config.record_every > 0 && i % config.record_every == 0 {
            rows.push(snapshot(&state, config, nu, cost, mu)?);
        }
    }
    if rows.last().map(|r| r.n) != Some(state.n) {
        rows.push(snapshot(&state, config, nu, cost, mu)?);
    }
    Ok(RunTrace {
        rows,
        final_state: state,
        stream_exhausted: exhausted,
    })
}

/// Runs the stochastic solver on a seedable source. The source is reseeded
/// from `config.seed`, so a given configuration is fully reproducible; a
/// discrete (empirical) source also gets exact gradient norms in the trace.
pub fn run<T: Real>(
    config: &RunConfig<T>,
    source: &mut SampleSource<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
) -> Result<RunTrace<T>, SolverError> {
    source.reseed(config.seed);
    let mu = match source.kind() {
        SourceKind::Empirical(m) => Some(m.clone()),
        _ => None,
    };
    run_with_sampler(config, source, nu, cost, mu.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::draw;
    use crate::semidual::h_eps;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn nu_two() -> DiscreteMeasure<f64> {
        DiscreteMeasure::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap()
    }

    fn config_for(
        eps: f64,
        nu: &DiscreteMeasure<f64>,
        n_iters: u64,
        seed: u64,
    ) -> RunConfig<f64> {
        RunConfig::standard(eps, nu, n_iters, seed).unwrap()
    }

    #[test]
    fn step_sizes_match_formula() {
        let s: StepSchedule<f64> = StepSchedule::new(1.0, 0.51).unwrap();
        assert_eq!(s.step_size(1).unwrap(), 1.0);
        assert!((s.step_size(100).unwrap() - 0.09549925860214358).abs() < 1e-15);
        assert!(matches!(s.step_size(0), Err(SolverError::ZeroIteration)));
        assert!(StepSchedule::new(0.0, 0.51).is_err());
        assert!(StepSchedule::new(1.0, 0.5).is_err());
        assert!(StepSchedule::new(1.0, 1.01).is_err());
    }

    #[test]
    fn step_sizes_decrease_strictly() {
        for &(gamma, c) in &[(1.25, 0.51), (0.3, 0.8), (2.0, 1.0)] {
            let s = StepSchedule::new(gamma, c).unwrap();
            let mut prev = f64::INFINITY;
            for n in 1..200u64 {
                let g = s.step_size(n).unwrap();
                assert!(g < prev && g > 0.0);
                prev = g;
            }
        }
    }

    #[test]
    fn default_gamma_values() {
        let nu25 = DiscreteMeasure::uniform(
            crate::measures::grid_points(5, &[0.0, 0.0], &[1.0, 1.0]).unwrap(),
        )
        .unwrap();
        assert!((default_gamma(0.1, &nu25, 0.01) - 1.25f64).abs() < 1e-12);
        assert!((default_gamma(0.0, &nu25, 0.01) - 0.0625f64).abs() < 1e-12);
        let nu2 = nu_two();
        assert!((default_gamma(1.0, &nu2, 0.01) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn normal_quantile_accuracy() {
        let z: f64 = standard_normal_quantile(0.975).unwrap();
        assert!((z - 1.959963984540054).abs() < 1e-8);
        let z50: f64 = standard_normal_quantile(0.5).unwrap();
        assert!(z50.abs() < 1e-12);
        let z75: f64 = standard_normal_quantile(0.75).unwrap();
        assert!((z75 - 0.6744897501960817).abs() < 1e-8);
        let tail: f64 = standard_normal_quantile(1e-4).unwrap();
        assert!((tail + 3.71901648545568).abs() < 1e-7);
        assert!(standard_normal_quantile::<f64>(0.0).is_err());
        assert!(standard_normal_quantile::<f64>(1.0).is_err());
    }

    #[test]
    fn confidence_interval_examples() {
        let v = DualPotential::zero(2);
        // degenerate: zero variance collapses the interval
        let s = SolverState::from_parts(v.clone(), v.clone(), 100, 2.5, 2.5 * 2.5);
        let (lo, hi) = confidence_interval(&s, 0.95).unwrap();
        assert_eq!((lo, hi), (2.5, 2.5));

        // w = 1, sigma = 2, n = 400, level 95%: half-width ~ 1.96 * 2 / 20
        let s: SolverState<f64> = SolverState::from_parts(v.clone(), v.clone(), 400, 1.0, 1.0 + 4.0);
        assert!((s.sigma_hat() - 2.0).abs() < 1e-12);
        let (lo, hi) = confidence_interval(&s, 0.95).unwrap();
        assert!((lo - 0.804).abs() < 5e-4, "lo = {lo}");
        assert!((hi - 1.196).abs() < 5e-4, "hi = {hi}");

        let s = SolverState::from_parts(v.clone(), v, 1, 0.0, 0.0);
        assert!(matches!(
            confidence_interval(&s, 0.95),
            Err(SolverError::InsufficientSamples)
        ));
    }

    #[test]
    fn single_target_keeps_potential_and_averages_costs() {
        let nu = DiscreteMeasure::uniform(vec![vec![0.0, 0.0]]).unwrap();
        let mu = DiscreteMeasure::uniform(vec![vec![3.0, 4.0], vec![0.0, 1.0]]).unwrap();
        let eps = 0.25;
        let config = config_for(eps, &nu, 0, 9);
        let mut src = SampleSource::new(SourceKind::Empirical(mu), 9);
        src.reseed(9);
        let samples = draw(&mut src, 500).unwrap();
        let mut state = SolverState::new(DualPotential::zero(1));
        let mut expected_sum = 0.0;
        for (k, x) in samples.iter().enumerate() {
            rm_step(&mut state, x, &config, &nu, &CostSpec::Euclidean).unwrap();
            expected_sum += (x[0] * x[0] + x[1] * x[1]).sqrt() - eps;
            assert_eq!(state.v_hat().values(), &[0.0]);
            let want = expected_sum / (k + 1) as f64;
            assert!((state.w_hat() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn first_step_is_definitional() {
        let nu = nu_two();
        let eps = 0.5;
        let config = config_for(eps, &nu, 0, 0);
        let x = vec![0.25, 0.5];
        let mut state = SolverState::new(DualPotential::zero(2));
        let g0 = crate::semidual::grad_h(
            &x,
            &DualPotential::zero(2),
            &nu,
            &CostSpec::Euclidean,
            eps,
        )
        .unwrap();
        let h0 = h_eps(&x, &DualPotential::zero(2), &nu, &CostSpec::Euclidean, eps).unwrap();
        rm_step(&mut state, &x, &config, &nu, &CostSpec::Euclidean).unwrap();
        let gamma1 = config.schedule.step_size(1).unwrap();
        for j in 0..2 {
            assert!((state.v_hat().values()[j] - gamma1 * g0[j]).abs() < 1e-15);
            assert!((state.v_bar().values()[j] - state.v_hat().values()[j]).abs() < 1e-15);
        }
        assert!((state.w_hat() - h0).abs() < 1e-15);
    }

    #[test]
    fn penalty_contributes_minus_gamma_alpha_unit() {
        let nu = nu_two();
        let eps = 0.5;
        let mut config = config_for(eps, &nu, 0, 0);
        let alpha = nu.min_weight() / eps;
        config.alpha = alpha;
        config.init = InitPotential::UnitDirection;
        let x = vec![0.25, 0.5];
        let u = DualPotential::unit_direction(2);
        let g0 = crate::semidual::grad_h(&x, &u, &nu, &CostSpec::Euclidean, eps).unwrap();
        let mut state = SolverState::new(u.clone());
        rm_step(&mut state, &x, &config, &nu, &CostSpec::Euclidean).unwrap();
        let gamma1 = config.schedule.step_size(1).unwrap();
        for j in 0..2 {
            let want = u.values()[j] + gamma1 * (g0[j] - alpha * u.values()[j]);
            assert!((state.v_hat().values()[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn online_statistics_match_batch_recomputation() {
        let nu = nu_two();
        let mu = DiscreteMeasure::new(
            vec![vec![0.1, 0.3], vec![0.8, 0.9], vec![0.5, 0.2]],
            Some(vec![0.3, 0.4, 0.3]),
        )
        .unwrap();
        let eps = 0.5;
        let config = config_for(eps, &nu, 0, 0);
        let mut src = SampleSource::new(SourceKind::Empirical(mu), 21);
        let samples = draw(&mut src, 1000).unwrap();

        let mut state = SolverState::new(DualPotential::zero(2));
        let mut pre_step_potentials = Vec::new();
        let mut iterates = Vec::new();
        for x in &samples {
            pre_step_potentials.push(state.v_hat().clone());
            rm_step(&mut state, x, &config, &nu, &CostSpec::Euclidean).unwrap();
            iterates.push(state.v_hat().values().to_vec());
        }

        let n = samples.len() as f64;
        let mut sum_h = 0.0;
        let mut sum_h2 = 0.0;
        for (x, v) in samples.iter().zip(&pre_step_potentials) {
            let h = h_eps(x, v, &nu, &CostSpec::Euclidean, eps).unwrap();
            sum_h += h;
            sum_h2 += h * h;
        }
        let w_batch = sum_h / n;
        let sigma2_batch = sum_h2 / n - w_batch * w_batch;
        assert!(((state.w_hat() - w_batch) / w_batch).abs() < 1e-10);
        assert!(((state.sigma2_hat() - sigma2_batch) / sigma2_batch).abs() < 1e-10);

        // Polyak average equals the batch mean of the produced iterates.
        for j in 0..2 {
            let batch: f64 = iterates.iter().map(|v| v[j]).sum::<f64>() / n;
            assert!((state.v_bar().values()[j] - batch).abs() < 1e-10);
        }
    }

    #[test]
    fn penalty_and_projection_variants_agree_from_zero_mean_start() {
        let nu = nu_two();
        let eps = 0.3;
        let mu = DiscreteMeasure::uniform(vec![
            vec![0.2, 0.1],
            vec![0.9, 0.8],
            vec![0.4, 0.6],
            vec![0.1, 0.9],
        ])
        .unwrap();
        let config_a = config_for(eps, &nu, 0, 0);
        let mut config_b = config_a.clone();
        config_b.alpha = nu.min_weight() / eps;

        let mut src = SampleSource::new(SourceKind::Empirical(mu), 5);
        let samples = draw(&mut src, 1000).unwrap();
        let mut sa = SolverState::new(DualPotential::zero(2));
        let mut sb = SolverState::new(DualPotential::zero(2));
        for x in &samples {
            rm_step(&mut sa, x, &config_a, &nu, &CostSpec::Euclidean).unwrap();
            rm_step(&mut sb, x, &config_b, &nu, &CostSpec::Euclidean).unwrap();
            for j in 0..2 {
                let (a, b) = (sa.v_hat().values()[j], sb.v_hat().values()[j]);
                assert!((a - b).abs() <= 1e-10, "diverged: {a} vs {b}");
            }
        }
    }

    #[test]
    fn wrong_entry_point_is_rejected() {
        let nu = nu_two();
        let mut state = SolverState::new(DualPotential::zero(2));
        let cfg_pos = config_for(0.5, &nu, 0, 0);
        let cfg_zero = config_for(0.0, &nu, 0, 0);
        assert!(matches!(
            rm_step_unregularized(&mut state, &[0.0, 0.0], &cfg_pos, &nu, &CostSpec::Euclidean),
            Err(SolverError::PositiveEpsilon)
        ));
        assert!(matches!(
            rm_step(&mut state, &[0.0, 0.0], &cfg_zero, &nu, &CostSpec::Euclidean),
            Err(SolverError::NonPositiveEpsilon)
        ));
    }

    #[test]
    fn unregularized_identical_measures_estimate_zero() {
        // source always samples the single shared atom: h_0 stays zero
        let y = vec![0.4, 0.6];
        let nu = DiscreteMeasure::uniform(vec![y.clone()]).unwrap();
        let config = config_for(0.0, &nu, 0, 0);
        let mut state = SolverState::new(DualPotential::zero(1));
        for _ in 0..100 {
            rm_step_unregularized(&mut state, &y, &config, &nu, &CostSpec::Euclidean).unwrap();
        }
        assert_eq!(state.w_hat(), 0.0);
    }

    #[test]
    fn run_respects_budget_and_determinism() {
        let nu = nu_two();
        let mu = DiscreteMeasure::uniform(vec![vec![0.3, 0.3], vec![0.7, 0.6]]).unwrap();
        let mut config = config_for(0.5, &nu, 0, 123);
        config.record_every = 10;

        // zero iterations: only the initial snapshot
        let mut src = SampleSource::new(SourceKind::Empirical(mu.clone()), 123);
        let trace = run(&config, &mut src, &nu, &CostSpec::Euclidean).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert_eq!(trace.rows[0].n, 0);

        config.n_iters = 95;
        let t1 = run(&config, &mut src, &nu, &CostSpec::Euclidean).unwrap();
        let mut src2 = SampleSource::new(SourceKind::Empirical(mu), 999);
        let t2 = run(&config, &mut src2, &nu, &CostSpec::Euclidean).unwrap();
        let (mut c1, mut c2) = (Vec::new(), Vec::new());
        t1.write_csv(&mut c1).unwrap();
        t2.write_csv(&mut c2).unwrap();
        assert_eq!(c1, c2, "same config must reproduce byte-identical traces");
        assert_eq!(t1.rows.last().unwrap().n, 95);
        // snapshots at 0, 10, ..., 90, 95
        assert_eq!(t1.rows.len(), 1 + 9 + 1);
        // discrete source: gradient norms recorded
        assert!(t1.rows.iter().all(|r| r.grad_norm.is_some()));
    }

    #[test]
    fn run_zero_mean_trajectory_stays_in_hyperplane() {
        let nu = DiscreteMeasure::uniform(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 1.0],
        ])
        .unwrap();
        let mut config = config_for(0.2, &nu, 20_000, 7);
        config.record_every = 500;
        let mut src = SampleSource::new(SourceKind::UniformHypercube(2), 7);
        let trace = run(&config, &mut src, &nu, &CostSpec::Euclidean).unwrap();
        for row in &trace.rows {
            let s: f64 = row.v_hat.iter().sum();
            assert!(s.abs() <= 1e-8, "mean drifted: {s} at n = {}", row.n);
        }
    }

    #[test]
    fn run_rejects_inconsistent_config() {
        let nu = nu_two();
        let mut config = config_for(0.5, &nu, 10, 0);
        config.init = InitPotential::UnitDirection; // not zero-mean, alpha = 0
        let mut src = SampleSource::new(SourceKind::UniformHypercube(2), 0);
        assert!(matches!(
            run(&config, &mut src, &nu, &CostSpec::Euclidean),
            Err(SolverError::ConfigInconsistent(_))
        ));
    }

    #[test]
    fn run_with_finite_stream_stops_early() {
        let nu = nu_two();
        let csv_text = "x1,x2\n0.1,0.2\n0.6,0.7\n0.3,0.9\n";
        let mut stream = crate::measures::CsvPointStream::new(csv_text.as_bytes()).unwrap();
        let mut config = config_for(0.5, &nu, 10, 0);
        config.record_every = 0;
        let trace =
            run_with_sampler(&config, &mut stream, &nu, &CostSpec::Euclidean, None).unwrap();
        assert!(trace.stream_exhausted);
        assert_eq!(trace.final_state.n(), 3);
        assert!(trace.rows.iter().all(|r| r.grad_norm.is_none()));
    }

    #[test]
    fn solver_runs_in_f32() {
        let nu = DiscreteMeasure::<f32>::uniform(vec![vec![0.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let config = RunConfig::<f32>::standard(0.5, &nu, 200, 3).unwrap();
        let mut src = SampleSource::<f32>::new(SourceKind::UniformHypercube(2), 3);
        let trace = run(&config, &mut src, &nu, &CostSpec::Euclidean).unwrap();
        assert_eq!(trace.final_state.n(), 200);
        assert!(trace.final_state.w_hat().is_finite());
    }

    #[test]
    fn config_random_roundtrip_consistency() {
        // sanity on the validator paths not hit elsewhere
        let nu = nu_two();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut cfg = config_for(0.5, &nu, 5, 1);
        cfg.init = InitPotential::Given(vec![rng.random(), rng.random()]);
        assert!(cfg.validate(2).is_err()); // alpha = 0 but random init is not zero-mean
        cfg.alpha = 0.1;
        assert!(cfg.validate(2).is_ok());
        assert!(cfg.validate(3).is_err()); // wrong length
    }
}
