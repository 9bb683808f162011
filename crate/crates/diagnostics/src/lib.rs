//! Desk-scale numerical audits for the solvers: finite-difference checks of
//! the semi-dual derivatives, spectral structure of the Hessian, Monte Carlo
//! coverage of the online confidence intervals, and excess-risk decay rates.
//!
//! Every study is deterministic given its seed; repetitions run in parallel
//! through rayon and are seeded per repetition, so results do not depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use sinkdiv::baselines::{full_gradient_ascent, sinkhorn, BaselineError};
use sinkdiv::measures::{cost_matrix, CostSpec, DiscreteMeasure, MeasureError, SampleSource, SourceKind};
use sinkdiv::rmsolver::{confidence_interval, run, RunConfig, SolverError};
use sinkdiv::semidual::{
    exact_grad_norm, exact_h, exact_hessian_h, grad_h, h_eps, hessian_h, soft_assignment,
    DualPotential, SemidualError,
};
use sinkdiv::Real;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("optimum-only check requested away from the optimum (gradient norm {grad_norm:.3e})")]
    NotAtOptimum { grad_norm: f64 },
    #[error("study needs {0}")]
    InvalidStudy(String),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Semidual(#[from] SemidualError),
    #[error(transparent)]
    Measure(#[from] MeasureError),
}

/// Worst relative errors of the analytic derivatives against central finite
/// differences over randomized instances.
#[derive(Debug, Clone, Copy)]
pub struct GradientAuditReport {
    pub trials: usize,
    pub max_grad_rel_err: f64,
    pub max_hessian_rel_err: f64,
}

/// Random unit-box instance with positive random weights; the generator
/// backing every randomized audit.
pub fn random_unit_box_instance(
    rng: &mut ChaCha8Rng,
    i_count: usize,
    j_count: usize,
) -> (DiscreteMeasure<f64>, DiscreteMeasure<f64>) {
    let pts = |rng: &mut ChaCha8Rng, n: usize| -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| vec![rng.random::<f64>(), rng.random::<f64>()])
            .collect()
    };
    let w = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
        (0..n).map(|_| 0.2 + rng.random::<f64>()).collect()
    };
    let mu = DiscreteMeasure::new(pts(rng, i_count), Some(w(rng, i_count))).unwrap();
    let nu = DiscreteMeasure::new(pts(rng, j_count), Some(w(rng, j_count))).unwrap();
    (mu, nu)
}

/// Checks the analytic gradient and Hessian of the per-sample objective
/// against central finite differences (step `1e-5`) on random instances
/// cycling through `eps` in `{0.05, 0.5, 5}` and `J` in `{2, 5, 10}`.
pub fn gradient_audit(trials: usize, seed: u64) -> GradientAuditReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cost = CostSpec::Euclidean;
    let step = 1e-5;
    let mut max_grad: f64 = 0.0;
    let mut max_hess: f64 = 0.0;
    for trial in 0..trials {
        let eps = [0.05, 0.5, 5.0][trial % 3];
        let j_count = [2usize, 5, 10][(trial / 3) % 3];
        let x = vec![rng.random::<f64>(), rng.random::<f64>()];
        let v: Vec<f64> = (0..j_count).map(|_| rng.random::<f64>() - 0.5).collect();
        let (_, nu) = random_unit_box_instance(&mut rng, 1, j_count);
        let pot = DualPotential::new(v.clone());

        let g = grad_h(&x, &pot, &nu, &cost, eps).unwrap();
        let mut fd_g = vec![0.0; j_count];
        for k in 0..j_count {
            let mut vp = v.clone();
            vp[k] += step;
            let hp = h_eps(&x, &DualPotential::new(vp.clone()), &nu, &cost, eps).unwrap();
            vp[k] -= 2.0 * step;
            let hm = h_eps(&x, &DualPotential::new(vp), &nu, &cost, eps).unwrap();
            fd_g[k] = (hp - hm) / (2.0 * step);
        }
        let scale = fd_g.iter().fold(1.0f64, |a, &b| a.max(b.abs()));
        for k in 0..j_count {
            max_grad = max_grad.max((g[k] - fd_g[k]).abs() / scale);
        }

        let hess = hessian_h(&x, &pot, &nu, &cost, eps).unwrap();
        let mut scale_h = 1.0f64;
        let mut err_h = 0.0f64;
        for k in 0..j_count {
            let mut vp = v.clone();
            vp[k] += step;
            let gp = grad_h(&x, &DualPotential::new(vp.clone()), &nu, &cost, eps).unwrap();
            vp[k] -= 2.0 * step;
            let gm = grad_h(&x, &DualPotential::new(vp), &nu, &cost, eps).unwrap();
            for a in 0..j_count {
                let fd = (gp[a] - gm[a]) / (2.0 * step);
                scale_h = scale_h.max(fd.abs());
                err_h = err_h.max((hess[a][k] - fd).abs());
            }
        }
        max_hess = max_hess.max(err_h / scale_h);
    }
    GradientAuditReport {
        trials,
        max_grad_rel_err: max_grad,
        max_hessian_rel_err: max_hess,
    }
}

/// Pivots of the root-free Cholesky factorization (`L D L^T`) of the
/// assignment covariance `diag(pi) - pi pi^T`, in closed form:
/// `d_j = p_j q_j / (p_j + q_j)` with `p_j = pi_j` and
/// `q_j = 1 - sum_{k<=j} pi_k`, for `j < J` (the last pivot is zero).
///
/// These pivots certify rank `J - 1` and positive semi-definiteness; they are
/// *not* the eigenvalues of the covariance (the matrix's spectrum is not
/// permutation-covariant the way the pivot sequence is), but their minimum
/// lower-bounds the smallest positive eigenvalue observed in practice, which
/// makes the averaged minimum pivot a usable curvature proxy.
pub fn assignment_covariance_pivots<T: Real>(pi: &[T]) -> Vec<T> {
    let j_count = pi.len();
    let mut out = Vec::with_capacity(j_count.saturating_sub(1));
    let mut tail = T::one();
    for j in 0..j_count.saturating_sub(1) {
        let p = pi[j];
        let q = tail - p; // 1 - sum_{k<=j} pi_k
        out.push(p * q / (p + q));
        tail = q;
    }
    out
}

/// First `n-1` pivots of an unpivoted `L D L^T` factorization, the numeric
/// oracle for [`assignment_covariance_pivots`].
fn ldl_pivots(matrix: &[Vec<f64>]) -> Vec<f64> {
    let n = matrix.len();
    let mut m: Vec<Vec<f64>> = matrix.to_vec();
    let mut pivots = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let d = m[k][k];
        pivots.push(d);
        for i in (k + 1)..n {
            let f = m[i][k] / d;
            for j in (k + 1)..n {
                m[i][j] -= f * m[k][j];
            }
        }
    }
    pivots
}

/// Spectral structure of the full Hessian at a potential `v`.
#[derive(Debug, Clone)]
pub struct SpectralReport {
    /// Largest eigenvalue of the Hessian (must be ~0 from below).
    pub max_eigenvalue: f64,
    /// `||A 1|| / ||A||_F`: how well the all-ones vector sits in the kernel.
    pub kernel_residual: f64,
    pub hessian_frobenius: f64,
    /// Second-smallest eigenvalue of the negated Hessian (the curvature on
    /// the zero-mean hyperplane).
    pub second_smallest_negated: f64,
    /// `min_j nu_j / eps`, the classical curvature yardstick at the optimum.
    pub nu_min_over_eps: f64,
    /// `second_smallest_negated - nu_min_over_eps`; negative whenever the
    /// assignment weights vary across source atoms (their covariance eats
    /// into the curvature), so this is reported, not guaranteed.
    pub optimum_bound_margin: Option<f64>,
    /// Worst absolute gap between the closed-form covariance pivots and a
    /// numeric `L D L^T` factorization, over the source atoms.
    pub pivot_residual: f64,
    /// `second_smallest_negated - E[min_j pivots] / eps`; nonnegative.
    pub expectation_bound_margin: f64,
}

/// Audits the full Hessian at `v`: definiteness, kernel direction, curvature
/// bounds, and the per-sample pivot closed form. `check_optimum_bound`
/// additionally compares the curvature against `nu_min / eps`, which is only
/// meaningful at the maximizer; requesting it with a gradient norm above
/// `1e-6` is an error.
pub fn spectral_audit<T: Real>(
    mu: &DiscreteMeasure<T>,
    nu: &DiscreteMeasure<T>,
    cost: &CostSpec<T>,
    eps: T,
    v: &DualPotential<T>,
    check_optimum_bound: bool,
) -> Result<SpectralReport, DiagnosticsError> {
    let j_count = nu.len();
    if check_optimum_bound {
        let gn = exact_grad_norm(mu, v, nu, cost, eps)?.as_f64();
        if gn > 1e-6 {
            return Err(DiagnosticsError::NotAtOptimum { grad_norm: gn });
        }
    }
    let hess = exact_hessian_h(mu, v, nu, cost, eps)?;
    let a = nalgebra::DMatrix::from_fn(j_count, j_count, |i, j| hess[i][j].as_f64());
    let frob = a.norm();
    let ones = nalgebra::DVector::from_element(j_count, 1.0);
    let kernel_residual = (&a * &ones).norm() / frob.max(f64::MIN_POSITIVE);

    let mut eigs: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let max_eigenvalue = *eigs.last().unwrap();
    let mut neg_eigs: Vec<f64> = eigs.iter().map(|&l| -l).collect();
    neg_eigs.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let second_smallest_negated = if j_count >= 2 { neg_eigs[1] } else { 0.0 };

    // per-sample closed-form pivots against a numeric factorization, and the
    // source-averaged minimum pivot
    let mut pivot_residual = 0.0f64;
    let mut mean_min_pivot = 0.0f64;
    for i in 0..mu.len() {
        let pi = soft_assignment(mu.point(i), v, nu, cost, eps)?;
        let p: Vec<f64> = pi.weights().iter().map(|&x| x.as_f64()).collect();
        let cov: Vec<Vec<f64>> = (0..j_count)
            .map(|r| {
                (0..j_count)
                    .map(|c| if r == c { p[r] - p[r] * p[c] } else { -p[r] * p[c] })
                    .collect()
            })
            .collect();
        let numeric = ldl_pivots(&cov);
        let closed = assignment_covariance_pivots(&p);
        let mut min_pivot = f64::INFINITY;
        for (got, want) in closed.iter().zip(&numeric) {
            pivot_residual = pivot_residual.max((got - want).abs());
            min_pivot = min_pivot.min(*got);
        }
        if j_count == 1 {
            min_pivot = 0.0;
        }
        mean_min_pivot += mu.weight(i).as_f64() * min_pivot;
    }
    let eps_f = eps.as_f64();
    let nu_min_over_eps = nu.min_weight().as_f64() / eps_f;
    Ok(SpectralReport {
        max_eigenvalue,
        kernel_residual,
        hessian_frobenius: frob,
        second_smallest_negated,
        nu_min_over_eps,
        optimum_bound_margin: check_optimum_bound
            .then_some(second_smallest_negated - nu_min_over_eps),
        pivot_residual,
        expectation_bound_margin: second_smallest_negated - mean_min_pivot / eps_f,
    })
}

/// Result of a Monte Carlo confidence-interval coverage study.
#[derive(Debug, Clone, Copy)]
pub struct CoverageReport {
    pub n_reps: usize,
    pub n_iters: u64,
    pub level: f64,
    pub hits: usize,
    pub coverage: f64,
    pub mean_ci_width: f64,
    /// Reference value the intervals are checked against.
    pub ground_truth: f64,
}

impl CoverageReport {
    /// Three-sigma binomial band around the nominal level; a sound interval
    /// construction should land inside it.
    pub fn binomial_band(&self) -> (f64, f64) {
        let sd = (self.level * (1.0 - self.level) / self.n_reps as f64).sqrt();
        (self.level - 3.0 * sd, self.level + 3.0 * sd)
    }

    pub fn within_band(&self) -> bool {
        let (lo, hi) = self.binomial_band();
        self.coverage >= lo && self.coverage <= hi
    }
}

/// Runs `n_reps` independent seeded solver runs on a discrete instance and
/// counts how often the final `level`-confidence interval contains the
/// deterministic Sinkhorn value. Each repetition only sees its own sample
/// stream; the reference value never enters the runs.
pub fn coverage_study(
    mu: &DiscreteMeasure<f64>,
    nu: &DiscreteMeasure<f64>,
    cost: &CostSpec<f64>,
    config: &RunConfig<f64>,
    n_reps: usize,
    level: f64,
) -> Result<CoverageReport, DiagnosticsError> {
    if !(config.eps > 0.0) {
        return Err(DiagnosticsError::InvalidStudy(
            "a positive eps (the reference value comes from Sinkhorn)".into(),
        ));
    }
    let c = cost_matrix(mu, nu, cost)?;
    let truth = sinkhorn(mu, nu, &c, config.eps, 1e-9, 10_000_000)?.value();

    let results: Vec<Result<(bool, f64), DiagnosticsError>> = (0..n_reps)
        .into_par_iter()
        .map(|rep| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(rep as u64);
            cfg.ci_level = level;
            cfg.record_every = 0;
            let mut source = SampleSource::new(SourceKind::Empirical(mu.clone()), cfg.seed);
            let trace = run(&cfg, &mut source, nu, cost)?;
            let (lo, hi) = confidence_interval(&trace.final_state, level)?;
            Ok((lo <= truth && truth <= hi, hi - lo))
        })
        .collect();

    let mut hits = 0usize;
    let mut width_sum = 0.0;
    for r in results {
        let (hit, width) = r?;
        hits += usize::from(hit);
        width_sum += width;
    }
    Ok(CoverageReport {
        n_reps,
        n_iters: config.n_iters,
        level,
        hits,
        coverage: hits as f64 / n_reps as f64,
        mean_ci_width: width_sum / n_reps as f64,
        ground_truth: truth,
    })
}

/// Mean optimality gap of the running iterate at logarithmically spaced
/// checkpoints, with the least-squares slope of `log gap` against `log n`.
#[derive(Debug, Clone)]
pub struct SlopeReport {
    /// `(n, mean excess over seeds)` per checkpoint.
    pub checkpoints: Vec<(u64, f64)>,
    pub fitted_slope: f64,
    /// The decay-rate theory behind the slope assertion needs
    /// `2/3 < c < 1` and `0 < eps <= 1`; outside that range the report is
    /// still produced but the slope carries no guarantee.
    pub rate_theory_applies: bool,
}

/// Averages the excess `H(v*) - H(v_n)` over `n_seeds` independent runs at
/// the given checkpoints (the largest checkpoint bounds the run length).
pub fn excess_risk_study(
    mu: &DiscreteMeasure<f64>,
    nu: &DiscreteMeasure<f64>,
    cost: &CostSpec<f64>,
    config: &RunConfig<f64>,
    checkpoints: &[u64],
    n_seeds: usize,
) -> Result<SlopeReport, DiagnosticsError> {
    if checkpoints.is_empty() || n_seeds == 0 {
        return Err(DiagnosticsError::InvalidStudy(
            "at least one checkpoint and one seed".into(),
        ));
    }
    let (v_star, h_star) = full_gradient_ascent(mu, nu, cost, config.eps, 1e-10, 5_000_000)?;
    let _ = v_star;
    let horizon = *checkpoints.iter().max().unwrap();

    let per_seed: Vec<Result<Vec<f64>, DiagnosticsError>> = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let mut cfg = config.clone();
            cfg.seed = config.seed.wrapping_add(s as u64);
            cfg.n_iters = horizon;
            cfg.record_every = 0;
            let mut source = SampleSource::new(SourceKind::Empirical(mu.clone()), cfg.seed);
            // manual stepping to evaluate the objective exactly at checkpoints
            let mut state = sinkdiv::rmsolver::SolverState::new(DualPotential::zero(nu.len()));
            let mut gaps = Vec::with_capacity(checkpoints.len());
            let mut next = 0usize;
            let mut x = Vec::new();
            use sinkdiv::measures::Sampler;
            source.reseed(cfg.seed);
            for n in 1..=horizon {
                source.sample_into(&mut x)?;
                sinkdiv::rmsolver::rm_step(&mut state, &x, &cfg, nu, cost)?;
                while next < checkpoints.len() && checkpoints[next] == n {
                    let h = exact_h(mu, state.v_hat(), nu, cost, cfg.eps)?;
                    gaps.push(h_star - h);
                    next += 1;
                }
            }
            Ok(gaps)
        })
        .collect();

    let mut mean_gaps = vec![0.0f64; checkpoints.len()];
    for r in per_seed {
        let gaps = r?;
        for (m, g) in mean_gaps.iter_mut().zip(gaps) {
            *m += g / n_seeds as f64;
        }
    }
    let points: Vec<(f64, f64)> = checkpoints
        .iter()
        .zip(&mean_gaps)
        .map(|(&n, &g)| ((n as f64).ln(), g.max(1e-18).ln()))
        .collect();
    let fitted_slope = least_squares_slope(&points);
    let c = config.schedule.exponent();
    Ok(SlopeReport {
        checkpoints: checkpoints.iter().copied().zip(mean_gaps).collect(),
        fitted_slope,
        rate_theory_applies: c > 2.0 / 3.0 && c < 1.0 && config.eps > 0.0 && config.eps <= 1.0,
    })
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_audit_is_tight_and_deterministic() {
        let a = gradient_audit(30, 9);
        let b = gradient_audit(30, 9);
        assert_eq!(a.max_grad_rel_err, b.max_grad_rel_err);
        assert!(a.max_grad_rel_err <= 1e-5);
        assert!(a.max_hessian_rel_err <= 1e-4);
    }

    #[test]
    fn pivots_match_numeric_factorization() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let j = 2 + (rng.random::<u32>() % 4) as usize;
            let raw: Vec<f64> = (0..j).map(|_| 0.05 + rng.random::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let p: Vec<f64> = raw.iter().map(|x| x / s).collect();
            let cov: Vec<Vec<f64>> = (0..j)
                .map(|r| {
                    (0..j)
                        .map(|c| if r == c { p[r] - p[r] * p[c] } else { -p[r] * p[c] })
                        .collect()
                })
                .collect();
            let numeric = ldl_pivots(&cov);
            let closed = assignment_covariance_pivots(&p);
            assert_eq!(closed.len(), j - 1);
            for (a, b) in closed.iter().zip(&numeric) {
                assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
                assert!(*a > 0.0);
            }
        }
    }

    #[test]
    fn pivots_single_and_two_atoms() {
        assert!(assignment_covariance_pivots::<f64>(&[1.0]).is_empty());
        let p = assignment_covariance_pivots::<f64>(&[0.5, 0.5]);
        assert_eq!(p.len(), 1);
        assert!((p[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn spectral_audit_single_target_is_trivial() {
        let mu = DiscreteMeasure::uniform(vec![vec![0.2, 0.4], vec![0.9, 0.8]]).unwrap();
        let nu = DiscreteMeasure::uniform(vec![vec![0.5, 0.5]]).unwrap();
        let report = spectral_audit(
            &mu,
            &nu,
            &CostSpec::Euclidean,
            0.5,
            &DualPotential::zero(1),
            false,
        )
        .unwrap();
        assert!(report.max_eigenvalue.abs() <= 1e-15);
        assert!(report.pivot_residual <= 1e-15);
    }

    #[test]
    fn spectral_audit_guards_optimum_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (mu, nu) = random_unit_box_instance(&mut rng, 5, 3);
        let far = DualPotential::new(vec![1.0, -2.0, 0.5]);
        match spectral_audit(&mu, &nu, &CostSpec::Euclidean, 0.5, &far, true) {
            Err(DiagnosticsError::NotAtOptimum { grad_norm }) => assert!(grad_norm > 1e-6),
            other => panic!("expected NotAtOptimum, got {other:?}"),
        }
    }

    #[test]
    fn spectral_structure_holds_at_random_potentials() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..10 {
            let (mu, nu) = random_unit_box_instance(&mut rng, 6, 4);
            let eps = [0.1, 0.5, 1.0][trial % 3];
            let v = DualPotential::new((0..4).map(|_| rng.random::<f64>() - 0.5).collect());
            let r = spectral_audit(&mu, &nu, &CostSpec::Euclidean, eps, &v, false).unwrap();
            assert!(r.max_eigenvalue <= 1e-10, "not semi-definite: {}", r.max_eigenvalue);
            assert!(r.kernel_residual <= 1e-10);
            assert!(r.second_smallest_negated > 0.0, "rank must be J - 1");
            assert!(
                r.expectation_bound_margin >= -1e-8,
                "averaged min pivot exceeded the curvature: {}",
                r.expectation_bound_margin
            );
        }
    }

    #[test]
    fn two_atom_eigenvalue_closed_form() {
        // For J = 2 the per-sample covariance has positive eigenvalue
        // 2 p (1 - p); the pivot is p (1 - p). Verify the audit keeps both
        // facts separate.
        let p = 0.3f64;
        let cov = vec![
            vec![p - p * p, -p * (1.0 - p)],
            vec![-p * (1.0 - p), (1.0 - p) - (1.0 - p) * (1.0 - p)],
        ];
        let numeric = ldl_pivots(&cov);
        assert!((numeric[0] - p * (1.0 - p)).abs() < 1e-15);
        let m = nalgebra::DMatrix::from_fn(2, 2, |i, j| cov[i][j]);
        let mut eigs: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
        eigs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((eigs[1] - 2.0 * p * (1.0 - p)).abs() < 1e-12);
    }

    #[test]
    fn slope_fit_recovers_line() {
        let pts: Vec<(f64, f64)> = (1..6).map(|k| (k as f64, 3.0 - 0.6 * k as f64)).collect();
        assert!((least_squares_slope(&pts) + 0.6).abs() < 1e-12);
    }
}
