//! Command-line front-end: stochastic runs, deterministic baselines,
//! coverage studies, Laguerre-cell rendering, numerical audits, and CSV
//! ingestion.
//!
//! Exit codes: 0 on success, 1 on runtime failure, 2 on usage errors.
//! Every subcommand is byte-reproducible given `--seed`; all numeric output
//! carries 12 significant digits.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use sinkdiv::baselines::{
    full_gradient_ascent_logged, greenkhorn_detailed, sinkhorn_logged,
    stochastic_greenkhorn_detailed, IterRecord,
};
use sinkdiv::laguerre::{assign_cell, render_grid};
use sinkdiv::measures::{
    cost_matrix, CostSpec, CsvPointStream, DiscreteMeasure, PointCloud, SampleSource, Sampler,
    SourceKind,
};
use sinkdiv::rmsolver::{
    default_gamma, run, run_with_sampler, InitPotential, RunConfig, StepSchedule, DEFAULT_C,
    DEFAULT_EPS_MIN,
};
use sinkdiv::sig12;
use sinkdiv_diagnostics::{
    coverage_study, excess_risk_study, gradient_audit, random_unit_box_instance, spectral_audit,
};

#[derive(Parser, Debug)]
#[command(name = "sinkdiv", version, about = "Stochastic and deterministic solvers for entropic optimal transport against a discrete target")]
pub struct CliConfig {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Stochastic estimation of the transport cost from source samples.
    Run(RunArgs),
    /// Deterministic reference solvers on a fully discrete instance.
    Baseline(BaselineArgs),
    /// Monte Carlo coverage of the online confidence intervals.
    Coverage(CoverageArgs),
    /// Train a potential and classify points into Laguerre cells.
    Laguerre(LaguerreArgs),
    /// Finite-difference and spectral audits of the derivatives.
    Audit(AuditArgs),
    /// Normalize a point-cloud CSV (optionally rescale onto the unit box).
    Ingest(IngestArgs),
}

fn parse_nonneg(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if v < 0.0 || !v.is_finite() {
        return Err(format!("must be a finite nonnegative number, got {s}"));
    }
    Ok(v)
}

fn parse_level(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("not a number: {s}"))?;
    if !(0.0 < v && v < 1.0) {
        return Err(format!("must lie strictly between 0 and 1, got {s}"));
    }
    Ok(v)
}

/// `auto` or a nonnegative number.
fn parse_auto(s: &str) -> Result<AutoOr, String> {
    if s == "auto" {
        return Ok(AutoOr::Auto);
    }
    parse_nonneg(s).map(AutoOr::Value)
}

#[derive(Debug, Clone, Copy)]
enum AutoOr {
    Auto,
    Value(f64),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Regularization strength (0 selects the unregularized path).
    #[arg(long, value_parser = parse_nonneg)]
    eps: f64,
    /// Target measure CSV (header x1,...,xd[,w]).
    #[arg(long)]
    nu: PathBuf,
    /// Discrete source measure CSV; sampled i.i.d. by index.
    #[arg(long, conflicts_with = "mu_stream")]
    mu: Option<PathBuf>,
    /// Source sample stream CSV, read lazily one row per step.
    #[arg(long)]
    mu_stream: Option<PathBuf>,
    /// Mean-penalty strength, or `auto` (nu_min/eps; nu_min when eps = 0).
    #[arg(long, default_value = "0", value_parser = parse_auto)]
    alpha: AutoOr,
    /// Step scale, or `auto` (eps/(2 nu_min); eps_min/(4 nu_min) at eps = 0).
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    gamma: AutoOr,
    /// Step decay exponent in (1/2, 1].
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long)]
    iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Confidence level of the recorded intervals.
    #[arg(long, default_value = "0.95", value_parser = parse_level)]
    level: f64,
    #[arg(long, default_value_t = 1000)]
    record_every: u64,
    /// Trace CSV destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SolverChoice {
    Sinkhorn,
    Greenkhorn,
    Sgreenkhorn,
    Ascent,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long, value_enum)]
    solver: SolverChoice,
    #[arg(long, value_parser = parse_nonneg)]
    eps: f64,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    /// Convergence tolerance on the l1 marginal violation (gradient norm
    /// for the ascent solver).
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long, default_value_t = 10_000_000)]
    max_iters: u64,
    /// Stride of the `iter,violation,value` log.
    #[arg(long, default_value_t = 100)]
    record_every: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct CoverageArgs {
    #[arg(long, value_parser = parse_nonneg)]
    eps: f64,
    #[arg(long)]
    mu: PathBuf,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long)]
    iters: u64,
    #[arg(long, default_value = "0.95", value_parser = parse_level)]
    level: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for the repetitions (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct LaguerreArgs {
    #[arg(long, default_value = "0", value_parser = parse_nonneg)]
    eps: f64,
    #[arg(long)]
    nu: PathBuf,
    #[arg(long, conflicts_with = "mu_stream")]
    mu: Option<PathBuf>,
    #[arg(long)]
    mu_stream: Option<PathBuf>,
    #[arg(long, default_value_t = 300_000)]
    iters: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "0", value_parser = parse_auto)]
    alpha: AutoOr,
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    gamma: AutoOr,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    /// Classify an R^d cell-center lattice instead of the input points.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum AuditKind {
    Gradient,
    Spectral,
    Excess,
    All,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long, value_enum, default_value_t = AuditKind::Gradient)]
    kind: AuditKind,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Regularization used by the spectral and excess-risk audits.
    #[arg(long, default_value = "0.5", value_parser = parse_nonneg)]
    eps: f64,
    /// Optional CSV destination for the audit details.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct IngestArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Min-max rescale every coordinate onto [0, 1].
    #[arg(long)]
    rescale_unit_box: bool,
}

fn main() {
    let cli = CliConfig::parse();
    let code = match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn dispatch(cli: CliConfig) -> Result<()> {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Baseline(args) => cmd_baseline(args),
        Command::Coverage(args) => cmd_coverage(args),
        Command::Laguerre(args) => cmd_laguerre(args),
        Command::Audit(args) => cmd_audit(args),
        Command::Ingest(args) => cmd_ingest(args),
    }
}

fn load_measure(path: &Path) -> Result<DiscreteMeasure<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let cloud = PointCloud::read_csv(BufReader::new(file))
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(cloud.into_measure()?)
}

fn resolve_alpha(alpha: AutoOr, eps: f64, nu: &DiscreteMeasure<f64>) -> f64 {
    match alpha {
        AutoOr::Value(v) => v,
        // auto: nu_min/eps in the regularized case; the same formula at the
        // unit regularization scale when eps = 0
        AutoOr::Auto => {
            if eps > 0.0 {
                nu.min_weight() / eps
            } else {
                nu.min_weight()
            }
        }
    }
}

fn build_config(
    eps: f64,
    alpha: AutoOr,
    gamma: AutoOr,
    c: f64,
    iters: u64,
    seed: u64,
    level: f64,
    record_every: u64,
    nu: &DiscreteMeasure<f64>,
) -> Result<RunConfig<f64>> {
    let gamma = match gamma {
        AutoOr::Value(v) => v,
        AutoOr::Auto => default_gamma(eps, nu, DEFAULT_EPS_MIN),
    };
    let alpha = resolve_alpha(alpha, eps, nu);
    let init = if alpha > 0.0 {
        InitPotential::UnitDirection
    } else {
        InitPotential::Zero
    };
    Ok(RunConfig {
        eps,
        alpha,
        schedule: StepSchedule::new(gamma, c)?,
        n_iters: iters,
        seed,
        init,
        record_every,
        ci_level: level,
    })
}

fn eps_zero_caveat(eps: f64) {
    if eps == 0.0 {
        println!(
            "note: eps = 0 — confidence intervals use a conjectural normal approximation, \
             and supergradient ascent has no convergence guarantee on discrete sources"
        );
    }
}

fn cmd_run(args: RunArgs) -> Result<()> {
    let nu = load_measure(&args.nu)?;
    let config = build_config(
        args.eps,
        args.alpha,
        args.gamma,
        args.c,
        args.iters,
        args.seed,
        args.level,
        args.record_every,
        &nu,
    )?;
    eps_zero_caveat(args.eps);

    let trace = match (&args.mu, &args.mu_stream) {
        (Some(mu_path), None) => {
            let mu = load_measure(mu_path)?;
            let mut source = SampleSource::new(SourceKind::Empirical(mu), config.seed);
            run(&config, &mut source, &nu, &CostSpec::Euclidean)?
        }
        (None, Some(stream_path)) => {
            let file = File::open(stream_path)
                .with_context(|| format!("opening {}", stream_path.display()))?;
            let mut stream = CsvPointStream::new(BufReader::new(file))?;
            run_with_sampler(&config, &mut stream, &nu, &CostSpec::Euclidean, None)?
        }
        _ => bail!("exactly one of --mu or --mu-stream is required"),
    };

    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    trace.write_csv(BufWriter::new(out))?;

    let state = &trace.final_state;
    if trace.stream_exhausted {
        println!("note: sample stream ended after {} rows", state.n());
    }
    println!("n = {}", state.n());
    println!("w_hat = {}", sig12(state.w_hat()));
    println!("sigma_hat = {}", sig12(state.sigma_hat()));
    if state.n() >= 2 {
        let (lo, hi) = sinkdiv::rmsolver::confidence_interval(state, args.level)?;
        println!("ci{} = [{}, {}]", args.level, sig12(lo), sig12(hi));
    }
    Ok(())
}

fn write_records(path: &Path, records: &[IterRecord<f64>]) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(w, "iter,violation,value")?;
    for r in records {
        writeln!(w, "{},{},{}", r.iter, sig12(r.violation), sig12(r.value))?;
    }
    Ok(())
}

fn cmd_baseline(args: BaselineArgs) -> Result<()> {
    let mu = load_measure(&args.mu)?;
    let nu = load_measure(&args.nu)?;
    let cost = CostSpec::Euclidean;
    let c = cost_matrix(&mu, &nu, &cost)?;
    let (value, mut records, iters) = match args.solver {
        SolverChoice::Sinkhorn => {
            let (plan, rec) = sinkhorn_logged(
                &mu,
                &nu,
                &c,
                args.eps,
                args.tol,
                args.max_iters,
                args.record_every,
            )?;
            (plan.value(), rec, None)
        }
        SolverChoice::Greenkhorn => {
            let solve = greenkhorn_detailed(
                &mu,
                &nu,
                &c,
                args.eps,
                args.tol,
                args.max_iters,
                args.record_every,
            )?;
            (solve.plan.value(), solve.records, Some(solve.iters))
        }
        SolverChoice::Sgreenkhorn => {
            let solve = stochastic_greenkhorn_detailed(
                &mu,
                &nu,
                &c,
                args.eps,
                args.tol,
                args.max_iters,
                args.seed,
                args.record_every,
            )?;
            (solve.plan.value(), solve.records, Some(solve.iters))
        }
        SolverChoice::Ascent => {
            let (_, value, rec) = full_gradient_ascent_logged(
                &mu,
                &nu,
                &cost,
                args.eps,
                args.tol,
                args.max_iters,
                args.record_every,
            )?;
            (value, rec, None)
        }
    };
    // close the log with the converged point
    records.push(IterRecord {
        iter: records.last().map_or(0, |r| r.iter),
        violation: 0.0,
        value,
    });
    write_records(&args.out, &records)?;
    if let Some(iters) = iters {
        println!("iterations = {iters}");
    }
    println!("value = {}", sig12(value));
    Ok(())
}

fn install_pool(jobs: usize) -> Result<Option<rayon::ThreadPool>> {
    if jobs == 0 {
        return Ok(None);
    }
    Ok(Some(
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?,
    ))
}

fn cmd_coverage(args: CoverageArgs) -> Result<()> {
    let mu = load_measure(&args.mu)?;
    let nu = load_measure(&args.nu)?;
    let config = build_config(
        args.eps,
        AutoOr::Value(0.0),
        AutoOr::Auto,
        DEFAULT_C,
        args.iters,
        args.seed,
        args.level,
        0,
        &nu,
    )?;
    let cost = CostSpec::Euclidean;
    let report = match install_pool(args.jobs)? {
        Some(pool) => {
            pool.install(|| coverage_study(&mu, &nu, &cost, &config, args.reps, args.level))?
        }
        None => coverage_study(&mu, &nu, &cost, &config, args.reps, args.level)?,
    };

    let mut w = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    let (band_lo, band_hi) = report.binomial_band();
    writeln!(
        w,
        "reps,iters,level,hits,coverage,mean_ci_width,ground_truth,band_lo,band_hi"
    )?;
    writeln!(
        w,
        "{},{},{},{},{},{},{},{},{}",
        report.n_reps,
        report.n_iters,
        sig12(report.level),
        report.hits,
        sig12(report.coverage),
        sig12(report.mean_ci_width),
        sig12(report.ground_truth),
        sig12(band_lo),
        sig12(band_hi),
    )?;
    println!(
        "{} coverage {} in [{}, {}] ({} of {} runs, level {})",
        if report.within_band() { "PASS" } else { "FAIL" },
        sig12(report.coverage),
        sig12(band_lo),
        sig12(band_hi),
        report.hits,
        report.n_reps,
        args.level,
    );
    Ok(())
}

fn cmd_laguerre(args: LaguerreArgs) -> Result<()> {
    let nu = load_measure(&args.nu)?;
    let config = build_config(
        args.eps,
        args.alpha,
        args.gamma,
        args.c,
        args.iters,
        args.seed,
        0.95,
        0,
        &nu,
    )?;
    eps_zero_caveat(args.eps);

    let cost = CostSpec::Euclidean;
    let trace = match (&args.mu, &args.mu_stream) {
        (Some(mu_path), None) => {
            let mu = load_measure(mu_path)?;
            let mut source = SampleSource::new(SourceKind::Empirical(mu), config.seed);
            run(&config, &mut source, &nu, &cost)?
        }
        (None, Some(stream_path)) => {
            let file = File::open(stream_path)
                .with_context(|| format!("opening {}", stream_path.display()))?;
            let mut stream = CsvPointStream::new(BufReader::new(file))?;
            run_with_sampler(&config, &mut stream, &nu, &cost, None)?
        }
        _ => bail!("exactly one of --mu or --mu-stream is required"),
    };
    let potential = trace.final_state.v_hat().clone();
    println!(
        "potential after {} steps: [{}]",
        trace.final_state.n(),
        potential
            .values()
            .iter()
            .map(|&v| sig12(v))
            .collect::<Vec<_>>()
            .join(", ")
    );

    let mut w = BufWriter::new(
        File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?,
    );
    let dim = nu.dim();
    for k in 0..dim {
        write!(w, "{}x{}", if k > 0 { "," } else { "" }, k + 1)?;
    }
    writeln!(w, ",cell")?;
    let mut counts = vec![0usize; nu.len()];
    let mut classify = |w: &mut BufWriter<File>, p: &[f64]| -> Result<()> {
        let cell = assign_cell(p, &potential, nu.points(), &cost)?;
        counts[cell] += 1;
        let coords = p.iter().map(|&c| sig12(c)).collect::<Vec<_>>().join(",");
        writeln!(w, "{coords},{cell}")?;
        Ok(())
    };
    match args.grid {
        Some(resolution) => {
            for p in render_grid::<f64>(resolution, dim) {
                classify(&mut w, &p)?;
            }
        }
        None => {
            // classify the input points themselves
            match (&args.mu, &args.mu_stream) {
                (Some(mu_path), _) => {
                    let mu = load_measure(mu_path)?;
                    for p in mu.points() {
                        classify(&mut w, p)?;
                    }
                }
                (_, Some(stream_path)) => {
                    let file = File::open(stream_path)
                        .with_context(|| format!("opening {}", stream_path.display()))?;
                    let mut stream = CsvPointStream::new(BufReader::new(file))?;
                    let mut p = Vec::new();
                    while Sampler::<f64>::sample_into(&mut stream, &mut p).is_ok() {
                        classify(&mut w, &p)?;
                    }
                }
                _ => unreachable!("argument validation"),
            }
        }
    }
    drop(classify);
    println!(
        "cell counts: [{}]",
        counts
            .iter()
            .map(|c| c.to_string())
            .collect::<Vec<_>>()
            .join(", ")
    );
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<()> {
    let mut lines: Vec<(String, String)> = Vec::new(); // (csv row, console line)
    if matches!(args.kind, AuditKind::Gradient | AuditKind::All) {
        let report = gradient_audit(args.trials, args.seed);
        let ok = report.max_grad_rel_err <= 1e-5 && report.max_hessian_rel_err <= 1e-4;
        lines.push((
            format!(
                "gradient,{},{}",
                sig12(report.max_grad_rel_err),
                sig12(report.max_hessian_rel_err)
            ),
            format!(
                "{} finite-difference audit: gradient {} (tol 1e-5), hessian {} (tol 1e-4)",
                if ok { "PASS" } else { "FAIL" },
                sig12(report.max_grad_rel_err),
                sig12(report.max_hessian_rel_err),
            ),
        ));
    }
    if matches!(args.kind, AuditKind::Spectral | AuditKind::All) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
        let mut worst_eig = f64::NEG_INFINITY;
        let mut worst_kernel = 0.0f64;
        let mut worst_pivot = 0.0f64;
        let mut worst_expectation = f64::INFINITY;
        let mut worst_optimum = f64::INFINITY;
        for _ in 0..5 {
            let (mu, nu) = random_unit_box_instance(&mut rng, 8, 5);
            let (v_star, _) = sinkdiv::baselines::full_gradient_ascent(
                &mu,
                &nu,
                &CostSpec::Euclidean,
                args.eps,
                1e-10,
                5_000_000,
            )?;
            let r = spectral_audit(&mu, &nu, &CostSpec::Euclidean, args.eps, &v_star, true)?;
            worst_eig = worst_eig.max(r.max_eigenvalue);
            worst_kernel = worst_kernel.max(r.kernel_residual);
            worst_pivot = worst_pivot.max(r.pivot_residual);
            worst_expectation = worst_expectation.min(r.expectation_bound_margin);
            worst_optimum = worst_optimum.min(r.optimum_bound_margin.unwrap());
        }
        let ok = worst_eig <= 1e-10
            && worst_kernel <= 1e-10
            && worst_pivot <= 1e-8
            && worst_expectation >= -1e-8;
        lines.push((
            format!(
                "spectral,{},{}",
                sig12(worst_eig),
                sig12(worst_expectation)
            ),
            format!(
                "{} spectral audit: max eigenvalue {}, kernel residual {}, pivot residual {}, curvature over averaged min pivot {}",
                if ok { "PASS" } else { "FAIL" },
                sig12(worst_eig),
                sig12(worst_kernel),
                sig12(worst_pivot),
                sig12(worst_expectation),
            ),
        ));
        lines.push((
            format!("spectral_optimum_margin,{},", sig12(worst_optimum)),
            format!(
                "INFO curvature minus nu_min/eps at the optimum: {} (negative whenever assignments vary across source atoms)",
                sig12(worst_optimum),
            ),
        ));
    }
    if matches!(args.kind, AuditKind::Excess | AuditKind::All) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed.wrapping_add(1));
        let (mu, nu) = random_unit_box_instance(&mut rng, 16, 4);
        let eps = if args.eps > 0.0 { args.eps.min(1.0) } else { 0.5 };
        let config = RunConfig {
            eps,
            alpha: 0.0,
            schedule: StepSchedule::new(default_gamma(eps, &nu, DEFAULT_EPS_MIN), 0.8)?,
            n_iters: 0,
            seed: args.seed,
            init: InitPotential::Zero,
            record_every: 0,
            ci_level: 0.95,
        };
        let report = excess_risk_study(
            &mu,
            &nu,
            &CostSpec::Euclidean,
            &config,
            &[1_000, 3_000, 10_000, 30_000, 100_000],
            20,
        )?;
        let min_excess = report
            .checkpoints
            .iter()
            .map(|&(_, e)| e)
            .fold(f64::INFINITY, f64::min);
        let ok = report.fitted_slope <= -0.45 && min_excess >= -1e-9;
        lines.push((
            format!("excess,{},{}", sig12(report.fitted_slope), sig12(min_excess)),
            format!(
                "{} excess-risk decay: fitted slope {} (tol -0.45), min mean excess {}",
                if ok { "PASS" } else { "FAIL" },
                sig12(report.fitted_slope),
                sig12(min_excess),
            ),
        ));
    }
    if let Some(path) = &args.out {
        let mut w = BufWriter::new(
            File::create(path).with_context(|| format!("creating {}", path.display()))?,
        );
        writeln!(w, "audit,stat_1,stat_2")?;
        for (row, _) in &lines {
            writeln!(w, "{row}")?;
        }
    }
    let mut failed = false;
    for (_, line) in &lines {
        failed |= line.starts_with("FAIL");
        println!("{line}");
    }
    if failed {
        bail!("one or more audits failed");
    }
    Ok(())
}

fn cmd_ingest(args: IngestArgs) -> Result<()> {
    let file =
        File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let mut cloud = PointCloud::<f64>::read_csv(BufReader::new(file))?;
    if cloud.is_empty() {
        bail!("no data rows in {}", args.input.display());
    }
    if args.rescale_unit_box {
        cloud.rescale_unit_box();
    }
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    cloud.write_csv(BufWriter::new(out))?;
    println!("N = {}", cloud.len());
    println!("d = {}", cloud.dim());
    Ok(())
}
