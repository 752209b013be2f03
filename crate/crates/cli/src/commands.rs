use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use gaspin::decomposition::assemble_schwarz;
use gaspin::problem::{self, fd_check_gradient, fd_check_hessian_vector};
use gaspin::trace::write_csv;
use gaspin::{
    gaspin_solve, tr_solve, Decomposition, Error, GaspinConfig, HessianMode, IterationRecord,
    LocalSolveReport, OperationCounts, Problem, RunSummary, Vector,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{sample_point, ProblemSpec, RunConfig, SolverKind};
use crate::{CliError, Options};

struct Solved {
    u: Vector,
    records: Vec<IterationRecord>,
    converged: bool,
    counts: OperationCounts,
    local_reports: Option<Vec<Vec<LocalSolveReport>>>,
}

fn solver_error(err: Error) -> CliError {
    match err {
        Error::Infeasible => CliError::Infeasible("the iterate left the domain of the objective".into()),
        Error::InvalidConfig(_) | Error::OverlapUnsupported | Error::DimensionMismatch { .. } => {
            CliError::Config(err.to_string())
        }
        other => CliError::Failed(format!("solver error: {other}")),
    }
}

fn ensure_feasible(problem: &dyn Problem, u0: &Vector) -> Result<(), CliError> {
    let feasible = problem::evaluate(problem, u0).map_err(solver_error)?.is_feasible();
    if feasible {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!(
            "{} is not defined at the starting point",
            problem.name()
        )))
    }
}

fn solve(
    problem: &dyn Problem,
    decomp: &Decomposition,
    u0: &Vector,
    solver: SolverKind,
    config: &GaspinConfig,
) -> Result<Solved, CliError> {
    match solver.strategy() {
        None => {
            let run = tr_solve(problem, u0, &config.trust_region).map_err(solver_error)?;
            Ok(Solved {
                u: run.u,
                records: run.records,
                converged: run.converged,
                counts: run.counts,
                local_reports: None,
            })
        }
        Some(strategy) => {
            let cfg = GaspinConfig {
                strategy,
                ..config.clone()
            };
            let run = gaspin_solve(problem, decomp, u0, &cfg).map_err(solver_error)?;
            Ok(Solved {
                u: run.u,
                records: run.records,
                converged: run.converged,
                counts: run.counts,
                local_reports: Some(run.local_reports),
            })
        }
    }
}

fn with_workers(config: &GaspinConfig, opts: &Options) -> GaspinConfig {
    let mut cfg = config.clone();
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    cfg
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|err| CliError::Failed(format!("cannot serialize {}: {err}", path.display())))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn write_trace(path: &Path, records: &[IterationRecord]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    write_csv(&mut out, records)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SubdomainLine {
    k: usize,
    iterations: usize,
    grad_norm: f64,
    converged: bool,
    constraint_active: bool,
    start_feasible: bool,
    applications: usize,
    step_norm: f64,
    correction_norm: f64,
}

#[derive(Serialize)]
struct LocalReportLine {
    iter: usize,
    subdomains: Vec<SubdomainLine>,
}

fn write_local_reports(path: &Path, reports: &[Vec<LocalSolveReport>]) -> Result<(), CliError> {
    let mut out = BufWriter::new(File::create(path)?);
    for (iter, per_k) in reports.iter().enumerate() {
        let line = LocalReportLine {
            iter,
            subdomains: per_k
                .iter()
                .map(|r| SubdomainLine {
                    k: r.k,
                    iterations: r.iterations,
                    grad_norm: r.grad_norm,
                    converged: r.converged,
                    constraint_active: r.constraint_active,
                    start_feasible: r.start_feasible,
                    applications: r.applications,
                    step_norm: r.s.norm(),
                    correction_norm: r.correction.norm(),
                })
                .collect(),
        };
        let text = serde_json::to_string(&line)
            .map_err(|err| CliError::Failed(format!("cannot serialize local report: {err}")))?;
        writeln!(out, "{text}")?;
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    #[serde(flatten)]
    summary: &'a RunSummary,
    grad_tol: f64,
    seed: u64,
}

pub fn run(opts: &Options) -> Result<(), CliError> {
    let config = RunConfig::load(&opts.config)?;
    let spec = config.require_problem()?;
    let solver = config
        .solver
        .ok_or_else(|| CliError::Config("missing key `solver`".into()))?;
    let seed = opts.seed.unwrap_or(config.seed);
    let problem = spec.build()?;
    let decomp = config.decomposition.build(problem.dim())?;
    let u0 = config.start.build(problem.dim(), seed)?;
    let cfg = with_workers(&config.config, opts);
    ensure_feasible(problem.as_ref(), &u0)?;

    let solved = solve(problem.as_ref(), &decomp, &u0, solver, &cfg)?;
    fs::create_dir_all(&opts.out)?;
    write_trace(&opts.out.join("trace.csv"), &solved.records)?;
    let summary = RunSummary::from_records(
        solver.name(),
        problem.name(),
        problem.dim(),
        solved.converged,
        &solved.records,
        solved.counts,
    );
    write_json(
        &opts.out.join("summary.json"),
        &RunReport {
            summary: &summary,
            grad_tol: cfg.trust_region.grad_tol,
            seed,
        },
    )?;
    if let Some(reports) = &solved.local_reports {
        write_local_reports(&opts.out.join("local_reports.jsonl"), reports)?;
    }
    println!(
        "{} on {} (n = {}): {} iterations, J = {:e}, ||g|| = {:e}, converged = {}",
        solver.name(),
        problem.name(),
        problem.dim(),
        summary.iterations,
        summary.final_value,
        summary.final_grad_norm,
        summary.converged
    );
    if solved.converged {
        Ok(())
    } else {
        Err(CliError::Failed(format!(
            "not converged: ||g|| = {:e} > {:e} after {} iterations",
            summary.final_grad_norm, cfg.trust_region.grad_tol, summary.iterations
        )))
    }
}

#[derive(Serialize)]
struct PairReport {
    a: String,
    b: String,
    distance: f64,
    agree: bool,
}

#[derive(Serialize)]
struct VariantReport {
    label: String,
    #[serde(flatten)]
    summary: RunSummary,
}

#[derive(Serialize)]
struct CompareReport {
    problem: String,
    dim: usize,
    seed: u64,
    tolerance: f64,
    agreement: bool,
    pairs: Vec<PairReport>,
    variants: Vec<VariantReport>,
}

fn label_is_safe(label: &str) -> bool {
    !label.is_empty()
        && label
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == '.')
}

fn side_by_side(labels: &[String], runs: &[Solved]) -> String {
    let mut out = String::from("iter");
    for l in labels {
        out.push_str(&format!(",J_{l},gnorm_{l}"));
    }
    out.push('\n');
    let rows = runs.iter().map(|r| r.records.len()).max().unwrap_or(0);
    for i in 0..rows {
        out.push_str(&i.to_string());
        for r in runs {
            match r.records.get(i) {
                Some(rec) => out.push_str(&format!(",{},{}", rec.value, rec.grad_norm)),
                None => out.push_str(",,"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn compare(opts: &Options) -> Result<(), CliError> {
    let config = RunConfig::load(&opts.config)?;
    if config.variants.len() < 2 {
        return Err(CliError::Config(format!(
            "compare needs at least two `variants`, found {}",
            config.variants.len()
        )));
    }
    let labels: Vec<String> = config.variants.iter().map(|v| v.label()).collect();
    for (i, l) in labels.iter().enumerate() {
        if !label_is_safe(l) {
            return Err(CliError::Config(format!(
                "variant name {l:?} may only use letters, digits, '-', '_' and '.'"
            )));
        }
        if labels[..i].contains(l) {
            return Err(CliError::Config(format!("duplicate variant name {l:?}")));
        }
    }
    let spec = config.require_problem()?;
    let seed = opts.seed.unwrap_or(config.seed);
    let problem = spec.build()?;
    let decomp = config.decomposition.build(problem.dim())?;
    let u0 = config.start.build(problem.dim(), seed)?;
    ensure_feasible(problem.as_ref(), &u0)?;

    let mut runs = Vec::with_capacity(labels.len());
    for v in &config.variants {
        let cfg = with_workers(v.config.as_ref().unwrap_or(&config.config), opts);
        runs.push(solve(problem.as_ref(), &decomp, &u0, v.solver, &cfg)?);
    }

    fs::create_dir_all(&opts.out)?;
    for (label, r) in labels.iter().zip(&runs) {
        write_trace(&opts.out.join(format!("trace_{label}.csv")), &r.records)?;
    }
    fs::write(opts.out.join("compare.csv"), side_by_side(&labels, &runs))?;

    let mut pairs = Vec::new();
    for i in 0..runs.len() {
        for j in i + 1..runs.len() {
            let distance = (&runs[i].u - &runs[j].u).norm();
            pairs.push(PairReport {
                a: labels[i].clone(),
                b: labels[j].clone(),
                distance,
                agree: distance <= config.agreement_tol,
            });
        }
    }
    let agreement = pairs.iter().all(|p| p.agree);
    let variants: Vec<VariantReport> = config
        .variants
        .iter()
        .zip(&labels)
        .zip(&runs)
        .map(|((v, label), r)| VariantReport {
            label: label.clone(),
            summary: RunSummary::from_records(
                v.solver.name(),
                problem.name(),
                problem.dim(),
                r.converged,
                &r.records,
                r.counts,
            ),
        })
        .collect();
    for v in &variants {
        println!(
            "{:<16} {:>5} iterations  J = {:<24e} ||g|| = {:e}",
            v.label, v.summary.iterations, v.summary.final_value, v.summary.final_grad_norm
        );
    }
    for p in &pairs {
        println!("||u_{} - u_{}|| = {:e}", p.a, p.b, p.distance);
    }
    println!("agreement: {agreement}");
    if !agreement {
        for p in pairs.iter().filter(|p| !p.agree) {
            eprintln!(
                "warning: final iterates of {} and {} differ by {:e} (tolerance {:e})",
                p.a, p.b, p.distance, config.agreement_tol
            );
        }
    }
    let unconverged: Vec<String> = variants
        .iter()
        .filter(|v| !v.summary.converged)
        .map(|v| v.label.clone())
        .collect();
    write_json(
        &opts.out.join("compare_summary.json"),
        &CompareReport {
            problem: problem.name().to_string(),
            dim: problem.dim(),
            seed,
            tolerance: config.agreement_tol,
            agreement,
            pairs,
            variants,
        },
    )?;
    if unconverged.is_empty() {
        Ok(())
    } else {
        Err(CliError::Failed(format!("not converged: {}", unconverged.join(", "))))
    }
}

/// Adds a fixed error to the first gradient entry.
struct CorruptGradient {
    inner: Box<dyn Problem>,
}

impl Problem for CorruptGradient {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        self.inner.value(u)
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        let mut g = self.inner.gradient(u)?;
        g[0] += 1e-2 * (1.0 + g[0].abs());
        Some(g)
    }

    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        self.inner.hessian(u)
    }

    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        self.inner.value_change(u, s)
    }
}

struct CheckRow {
    problem: String,
    check: &'static str,
    value: f64,
    tol: f64,
}

impl CheckRow {
    fn passed(&self) -> bool {
        self.value <= self.tol
    }
}

fn random_vector(n: usize, rng: &mut ChaCha8Rng) -> Vector {
    Vector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

fn check_problem(
    spec: &ProblemSpec,
    config: &RunConfig,
    corrupt: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<CheckRow>, CliError> {
    let settings = &config.check_settings;
    let mut problem = spec.build()?;
    if corrupt {
        problem = Box::new(CorruptGradient { inner: problem });
    }
    let p = problem.as_ref();
    let n = p.dim();
    let kind = spec.kind();
    let elastic = kind == "elasticity";
    let decomp = config.decomposition.build(n)?;
    let points: Vec<Vector> = (0..settings.points.max(1))
        .map(|_| sample_point(p, kind, rng))
        .collect();
    // Any failure to evaluate counts as an infinite error.
    let worst = |errors: Vec<gaspin::Result<f64>>| {
        errors
            .into_iter()
            .map(|e| e.unwrap_or(f64::INFINITY))
            .fold(0.0, |a: f64, b| if b.is_nan() { f64::INFINITY } else { a.max(b) })
    };

    let h = if elastic { 1e-7 } else { 1e-6 };
    let gradient = worst(points.iter().map(|u| fd_check_gradient(p, u, h)).collect());
    let hv = worst(
        points
            .iter()
            .map(|u| {
                let v = random_vector(n, rng).normalize();
                fd_check_hessian_vector(p, u, &v, 1e-5, HessianMode::Analytic)
            })
            .collect(),
    );

    let mut adjoint = 0.0_f64;
    for k in 0..decomp.len() {
        let m = decomp.subspace(k).map_err(solver_error)?.len();
        let w = random_vector(m, rng);
        let v = random_vector(n, rng);
        let lhs = decomp.prolongate(k, &w).map_err(solver_error)?.dot(&v);
        let rhs = w.dot(&decomp.restrict(k, &v).map_err(solver_error)?);
        adjoint = adjoint.max((lhs - rhs).abs() / (1.0 + lhs.abs()));
    }

    let round_trip = (|| -> gaspin::Result<f64> {
        let b = problem::hessian(p, &points[0], HessianMode::Analytic)?;
        let ops = decomp
            .subspaces()
            .iter()
            .map(|idx| b.principal_submatrix(idx).regularized(config.config.regularization_floor).0)
            .collect();
        let schwarz = assemble_schwarz(&decomp, ops)?;
        let mut err = 0.0_f64;
        for _ in 0..3 {
            let v = random_vector(n, rng);
            let back = schwarz.apply_cinv(&schwarz.apply_c(&v)?)?;
            err = err.max((back - &v).norm() / v.norm());
        }
        Ok(err)
    })();

    let name = problem.name().to_string();
    Ok(vec![
        CheckRow {
            problem: name.clone(),
            check: "gradient-fd",
            value: gradient,
            tol: if elastic {
                settings.elasticity_gradient_tol
            } else {
                settings.gradient_tol
            },
        },
        CheckRow {
            problem: name.clone(),
            check: "hessian-vector-fd",
            value: hv,
            tol: settings.hessian_vector_tol,
        },
        CheckRow {
            problem: name.clone(),
            check: "adjointness",
            value: adjoint,
            tol: settings.adjoint_tol,
        },
        CheckRow {
            problem: name,
            check: "schwarz-round-trip",
            value: worst(vec![round_trip]),
            tol: settings.round_trip_tol,
        },
    ])
}

pub fn check(opts: &Options) -> Result<(), CliError> {
    let config = RunConfig::load(&opts.config)?;
    let specs: Vec<ProblemSpec> = match (&config.checks, &config.problem) {
        (Some(list), _) => list.clone(),
        (None, Some(p)) => vec![p.clone()],
        (None, None) => Vec::new(),
    };
    if specs.is_empty() {
        return Err(CliError::Config("the list of problems to check is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.unwrap_or(config.seed));
    let mut rows = Vec::new();
    for spec in &specs {
        let corrupt = config.test_hooks.corrupt_gradient.iter().any(|k| k == spec.kind());
        rows.extend(check_problem(spec, &config, corrupt, &mut rng)?);
    }

    println!("{:<16} {:<20} {:>12} {:>10}  result", "problem", "check", "error", "tol");
    for r in &rows {
        println!(
            "{:<16} {:<20} {:>12.3e} {:>10.1e}  {}",
            r.problem,
            r.check,
            r.value,
            r.tol,
            if r.passed() { "PASS" } else { "FAIL" }
        );
    }
    let failed: Vec<String> = rows
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} ({})", r.problem, r.check))
        .collect();
    if failed.is_empty() {
        println!("all {} checks passed", rows.len());
        Ok(())
    } else {
        Err(CliError::Failed(format!("checks failed: {}", failed.join(", "))))
    }
}

pub fn dump_schwarz(opts: &Options) -> Result<(), CliError> {
    let config = RunConfig::load(&opts.config)?;
    let spec = config.require_problem()?;
    let problem = spec.build()?;
    let p = problem.as_ref();
    let decomp = config.decomposition.build(p.dim())?;
    let u0 = config.start.build(p.dim(), opts.seed.unwrap_or(config.seed))?;
    ensure_feasible(p, &u0)?;
    let b = problem::hessian(p, &u0, config.config.trust_region.hessian).map_err(solver_error)?;
    let ops = decomp
        .subspaces()
        .iter()
        .map(|idx| b.principal_submatrix(idx).regularized(config.config.regularization_floor).0)
        .collect();
    let c = assemble_schwarz(&decomp, ops)
        .and_then(|s| s.dense_c())
        .map_err(solver_error)?;

    fs::create_dir_all(&opts.out)?;
    let path = opts.out.join("schwarz_c.csv");
    let mut out = BufWriter::new(File::create(&path)?);
    for row in c.row_iter() {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    println!("wrote {}x{} matrix to {}", c.nrows(), c.ncols(), path.display());
    Ok(())
}
