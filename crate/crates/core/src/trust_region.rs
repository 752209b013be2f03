//! Quadratic models, Cauchy points, the Steihaug–Toint subproblem solver and
//! the basic trust-region loop.
//!
//! [`tr_solve`] is the single-level baseline. The same loop, with an optional
//! bound on the total displacement, drives the subdomain solves of the
//! preconditioned methods.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SymmetricOperator, Vector};
use crate::problem::{self, HessianMode, Problem};
use crate::trace::{IterationRecord, OperationCounts};

/// Constants of the basic trust-region iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrustRegionConfig {
    pub eta: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub delta0: f64,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub hessian: HessianMode,
    /// Fixed relative CG tolerance; `None` selects `min(0.1, sqrt(||g||))`.
    pub cg_rel_tol: Option<f64>,
    /// CG iteration cap; `None` selects `2n`.
    pub max_cg: Option<usize>,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            eta: 0.1,
            gamma1: 0.5,
            gamma2: 2.0,
            delta0: 1.0,
            max_iters: 500,
            grad_tol: 1e-6,
            hessian: HessianMode::Analytic,
            cg_rel_tol: None,
            max_cg: None,
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return bad(format!("eta must lie in (0, 1), got {}", self.eta));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0) {
            return bad(format!("gamma1 must lie in (0, 1), got {}", self.gamma1));
        }
        if !(self.gamma2 > 1.0 && self.gamma2.is_finite()) {
            return bad(format!("gamma2 must exceed 1, got {}", self.gamma2));
        }
        if !(self.delta0 > 0.0 && self.delta0.is_finite()) {
            return bad(format!("delta0 must be positive, got {}", self.delta0));
        }
        if !(self.grad_tol >= 0.0) {
            return bad(format!("grad_tol must be non-negative, got {}", self.grad_tol));
        }
        if let Some(tol) = self.cg_rel_tol {
            if !(tol > 0.0 && tol < 1.0) {
                return bad(format!("cg_rel_tol must lie in (0, 1), got {tol}"));
            }
        }
        if self.max_cg == Some(0) {
            return bad("max_cg must be at least 1".into());
        }
        Ok(())
    }

    /// Relative residual target for the subproblem solve at gradient norm `gnorm`.
    pub fn cg_tolerance(&self, gnorm: f64) -> f64 {
        self.cg_rel_tol.unwrap_or_else(|| 0.1_f64.min(gnorm.sqrt()))
    }

    pub fn cg_cap(&self, n: usize) -> usize {
        self.max_cg.unwrap_or(2 * n).max(1)
    }
}

/// `psi(s) = <g, s> + 1/2 <s, B s>`
#[derive(Debug, Clone, Copy)]
pub struct QuadraticModel<'a> {
    pub g: &'a Vector,
    pub b: &'a SymmetricOperator,
}

impl<'a> QuadraticModel<'a> {
    pub fn new(g: &'a Vector, b: &'a SymmetricOperator) -> Result<Self> {
        check_dim(b.dim(), g.len())?;
        Ok(Self { g, b })
    }

    pub fn value(&self, s: &Vector) -> f64 {
        self.g.dot(s) + 0.5 * self.b.quad_form(s)
    }

    /// `-psi(s)`
    pub fn decrease(&self, s: &Vector) -> f64 {
        -self.value(s)
    }

    pub fn cauchy_point(&self, delta: f64) -> Vector {
        cauchy_point(self.g, self.b, delta)
    }
}

/// Minimizer of the model along `-g` inside the ball of radius `delta`.
pub fn cauchy_point(g: &Vector, b: &SymmetricOperator, delta: f64) -> Vector {
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return Vector::zeros(g.len());
    }
    let boundary = delta / gnorm;
    let curvature = b.quad_form(g);
    let t = if curvature <= 0.0 {
        boundary
    } else {
        (gnorm * gnorm / curvature).min(boundary)
    };
    -t * g
}

/// Why the Steihaug–Toint iteration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// Residual below the requested tolerance (interior step).
    Converged,
    NegativeCurvature,
    Boundary,
    IterationLimit,
    /// The CG iterate was worse than the Cauchy point, which was returned instead.
    CauchyFallback,
}

#[derive(Debug, Clone)]
pub struct SubproblemStep {
    pub s: Vector,
    pub termination: Termination,
    pub iterations: usize,
    /// Operator applications `v -> Bv`, including the Cauchy comparison.
    pub applications: usize,
}

/// Positive `tau` with `||s + tau d|| = delta`.
fn to_boundary(s: &Vector, d: &Vector, delta: f64) -> f64 {
    let dd = d.dot(d);
    let sd = s.dot(d);
    let ss = s.dot(s);
    let disc = (sd * sd + dd * (delta * delta - ss)).max(0.0).sqrt();
    if sd >= 0.0 {
        // Avoids cancellation in -sd + disc.
        let denom = sd + disc;
        if denom == 0.0 {
            0.0
        } else {
            (delta * delta - ss).max(0.0) / denom
        }
    } else {
        (disc - sd) / dd
    }
}

fn clip_to_ball(s: &mut Vector, delta: f64) {
    let norm = s.norm();
    if norm > delta {
        *s *= delta / norm;
    }
}

/// Truncated conjugate gradients for `min psi(s)` subject to `||s|| <= delta`.
///
/// The result never does worse than the Cauchy point.
pub fn steihaug_toint(
    g: &Vector,
    b: &SymmetricOperator,
    delta: f64,
    cg_tol: f64,
    max_cg: usize,
) -> SubproblemStep {
    let n = g.len();
    let gnorm = g.norm();
    let mut s = Vector::zeros(n);
    if gnorm == 0.0 {
        return SubproblemStep {
            s,
            termination: Termination::Converged,
            iterations: 0,
            applications: 0,
        };
    }
    let target = cg_tol * gnorm;
    let mut r = g.clone();
    let mut rr = r.dot(&r);
    let mut d = -g;
    let mut applications = 0;
    let mut iterations = 0;
    let mut termination = Termination::IterationLimit;

    while iterations < max_cg {
        iterations += 1;
        let bd = b.apply(&d);
        applications += 1;
        let dbd = d.dot(&bd);
        if dbd <= 0.0 {
            let tau = to_boundary(&s, &d, delta);
            s.axpy(tau, &d, 1.0);
            termination = Termination::NegativeCurvature;
            break;
        }
        let alpha = rr / dbd;
        let trial = &s + alpha * &d;
        if trial.norm() >= delta {
            let tau = to_boundary(&s, &d, delta);
            s.axpy(tau, &d, 1.0);
            termination = Termination::Boundary;
            break;
        }
        s = trial;
        r.axpy(alpha, &bd, 1.0);
        let rr_next = r.dot(&r);
        if rr_next.sqrt() <= target {
            termination = Termination::Converged;
            break;
        }
        d = -&r + (rr_next / rr) * &d;
        rr = rr_next;
    }
    clip_to_ball(&mut s, delta);

    let model = QuadraticModel { g, b };
    let sc = cauchy_point(g, b, delta);
    applications += 3;
    if model.value(&s) > model.value(&sc) {
        return SubproblemStep {
            s: sc,
            termination: Termination::CauchyFallback,
            iterations,
            applications,
        };
    }
    SubproblemStep {
        s,
        termination,
        iterations,
        applications,
    }
}

/// `(J(u) - J(u + s)) / (-psi(s))`, `-inf` when `u + s` is infeasible.
pub fn decrease_ratio<P: Problem + ?Sized>(
    problem: &P,
    u: &Vector,
    s: &Vector,
    model: &QuadraticModel<'_>,
) -> Result<f64> {
    let pred = model.decrease(s);
    if !(pred > 0.0) {
        return Err(Error::NonPositivePrediction(pred));
    }
    let ared = problem::value_change(problem, u, s)?.map(|d| -d);
    Ok(ratio(ared, pred))
}

pub(crate) fn ratio(ared: Option<f64>, pred: f64) -> f64 {
    match ared {
        None => f64::NEG_INFINITY,
        Some(_) if !(pred > 0.0) => f64::NAN,
        Some(a) => a / pred,
    }
}

pub fn radius_update(delta: f64, rho: f64, config: &TrustRegionConfig) -> f64 {
    if rho >= config.eta {
        config.gamma2 * delta
    } else {
        config.gamma1 * delta
    }
}

/// One attempted step of [`minimize`].
#[derive(Debug, Clone)]
pub(crate) struct TrialStep {
    pub iter: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub radius: f64,
    pub rho: f64,
    pub ared: f64,
    pub pred: f64,
    pub cauchy_decrease: f64,
    pub accepted: bool,
    pub applications: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Minimization {
    pub x: Vector,
    /// Sum of accepted steps, accumulated separately from `x`.
    pub moved: Vector,
    pub value: f64,
    pub grad_norm: f64,
    pub radius: f64,
    pub iterations: usize,
    pub converged: bool,
    pub applications: usize,
    pub hessian_evals: usize,
    pub constraint_active: bool,
}

/// Trust-region loop from `x0`. With `budget`, accepted steps are kept inside
/// the ball of that radius around `x0` by clamping the trust-region radius.
pub(crate) fn minimize<P: Problem + ?Sized>(
    problem: &P,
    x0: Vector,
    config: &TrustRegionConfig,
    budget: Option<f64>,
    mut observe: impl FnMut(&TrialStep),
) -> Result<Minimization> {
    let n = problem.dim();
    check_dim(n, x0.len())?;
    let mut x = x0;
    let mut value = problem::evaluate(problem, &x)?.value().ok_or(Error::Infeasible)?;
    let mut g = problem::gradient(problem, &x)?;
    let mut b: Option<SymmetricOperator> = None;
    let mut hessian_evals = 0;
    let mut moved = Vector::zeros(n);
    let mut delta = config.delta0;
    let mut applications = 0;
    let mut converged = false;
    let mut constraint_active = false;
    let mut iterations = 0;

    loop {
        let gnorm = g.norm();
        if gnorm <= config.grad_tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iters {
            break;
        }
        let mut radius = delta;
        if let Some(limit) = budget {
            let remaining = limit - moved.norm();
            if !(remaining > 1e-12 * limit) {
                constraint_active = true;
                break;
            }
            if remaining < radius {
                radius = remaining;
                constraint_active = true;
            }
        }
        if b.is_none() {
            b = Some(problem::hessian(problem, &x, config.hessian)?);
            hessian_evals += 1;
        }
        let bx = b.as_ref().expect("assembled above");
        let model = QuadraticModel { g: &g, b: bx };
        let step = steihaug_toint(&g, bx, radius, config.cg_tolerance(gnorm), config.cg_cap(n));
        applications += step.applications;
        let mut s = step.s;
        if let Some(limit) = budget {
            if (&moved + &s).norm() > limit {
                // Round-off pushed the step past the budget.
                s *= (1.0 - 1e-12) * (limit - moved.norm()).max(0.0) / s.norm().max(f64::MIN_POSITIVE);
                if (&moved + &s).norm() > limit {
                    constraint_active = true;
                    break;
                }
            }
        }
        let pred = model.decrease(&s);
        let ared = problem::value_change(problem, &x, &s)?.map(|d| -d);
        let rho = ratio(ared, pred);
        let cauchy_decrease = model.decrease(&model.cauchy_point(radius));
        applications += 2;
        let accepted = rho >= config.eta;
        observe(&TrialStep {
            iter: iterations,
            value,
            grad_norm: gnorm,
            radius,
            rho,
            ared: ared.unwrap_or(f64::NEG_INFINITY),
            pred,
            cauchy_decrease,
            accepted,
            applications,
        });
        iterations += 1;
        delta = radius_update(radius, rho, config);
        if accepted {
            x += &s;
            moved += &s;
            // Tracked through the increments so accepted values never increase.
            value -= ared.expect("accepted steps are feasible");
            g = problem::gradient(problem, &x)?;
            b = None;
        }
    }
    Ok(Minimization {
        x,
        moved,
        value,
        grad_norm: g.norm(),
        radius: delta,
        iterations,
        converged,
        applications,
        hessian_evals,
        constraint_active,
    })
}

/// Result of a baseline trust-region run.
#[derive(Debug, Clone)]
pub struct TrRun {
    pub u: Vector,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub counts: OperationCounts,
}

/// Single-level trust-region method.
///
/// One record per attempted step, plus a closing record for the final iterate
/// (its `rho_tilde` is NaN and it is never marked accepted).
pub fn tr_solve<P: Problem + ?Sized>(
    problem: &P,
    u0: &Vector,
    config: &TrustRegionConfig,
) -> Result<TrRun> {
    config.validate()?;
    let mut records = Vec::new();
    let outcome = minimize(problem, u0.clone(), config, None, |t| {
        records.push(IterationRecord {
            iter: t.iter,
            value: t.value,
            grad_norm: t.grad_norm,
            gtilde_norm: t.grad_norm,
            perturbation_norm: 0.0,
            delta_g: t.radius,
            delta_l: 0.0,
            rho_tilde: t.rho,
            alpha: 1.0,
            decrease_ok: true,
            accepted: t.accepted,
            ared: t.ared,
            pred: t.pred,
            cauchy_decrease_tilde: t.cauchy_decrease,
            cauchy_decrease: t.cauchy_decrease,
            local_iters: Vec::new(),
            local_applications: 0,
            global_applications: t.applications,
        });
    })?;
    records.push(IterationRecord::closing(
        outcome.iterations,
        outcome.value,
        outcome.grad_norm,
        outcome.radius,
        0.0,
        1.0,
        0,
        outcome.applications,
    ));
    Ok(TrRun {
        u: outcome.x,
        records,
        converged: outcome.converged,
        counts: OperationCounts {
            hessian_evals: outcome.hessian_evals,
            global_applications: outcome.applications,
            ..OperationCounts::default()
        },
    })
}
