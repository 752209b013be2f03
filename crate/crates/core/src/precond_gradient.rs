//! Subdomain corrections and the preconditioned gradient `g~`.
//!
//! Two constructions keep `||g~ - g|| <= dL`:
//!
//! * trust-region strategy: subdomain solves start at the local Newton point
//!   and may move at most `omega * dL` away from it; `g~ = -C sum_k I^k s^k`.
//! * damping strategy: unconstrained subdomain solves, then
//!   `g~ = alpha g - (1 - alpha) C sum_k I^k s^k` with `alpha` chosen from `dL`.

use crate::decomposition::{Decomposition, LocalObjective, SchwarzOperator};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{SymmetricOperator, Vector};
use crate::problem::{self, Problem};
use crate::trust_region::{minimize, TrustRegionConfig};

/// Outcome of one subdomain solve.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolveReport {
    pub k: usize,
    /// `s^k = u^k_f - P^k u`
    pub s: Vector,
    /// `-(B^k)^-1 grad H^k(P^k u)`, present for the trust-region strategy.
    pub newton_step: Option<Vector>,
    /// Displacement accumulated by the local trust-region steps. Equals `s`
    /// for unconstrained solves.
    pub correction: Vector,
    /// Local trust-region steps taken.
    pub iterations: usize,
    pub grad_norm: f64,
    pub converged: bool,
    /// The displacement bound clamped the local radius at least once.
    pub constraint_active: bool,
    /// `false` when the local Newton point left the domain of `J`.
    pub start_feasible: bool,
    pub applications: usize,
}

/// Unconstrained local solve of `H^k` from `P^k u`.
pub fn local_solve_free<L: Problem>(
    objective: &LocalObjective<L>,
    config: &TrustRegionConfig,
) -> Result<LocalSolveReport> {
    let out = minimize(objective, objective.base().clone(), config, None, |_| {})?;
    Ok(LocalSolveReport {
        k: objective.k(),
        s: out.moved.clone(),
        newton_step: None,
        correction: out.moved,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        converged: out.converged,
        constraint_active: false,
        start_feasible: true,
        applications: out.applications,
    })
}

/// `-(B^k)^-1 grad H^k(P^k u)`
pub fn newton_start<L: Problem>(
    objective: &LocalObjective<L>,
    b_k: &SymmetricOperator,
) -> Result<Vector> {
    check_dim(objective.dim(), b_k.dim())?;
    let k = objective.k();
    let grad = problem::gradient(objective, objective.base())?;
    let lu = b_k.as_matrix().clone().lu();
    if !lu.is_invertible() {
        return Err(Error::SingularOperator { k });
    }
    let step = lu.solve(&grad).ok_or(Error::SingularOperator { k })?;
    if !step.iter().all(|x| x.is_finite()) {
        return Err(Error::SingularOperator { k });
    }
    Ok(-step)
}

/// Local solve that first takes the Newton step and then keeps the further
/// local steps within `omega * delta_l` of the Newton point.
pub fn local_solve_constrained<L: Problem>(
    objective: &LocalObjective<L>,
    b_k: &SymmetricOperator,
    omega: f64,
    delta_l: f64,
    config: &TrustRegionConfig,
) -> Result<LocalSolveReport> {
    if !(omega >= 0.0 && delta_l >= 0.0) {
        return Err(Error::InvalidConfig(format!(
            "omega and dL must be non-negative, got {omega} and {delta_l}"
        )));
    }
    let newton = newton_start(objective, b_k)?;
    local_solve_from_newton(objective, newton, omega * delta_l, config)
}

/// [`local_solve_constrained`] with a precomputed Newton step and displacement
/// budget.
pub fn local_solve_from_newton<L: Problem>(
    objective: &LocalObjective<L>,
    newton: Vector,
    budget: f64,
    config: &TrustRegionConfig,
) -> Result<LocalSolveReport> {
    let k = objective.k();
    let m = objective.dim();
    check_dim(m, newton.len())?;
    let start = objective.base() + &newton;
    let still = |grad_norm: f64, feasible: bool, active: bool| LocalSolveReport {
        k,
        s: newton.clone(),
        newton_step: Some(newton.clone()),
        correction: Vector::zeros(m),
        iterations: 0,
        grad_norm,
        converged: false,
        constraint_active: active,
        start_feasible: feasible,
        applications: 0,
    };
    if !problem::evaluate(objective, &start)?.is_feasible() {
        return Ok(still(f64::NAN, false, false));
    }
    if !(budget > 0.0) {
        let grad_norm = problem::gradient(objective, &start)?.norm();
        return Ok(still(grad_norm, true, true));
    }
    let out = minimize(objective, start, config, Some(budget), |_| {})?;
    Ok(LocalSolveReport {
        k,
        s: &newton + &out.moved,
        newton_step: Some(newton),
        correction: out.moved,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
        converged: out.converged,
        constraint_active: out.constraint_active,
        start_feasible: true,
        applications: out.applications,
    })
}

fn by_subspace<'a>(
    decomp: &Decomposition,
    reports: &'a [LocalSolveReport],
) -> Result<Vec<&'a LocalSolveReport>> {
    let mut slots: Vec<Option<&LocalSolveReport>> = vec![None; decomp.len()];
    for r in reports {
        let slot = slots.get_mut(r.k).ok_or(Error::SubspaceIndex {
            k: r.k,
            count: decomp.len(),
        })?;
        *slot = Some(r);
    }
    slots
        .into_iter()
        .enumerate()
        .map(|(k, r)| r.ok_or(Error::MissingSubspace(k)))
        .collect()
}

/// `g^ASPIN = -sum_k I^k s^k`
pub fn aspin_gradient(decomp: &Decomposition, reports: &[LocalSolveReport]) -> Result<Vector> {
    let ordered = by_subspace(decomp, reports)?;
    let mut sum = Vector::zeros(decomp.dim());
    for r in ordered {
        decomp.prolongate_add(r.k, &r.s, &mut sum)?;
    }
    Ok(-sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreconditionedGradient {
    pub g_tilde: Vector,
    /// Damping weight; 0 for the trust-region strategy.
    pub alpha: f64,
    pub aspin_g: Vector,
    /// `||g~ - g||`
    pub perturbation: f64,
}

fn checked(
    g: &Vector,
    g_tilde: Vector,
    alpha: f64,
    aspin_g: Vector,
    delta_l: f64,
) -> Result<PreconditionedGradient> {
    let perturbation = (&g_tilde - g).norm();
    if !(perturbation <= delta_l) {
        return Err(Error::PerturbationBound {
            perturbation,
            bound: delta_l,
        });
    }
    Ok(PreconditionedGradient {
        g_tilde,
        alpha,
        aspin_g,
        perturbation,
    })
}

/// `g~ = -C sum_k I^k s^k`.
///
/// When every report carries its Newton step, `C` is applied only to the
/// post-Newton displacements, `g~ = g - C sum_k I^k ds^k`, which is the same
/// vector without forming `C C^-1 g` in floating point.
pub fn gtilde_trust_region(
    g: &Vector,
    decomp: &Decomposition,
    schwarz: &SchwarzOperator,
    reports: &[LocalSolveReport],
    delta_l: f64,
) -> Result<PreconditionedGradient> {
    if decomp.is_overlapping() {
        return Err(Error::OverlapUnsupported);
    }
    check_dim(decomp.dim(), g.len())?;
    let aspin_g = aspin_gradient(decomp, reports)?;
    let ordered = by_subspace(decomp, reports)?;
    let g_tilde = if ordered.iter().all(|r| r.newton_step.is_some()) {
        let mut displacement = Vector::zeros(decomp.dim());
        for r in &ordered {
            decomp.prolongate_add(r.k, &r.correction, &mut displacement)?;
        }
        g - schwarz.apply_c(&displacement)?
    } else {
        schwarz.apply_c(&aspin_g)?
    };
    checked(g, g_tilde, 0.0, aspin_g, delta_l)
}

/// `alpha = min{1, max{0, 1 - dL / (||g|| + ||c_sum||)}}`, 0 when both norms vanish.
pub fn damping_alpha(g: &Vector, c_sum: &Vector, delta_l: f64) -> f64 {
    let denom = g.norm() + c_sum.norm();
    if denom == 0.0 {
        return 0.0;
    }
    (1.0 - delta_l / denom).clamp(0.0, 1.0)
}

/// `g~ = alpha g - (1 - alpha) C sum_k I^k s^k`
pub fn gtilde_damped(
    g: &Vector,
    decomp: &Decomposition,
    schwarz: &SchwarzOperator,
    reports: &[LocalSolveReport],
    delta_l: f64,
) -> Result<PreconditionedGradient> {
    check_dim(decomp.dim(), g.len())?;
    let aspin_g = aspin_gradient(decomp, reports)?;
    let c_sum = schwarz.apply_c(&(-&aspin_g))?;
    let alpha = damping_alpha(g, &c_sum, delta_l);
    let g_tilde = alpha * g - (1.0 - alpha) * &c_sum;
    checked(g, g_tilde, alpha, aspin_g, delta_l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decomposition::{assemble_schwarz, local_objective, FrozenComplement};
    use crate::problem::QuadraticProblem;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn report(k: usize, s: Vector) -> LocalSolveReport {
        LocalSolveReport {
            k,
            correction: s.clone(),
            s,
            newton_step: None,
            iterations: 0,
            grad_norm: 0.0,
            converged: true,
            constraint_active: false,
            start_feasible: true,
            applications: 0,
        }
    }

    fn local_cfg() -> TrustRegionConfig {
        TrustRegionConfig {
            max_iters: 20,
            grad_tol: 1e-9,
            ..TrustRegionConfig::default()
        }
    }

    #[test]
    fn damping_alpha_examples() {
        let g = v(&[3.0, 4.0]);
        let c = v(&[0.0, 5.0]);
        assert!((damping_alpha(&g, &c, 2.0) - 0.8).abs() < 1e-15);
        assert_eq!(damping_alpha(&g, &c, 10.0), 0.0);
        assert_eq!(damping_alpha(&g, &c, 0.0), 1.0);
        assert_eq!(damping_alpha(&Vector::zeros(2), &Vector::zeros(2), 1.0), 0.0);
    }

    #[test]
    fn aspin_gradient_sums_in_order() {
        let d = Decomposition::contiguous(2, 2, 0).unwrap();
        let reports = vec![report(1, v(&[2.0])), report(0, v(&[1.0]))];
        assert_eq!(aspin_gradient(&d, &reports).unwrap(), v(&[-1.0, -2.0]));
        assert_eq!(
            aspin_gradient(&d, &reports[..1]),
            Err(Error::MissingSubspace(0))
        );
    }

    #[test]
    fn zero_corrections_need_a_large_enough_radius() {
        let d = Decomposition::contiguous(2, 2, 0).unwrap();
        let c = assemble_schwarz(&d, vec![SymmetricOperator::identity(1); 2]).unwrap();
        let g = v(&[3.0, 4.0]);
        let reports = vec![report(0, v(&[0.0])), report(1, v(&[0.0]))];
        let pg = gtilde_trust_region(&g, &d, &c, &reports, 5.0).unwrap();
        assert_eq!(pg.g_tilde, Vector::zeros(2));
        assert!(matches!(
            gtilde_trust_region(&g, &d, &c, &reports, 4.0),
            Err(Error::PerturbationBound { .. })
        ));
    }

    #[test]
    fn damped_extremes() {
        let d = Decomposition::contiguous(2, 2, 0).unwrap();
        let c = assemble_schwarz(&d, vec![SymmetricOperator::from_diagonal(&[2.0]); 2]).unwrap();
        let g = v(&[1.0, -1.0]);
        let reports = vec![report(0, v(&[0.3])), report(1, v(&[0.1]))];
        let exact = gtilde_damped(&g, &d, &c, &reports, 0.0).unwrap();
        assert_eq!(exact.alpha, 1.0);
        assert_eq!(exact.g_tilde, g);
        let pure = gtilde_damped(&g, &d, &c, &reports, 100.0).unwrap();
        assert_eq!(pure.alpha, 0.0);
        assert_eq!(pure.g_tilde, c.apply_c(&pure.aspin_g).unwrap());
    }

    #[test]
    fn quadratic_local_solves_are_newton_steps() {
        let target = Vector::from_fn(6, |i, _| (i as f64).cos());
        let p = QuadraticProblem::shifted_laplacian(0.5, target);
        let d = Decomposition::contiguous(6, 2, 0).unwrap();
        let u = Vector::from_fn(6, |i, _| 0.3 * i as f64);
        let g = p.gradient(&u).unwrap();
        for k in 0..2 {
            let idx = d.subspace(k).unwrap().to_vec();
            let local = FrozenComplement::new(&p, idx.clone(), u.clone()).unwrap();
            let obj = local_objective(&d, k, &p, &u, &g, local).unwrap();
            let bk = SymmetricOperator::new(obj.hessian(obj.base()).unwrap()).unwrap();
            let rg = d.restrict(k, &g).unwrap();
            let exact = -bk.as_matrix().clone().lu().solve(&rg).unwrap();

            let free = local_solve_free(&obj, &local_cfg()).unwrap();
            assert!((&free.s - &exact).norm() <= 1e-9);

            let constrained = local_solve_constrained(&obj, &bk, 0.5, 1.0, &local_cfg()).unwrap();
            assert_eq!(constrained.iterations, 0);
            assert!((&constrained.s - &exact).norm() <= 1e-12);
            assert!(!constrained.constraint_active);

            let frozen = local_solve_constrained(&obj, &bk, 0.0, 1.0, &local_cfg()).unwrap();
            assert_eq!(frozen.s, frozen.newton_step.clone().unwrap());
        }
    }

    #[test]
    fn zero_gradient_gives_zero_corrections() {
        let target = v(&[1.0, 2.0, 3.0, 4.0]);
        let p = QuadraticProblem::shifted_laplacian(0.2, target.clone());
        let d = Decomposition::contiguous(4, 2, 0).unwrap();
        let g = p.gradient(&target).unwrap();
        let local = FrozenComplement::new(&p, d.subspace(0).unwrap().to_vec(), target.clone()).unwrap();
        let obj = local_objective(&d, 0, &p, &target, &g, local).unwrap();
        assert_eq!(local_solve_free(&obj, &local_cfg()).unwrap().s, Vector::zeros(2));
    }
}
