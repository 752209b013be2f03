//! Globalized ASPIN: a trust-region outer loop whose model gradient is the
//! preconditioned gradient `g~`, controlled by a second radius `dL`.
//!
//! Each outer iteration
//!
//! 1. solves the subdomain problems (in parallel),
//! 2. forms `g~` with `||g~ - g|| <= dL`,
//! 3. minimizes `psi~(s) = <g~, s> + 1/2 <s, B s>` over `||s|| <= dG`,
//! 4. compares the Cauchy decreases of `psi~` and `psi`, computes `rho~`,
//! 5. updates both radii and accepts or rejects the step.

use serde::{Deserialize, Serialize};

use crate::decomposition::{
    assemble_schwarz, local_objective, Decomposition, FrozenComplement, LocalObjective,
    SchwarzOperator,
};
use crate::error::{check_dim, Error, Result};
use crate::linalg::{SymmetricOperator, Vector};
use crate::precond_gradient::{
    gtilde_damped, gtilde_trust_region, local_solve_free, local_solve_from_newton,
    LocalSolveReport, PreconditionedGradient,
};
use crate::problem::{self, Problem};
use crate::runtime::TaskPool;
use crate::trace::{IterationRecord, OperationCounts};
use crate::trust_region::{
    cauchy_point, decrease_ratio, ratio, steihaug_toint, QuadraticModel, TrustRegionConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    /// Constrained local solves around the local Newton point.
    #[default]
    #[serde(rename = "tr")]
    TrustRegion,
    /// Unconstrained local solves recombined with the damping weight.
    Damping,
}

/// Admissible `omega` for the trust-region strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OmegaRule {
    /// `omega = fraction / (N ||C||)`, which guarantees `||g~ - g|| <= dL`.
    #[default]
    Proof,
    /// `omega = fraction * N / ||C|| * dL`; may violate the bound.
    Literal,
}

/// Which global radius caps the new local radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RadiusBound {
    /// `dL' = min(dG, dG', dL~)`; keeps `dL <= dG` after every update.
    #[default]
    Both,
    /// `dL' = min(dG, dL~)` with the radius before the update.
    PreUpdate,
    /// `dL' = min(dG', dL~)`.
    PostUpdate,
}

/// Subdomain solver limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LocalConfig {
    pub max_iters: usize,
    pub grad_tol: f64,
    pub delta0: f64,
}

impl Default for LocalConfig {
    fn default() -> Self {
        Self {
            max_iters: 20,
            grad_tol: 1e-9,
            delta0: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaspinConfig {
    /// Outer constants; `delta0` is the initial `dG`.
    pub trust_region: TrustRegionConfig,
    pub delta_l0: f64,
    pub c1: f64,
    pub c2: f64,
    pub strategy: Strategy,
    pub omega_fraction: f64,
    pub omega_rule: OmegaRule,
    pub radius_bound: RadiusBound,
    pub local: LocalConfig,
    /// Eigenvalue floor for the subdomain Hessians.
    pub regularization_floor: f64,
    /// 0 selects the hardware parallelism.
    pub workers: usize,
}

impl Default for GaspinConfig {
    fn default() -> Self {
        Self {
            trust_region: TrustRegionConfig::default(),
            delta_l0: 1.0,
            c1: 1.0,
            c2: 0.5,
            strategy: Strategy::TrustRegion,
            omega_fraction: 0.9,
            omega_rule: OmegaRule::Proof,
            radius_bound: RadiusBound::Both,
            local: LocalConfig::default(),
            regularization_floor: 1e-8,
            workers: 1,
        }
    }
}

impl GaspinConfig {
    pub fn validate(&self) -> Result<()> {
        self.trust_region.validate()?;
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if !(self.c2 > 0.0 && self.c2 < self.c1 && self.c1 <= 1.0) {
            return bad(format!(
                "need 0 < c2 < c1 <= 1, got c1 = {} and c2 = {}",
                self.c1, self.c2
            ));
        }
        if !(self.delta_l0 > 0.0 && self.delta_l0.is_finite()) {
            return bad(format!("delta_l0 must be positive, got {}", self.delta_l0));
        }
        if !(self.omega_fraction > 0.0 && self.omega_fraction <= 1.0) {
            return bad(format!(
                "omega_fraction must lie in (0, 1], got {}",
                self.omega_fraction
            ));
        }
        if !(self.local.delta0 > 0.0 && self.local.grad_tol >= 0.0) {
            return bad("local delta0 must be positive and grad_tol non-negative".into());
        }
        if !(self.regularization_floor > 0.0) {
            return bad(format!(
                "regularization_floor must be positive, got {}",
                self.regularization_floor
            ));
        }
        Ok(())
    }

    /// Trust-region constants for the subdomain solves.
    pub fn local_trust_region(&self) -> TrustRegionConfig {
        TrustRegionConfig {
            delta0: self.local.delta0,
            max_iters: self.local.max_iters,
            grad_tol: self.local.grad_tol,
            cg_rel_tol: None,
            max_cg: None,
            ..self.trust_region.clone()
        }
    }
}

/// Iterate and radii between outer iterations.
#[derive(Debug, Clone)]
pub struct GaspinState {
    pub u: Vector,
    pub value: f64,
    pub g: Vector,
    pub b: SymmetricOperator,
    pub delta_g: f64,
    pub delta_l: f64,
    pub iteration: usize,
}

/// `psi~(s) = <g~, s> + 1/2 <s, B s>`
pub fn preconditioned_model<'a>(
    g_tilde: &'a Vector,
    b: &'a SymmetricOperator,
) -> Result<QuadraticModel<'a>> {
    QuadraticModel::new(g_tilde, b)
}

/// Cauchy decreases of both models and the resulting verdict.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecreaseCheck {
    pub ok: bool,
    /// `-psi~(s~c)`
    pub tilde: f64,
    /// `-psi(sc)`
    pub plain: f64,
}

/// `-c1 psi~(s~c) >= -c2 psi(sc)` with both Cauchy points taken in the ball
/// of radius `delta_g`.
pub fn extended_decrease_check(
    g_tilde: &Vector,
    g: &Vector,
    b: &SymmetricOperator,
    delta_g: f64,
    c1: f64,
    c2: f64,
) -> Result<DecreaseCheck> {
    check_dim(g.len(), g_tilde.len())?;
    let tilde_model = QuadraticModel::new(g_tilde, b)?;
    let plain_model = QuadraticModel::new(g, b)?;
    let tilde = tilde_model.decrease(&cauchy_point(g_tilde, b, delta_g));
    let plain = plain_model.decrease(&cauchy_point(g, b, delta_g));
    let ok = if g.norm() == 0.0 {
        true
    } else if g_tilde.norm() == 0.0 {
        false
    } else {
        c1 * tilde >= c2 * plain
    };
    Ok(DecreaseCheck { ok, tilde, plain })
}

/// New `(dG, dL)` after an outer iteration.
pub fn dual_radius_update(
    delta_g: f64,
    delta_l: f64,
    decrease_ok: bool,
    rho_tilde: f64,
    config: &GaspinConfig,
) -> (f64, f64) {
    let tr = &config.trust_region;
    let tentative_l = if decrease_ok {
        tr.gamma2 * delta_l
    } else {
        tr.gamma1 * delta_l
    };
    let successful = rho_tilde >= tr.eta;
    let next_g = match (successful, decrease_ok) {
        (true, true) => tr.gamma2 * delta_g,
        (true, false) => delta_g,
        (false, _) => tr.gamma1 * delta_g,
    };
    let next_l = match config.radius_bound {
        RadiusBound::Both => delta_g.min(next_g).min(tentative_l),
        RadiusBound::PreUpdate => delta_g.min(tentative_l),
        RadiusBound::PostUpdate => next_g.min(tentative_l),
    };
    (next_g, next_l)
}

/// `u + s` if the step is accepted, `u` otherwise.
pub fn accept(u: &Vector, s: &Vector, rho_tilde: f64, decrease_ok: bool, eta: f64) -> Vector {
    if is_accepted(rho_tilde, decrease_ok, eta) {
        u + s
    } else {
        u.clone()
    }
}

pub fn is_accepted(rho_tilde: f64, decrease_ok: bool, eta: f64) -> bool {
    rho_tilde >= eta && decrease_ok
}

/// `(J(u) - J(u + s)) / (-psi~(s))`
pub fn rho_tilde<P: Problem + ?Sized>(
    problem: &P,
    u: &Vector,
    s: &Vector,
    model_tilde: &QuadraticModel<'_>,
) -> Result<f64> {
    decrease_ratio(problem, u, s, model_tilde)
}

/// Result of a G-ASPIN run.
#[derive(Debug, Clone)]
pub struct GaspinRun {
    pub u: Vector,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub counts: OperationCounts,
    /// Subdomain reports used in each outer iteration.
    pub local_reports: Vec<Vec<LocalSolveReport>>,
}

/// Everything derived from the iterate alone; reused while the iterate does
/// not move.
struct Setup {
    bases: Vec<Vector>,
    corrections: Vec<Vector>,
    schwarz: SchwarzOperator,
    norm_c: f64,
    newton: Vec<Vector>,
    free_reports: Option<Vec<LocalSolveReport>>,
}

/// One outer iteration's worth of output.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub s: Vector,
    pub gradient: PreconditionedGradient,
    pub reports: Vec<LocalSolveReport>,
    pub record: IterationRecord,
}

/// Stepwise G-ASPIN driver. `local` builds the subdomain objective `J^k`
/// for subspace `k` at the current iterate.
pub struct Gaspin<'a, P: ?Sized, F> {
    problem: &'a P,
    decomp: &'a Decomposition,
    config: GaspinConfig,
    local: F,
    pool: TaskPool,
    state: GaspinState,
    setup: Option<Setup>,
    counts: OperationCounts,
}

impl<'a, P, L, F> Gaspin<'a, P, F>
where
    P: Problem + ?Sized,
    L: Problem,
    F: Fn(usize, &Vector) -> Result<L> + Sync,
{
    pub fn new(
        problem: &'a P,
        decomp: &'a Decomposition,
        u0: &Vector,
        config: GaspinConfig,
        local: F,
    ) -> Result<Self> {
        config.validate()?;
        check_dim(problem.dim(), u0.len())?;
        check_dim(problem.dim(), decomp.dim())?;
        if config.strategy == Strategy::TrustRegion && decomp.is_overlapping() {
            return Err(Error::OverlapUnsupported);
        }
        let value = problem::evaluate(problem, u0)?
            .value()
            .ok_or(Error::Infeasible)?;
        let g = problem::gradient(problem, u0)?;
        let b = problem::hessian(problem, u0, config.trust_region.hessian)?;
        let delta_g = config.trust_region.delta0;
        let delta_l = config.delta_l0.min(delta_g);
        Ok(Self {
            problem,
            decomp,
            pool: TaskPool::new(config.workers),
            config,
            local,
            state: GaspinState {
                u: u0.clone(),
                value,
                g,
                b,
                delta_g,
                delta_l,
                iteration: 0,
            },
            setup: None,
            counts: OperationCounts {
                hessian_evals: 1,
                ..OperationCounts::default()
            },
        })
    }

    pub fn state(&self) -> &GaspinState {
        &self.state
    }

    pub fn counts(&self) -> OperationCounts {
        self.counts
    }

    pub fn config(&self) -> &GaspinConfig {
        &self.config
    }

    /// `||g|| <= grad_tol`
    pub fn is_converged(&self) -> bool {
        self.state.g.norm() <= self.config.trust_region.grad_tol
    }

    fn objective(&self, k: usize, base: &Vector, correction: &Vector) -> Result<LocalObjective<L>> {
        let local = (self.local)(k, &self.state.u)?;
        LocalObjective::with_correction(k, base.clone(), local, correction.clone())
    }

    fn prepare(&mut self) -> Result<()> {
        if self.setup.is_some() {
            return Ok(());
        }
        let cfg = &self.config;
        let local_cfg = cfg.local_trust_region();
        let ks: Vec<usize> = (0..self.decomp.len()).collect();
        let problem = self.problem;
        let decomp = self.decomp;
        let state = &self.state;
        let local = &self.local;
        let want_free = cfg.strategy == Strategy::Damping;
        let floor = cfg.regularization_floor;
        let mode = cfg.trust_region.hessian;

        let pieces = self.pool.map(&ks, |k, _| {
            let obj = local_objective(decomp, k, problem, &state.u, &state.g, local(k, &state.u)?)?;
            let bk = problem::hessian(&obj, obj.base(), mode)?;
            let (bk, _) = bk.regularized(floor);
            let free = if want_free {
                Some(local_solve_free(&obj, &local_cfg)?)
            } else {
                None
            };
            Ok((obj.base().clone(), obj.delta_g().clone(), bk, free))
        })?;

        let mut bases = Vec::with_capacity(ks.len());
        let mut corrections = Vec::with_capacity(ks.len());
        let mut hessians = Vec::with_capacity(ks.len());
        let mut free_reports = Vec::new();
        for (base, correction, bk, free) in pieces {
            bases.push(base);
            corrections.push(correction);
            hessians.push(bk);
            if let Some(r) = free {
                free_reports.push(r);
            }
        }
        let schwarz = assemble_schwarz(decomp, hessians)?;
        let (norm_c, newton) = if cfg.strategy == Strategy::TrustRegion {
            let mut newton = Vec::with_capacity(ks.len());
            for k in 0..ks.len() {
                let rg = decomp.restrict(k, &state.g)?;
                newton.push(-schwarz.solve_local(k, &rg)?);
            }
            (schwarz.norm_c()?, newton)
        } else {
            (f64::NAN, Vec::new())
        };
        if want_free {
            self.record_local_work(&free_reports);
        }
        self.setup = Some(Setup {
            bases,
            corrections,
            schwarz,
            norm_c,
            newton,
            free_reports: want_free.then_some(free_reports),
        });
        Ok(())
    }

    fn record_local_work(&mut self, reports: &[LocalSolveReport]) {
        for r in reports {
            self.counts.local_solves += 1;
            self.counts.local_iterations += r.iterations;
            self.counts.local_applications += r.applications;
        }
    }

    /// `omega` for the current state.
    pub fn omega(&mut self) -> Result<f64> {
        self.prepare()?;
        let setup = self.setup.as_ref().expect("prepared");
        let n_sub = self.decomp.len() as f64;
        let norm_c = setup.norm_c;
        if !(norm_c > 0.0) {
            return Ok(0.0);
        }
        Ok(match self.config.omega_rule {
            OmegaRule::Proof => self.config.omega_fraction / (n_sub * norm_c),
            OmegaRule::Literal => self.config.omega_fraction * n_sub / norm_c * self.state.delta_l,
        })
    }

    fn local_phase(&mut self) -> Result<(PreconditionedGradient, Vec<LocalSolveReport>)> {
        self.prepare()?;
        let delta_l = self.state.delta_l;
        match self.config.strategy {
            Strategy::Damping => {
                let setup = self.setup.as_ref().expect("prepared");
                let reports = setup.free_reports.clone().expect("damping setup");
                let pg = gtilde_damped(&self.state.g, self.decomp, &setup.schwarz, &reports, delta_l)?;
                Ok((pg, reports))
            }
            Strategy::TrustRegion => {
                let budget = self.omega()? * delta_l;
                let local_cfg = self.config.local_trust_region();
                let setup = self.setup.as_ref().expect("prepared");
                let ks: Vec<usize> = (0..self.decomp.len()).collect();
                let reports = self.pool.map(&ks, |k, _| {
                    let obj = self.objective(k, &setup.bases[k], &setup.corrections[k])?;
                    local_solve_from_newton(&obj, setup.newton[k].clone(), budget, &local_cfg)
                })?;
                let pg = gtilde_trust_region(&self.state.g, self.decomp, &setup.schwarz, &reports, delta_l)?;
                self.record_local_work(&reports);
                Ok((pg, reports))
            }
        }
    }

    /// Performs one outer iteration. Call only while not converged.
    pub fn step(&mut self) -> Result<StepOutcome> {
        let (pg, reports) = self.local_phase()?;
        let cfg = &self.config;
        let tr = &cfg.trust_region;
        let n = self.state.u.len();
        let st = &self.state;
        let gnorm = st.g.norm();

        let model_tilde = preconditioned_model(&pg.g_tilde, &st.b)?;
        let sub = steihaug_toint(
            &pg.g_tilde,
            &st.b,
            st.delta_g,
            tr.cg_tolerance(pg.g_tilde.norm()),
            tr.cg_cap(n),
        );
        let s = sub.s;
        let pred = model_tilde.decrease(&s);
        let check = extended_decrease_check(&pg.g_tilde, &st.g, &st.b, st.delta_g, cfg.c1, cfg.c2)?;
        let ared = if pred > 0.0 {
            problem::value_change(self.problem, &st.u, &s)?.map(|d| -d)
        } else {
            Some(0.0)
        };
        let rho = ratio(ared, pred);
        let accepted = is_accepted(rho, check.ok, tr.eta);
        self.counts.global_applications += sub.applications + 4;

        let record = IterationRecord {
            iter: st.iteration,
            value: st.value,
            grad_norm: gnorm,
            gtilde_norm: pg.g_tilde.norm(),
            perturbation_norm: pg.perturbation,
            delta_g: st.delta_g,
            delta_l: st.delta_l,
            rho_tilde: rho,
            alpha: pg.alpha,
            decrease_ok: check.ok,
            accepted,
            ared: ared.unwrap_or(f64::NEG_INFINITY),
            pred,
            cauchy_decrease_tilde: check.tilde,
            cauchy_decrease: check.plain,
            local_iters: reports.iter().map(|r| r.iterations).collect(),
            local_applications: self.counts.local_applications,
            global_applications: self.counts.global_applications,
        };

        let (next_g, next_l) = dual_radius_update(st.delta_g, st.delta_l, check.ok, rho, cfg);
        let state = &mut self.state;
        state.delta_g = next_g;
        state.delta_l = next_l;
        state.iteration += 1;
        if accepted {
            state.u += &s;
            // Tracked through the increments so accepted values never increase.
            state.value -= ared.expect("accepted steps are feasible");
            state.g = problem::gradient(self.problem, &state.u)?;
            state.b = problem::hessian(self.problem, &state.u, tr.hessian)?;
            self.counts.hessian_evals += 1;
            self.setup = None;
        }
        Ok(StepOutcome {
            s,
            gradient: pg,
            reports,
            record,
        })
    }

    /// Iterates until `||g|| <= grad_tol` or `max_iters` outer iterations.
    pub fn run(mut self) -> Result<GaspinRun> {
        let mut records = Vec::new();
        let mut local_reports = Vec::new();
        while !self.is_converged() && self.state.iteration < self.config.trust_region.max_iters {
            let out = self.step()?;
            records.push(out.record);
            local_reports.push(out.reports);
        }
        let alpha = match self.config.strategy {
            Strategy::TrustRegion => 0.0,
            Strategy::Damping => 1.0,
        };
        let st = &self.state;
        records.push(IterationRecord::closing(
            st.iteration,
            st.value,
            st.g.norm(),
            st.delta_g,
            st.delta_l,
            alpha,
            self.counts.local_applications,
            self.counts.global_applications,
        ));
        Ok(GaspinRun {
            converged: self.is_converged(),
            u: self.state.u,
            records,
            counts: self.counts,
            local_reports,
        })
    }
}

/// G-ASPIN with the frozen-complement subdomain objectives.
pub fn gaspin_solve<P: Problem + ?Sized>(
    problem: &P,
    decomp: &Decomposition,
    u0: &Vector,
    config: &GaspinConfig,
) -> Result<GaspinRun> {
    let local = |k: usize, u: &Vector| {
        FrozenComplement::new(problem, decomp.subspace(k)?.to_vec(), u.clone())
    };
    Gaspin::new(problem, decomp, u0, config.clone(), local)?.run()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::QuadraticProblem;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn dual_radius_examples() {
        let c = GaspinConfig::default();
        assert_eq!(dual_radius_update(1.0, 1.0, true, 0.9, &c), (2.0, 1.0));
        assert_eq!(dual_radius_update(1.0, 1.0, false, 0.9, &c), (1.0, 0.5));
        assert_eq!(dual_radius_update(1.0, 1.0, false, 0.05, &c), (0.5, 0.5));
        assert_eq!(dual_radius_update(1.0, 1.0, true, c.trust_region.eta, &c), (2.0, 1.0));
        let pre = GaspinConfig {
            radius_bound: RadiusBound::PreUpdate,
            ..GaspinConfig::default()
        };
        // Shrinking dG with a growing dL: only the two-sided bound keeps dL <= dG.
        assert_eq!(dual_radius_update(1.0, 1.0, true, f64::NEG_INFINITY, &pre), (0.5, 1.0));
        assert_eq!(dual_radius_update(1.0, 1.0, true, f64::NEG_INFINITY, &c), (0.5, 0.5));
    }

    #[test]
    fn acceptance_requires_both_conditions() {
        let u = v(&[1.0]);
        let s = v(&[0.5]);
        assert_eq!(accept(&u, &s, 1.0, true, 0.1), v(&[1.5]));
        assert_eq!(accept(&u, &s, 1.0, false, 0.1), u);
        assert_eq!(accept(&u, &s, f64::NEG_INFINITY, true, 0.1), u);
    }

    #[test]
    fn decrease_check_cases() {
        let b = SymmetricOperator::identity(2);
        let g = v(&[1.0, -2.0]);
        assert!(extended_decrease_check(&g, &g, &b, 1.0, 0.5, 0.5).unwrap().ok);
        let z = Vector::zeros(2);
        assert!(extended_decrease_check(&z, &z, &b, 1.0, 1.0, 0.5).unwrap().ok);
        assert!(!extended_decrease_check(&z, &g, &b, 1.0, 1.0, 0.5).unwrap().ok);
    }

    #[test]
    fn model_with_zero_curvature_is_linear() {
        let gt = v(&[1.0, 2.0]);
        let b = SymmetricOperator::zeros(2);
        let m = preconditioned_model(&gt, &b).unwrap();
        assert_eq!(m.value(&v(&[3.0, -1.0])), 1.0);
        assert_eq!(m.value(&Vector::zeros(2)), 0.0);
    }

    #[test]
    fn config_requires_ordered_constants() {
        let bad = GaspinConfig {
            c1: 0.4,
            c2: 0.5,
            ..GaspinConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(GaspinConfig::default().validate().is_ok());
    }

    #[test]
    fn critical_start_returns_immediately() {
        let target = v(&[1.0, 2.0, 3.0, 4.0]);
        let p = QuadraticProblem::identity(target.clone());
        let d = Decomposition::contiguous(4, 2, 0).unwrap();
        let run = gaspin_solve(&p, &d, &target, &GaspinConfig::default()).unwrap();
        assert!(run.converged);
        assert_eq!(run.records.len(), 1);
        assert_eq!(run.u, target);
    }

    #[test]
    fn trust_region_strategy_rejects_overlap() {
        let p = QuadraticProblem::identity(Vector::zeros(4));
        let d = Decomposition::contiguous(4, 2, 1).unwrap();
        let err = gaspin_solve(&p, &d, &v(&[1.0; 4]), &GaspinConfig::default()).unwrap_err();
        assert_eq!(err, Error::OverlapUnsupported);
    }
}
