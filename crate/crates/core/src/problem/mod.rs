//! Objective functions and their evaluation contract.
//!
//! A [`Problem`] exposes `J`, `grad J` and an analytic Hessian on coefficient
//! vectors. Points outside the domain of `J` (the logarithmic barrier of the
//! elasticity energy) evaluate to `None`; the checked free functions
//! [`evaluate`], [`gradient`] and [`hessian`] turn that into the public
//! contract and validate dimensions.

mod bratu;
mod elasticity;
mod quadratic;
mod rosenbrock;
mod tilted_cosine;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use bratu::BratuProblem;
pub use elasticity::{
    elastic_energy_density, lame_from_young_poisson, ogden_constants, ElasticityConstants,
    ElasticityProblem, Mat2,
};
pub use quadratic::QuadraticProblem;
pub use rosenbrock::RosenbrockProblem;
pub use tilted_cosine::TiltedCosineProblem;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{SymmetricOperator, Vector};

/// Objective `J: R^n -> R` with first and second derivatives.
///
/// Implementations must be pure: the same input yields bit-identical output,
/// and evaluation is safe from several threads at once.
pub trait Problem: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// `J(u)`, or `None` when `u` is outside the domain of `J`.
    fn value(&self, u: &Vector) -> Option<f64>;

    fn gradient(&self, u: &Vector) -> Option<Vector>;

    /// Analytic Hessian `grad^2 J(u)` (dense).
    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>>;

    /// `J(u + s) - J(u)`.
    ///
    /// Problems with a large constant part override this with a
    /// cancellation-free evaluation so that decrease ratios stay meaningful
    /// close to a minimizer.
    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        let trial = u + s;
        Some(self.value(&trial)? - self.value(u)?)
    }
}

impl<P: Problem + ?Sized> Problem for &P {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, u: &Vector) -> Option<f64> {
        (**self).value(u)
    }
    fn gradient(&self, u: &Vector) -> Option<Vector> {
        (**self).gradient(u)
    }
    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        (**self).hessian(u)
    }
    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        (**self).value_change(u, s)
    }
}

impl<P: Problem + ?Sized> Problem for Box<P> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn value(&self, u: &Vector) -> Option<f64> {
        (**self).value(u)
    }
    fn gradient(&self, u: &Vector) -> Option<Vector> {
        (**self).gradient(u)
    }
    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        (**self).hessian(u)
    }
    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        (**self).value_change(u, s)
    }
}

/// Result of [`evaluate`]: a finite value or the infeasible marker.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Evaluation {
    Value(f64),
    Infeasible,
}

impl Evaluation {
    pub fn value(self) -> Option<f64> {
        match self {
            Evaluation::Value(v) => Some(v),
            Evaluation::Infeasible => None,
        }
    }

    pub fn is_feasible(self) -> bool {
        matches!(self, Evaluation::Value(_))
    }
}

/// How the Hessian approximation `B(u)` is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HessianMode {
    /// The problem's analytic Hessian.
    #[default]
    Analytic,
    /// Central differences of the gradient, column by column, symmetrized.
    FiniteDifference,
    /// Analytic Hessian with eigenvalues clamped to `1e-8 * max |lambda|`.
    SpdClamp,
}

/// Relative eigenvalue floor of [`HessianMode::SpdClamp`].
pub const SPD_CLAMP_REL: f64 = 1e-8;

pub fn evaluate<P: Problem + ?Sized>(problem: &P, u: &Vector) -> Result<Evaluation> {
    check_dim(problem.dim(), u.len())?;
    Ok(match problem.value(u) {
        Some(v) if v.is_finite() => Evaluation::Value(v),
        _ => Evaluation::Infeasible,
    })
}

pub fn gradient<P: Problem + ?Sized>(problem: &P, u: &Vector) -> Result<Vector> {
    check_dim(problem.dim(), u.len())?;
    problem.gradient(u).ok_or(Error::Infeasible)
}

pub fn hessian<P: Problem + ?Sized>(
    problem: &P,
    u: &Vector,
    mode: HessianMode,
) -> Result<SymmetricOperator> {
    check_dim(problem.dim(), u.len())?;
    match mode {
        HessianMode::Analytic => {
            SymmetricOperator::new(problem.hessian(u).ok_or(Error::Infeasible)?)
        }
        HessianMode::SpdClamp => {
            let b = SymmetricOperator::new(problem.hessian(u).ok_or(Error::Infeasible)?)?;
            Ok(b.spd_clamped(SPD_CLAMP_REL))
        }
        HessianMode::FiniteDifference => fd_hessian(problem, u),
    }
}

/// `J(u + s) - J(u)` with dimension checks; `None` signals an infeasible
/// trial point.
pub fn value_change<P: Problem + ?Sized>(problem: &P, u: &Vector, s: &Vector) -> Result<Option<f64>> {
    check_dim(problem.dim(), u.len())?;
    check_dim(problem.dim(), s.len())?;
    Ok(problem.value_change(u, s).filter(|d| d.is_finite()))
}

fn fd_step(x: f64) -> f64 {
    1e-6 * x.abs().max(1.0)
}

fn fd_hessian<P: Problem + ?Sized>(problem: &P, u: &Vector) -> Result<SymmetricOperator> {
    let n = problem.dim();
    let g0 = problem.gradient(u).ok_or(Error::Infeasible)?;
    let mut columns = DMatrix::zeros(n, n);
    for j in 0..n {
        let h = fd_step(u[j]);
        let mut plus = u.clone();
        plus[j] += h;
        let mut minus = u.clone();
        minus[j] -= h;
        let column = match (problem.gradient(&plus), problem.gradient(&minus)) {
            (Some(gp), Some(gm)) => (gp - gm) / (2.0 * h),
            (Some(gp), None) => (gp - &g0) / h,
            (None, Some(gm)) => (&g0 - gm) / h,
            (None, None) => return Err(Error::Infeasible),
        };
        columns.set_column(j, &column);
    }
    SymmetricOperator::new(columns)
}

/// Largest coordinate-wise relative error between the analytic gradient and a
/// central-difference gradient with step `h`.
///
/// The relative error of coordinate `j` is
/// `|g_j - fd_j| / max(|g_j|, |fd_j|, 1)`.
pub fn fd_check_gradient<P: Problem + ?Sized>(problem: &P, u: &Vector, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {h}")));
    }
    let g = gradient(problem, u)?;
    let n = problem.dim();
    let mut worst = 0.0_f64;
    let mut e = Vector::zeros(n);
    for j in 0..n {
        e[j] = h;
        let forward = problem.value_change(u, &e).ok_or(Error::Infeasible)?;
        e[j] = -h;
        let backward = problem.value_change(u, &e).ok_or(Error::Infeasible)?;
        e[j] = 0.0;
        let fd = (forward - backward) / (2.0 * h);
        let scale = g[j].abs().max(fd.abs()).max(1.0);
        worst = worst.max((g[j] - fd).abs() / scale);
    }
    Ok(worst)
}

/// Relative error between `B v` and the directional difference
/// `(grad J(u + h v) - grad J(u - h v)) / 2h`.
pub fn fd_check_hessian_vector<P: Problem + ?Sized>(
    problem: &P,
    u: &Vector,
    v: &Vector,
    h: f64,
    mode: HessianMode,
) -> Result<f64> {
    check_dim(problem.dim(), v.len())?;
    let b = hessian(problem, u, mode)?;
    let bv = b.apply(v);
    let gp = gradient(problem, &(u + h * v))?;
    let gm = gradient(problem, &(u - h * v))?;
    let fd = (gp - gm) / (2.0 * h);
    let scale = bv.norm().max(fd.norm()).max(f64::MIN_POSITIVE);
    Ok((bv - fd).norm() / scale)
}
