use nalgebra::DMatrix;

use super::Problem;
use crate::error::{check_dim, Result};
use crate::linalg::{dense_square, Vector};

/// `J(u) = 1/2 (u - u*)^T A (u - u*)` with symmetric `A`.
#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    matrix: DMatrix<f64>,
    target: Vector,
}

impl QuadraticProblem {
    pub fn new(matrix: DMatrix<f64>, target: Vector) -> Result<Self> {
        dense_square(&matrix)?;
        check_dim(matrix.nrows(), target.len())?;
        let sym = 0.5 * (&matrix + matrix.transpose());
        Ok(Self {
            matrix: sym,
            target,
        })
    }

    pub fn identity(target: Vector) -> Self {
        let n = target.len();
        Self {
            matrix: DMatrix::identity(n, n),
            target,
        }
    }

    /// Tridiagonal `A = tridiag(-1, 2 + shift, -1)`; SPD for `shift > -2 + 2cos(pi/(n+1))`.
    pub fn shifted_laplacian(shift: f64, target: Vector) -> Self {
        let n = target.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                2.0 + shift
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        });
        Self { matrix, target }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn target(&self) -> &Vector {
        &self.target
    }
}

impl Problem for QuadraticProblem {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn dim(&self) -> usize {
        self.target.len()
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        let e = u - &self.target;
        Some(0.5 * e.dot(&(&self.matrix * &e)))
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        Some(&self.matrix * (u - &self.target))
    }

    fn hessian(&self, _u: &Vector) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }

    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        let g = &self.matrix * (u - &self.target);
        Some(g.dot(s) + 0.5 * s.dot(&(&self.matrix * s)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{evaluate, gradient, hessian, Evaluation, HessianMode};

    #[test]
    fn identity_quadratic_values() {
        let p = QuadraticProblem::identity(Vector::from_vec(vec![1.0, 2.0]));
        let u = Vector::zeros(2);
        assert_eq!(evaluate(&p, &u).unwrap(), Evaluation::Value(2.5));
        assert_eq!(gradient(&p, &u).unwrap(), Vector::from_vec(vec![-1.0, -2.0]));
        let b = hessian(&p, &u, HessianMode::Analytic).unwrap();
        assert_eq!(b.as_matrix(), &DMatrix::<f64>::identity(2, 2));
    }

    #[test]
    fn gradient_vanishes_at_target() {
        let target = Vector::from_fn(6, |i, _| (i as f64).sin());
        let p = QuadraticProblem::shifted_laplacian(0.5, target.clone());
        assert!(gradient(&p, &target).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn value_change_agrees_with_difference() {
        let p = QuadraticProblem::shifted_laplacian(0.3, Vector::from_element(4, 1.0));
        let u = Vector::from_vec(vec![0.5, -1.0, 2.0, 0.0]);
        let s = Vector::from_vec(vec![0.1, 0.2, -0.3, 0.4]);
        let direct = p.value(&(&u + &s)).unwrap() - p.value(&u).unwrap();
        assert!((p.value_change(&u, &s).unwrap() - direct).abs() < 1e-13);
    }

    #[test]
    fn rejects_mismatched_target() {
        assert!(QuadraticProblem::new(DMatrix::identity(3, 3), Vector::zeros(2)).is_err());
    }
}
