use nalgebra::DMatrix;

use super::Problem;
use crate::linalg::Vector;

/// Chained Rosenbrock function
/// `J(u) = sum_{i<n-1} 100 (u_{i+1} - u_i^2)^2 + (1 - u_i)^2`.
///
/// Global minimizer `(1, ..., 1)`. For `n >= 4` a second local minimizer
/// exists near `u_0 = -1`.
#[derive(Debug, Clone)]
pub struct RosenbrockProblem {
    n: usize,
}

impl RosenbrockProblem {
    pub fn new(n: usize) -> Self {
        assert!(n >= 2, "the Rosenbrock chain needs at least two variables");
        Self { n }
    }
}

impl Problem for RosenbrockProblem {
    fn name(&self) -> &str {
        "rosenbrock"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        let mut total = 0.0;
        for i in 0..self.n - 1 {
            let a = u[i + 1] - u[i] * u[i];
            let b = 1.0 - u[i];
            total += 100.0 * a * a + b * b;
        }
        Some(total)
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        let mut g = Vector::zeros(self.n);
        for i in 0..self.n - 1 {
            let a = u[i + 1] - u[i] * u[i];
            g[i] += -400.0 * u[i] * a - 2.0 * (1.0 - u[i]);
            g[i + 1] += 200.0 * a;
        }
        Some(g)
    }

    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n - 1 {
            h[(i, i)] += 1200.0 * u[i] * u[i] - 400.0 * u[i + 1] + 2.0;
            h[(i, i + 1)] += -400.0 * u[i];
            h[(i + 1, i)] += -400.0 * u[i];
            h[(i + 1, i + 1)] += 200.0;
        }
        Some(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimum_is_zero_with_zero_gradient() {
        let p = RosenbrockProblem::new(7);
        let ones = Vector::from_element(7, 1.0);
        assert_eq!(p.value(&ones), Some(0.0));
        assert!(p.gradient(&ones).unwrap().norm() <= 1e-12);
    }

    #[test]
    fn hessian_at_minimum_two_dims() {
        let p = RosenbrockProblem::new(2);
        let h = p.hessian(&Vector::from_element(2, 1.0)).unwrap();
        assert_eq!(h, DMatrix::from_row_slice(2, 2, &[802.0, -400.0, -400.0, 200.0]));
    }
}
