use nalgebra::DMatrix;

use super::Problem;
use crate::linalg::Vector;

use std::f64::consts::PI;

/// Separable multi-well objective `J(u) = sum_i -cos(pi u_i) + tilt * u_i^2 / 2`.
///
/// Wells sit near the even integers; the quadratic envelope makes the well at
/// the origin the deepest one. Used to exercise disagreement reporting when
/// different solvers settle in different basins.
#[derive(Debug, Clone)]
pub struct TiltedCosineProblem {
    n: usize,
    tilt: f64,
}

impl TiltedCosineProblem {
    pub fn new(n: usize, tilt: f64) -> Self {
        Self { n, tilt }
    }
}

impl Problem for TiltedCosineProblem {
    fn name(&self) -> &str {
        "tilted-cosine"
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        Some(
            u.iter()
                .map(|&x| -(PI * x).cos() + 0.5 * self.tilt * x * x)
                .sum(),
        )
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        Some(u.map(|x| PI * (PI * x).sin() + self.tilt * x))
    }

    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        let diag = u.map(|x| PI * PI * (PI * x).cos() + self.tilt);
        Some(DMatrix::from_diagonal(&diag))
    }
}
