use nalgebra::DMatrix;

use super::Problem;
use crate::linalg::Vector;

/// Discrete energy of the Bratu-type reaction-diffusion problem
/// `-Laplace u + lambda e^u = f` on the unit square with homogeneous
/// Dirichlet data:
///
/// `J(u) = 1/2 sum_edges (u_p - u_q)^2 + h^2 sum_p (lambda e^{u_p} - f u_p)`
///
/// on an `m x m` grid of interior nodes, `h = 1/(m+1)`. For `lambda >= 0` the
/// energy is strictly convex, so every start leads to the same minimizer.
#[derive(Debug, Clone)]
pub struct BratuProblem {
    m: usize,
    lambda: f64,
    source: f64,
}

impl BratuProblem {
    pub fn new(m: usize, lambda: f64, source: f64) -> Self {
        assert!(m >= 1, "grid needs at least one interior node");
        Self { m, lambda, source }
    }

    pub fn grid(&self) -> usize {
        self.m
    }

    fn h2(&self) -> f64 {
        let h = 1.0 / (self.m as f64 + 1.0);
        h * h
    }

    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.m + j
    }

    /// Five-point stencil `L u` (4 on the diagonal, -1 per interior neighbour).
    fn laplacian(&self, u: &Vector) -> Vector {
        let m = self.m;
        Vector::from_fn(m * m, |p, _| {
            let (i, j) = (p / m, p % m);
            let mut v = 4.0 * u[p];
            if i > 0 {
                v -= u[self.idx(i - 1, j)];
            }
            if i + 1 < m {
                v -= u[self.idx(i + 1, j)];
            }
            if j > 0 {
                v -= u[self.idx(i, j - 1)];
            }
            if j + 1 < m {
                v -= u[self.idx(i, j + 1)];
            }
            v
        })
    }
}

impl Problem for BratuProblem {
    fn name(&self) -> &str {
        "bratu"
    }

    fn dim(&self) -> usize {
        self.m * self.m
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        let h2 = self.h2();
        let diffusion = 0.5 * u.dot(&self.laplacian(u));
        let reaction: f64 = u
            .iter()
            .map(|&x| self.lambda * x.exp() - self.source * x)
            .sum();
        Some(diffusion + h2 * reaction)
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        let h2 = self.h2();
        let mut g = self.laplacian(u);
        for (gp, &x) in g.iter_mut().zip(u.iter()) {
            *gp += h2 * (self.lambda * x.exp() - self.source);
        }
        Some(g)
    }

    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        let m = self.m;
        let n = m * m;
        let h2 = self.h2();
        let mut h = DMatrix::zeros(n, n);
        for i in 0..m {
            for j in 0..m {
                let p = self.idx(i, j);
                h[(p, p)] = 4.0 + h2 * self.lambda * u[p].exp();
                if i + 1 < m {
                    let q = self.idx(i + 1, j);
                    h[(p, q)] = -1.0;
                    h[(q, p)] = -1.0;
                }
                if j + 1 < m {
                    let q = self.idx(i, j + 1);
                    h[(p, q)] = -1.0;
                    h[(q, p)] = -1.0;
                }
            }
        }
        Some(h)
    }

    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        let h2 = self.h2();
        let lu = self.laplacian(u);
        let ls = self.laplacian(s);
        let quadratic = lu.dot(s) + 0.5 * s.dot(&ls);
        let reaction: f64 = u
            .iter()
            .zip(s.iter())
            .map(|(&x, &d)| self.lambda * x.exp() * d.exp_m1() - self.source * d)
            .sum();
        Some(quadratic + h2 * reaction)
    }
}
