//! Plane hyperelasticity with a polyconvex stored energy and logarithmic
//! volumetric barrier, discretized by piecewise-linear triangles.
//!
//! The stored energy density is
//!
//! ```text
//! W(F) = 3(a+b) + (2a+4b) tr E + 2b (tr E)^2 - 2b tr(E^2) + Gamma(det F)
//! Gamma(t) = c t^2 - d log t
//! ```
//!
//! with `F = I + grad u`, `E = (F^T F - I)/2` and
//! `a = mu + Gamma'(1)/2`, `b = -mu/2 - Gamma'(1)/2`, `c = -lambda/4 - mu`,
//! `d = 3 lambda/4 + mu`. The barrier makes `W` undefined for `det F <= 0`.
//!
//! The domain is the unit square, split into `m x m` cells of two triangles
//! each. The left edge is clamped, the right edge is pushed inwards by the
//! compression ratio, top and bottom are traction free.

use nalgebra::{DMatrix, Matrix2, Vector2};

use super::Problem;
use crate::error::{Error, Result};
use crate::linalg::Vector;

pub type Mat2 = Matrix2<f64>;

/// Lamé parameters and the derived energy constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElasticityConstants {
    pub lambda: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl ElasticityConstants {
    /// `Gamma'(t) = 2 c t - d / t`
    pub fn barrier_slope(&self, t: f64) -> f64 {
        2.0 * self.c * t - self.d / t
    }

    fn barrier(&self, t: f64) -> f64 {
        self.c * t * t - self.d * t.ln()
    }

    fn barrier_curvature(&self, t: f64) -> f64 {
        2.0 * self.c + self.d / (t * t)
    }
}

/// Isotropic conversion `(E, nu) -> (lambda, mu)`.
pub fn lame_from_young_poisson(youngs_modulus: f64, poisson_ratio: f64) -> Result<(f64, f64)> {
    if !(youngs_modulus > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "Young's modulus must be positive, got {youngs_modulus}"
        )));
    }
    if !(poisson_ratio > -1.0 && poisson_ratio < 0.5) {
        return Err(Error::InvalidConfig(format!(
            "Poisson ratio must lie in (-1, 0.5), got {poisson_ratio}"
        )));
    }
    let nu = poisson_ratio;
    let lambda = youngs_modulus * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    let mu = youngs_modulus / (2.0 * (1.0 + nu));
    Ok((lambda, mu))
}

pub fn ogden_constants(lambda: f64, mu: f64) -> ElasticityConstants {
    let c = -lambda / 4.0 - mu;
    let d = 3.0 * lambda / 4.0 + mu;
    let slope_at_one = 2.0 * c - d;
    ElasticityConstants {
        lambda,
        mu,
        a: mu + 0.5 * slope_at_one,
        b: -mu / 2.0 - 0.5 * slope_at_one,
        c,
        d,
    }
}

fn cofactor(f: &Mat2) -> Mat2 {
    Mat2::new(f[(1, 1)], -f[(1, 0)], -f[(0, 1)], f[(0, 0)])
}

fn green_strain(f: &Mat2) -> Mat2 {
    0.5 * (f.transpose() * f - Mat2::identity())
}

/// `W(I + grad u)`, or `None` when `det(I + grad u) <= 0`.
pub fn elastic_energy_density(k: &ElasticityConstants, grad_u: &Mat2) -> Option<f64> {
    energy(k, &(Mat2::identity() + grad_u))
}

fn energy(k: &ElasticityConstants, f: &Mat2) -> Option<f64> {
    let det = f.determinant();
    if !(det > 0.0) {
        return None;
    }
    let e = green_strain(f);
    let tr = e.trace();
    let w = 3.0 * (k.a + k.b) + (2.0 * k.a + 4.0 * k.b) * tr + 2.0 * k.b * tr * tr
        - 2.0 * k.b * (e * e).trace()
        + k.barrier(det);
    w.is_finite().then_some(w)
}

/// First Piola–Kirchhoff stress `dW/dF` (requires `det F > 0`).
fn stress(k: &ElasticityConstants, f: &Mat2) -> Mat2 {
    let e = green_strain(f);
    let det = f.determinant();
    (2.0 * k.a + 4.0 * k.b) * f + 4.0 * k.b * e.trace() * f - 4.0 * k.b * f * e
        + k.barrier_slope(det) * cofactor(f)
}

/// Directional derivative of the stress, `dP(F)[H]`.
fn stress_tangent(k: &ElasticityConstants, f: &Mat2, h: &Mat2) -> Mat2 {
    let e = green_strain(f);
    let de = 0.5 * (h.transpose() * f + f.transpose() * h);
    let det = f.determinant();
    let cof = cofactor(f);
    (2.0 * k.a + 4.0 * k.b) * h + 4.0 * k.b * (f.dot(h) * f + e.trace() * h)
        - 4.0 * k.b * (h * e + f * de)
        + k.barrier_curvature(det) * cof.dot(h) * cof
        + k.barrier_slope(det) * cofactor(h)
}

/// `W(F + H) - W(F)` without subtracting two large numbers.
fn energy_change(k: &ElasticityConstants, f: &Mat2, h: &Mat2) -> Option<f64> {
    let det = f.determinant();
    if !(det > 0.0) {
        return None;
    }
    // 2x2 identity: det(F + H) = det F + <cof F, H> + det H
    let ddet = cofactor(f).dot(h) + h.determinant();
    if !(det + ddet > 0.0) {
        return None;
    }
    let e = green_strain(f);
    let tr = e.trace();
    let dtr = f.dot(h) + 0.5 * h.norm_squared();
    let de = 0.5 * (h.transpose() * f + f.transpose() * h + h.transpose() * h);
    let e_sum = 2.0 * e + de;
    let dw = (2.0 * k.a + 4.0 * k.b) * dtr + 2.0 * k.b * dtr * (2.0 * tr + dtr)
        - 2.0 * k.b * de.dot(&e_sum)
        + k.c * ddet * (2.0 * det + ddet)
        - k.d * (ddet / det).ln_1p();
    dw.is_finite().then_some(dw)
}

#[derive(Debug, Clone, Copy)]
struct NodeRef {
    /// First of the two displacement dofs, `None` on the Dirichlet boundary.
    dof: Option<usize>,
    fixed: [f64; 2],
}

#[derive(Debug, Clone)]
struct Element {
    nodes: [NodeRef; 3],
    shape_gradients: [Vector2<f64>; 3],
    area: f64,
}

impl Element {
    fn displacement_gradient(&self, u: &Vector, with_fixed: bool) -> Mat2 {
        let mut g = Mat2::zeros();
        for (node, grad) in self.nodes.iter().zip(&self.shape_gradients) {
            let value = match node.dof {
                Some(d) => Vector2::new(u[d], u[d + 1]),
                None if with_fixed => Vector2::new(node.fixed[0], node.fixed[1]),
                None => continue,
            };
            g += value * grad.transpose();
        }
        g
    }
}

/// Compression of a unit square block, free dofs ordered node by node
/// (x then y component), nodes column by column.
#[derive(Debug, Clone)]
pub struct ElasticityProblem {
    cells: usize,
    constants: ElasticityConstants,
    compression: f64,
    body_force: [f64; 2],
    elements: Vec<Element>,
    free_nodes: Vec<[f64; 2]>,
}

impl ElasticityProblem {
    /// `cells x cells` mesh; `compression` is the prescribed inward
    /// displacement of the right edge (0.1 = 10%).
    pub fn new(
        cells: usize,
        constants: ElasticityConstants,
        compression: f64,
        body_force: [f64; 2],
    ) -> Result<Self> {
        if cells < 2 {
            return Err(Error::InvalidConfig(format!(
                "elasticity mesh needs at least 2 cells per side, got {cells}"
            )));
        }
        let m = cells;
        let h = 1.0 / m as f64;
        let node = |i: usize, j: usize| -> NodeRef {
            if i == 0 {
                NodeRef {
                    dof: None,
                    fixed: [0.0, 0.0],
                }
            } else if i == m {
                NodeRef {
                    dof: None,
                    fixed: [-compression, 0.0],
                }
            } else {
                NodeRef {
                    dof: Some(2 * ((i - 1) * (m + 1) + j)),
                    fixed: [0.0, 0.0],
                }
            }
        };
        let pos = |i: usize, j: usize| Vector2::new(i as f64 * h, j as f64 * h);

        let mut elements = Vec::with_capacity(2 * m * m);
        for i in 0..m {
            for j in 0..m {
                let corners = [
                    [(i, j), (i + 1, j), (i + 1, j + 1)],
                    [(i, j), (i + 1, j + 1), (i, j + 1)],
                ];
                for tri in corners {
                    let x: Vec<Vector2<f64>> = tri.iter().map(|&(a, b)| pos(a, b)).collect();
                    let jac = Mat2::from_columns(&[x[1] - x[0], x[2] - x[0]]);
                    let det = jac.determinant();
                    let inv = jac.try_inverse().expect("non-degenerate triangle");
                    let g1 = inv.row(0).transpose();
                    let g2 = inv.row(1).transpose();
                    elements.push(Element {
                        nodes: [node(tri[0].0, tri[0].1), node(tri[1].0, tri[1].1), node(tri[2].0, tri[2].1)],
                        shape_gradients: [-(g1 + g2), g1, g2],
                        area: 0.5 * det.abs(),
                    });
                }
            }
        }
        let free_nodes = (1..m)
            .flat_map(|i| (0..=m).map(move |j| [i as f64 * h, j as f64 * h]))
            .collect();
        Ok(Self {
            cells,
            constants,
            compression,
            body_force,
            elements,
            free_nodes,
        })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn constants(&self) -> &ElasticityConstants {
        &self.constants
    }

    pub fn compression(&self) -> f64 {
        self.compression
    }

    /// Reference coordinates of the free nodes, in dof order (node `p` owns
    /// dofs `2p` and `2p + 1`).
    pub fn free_nodes(&self) -> &[[f64; 2]] {
        &self.free_nodes
    }

    /// Smallest `det F` over all elements, `None` if the mesh is inverted.
    pub fn min_jacobian(&self, u: &Vector) -> f64 {
        self.elements
            .iter()
            .map(|e| (Mat2::identity() + e.displacement_gradient(u, true)).determinant())
            .fold(f64::INFINITY, f64::min)
    }

    fn body_force_work(&self, u: &Vector, with_fixed: bool) -> f64 {
        let mut total = 0.0;
        for e in &self.elements {
            for node in &e.nodes {
                let v = match node.dof {
                    Some(d) => [u[d], u[d + 1]],
                    None if with_fixed => node.fixed,
                    None => continue,
                };
                total += e.area / 3.0 * (self.body_force[0] * v[0] + self.body_force[1] * v[1]);
            }
        }
        total
    }
}

impl Problem for ElasticityProblem {
    fn name(&self) -> &str {
        "elasticity"
    }

    fn dim(&self) -> usize {
        2 * self.free_nodes.len()
    }

    fn value(&self, u: &Vector) -> Option<f64> {
        let mut total = 0.0;
        for e in &self.elements {
            let f = Mat2::identity() + e.displacement_gradient(u, true);
            total += e.area * energy(&self.constants, &f)?;
        }
        Some(total + self.body_force_work(u, true))
    }

    fn gradient(&self, u: &Vector) -> Option<Vector> {
        let mut g = Vector::zeros(self.dim());
        for e in &self.elements {
            let f = Mat2::identity() + e.displacement_gradient(u, true);
            if !(f.determinant() > 0.0) {
                return None;
            }
            let p = stress(&self.constants, &f);
            for (node, grad) in e.nodes.iter().zip(&e.shape_gradients) {
                if let Some(d) = node.dof {
                    let r = e.area * (p * grad);
                    g[d] += r[0] + e.area / 3.0 * self.body_force[0];
                    g[d + 1] += r[1] + e.area / 3.0 * self.body_force[1];
                }
            }
        }
        g.iter().all(|x| x.is_finite()).then_some(g)
    }

    fn hessian(&self, u: &Vector) -> Option<DMatrix<f64>> {
        let n = self.dim();
        let mut k = DMatrix::zeros(n, n);
        for e in &self.elements {
            let f = Mat2::identity() + e.displacement_gradient(u, true);
            if !(f.determinant() > 0.0) {
                return None;
            }
            for (node_b, grad_b) in e.nodes.iter().zip(&e.shape_gradients) {
                let Some(db) = node_b.dof else { continue };
                for comp in 0..2 {
                    let mut h = Mat2::zeros();
                    h.set_row(comp, &grad_b.transpose());
                    let dp = stress_tangent(&self.constants, &f, &h);
                    for (node_a, grad_a) in e.nodes.iter().zip(&e.shape_gradients) {
                        let Some(da) = node_a.dof else { continue };
                        let col = e.area * (dp * grad_a);
                        k[(da, db + comp)] += col[0];
                        k[(da + 1, db + comp)] += col[1];
                    }
                }
            }
        }
        Some(k)
    }

    fn value_change(&self, u: &Vector, s: &Vector) -> Option<f64> {
        let mut total = 0.0;
        for e in &self.elements {
            let f = Mat2::identity() + e.displacement_gradient(u, true);
            let h = e.displacement_gradient(s, false);
            total += e.area * energy_change(&self.constants, &f, &h)?;
        }
        Some(total + self.body_force_work(s, false))
    }
}
