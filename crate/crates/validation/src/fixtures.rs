//! Problems, decompositions and starting points shared by the acceptance runs.

use std::f64::consts::PI;

use gaspin::problem::{
    lame_from_young_poisson, ogden_constants, BratuProblem, ElasticityProblem, QuadraticProblem,
    RosenbrockProblem,
};
use gaspin::{Decomposition, Problem, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A problem with its decomposition and far-from-optimum starts.
pub struct Fixture {
    pub name: &'static str,
    pub problem: Box<dyn Problem>,
    pub decomp: Decomposition,
    pub starts: Vec<(&'static str, Vector)>,
    /// Single minimizer, so every solver must land on the same point.
    pub unimodal: bool,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize, lo: f64, hi: f64, seed: u64) -> Vector {
    let mut r = rng(seed);
    Vector::from_fn(n, |_, _| r.gen_range(lo..hi))
}

pub fn quadratic_problem() -> QuadraticProblem {
    let target = Vector::from_fn(32, |i, _| (0.3 * i as f64).sin() + 0.5);
    QuadraticProblem::shifted_laplacian(0.5, target)
}

pub fn quadratic() -> Fixture {
    let n = 32;
    Fixture {
        name: "quadratic",
        problem: Box::new(quadratic_problem()),
        decomp: Decomposition::contiguous(n, 4, 0).unwrap(),
        starts: vec![
            ("zeros", Vector::zeros(n)),
            ("plus-ten", Vector::from_element(n, 10.0)),
            ("minus-ten", Vector::from_element(n, -10.0)),
            ("random", uniform(n, -20.0, 20.0, 11)),
            ("alternating", Vector::from_fn(n, |i, _| if i % 2 == 0 { 20.0 } else { -20.0 })),
        ],
        unimodal: true,
    }
}

pub fn rosenbrock() -> Fixture {
    let n = 16;
    Fixture {
        name: "rosenbrock",
        problem: Box::new(RosenbrockProblem::new(n)),
        decomp: Decomposition::contiguous(n, 4, 0).unwrap(),
        starts: vec![
            ("classic", Vector::from_fn(n, |i, _| if i == 0 { -1.2 } else { 1.0 })),
            ("zeros", Vector::zeros(n)),
            ("twos", Vector::from_element(n, 2.0)),
            ("random", uniform(n, -0.5, 2.0, 12)),
            ("alternating", Vector::from_fn(n, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 })),
        ],
        unimodal: false,
    }
}

pub fn bratu() -> Fixture {
    let m = 16;
    let n = m * m;
    Fixture {
        name: "bratu",
        problem: Box::new(BratuProblem::new(m, 1.0, 10.0)),
        decomp: Decomposition::contiguous(n, 4, 0).unwrap(),
        starts: vec![
            ("zeros", Vector::zeros(n)),
            ("plus-three", Vector::from_element(n, 3.0)),
            ("minus-three", Vector::from_element(n, -3.0)),
            ("random", uniform(n, -5.0, 5.0, 13)),
            (
                "checkerboard",
                Vector::from_fn(n, |p, _| if (p / m + p % m) % 2 == 0 { 4.0 } else { -4.0 }),
            ),
        ],
        unimodal: true,
    }
}

pub fn elasticity_problem(cells: usize) -> ElasticityProblem {
    let (lambda, mu) = lame_from_young_poisson(3000.0, 0.3).unwrap();
    ElasticityProblem::new(cells, ogden_constants(lambda, mu), 0.1, [0.0, 0.0]).unwrap()
}

/// Displacement field sampled at the free nodes.
pub fn nodal_field(p: &ElasticityProblem, f: impl Fn(f64, f64) -> (f64, f64)) -> Vector {
    let mut u = Vector::zeros(p.dim());
    for (node, xy) in p.free_nodes().iter().enumerate() {
        let (ux, uy) = f(xy[0], xy[1]);
        u[2 * node] = ux;
        u[2 * node + 1] = uy;
    }
    u
}

pub fn elasticity() -> Fixture {
    let p = elasticity_problem(8);
    let n = p.dim();
    let starts = vec![
        ("zeros", Vector::zeros(n)),
        ("random", uniform(n, -0.01, 0.01, 14)),
        ("bulge", nodal_field(&p, |x, _| (0.0, 0.08 * (PI * x).sin()))),
        ("over-compressed", nodal_field(&p, |x, _| (-0.2 * x, 0.0))),
        ("shear", nodal_field(&p, |x, y| (0.05 * y * (PI * x).sin(), -0.05 * x * (1.0 - x)))),
    ];
    Fixture {
        name: "elasticity",
        problem: Box::new(p),
        decomp: Decomposition::contiguous(n, 3, 0).unwrap(),
        starts,
        unimodal: true,
    }
}

/// Quadratic, Rosenbrock, Bratu and elasticity, in that order.
pub fn all_fixtures() -> Vec<Fixture> {
    vec![quadratic(), rosenbrock(), bratu(), elasticity()]
}
