//! Dense reference solution of the trust-region subproblem
//! `min <g, s> + 1/2 <s, B s>` subject to `||s|| <= delta`.
//!
//! The minimizer satisfies `(B + lambda I) s = -g` with `B + lambda I`
//! positive semidefinite and `lambda (delta - ||s||) = 0`. In the eigenbasis of
//! `B` the step norm is monotone in `lambda`, so `lambda` is found by bisection.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

#[derive(Debug, Clone, PartialEq)]
pub struct TrustRegionSolution {
    pub s: DVector<f64>,
    pub lambda: f64,
    /// `<g, s> + 1/2 <s, B s>`
    pub value: f64,
    pub interior: bool,
}

pub fn model_value(g: &DVector<f64>, b: &DMatrix<f64>, s: &DVector<f64>) -> f64 {
    g.dot(s) + 0.5 * s.dot(&(b * s))
}

/// Global minimizer of the model over the ball of radius `delta`.
///
/// # Panics
///
/// If `delta` is not positive or the shapes disagree.
pub fn dense_trust_region(g: &DVector<f64>, b: &DMatrix<f64>, delta: f64) -> TrustRegionSolution {
    assert!(delta > 0.0, "radius must be positive");
    assert_eq!(b.nrows(), g.len());
    assert_eq!(b.ncols(), g.len());
    let n = g.len();
    let sym = (b + b.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.clone();
    let q = eig.eigenvectors.clone();
    let gq = q.transpose() * g;
    let gnorm = g.norm();
    let lmin = vals.min();
    let scale = vals.amax().max(1.0);

    // Eigen-directions that carry no gradient and sit at the bottom of the
    // spectrum; they are the only ones that may stay singular.
    let flat: Vec<bool> = (0..n)
        .map(|i| (vals[i] - lmin).abs() <= 1e-12 * scale && gq[i].abs() <= 1e-14 * gnorm.max(1.0))
        .collect();

    let step = |lambda: f64| -> DVector<f64> {
        let mut c = DVector::zeros(n);
        for i in 0..n {
            if !(flat[i] && vals[i] + lambda <= 1e-12 * scale) {
                c[i] = -gq[i] / (vals[i] + lambda);
            }
        }
        &q * c
    };
    let finish = |s: DVector<f64>, lambda: f64, interior: bool| TrustRegionSolution {
        value: model_value(g, b, &s),
        s,
        lambda,
        interior,
    };

    if lmin > 0.0 {
        let newton = step(0.0);
        if newton.norm() <= delta {
            return finish(newton, 0.0, true);
        }
    }

    let lo = (-lmin).max(0.0);
    if lmin <= 0.0 && flat.iter().any(|&f| f) {
        let partial = step(lo);
        let pn = partial.norm();
        if pn <= delta {
            // Hard case: fill the remaining radius along a flat direction.
            let i = (0..n).find(|&i| flat[i]).expect("flat direction");
            let tau = (delta * delta - pn * pn).max(0.0).sqrt();
            let s = partial + q.column(i) * tau;
            return finish(s, lo, false);
        }
    }
    if gnorm == 0.0 {
        return finish(DVector::zeros(n), lo, lo == 0.0);
    }

    // ||s(lo)|| > delta >= ||s(hi)||
    let mut lo = lo;
    let mut hi = lo + gnorm / delta;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if step(mid).norm() > delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut s = step(hi);
    let norm = s.norm();
    if norm > delta {
        s *= delta / norm;
    }
    finish(s, hi, false)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn interior_newton_step() {
        let b = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let sol = dense_trust_region(&v(&[-2.0, -4.0]), &b, 10.0);
        assert!(sol.interior);
        assert!((sol.s - v(&[1.0, 1.0])).norm() < 1e-14);
        assert!((sol.value + 3.0).abs() < 1e-14);
    }

    #[test]
    fn one_dimensional_boundary() {
        let b = DMatrix::from_element(1, 1, 1.0);
        let sol = dense_trust_region(&v(&[-4.0]), &b, 1.0);
        assert!((sol.s[0] - 1.0).abs() < 1e-12);
        assert!((sol.lambda - 3.0).abs() < 1e-9);
    }

    #[test]
    fn negative_curvature_reaches_boundary() {
        let b = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let sol = dense_trust_region(&v(&[1.0, 0.0]), &b, 1.0);
        assert!((sol.s.norm() - 1.0).abs() < 1e-12);
        assert!((sol.s[0] + 1.0).abs() < 1e-9);
        assert!((sol.value + 1.5).abs() < 1e-9);
    }

    #[test]
    fn hard_case_uses_flat_direction() {
        let b = DMatrix::from_row_slice(2, 2, &[-2.0, 0.0, 0.0, 1.0]);
        let sol = dense_trust_region(&v(&[0.0, -1.0]), &b, 2.0);
        assert!((sol.lambda - 2.0).abs() < 1e-12);
        assert!((sol.s.norm() - 2.0).abs() < 1e-12);
        // s = (+-sqrt(4 - 1/9), 1/3)
        assert!((sol.s[1] - 1.0 / 3.0).abs() < 1e-12);
        let expected = -1.0 / 3.0 + 0.5 * (-2.0 * (4.0 - 1.0 / 9.0) + 1.0 / 9.0);
        assert!((sol.value - expected).abs() < 1e-12);
    }

    #[test]
    fn beats_a_fine_polar_grid() {
        let b = DMatrix::from_row_slice(2, 2, &[0.5, 1.2, 1.2, -0.3]);
        let g = v(&[0.7, -0.4]);
        let delta = 1.3;
        let sol = dense_trust_region(&g, &b, delta);
        let mut best = f64::INFINITY;
        for i in 0..=400 {
            let r = delta * i as f64 / 400.0;
            for j in 0..720 {
                let t = std::f64::consts::TAU * j as f64 / 720.0;
                best = best.min(model_value(&g, &b, &v(&[r * t.cos(), r * t.sin()])));
            }
        }
        assert!(sol.value <= best + 1e-12);
        assert!(sol.value >= best - 1e-3);
    }

    #[test]
    fn optimality_system_holds() {
        let b = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 0.0, 2.0, -1.0, 0.5, 0.0, 0.5, 0.3]);
        let g = v(&[0.2, -1.0, 0.4]);
        let sol = dense_trust_region(&g, &b, 0.8);
        let shifted = &b + DMatrix::identity(3, 3) * sol.lambda;
        let residual = &shifted * &sol.s + &g;
        assert!(residual.norm() < 1e-9);
        assert!(SymmetricEigen::new(shifted).eigenvalues.min() > -1e-12);
        assert!((sol.s.norm() - 0.8).abs() < 1e-12);
    }
}
