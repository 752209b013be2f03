//! Dense vectors and symmetric operators shared by every solver layer.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_dim, Error, Result};

/// Coefficient vector in R^n.
pub type Vector = DVector<f64>;

/// Iteration cap used for spectral-norm estimates.
pub const POWER_MAX_ITERS: usize = 200;
/// Relative tolerance used for spectral-norm estimates.
pub const POWER_REL_TOL: f64 = 1e-6;
/// Fixed seed for the power-iteration start vector.
pub const POWER_SEED: u64 = 0x5eed_0f_c0ffee;

/// A symmetric approximation `B(u)` of a Hessian, stored densely.
///
/// The constructor symmetrizes its input, so `<Bv, w> = <v, Bw>` holds up to
/// round-off for every operator in circulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricOperator {
    matrix: DMatrix<f64>,
}

impl SymmetricOperator {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        check_dim(matrix.nrows(), matrix.ncols())?;
        let mut matrix = matrix;
        let n = matrix.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = 0.5 * (matrix[(i, j)] + matrix[(j, i)]);
                matrix[(i, j)] = avg;
                matrix[(j, i)] = avg;
            }
        }
        Ok(Self { matrix })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            matrix: DMatrix::identity(n, n),
        }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n, n),
        }
    }

    pub fn from_diagonal(diagonal: &[f64]) -> Self {
        Self {
            matrix: DMatrix::from_diagonal(&DVector::from_column_slice(diagonal)),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &Vector) -> Vector {
        &self.matrix * v
    }

    /// `<v, Bv>`
    pub fn quad_form(&self, v: &Vector) -> f64 {
        v.dot(&self.apply(v))
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// Principal submatrix on the given (sorted or unsorted) index list.
    pub fn principal_submatrix(&self, indices: &[usize]) -> Self {
        let m = indices.len();
        let matrix = DMatrix::from_fn(m, m, |i, j| self.matrix[(indices[i], indices[j])]);
        Self { matrix }
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.dim() == 0 {
            return Vec::new();
        }
        let mut values: Vec<f64> = SymmetricEigen::new(self.matrix.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect();
        values.sort_by(f64::total_cmp);
        values
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    /// `||B||_2` estimated by power iteration (diagnostic for the boundedness
    /// assumption on the Hessian approximations).
    pub fn norm_estimate(&self) -> f64 {
        power_iteration(self.dim(), |v| self.apply(v), POWER_MAX_ITERS, POWER_REL_TOL)
    }

    /// Shift by `sigma * I` with `sigma = max(0, floor - lambda_min)`.
    ///
    /// Returns the shifted operator and the shift that was applied.
    pub fn regularized(&self, floor: f64) -> (Self, f64) {
        let sigma = (floor - self.min_eigenvalue()).max(0.0);
        if sigma == 0.0 {
            return (self.clone(), 0.0);
        }
        let mut matrix = self.matrix.clone();
        for i in 0..self.dim() {
            matrix[(i, i)] += sigma;
        }
        (Self { matrix }, sigma)
    }

    /// Spectral modification clamping every eigenvalue to at least
    /// `rel_floor * max |lambda|`.
    pub fn spd_clamped(&self, rel_floor: f64) -> Self {
        let n = self.dim();
        if n == 0 {
            return self.clone();
        }
        let eig = SymmetricEigen::new(self.matrix.clone());
        let largest = eig.eigenvalues.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let floor = if largest > 0.0 {
            rel_floor * largest
        } else {
            rel_floor
        };
        let clamped = eig.eigenvalues.map(|v| v.max(floor));
        let q = &eig.eigenvectors;
        let matrix = q * DMatrix::from_diagonal(&clamped) * q.transpose();
        // Round-off in the reconstruction breaks exact symmetry.
        Self::new(matrix).expect("square by construction")
    }
}

/// Estimates the spectral norm of a symmetric linear map by power iteration
/// from a fixed pseudo-random start vector.
pub fn power_iteration(
    n: usize,
    mut apply: impl FnMut(&Vector) -> Vector,
    max_iters: usize,
    rel_tol: f64,
) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x = Vector::from_fn(n, |_, _| rng.gen_range(0.5..1.5));
    x /= x.norm();
    let mut estimate = 0.0;
    for _ in 0..max_iters {
        let y = apply(&x);
        let norm = y.norm();
        if norm == 0.0 {
            return estimate;
        }
        let converged = (norm - estimate).abs() <= rel_tol * norm;
        estimate = norm;
        x = y / norm;
        if converged {
            break;
        }
    }
    estimate
}

/// Outcome of [`conjugate_gradient`].
#[derive(Debug, Clone)]
pub struct CgSolution {
    pub x: Vector,
    pub iterations: usize,
    pub applications: usize,
    pub converged: bool,
}

/// Unpreconditioned CG for an SPD operator; stops at `||r|| <= tol * ||b||`.
pub fn conjugate_gradient(
    mut apply: impl FnMut(&Vector) -> Vector,
    b: &Vector,
    tol: f64,
    max_iters: usize,
) -> CgSolution {
    let mut x = Vector::zeros(b.len());
    let target = tol * b.norm();
    let mut r = b.clone();
    let mut rr = r.dot(&r);
    if rr.sqrt() <= target {
        return CgSolution {
            x,
            iterations: 0,
            applications: 0,
            converged: true,
        };
    }
    let mut p = r.clone();
    let mut applications = 0;
    for it in 0..max_iters {
        let ap = apply(&p);
        applications += 1;
        let pap = p.dot(&ap);
        if pap <= 0.0 {
            return CgSolution {
                x,
                iterations: it,
                applications,
                converged: false,
            };
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_next = r.dot(&r);
        if rr_next.sqrt() <= target {
            return CgSolution {
                x,
                iterations: it + 1,
                applications,
                converged: true,
            };
        }
        p = &r + (rr_next / rr) * &p;
        rr = rr_next;
    }
    CgSolution {
        x,
        iterations: max_iters,
        applications,
        converged: false,
    }
}

/// Max-norm of a vector (0 for the empty vector).
pub fn max_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Every entry finite.
pub fn all_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}

pub(crate) fn dense_square(matrix: &DMatrix<f64>) -> Result<()> {
    if matrix.nrows() != matrix.ncols() {
        return Err(Error::DimensionMismatch {
            expected: matrix.nrows(),
            found: matrix.ncols(),
        });
    }
    Ok(())
}
