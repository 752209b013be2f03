//! Coordinate subspaces, their transfer operators, subdomain objectives and
//! the additive Schwarz operators built from subdomain Hessians.

use nalgebra::DMatrix;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{conjugate_gradient, power_iteration, SymmetricOperator, Vector};
use crate::linalg::{POWER_MAX_ITERS, POWER_REL_TOL};
use crate::problem::Problem;

/// A cover of `{0, .., n-1}` by ordered index lists.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    n: usize,
    subspaces: Vec<Vec<usize>>,
    overlapping: bool,
}

impl Decomposition {
    /// Validates that the lists cover every index; duplicates inside one list
    /// and out-of-range indices are rejected.
    pub fn new(n: usize, subspaces: Vec<Vec<usize>>) -> Result<Self> {
        if subspaces.is_empty() {
            return Err(Error::InvalidConfig("decomposition needs at least one subspace".into()));
        }
        let mut hits = vec![0usize; n];
        for (k, indices) in subspaces.iter().enumerate() {
            if indices.is_empty() {
                return Err(Error::InvalidConfig(format!("subspace {k} is empty")));
            }
            let mut seen = std::collections::BTreeSet::new();
            for &i in indices {
                if i >= n {
                    return Err(Error::InvalidConfig(format!(
                        "subspace {k} contains index {i} outside 0..{n}"
                    )));
                }
                if !seen.insert(i) {
                    return Err(Error::InvalidConfig(format!(
                        "subspace {k} lists index {i} twice"
                    )));
                }
                hits[i] += 1;
            }
        }
        if let Some(i) = hits.iter().position(|&h| h == 0) {
            return Err(Error::InvalidConfig(format!("index {i} belongs to no subspace")));
        }
        let overlapping = hits.iter().any(|&h| h > 1);
        Ok(Self {
            n,
            subspaces,
            overlapping,
        })
    }

    /// `blocks` contiguous blocks of near-equal size, each widened by
    /// `overlap` indices on both sides.
    pub fn contiguous(n: usize, blocks: usize, overlap: usize) -> Result<Self> {
        if blocks == 0 || blocks > n {
            return Err(Error::InvalidConfig(format!(
                "cannot split {n} unknowns into {blocks} blocks"
            )));
        }
        let base = n / blocks;
        let extra = n % blocks;
        let mut start: usize = 0;
        let mut subspaces = Vec::with_capacity(blocks);
        for k in 0..blocks {
            let len = base + usize::from(k < extra);
            let lo = start.saturating_sub(overlap);
            let hi = (start + len + overlap).min(n);
            subspaces.push((lo..hi).collect());
            start += len;
        }
        Self::new(n, subspaces)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of subspaces `N`.
    pub fn len(&self) -> usize {
        self.subspaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subspaces.is_empty()
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn subspace(&self, k: usize) -> Result<&[usize]> {
        self.subspaces
            .get(k)
            .map(Vec::as_slice)
            .ok_or(Error::SubspaceIndex {
                k,
                count: self.len(),
            })
    }

    pub fn subspaces(&self) -> &[Vec<usize>] {
        &self.subspaces
    }

    /// `I^k v`
    pub fn prolongate(&self, k: usize, v: &Vector) -> Result<Vector> {
        let idx = self.subspace(k)?;
        check_dim(idx.len(), v.len())?;
        let mut out = Vector::zeros(self.n);
        for (&i, &x) in idx.iter().zip(v.iter()) {
            out[i] = x;
        }
        Ok(out)
    }

    /// `out += I^k v`
    pub fn prolongate_add(&self, k: usize, v: &Vector, out: &mut Vector) -> Result<()> {
        let idx = self.subspace(k)?;
        check_dim(idx.len(), v.len())?;
        check_dim(self.n, out.len())?;
        for (&i, &x) in idx.iter().zip(v.iter()) {
            out[i] += x;
        }
        Ok(())
    }

    /// `R^k v = (I^k)^T v`
    pub fn restrict(&self, k: usize, v: &Vector) -> Result<Vector> {
        let idx = self.subspace(k)?;
        check_dim(self.n, v.len())?;
        Ok(Vector::from_iterator(idx.len(), idx.iter().map(|&i| v[i])))
    }

    /// `P^k u`: the closest point of `S^k` to `u` in the Euclidean norm,
    /// which for coordinate subspaces is the restriction.
    pub fn project(&self, k: usize, u: &Vector) -> Result<Vector> {
        self.restrict(k, u)
    }

    /// `sum_k I^k v^k` in ascending `k`.
    pub fn sum_prolongated(&self, locals: &[Vector]) -> Result<Vector> {
        check_dim(self.len(), locals.len())?;
        let mut out = Vector::zeros(self.n);
        for (k, v) in locals.iter().enumerate() {
            self.prolongate_add(k, v, &mut out)?;
        }
        Ok(out)
    }

    /// Dense `sum_k I^k R^k`.
    pub fn partition_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for idx in &self.subspaces {
            for &i in idx {
                m[(i, i)] += 1.0;
            }
        }
        m
    }
}

/// `J^k(v) = J(I^k v + r)` where `r` holds the entries of a fixed point
/// outside the subspace.
#[derive(Debug, Clone)]
pub struct FrozenComplement<P> {
    problem: P,
    indices: Vec<usize>,
    frozen: Vector,
}

impl<P: Problem> FrozenComplement<P> {
    pub fn new(problem: P, indices: Vec<usize>, frozen: Vector) -> Result<Self> {
        check_dim(problem.dim(), frozen.len())?;
        if let Some(&i) = indices.iter().find(|&&i| i >= frozen.len()) {
            return Err(Error::DimensionMismatch {
                expected: frozen.len(),
                found: i + 1,
            });
        }
        Ok(Self {
            problem,
            indices,
            frozen,
        })
    }

    fn embed(&self, v: &Vector) -> Vector {
        let mut x = self.frozen.clone();
        for (&i, &value) in self.indices.iter().zip(v.iter()) {
            x[i] = value;
        }
        x
    }

    fn scatter(&self, s: &Vector) -> Vector {
        let mut x = Vector::zeros(self.frozen.len());
        for (&i, &value) in self.indices.iter().zip(s.iter()) {
            x[i] = value;
        }
        x
    }

    fn gather(&self, x: &Vector) -> Vector {
        Vector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| x[i]))
    }
}

impl<P: Problem> Problem for FrozenComplement<P> {
    fn name(&self) -> &str {
        self.problem.name()
    }

    fn dim(&self) -> usize {
        self.indices.len()
    }

    fn value(&self, v: &Vector) -> Option<f64> {
        self.problem.value(&self.embed(v))
    }

    fn gradient(&self, v: &Vector) -> Option<Vector> {
        Some(self.gather(&self.problem.gradient(&self.embed(v))?))
    }

    fn hessian(&self, v: &Vector) -> Option<DMatrix<f64>> {
        let full = self.problem.hessian(&self.embed(v))?;
        let idx = &self.indices;
        Some(DMatrix::from_fn(idx.len(), idx.len(), |a, b| full[(idx[a], idx[b])]))
    }

    fn value_change(&self, v: &Vector, s: &Vector) -> Option<f64> {
        self.problem.value_change(&self.embed(v), &self.scatter(s))
    }
}

/// `H^k(P^k u + s) = J^k(P^k u + s) + <dg^k, s>` with
/// `dg^k = R^k g - grad J^k(P^k u)`, so that `grad H^k(P^k u) = R^k g`.
#[derive(Debug, Clone)]
pub struct LocalObjective<L> {
    k: usize,
    base: Vector,
    local: L,
    delta_g: Vector,
}

impl<L: Problem> LocalObjective<L> {
    /// Builds `H^k` from an already known correction `dg^k`.
    pub fn with_correction(k: usize, base: Vector, local: L, delta_g: Vector) -> Result<Self> {
        check_dim(local.dim(), base.len())?;
        check_dim(local.dim(), delta_g.len())?;
        Ok(Self {
            k,
            base,
            local,
            delta_g,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// `P^k u`
    pub fn base(&self) -> &Vector {
        &self.base
    }

    pub fn delta_g(&self) -> &Vector {
        &self.delta_g
    }

    pub fn local_problem(&self) -> &L {
        &self.local
    }
}

/// Assembles `H^k` for subspace `k` at the global state `(u, g)`.
pub fn local_objective<P: Problem + ?Sized, L: Problem>(
    decomp: &Decomposition,
    k: usize,
    problem: &P,
    u: &Vector,
    g: &Vector,
    local_problem: L,
) -> Result<LocalObjective<L>> {
    check_dim(decomp.dim(), problem.dim())?;
    check_dim(decomp.dim(), g.len())?;
    let idx = decomp.subspace(k)?;
    check_dim(idx.len(), local_problem.dim())?;
    let base = decomp.project(k, u)?;
    let local_grad = local_problem.gradient(&base).ok_or(Error::Infeasible)?;
    let delta_g = decomp.restrict(k, g)? - local_grad;
    LocalObjective::with_correction(k, base, local_problem, delta_g)
}

impl<L: Problem> Problem for LocalObjective<L> {
    fn name(&self) -> &str {
        self.local.name()
    }

    fn dim(&self) -> usize {
        self.base.len()
    }

    fn value(&self, v: &Vector) -> Option<f64> {
        Some(self.local.value(v)? + self.delta_g.dot(&(v - &self.base)))
    }

    fn gradient(&self, v: &Vector) -> Option<Vector> {
        Some(self.local.gradient(v)? + &self.delta_g)
    }

    fn hessian(&self, v: &Vector) -> Option<DMatrix<f64>> {
        self.local.hessian(v)
    }

    fn value_change(&self, v: &Vector, s: &Vector) -> Option<f64> {
        Some(self.local.value_change(v, s)? + self.delta_g.dot(s))
    }
}

/// Relative CG tolerance for applying `C` on overlapping decompositions.
pub const OVERLAP_CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
struct Block {
    indices: Vec<usize>,
    op: SymmetricOperator,
    lu: Option<nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>>,
}

/// `C = sum_k I^k B^k R^k` and `C^-1 = sum_k I^k (B^k)^-1 R^k`.
///
/// Without overlap the two are exact inverses block by block. With overlap
/// `C` is defined as the inverse of the assembled `C^-1` and applied by CG.
#[derive(Debug, Clone)]
pub struct SchwarzOperator {
    n: usize,
    overlapping: bool,
    blocks: Vec<Block>,
}

pub fn assemble_schwarz(
    decomp: &Decomposition,
    local_hessians: Vec<SymmetricOperator>,
) -> Result<SchwarzOperator> {
    check_dim(decomp.len(), local_hessians.len())?;
    let mut blocks = Vec::with_capacity(decomp.len());
    for (k, op) in local_hessians.into_iter().enumerate() {
        let indices = decomp.subspace(k)?.to_vec();
        check_dim(indices.len(), op.dim())?;
        let lu = op.as_matrix().clone().lu();
        let invertible = lu.is_invertible() && {
            let det = lu.determinant();
            det.is_finite() && det != 0.0
        };
        blocks.push(Block {
            indices,
            op,
            lu: invertible.then_some(lu),
        });
    }
    Ok(SchwarzOperator {
        n: decomp.dim(),
        overlapping: decomp.is_overlapping(),
        blocks,
    })
}

impl SchwarzOperator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_overlapping(&self) -> bool {
        self.overlapping
    }

    pub fn local_operator(&self, k: usize) -> Result<&SymmetricOperator> {
        self.blocks
            .get(k)
            .map(|b| &b.op)
            .ok_or(Error::SubspaceIndex {
                k,
                count: self.blocks.len(),
            })
    }

    fn gather(indices: &[usize], v: &Vector) -> Vector {
        Vector::from_iterator(indices.len(), indices.iter().map(|&i| v[i]))
    }

    /// `sum_k I^k B^k R^k v`
    pub fn apply_sum(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.n, v.len())?;
        let mut out = Vector::zeros(self.n);
        for b in &self.blocks {
            let local = b.op.apply(&Self::gather(&b.indices, v));
            for (&i, &x) in b.indices.iter().zip(local.iter()) {
                out[i] += x;
            }
        }
        Ok(out)
    }

    /// `(B^k)^-1 w` for a local vector `w`.
    pub fn solve_local(&self, k: usize, w: &Vector) -> Result<Vector> {
        let b = self.blocks.get(k).ok_or(Error::SubspaceIndex {
            k,
            count: self.blocks.len(),
        })?;
        check_dim(b.indices.len(), w.len())?;
        let lu = b.lu.as_ref().ok_or(Error::SingularOperator { k })?;
        lu.solve(w).ok_or(Error::SingularOperator { k })
    }

    pub fn apply_cinv(&self, v: &Vector) -> Result<Vector> {
        check_dim(self.n, v.len())?;
        let mut out = Vector::zeros(self.n);
        for (k, b) in self.blocks.iter().enumerate() {
            let local = self.solve_local(k, &Self::gather(&b.indices, v))?;
            for (&i, &x) in b.indices.iter().zip(local.iter()) {
                out[i] += x;
            }
        }
        Ok(out)
    }

    pub fn apply_c(&self, v: &Vector) -> Result<Vector> {
        if !self.overlapping {
            return self.apply_sum(v);
        }
        check_dim(self.n, v.len())?;
        // Surface singular blocks before entering CG.
        for (k, b) in self.blocks.iter().enumerate() {
            if b.lu.is_none() {
                return Err(Error::SingularOperator { k });
            }
        }
        let solution = conjugate_gradient(
            |x| self.apply_cinv(x).expect("blocks checked above"),
            v,
            OVERLAP_CG_TOL,
            10 * self.n.max(1),
        );
        if !solution.converged {
            log::warn!(
                "overlapping Schwarz application stopped after {} CG iterations",
                solution.iterations
            );
        }
        Ok(solution.x)
    }

    /// `||C||_2` by power iteration.
    pub fn norm_c(&self) -> Result<f64> {
        if self.overlapping {
            self.apply_c(&Vector::zeros(self.n))?;
        }
        Ok(power_iteration(
            self.n,
            |v| self.apply_c(v).expect("validated"),
            POWER_MAX_ITERS,
            POWER_REL_TOL,
        ))
    }

    pub fn dense_c(&self) -> Result<DMatrix<f64>> {
        self.dense(|v| self.apply_c(v))
    }

    pub fn dense_cinv(&self) -> Result<DMatrix<f64>> {
        self.dense(|v| self.apply_cinv(v))
    }

    fn dense(&self, apply: impl Fn(&Vector) -> Result<Vector>) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.n, self.n);
        let mut e = Vector::zeros(self.n);
        for j in 0..self.n {
            e[j] = 1.0;
            m.set_column(j, &apply(&e)?);
            e[j] = 0.0;
        }
        Ok(m)
    }
}
