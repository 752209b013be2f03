//! Trust-region optimization with domain-decomposed nonlinear preconditioning.
//!
//! The crate provides a single-level trust-region baseline ([`tr_solve`]) and
//! the globalized ASPIN method ([`gaspin_solve`]), in which subdomain solves
//! yield a preconditioned gradient `g~` with `||g~ - g|| <= dL` and a second
//! radius `dL` controls that perturbation.

pub mod decomposition;
pub mod error;
pub mod gaspin;
pub mod linalg;
pub mod precond_gradient;
pub mod problem;
pub mod runtime;
pub mod trace;
pub mod trust_region;

pub use decomposition::{assemble_schwarz, local_objective, Decomposition, FrozenComplement, LocalObjective, SchwarzOperator};
pub use error::{Error, Result};
pub use gaspin::{gaspin_solve, Gaspin, GaspinConfig, GaspinRun, OmegaRule, RadiusBound, Strategy};
pub use linalg::{SymmetricOperator, Vector};
pub use precond_gradient::{LocalSolveReport, PreconditionedGradient};
pub use problem::{Evaluation, HessianMode, Problem};
pub use runtime::TaskPool;
pub use trace::{IterationRecord, OperationCounts, RunSummary};
pub use trust_region::{tr_solve, TrRun, TrustRegionConfig};
