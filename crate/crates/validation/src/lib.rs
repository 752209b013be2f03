//! Shared fixtures and dense reference solvers for checking the `gaspin`
//! solvers end to end.

pub mod fixtures;
pub mod oracle;

pub use fixtures::{all_fixtures, Fixture};
pub use oracle::{dense_trust_region, model_value, TrustRegionSolution};
