//! Experiment configuration: one strict JSON document per experiment.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use gaspin::problem::{
    lame_from_young_poisson, ogden_constants, BratuProblem, ElasticityProblem, QuadraticProblem,
    RosenbrockProblem, TiltedCosineProblem,
};
use gaspin::{Decomposition, GaspinConfig, Problem, Strategy, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Problem for `run`, `compare` and `dump-schwarz`.
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub decomposition: DecompositionSpec,
    /// Solver for `run`.
    pub solver: Option<SolverKind>,
    /// Shared solver constants; variants may replace them.
    #[serde(default)]
    pub config: GaspinConfig,
    /// Solvers for `compare`.
    #[serde(default)]
    pub variants: Vec<VariantSpec>,
    #[serde(default)]
    pub start: StartSpec,
    #[serde(default)]
    pub seed: u64,
    /// Largest `||u_a - u_b||` between final iterates that counts as agreement.
    #[serde(default = "default_agreement_tol")]
    pub agreement_tol: f64,
    /// Problems for `check`; defaults to `problem`.
    pub checks: Option<Vec<ProblemSpec>>,
    #[serde(default)]
    pub check_settings: CheckSettings,
    #[serde(default)]
    pub test_hooks: TestHooks,
}

fn default_agreement_tol() -> f64 {
    1e-4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProblemSpec {
    Quadratic(QuadraticSpec),
    Rosenbrock(RosenbrockSpec),
    Bratu(BratuSpec),
    Elasticity(ElasticitySpec),
    TiltedCosine(TiltedCosineSpec),
}

/// `1/2 (u - t)^T A (u - t)` with `A` the 1D Laplacian plus `shift * I`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadraticSpec {
    pub n: usize,
    pub shift: f64,
    /// Minimizer; defaults to `sin(0.3 i) + 0.5`.
    pub target: Option<Vec<f64>>,
}

impl Default for QuadraticSpec {
    fn default() -> Self {
        Self {
            n: 32,
            shift: 0.5,
            target: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RosenbrockSpec {
    pub n: usize,
}

impl Default for RosenbrockSpec {
    fn default() -> Self {
        Self { n: 16 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BratuSpec {
    /// Interior grid points per side.
    pub grid: usize,
    pub lambda: f64,
    pub source: f64,
}

impl Default for BratuSpec {
    fn default() -> Self {
        Self {
            grid: 16,
            lambda: 1.0,
            source: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticitySpec {
    pub cells: usize,
    pub youngs_modulus: f64,
    pub poisson_ratio: f64,
    /// Inward displacement of the right edge (0.1 = 10%).
    pub compression: f64,
    pub body_force: [f64; 2],
}

impl Default for ElasticitySpec {
    fn default() -> Self {
        Self {
            cells: 8,
            youngs_modulus: 3000.0,
            poisson_ratio: 0.3,
            compression: 0.1,
            body_force: [0.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiltedCosineSpec {
    pub n: usize,
    pub tilt: f64,
}

impl Default for TiltedCosineSpec {
    fn default() -> Self {
        Self { n: 8, tilt: 0.3 }
    }
}

impl ProblemSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ProblemSpec::Quadratic(_) => "quadratic",
            ProblemSpec::Rosenbrock(_) => "rosenbrock",
            ProblemSpec::Bratu(_) => "bratu",
            ProblemSpec::Elasticity(_) => "elasticity",
            ProblemSpec::TiltedCosine(_) => "tilted-cosine",
        }
    }

    pub fn build(&self) -> Result<Box<dyn Problem>, CliError> {
        let positive = |name: &str, n: usize| {
            if n == 0 {
                Err(CliError::Config(format!("{}: `{name}` must be positive", self.kind())))
            } else {
                Ok(())
            }
        };
        Ok(match self {
            ProblemSpec::Quadratic(q) => {
                positive("n", q.n)?;
                let target = match &q.target {
                    Some(t) if t.len() != q.n => {
                        return Err(CliError::Config(format!(
                            "quadratic: `target` has {} entries, expected n = {}",
                            t.len(),
                            q.n
                        )))
                    }
                    Some(t) => Vector::from_column_slice(t),
                    None => Vector::from_fn(q.n, |i, _| (0.3 * i as f64).sin() + 0.5),
                };
                if !(q.shift > 0.0) {
                    return Err(CliError::Config(format!(
                        "quadratic: `shift` must be positive, got {}",
                        q.shift
                    )));
                }
                Box::new(QuadraticProblem::shifted_laplacian(q.shift, target))
            }
            ProblemSpec::Rosenbrock(r) => {
                if r.n < 2 {
                    return Err(CliError::Config(format!("rosenbrock: `n` must be at least 2, got {}", r.n)));
                }
                Box::new(RosenbrockProblem::new(r.n))
            }
            ProblemSpec::Bratu(b) => {
                positive("grid", b.grid)?;
                Box::new(BratuProblem::new(b.grid, b.lambda, b.source))
            }
            ProblemSpec::Elasticity(e) => {
                let (lambda, mu) = lame_from_young_poisson(e.youngs_modulus, e.poisson_ratio)
                    .map_err(|err| CliError::Config(format!("elasticity: {err}")))?;
                let p = ElasticityProblem::new(e.cells, ogden_constants(lambda, mu), e.compression, e.body_force)
                    .map_err(|err| CliError::Config(format!("elasticity: {err}")))?;
                Box::new(p)
            }
            ProblemSpec::TiltedCosine(t) => {
                positive("n", t.n)?;
                Box::new(TiltedCosineProblem::new(t.n, t.tilt))
            }
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecompositionSpec {
    pub blocks: usize,
    pub overlap: usize,
}

impl Default for DecompositionSpec {
    fn default() -> Self {
        Self {
            blocks: 4,
            overlap: 0,
        }
    }
}

impl DecompositionSpec {
    /// Contiguous blocks; the block count is capped at the dimension.
    pub fn build(&self, n: usize) -> Result<Decomposition, CliError> {
        if self.blocks == 0 {
            return Err(CliError::Config("decomposition: `blocks` must be positive".into()));
        }
        Decomposition::contiguous(n, self.blocks.min(n), self.overlap)
            .map_err(|err| CliError::Config(format!("decomposition: {err}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    Tr,
    GaspinTr,
    GaspinDamping,
}

impl SolverKind {
    pub fn name(self) -> &'static str {
        match self {
            SolverKind::Tr => "tr",
            SolverKind::GaspinTr => "gaspin-tr",
            SolverKind::GaspinDamping => "gaspin-damping",
        }
    }

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            SolverKind::Tr => None,
            SolverKind::GaspinTr => Some(Strategy::TrustRegion),
            SolverKind::GaspinDamping => Some(Strategy::Damping),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VariantSpec {
    /// Column label; defaults to the solver name.
    pub name: Option<String>,
    pub solver: SolverKind,
    /// Replaces the shared `config` for this variant.
    pub config: Option<GaspinConfig>,
}

impl VariantSpec {
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.solver.name().to_string())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum StartSpec {
    Zeros {},
    Constant {
        value: f64,
    },
    /// Uniform on `[low, high)` from `seed`.
    Random {
        low: f64,
        high: f64,
    },
    Values {
        values: Vec<f64>,
    },
}

impl Default for StartSpec {
    fn default() -> Self {
        StartSpec::Zeros {}
    }
}

impl StartSpec {
    pub fn build(&self, n: usize, seed: u64) -> Result<Vector, CliError> {
        Ok(match self {
            StartSpec::Zeros {} => Vector::zeros(n),
            StartSpec::Constant { value } => Vector::from_element(n, *value),
            StartSpec::Random { low, high } => {
                if !(low < high) {
                    return Err(CliError::Config(format!(
                        "start: need low < high, got [{low}, {high})"
                    )));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Vector::from_fn(n, |_, _| rng.gen_range(*low..*high))
            }
            StartSpec::Values { values } => {
                if values.len() != n {
                    return Err(CliError::Config(format!(
                        "start: {} values given for a problem of dimension {n}",
                        values.len()
                    )));
                }
                Vector::from_column_slice(values)
            }
        })
    }
}

/// Sample points and tolerances of the consistency suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSettings {
    pub points: usize,
    pub gradient_tol: f64,
    pub elasticity_gradient_tol: f64,
    pub hessian_vector_tol: f64,
    pub adjoint_tol: f64,
    pub round_trip_tol: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            points: 5,
            gradient_tol: 1e-6,
            elasticity_gradient_tol: 1e-5,
            hessian_vector_tol: 1e-4,
            adjoint_tol: 1e-12,
            round_trip_tol: 1e-8,
        }
    }
}

/// Fault injection for testing the harness itself.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestHooks {
    /// Problem kinds whose analytic gradient is perturbed during `check`.
    pub corrupt_gradient: Vec<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|err| CliError::Config(format!("cannot read {}: {err}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|err| CliError::Config(format!("{}: {err}", path.display())))?;
        config.config.validate().map_err(|err| CliError::Config(err.to_string()))?;
        for v in &config.variants {
            if let Some(c) = &v.config {
                c.validate()
                    .map_err(|err| CliError::Config(format!("variant {}: {err}", v.label())))?;
            }
        }
        if !(config.agreement_tol >= 0.0) {
            return Err(CliError::Config(format!(
                "`agreement_tol` must be non-negative, got {}",
                config.agreement_tol
            )));
        }
        Ok(config)
    }

    pub fn require_problem(&self) -> Result<&ProblemSpec, CliError> {
        self.problem
            .as_ref()
            .ok_or_else(|| CliError::Config("missing key `problem`".into()))
    }
}

/// Feasible sample point for the consistency suite.
pub fn sample_point(problem: &dyn Problem, kind: &str, rng: &mut ChaCha8Rng) -> Vector {
    let n = problem.dim();
    if kind == "elasticity" {
        // Small smooth perturbations of the reference state keep every
        // element orientation-preserving.
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        return Vector::from_fn(n, |i, _| {
            0.01 * (phase + 0.7 * i as f64).sin() + rng.gen_range(-0.002..0.002)
        });
    }
    Vector::from_fn(n, |_, _| rng.gen_range(-1.5..1.5))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(text)
    }

    #[test]
    fn defaults_fill_omitted_sections() {
        let c = parse(r#"{ "problem": { "kind": "elasticity" } }"#).unwrap();
        assert_eq!(c.decomposition.blocks, 4);
        assert_eq!(c.agreement_tol, 1e-4);
        assert!(matches!(c.start, StartSpec::Zeros {}));
        match c.problem.unwrap() {
            ProblemSpec::Elasticity(e) => {
                assert_eq!(e.cells, 8);
                assert_eq!(e.compression, 0.1);
            }
            other => panic!("parsed {other:?}"),
        }
    }

    #[test]
    fn every_problem_kind_builds() {
        for kind in ["quadratic", "rosenbrock", "bratu", "elasticity", "tilted-cosine"] {
            let spec: ProblemSpec = serde_json::from_str(&format!(r#"{{ "kind": "{kind}" }}"#)).unwrap();
            assert_eq!(spec.kind(), kind);
            let p = spec.build().unwrap();
            assert_eq!(p.name(), kind);
        }
    }

    #[test]
    fn unknown_problem_kind_is_rejected() {
        assert!(parse(r#"{ "problem": { "kind": "himmelblau" } }"#).is_err());
    }

    #[test]
    fn random_start_depends_only_on_the_seed() {
        let spec = StartSpec::Random { low: -1.0, high: 1.0 };
        let a = spec.build(10, 3).unwrap();
        assert_eq!(a, spec.build(10, 3).unwrap());
        assert_ne!(a, spec.build(10, 4).unwrap());
        assert!(a.iter().all(|&x| (-1.0..1.0).contains(&x)));
    }

    #[test]
    fn start_values_must_match_the_dimension() {
        let spec = StartSpec::Values { values: vec![1.0, 2.0] };
        assert!(matches!(spec.build(3, 0), Err(CliError::Config(_))));
        assert_eq!(spec.build(2, 0).unwrap().as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn block_count_is_capped_at_the_dimension() {
        let d = DecompositionSpec { blocks: 10, overlap: 0 }.build(3).unwrap();
        assert_eq!(d.len(), 3);
        assert!(DecompositionSpec { blocks: 0, overlap: 0 }.build(3).is_err());
    }

    #[test]
    fn solver_kinds_map_to_strategies() {
        let kinds: Vec<SolverKind> = serde_json::from_str(r#"["tr", "gaspin-tr", "gaspin-damping"]"#).unwrap();
        assert_eq!(kinds[0].strategy(), None);
        assert_eq!(kinds[1].strategy(), Some(Strategy::TrustRegion));
        assert_eq!(kinds[2].strategy(), Some(Strategy::Damping));
        assert_eq!(kinds[2].name(), "gaspin-damping");
    }

    #[test]
    fn elasticity_sample_points_are_feasible() {
        let p = ProblemSpec::Elasticity(ElasticitySpec::default()).build().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let u = sample_point(p.as_ref(), "elasticity", &mut rng);
            assert!(p.value(&u).is_some());
        }
    }
}
