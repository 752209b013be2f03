//! Whole-run invariants of the outer iteration.

use ::gaspin::decomposition::{Decomposition, FrozenComplement};
use ::gaspin::problem::{
    lame_from_young_poisson, ogden_constants, BratuProblem, ElasticityProblem, QuadraticProblem,
    RosenbrockProblem,
};
use ::gaspin::{
    gaspin_solve, tr_solve, Gaspin, GaspinConfig, IterationRecord, Problem, Strategy,
    TrustRegionConfig, Vector,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Case {
    problem: Box<dyn Problem>,
    decomp: Decomposition,
    starts: Vec<Vector>,
}

fn cases() -> Vec<Case> {
    let elasticity = {
        let (lambda, mu) = lame_from_young_poisson(3000.0, 0.3).unwrap();
        ElasticityProblem::new(4, ogden_constants(lambda, mu), 0.1, [0.0, 0.0]).unwrap()
    };
    let ne = elasticity.dim();
    vec![
        Case {
            problem: Box::new(QuadraticProblem::shifted_laplacian(0.5, Vector::from_element(24, 1.0))),
            decomp: Decomposition::contiguous(24, 4, 0).unwrap(),
            starts: vec![Vector::from_element(24, 10.0), Vector::from_fn(24, |i, _| (i % 3) as f64 * 7.0)],
        },
        Case {
            problem: Box::new(RosenbrockProblem::new(16)),
            decomp: Decomposition::contiguous(16, 4, 0).unwrap(),
            starts: vec![
                Vector::from_element(16, 2.0),
                Vector::from_fn(16, |i, _| if i % 2 == 0 { -1.2 } else { 1.0 }),
                Vector::zeros(16),
            ],
        },
        Case {
            problem: Box::new(BratuProblem::new(8, 1.0, 10.0)),
            decomp: Decomposition::contiguous(64, 4, 0).unwrap(),
            starts: vec![Vector::from_element(64, 3.0)],
        },
        Case {
            problem: Box::new(elasticity),
            decomp: Decomposition::contiguous(ne, 3, 0).unwrap(),
            starts: vec![Vector::zeros(ne)],
        },
    ]
}

fn gaspin_runs() -> Vec<Vec<IterationRecord>> {
    let mut out = Vec::new();
    for case in cases() {
        for u0 in &case.starts {
            for strategy in [Strategy::TrustRegion, Strategy::Damping] {
                let cfg = GaspinConfig {
                    strategy,
                    ..GaspinConfig::default()
                };
                let run = gaspin_solve(&case.problem, &case.decomp, u0, &cfg).unwrap();
                assert!(run.converged);
                out.push(run.records);
            }
        }
    }
    out
}

#[test]
fn local_radius_never_exceeds_global_radius() {
    for records in gaspin_runs() {
        for r in &records {
            assert!(r.delta_l <= r.delta_g, "iter {}: {} > {}", r.iter, r.delta_l, r.delta_g);
        }
    }
}

#[test]
fn objective_moves_only_on_accepted_steps() {
    for records in gaspin_runs() {
        for pair in records.windows(2) {
            if pair[0].accepted {
                // The decrease may be below one ulp of J; ared carries it exactly.
                assert!(pair[0].ared > 0.0);
                assert!(pair[1].value <= pair[0].value);
            } else {
                assert_eq!(pair[1].value, pair[0].value);
            }
        }
    }
}

#[test]
fn baseline_objective_is_monotone() {
    for case in cases() {
        for u0 in &case.starts {
            let run = tr_solve(&case.problem, u0, &TrustRegionConfig::default()).unwrap();
            assert!(run.converged);
            for pair in run.records.windows(2) {
                assert!(pair[1].value <= pair[0].value);
            }
        }
    }
}

#[test]
fn gradient_stalls_resolve_within_the_halving_bound() {
    let cfg = GaspinConfig::default();
    let gamma1 = cfg.trust_region.gamma1;
    // ||g~ - g|| <= theta ||g|| keeps both Cauchy decreases within c2 / c1.
    let theta = (1.0 - (cfg.c2 / cfg.c1).sqrt()) / 2.0;
    let margin = 2;
    for records in gaspin_runs() {
        let rows = &records[..records.len() - 1];
        let mut i = 0;
        while i < rows.len() {
            if rows[i].decrease_ok {
                i += 1;
                continue;
            }
            let start = &rows[i];
            let len = rows[i..].iter().take_while(|r| !r.decrease_ok).count();
            let threshold = theta * start.grad_norm;
            let halvings = (start.delta_l / threshold).ln() / (1.0 / gamma1).ln();
            let bound = halvings.ceil().max(0.0) as usize + margin;
            assert!(len <= bound, "stall block of {len} from iter {} exceeds {bound}", start.iter);
            i += len;
        }
    }
}

#[test]
fn tiny_radii_make_the_model_ratio_successful() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    let p = RosenbrockProblem::new(16);
    let decomp = Decomposition::contiguous(16, 4, 0).unwrap();
    for strategy in [Strategy::TrustRegion, Strategy::Damping] {
        let mut successes = 0;
        let trials = 50;
        for _ in 0..trials {
            let u = Vector::from_fn(16, |_, _| r.gen_range(-1.5..1.5));
            let mut cfg = GaspinConfig {
                strategy,
                delta_l0: 1e-4,
                ..GaspinConfig::default()
            };
            cfg.trust_region.delta0 = 1e-4;
            let local = |k: usize, u: &Vector| FrozenComplement::new(&p, decomp.subspace(k)?.to_vec(), u.clone());
            let mut driver = Gaspin::new(&p, &decomp, &u, cfg, local).unwrap();
            if driver.step().unwrap().record.rho_tilde >= 0.1 {
                successes += 1;
            }
        }
        assert!(successes as f64 >= 0.9 * trials as f64, "{strategy:?}: {successes}/{trials}");
    }
}
