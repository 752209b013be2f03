use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn gaspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaspin"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn run_cmd(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        cmd,
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    gaspin(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_config(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path
}

fn last_row(trace: &str) -> Vec<String> {
    trace.lines().last().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn rosenbrock_run_converges_and_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("run", &fixture("rosenbrock16.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let trace = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let grad_norm: f64 = last_row(&trace)[2].parse().unwrap();
    assert!(grad_norm <= 1e-6);

    let summary = json(&dir.path().join("summary.json"));
    assert_eq!(summary["converged"], Value::Bool(true));
    assert_eq!(summary["solver"], "gaspin-tr");
    assert_eq!(summary["dim"], 16);
    let iterations = summary["iterations"].as_u64().unwrap() as usize;
    assert_eq!(trace.lines().count(), iterations + 2);

    let reports = fs::read_to_string(dir.path().join("local_reports.jsonl")).unwrap();
    assert_eq!(reports.lines().count(), iterations);
    let first: Value = serde_json::from_str(reports.lines().next().unwrap()).unwrap();
    assert_eq!(first["subdomains"].as_array().unwrap().len(), 4);
}

#[test]
fn trace_header_matches_golden_file() {
    let golden = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/trace_header.csv")).unwrap();
    let dir = TempDir::new().unwrap();
    for solver in ["tr", "gaspin-tr", "gaspin-damping"] {
        let config = write_config(
            &dir,
            &format!("{solver}.json"),
            &format!(r#"{{ "problem": {{ "kind": "quadratic", "n": 8 }}, "solver": "{solver}" }}"#),
        );
        let out = dir.path().join(solver);
        let o = run_cmd("run", &config, &out, &[]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
        assert_eq!(trace.lines().next().unwrap(), golden.trim_end());
        for line in trace.lines().skip(1) {
            assert_eq!(line.split(',').count(), 11);
        }
    }
}

#[test]
fn malformed_config_names_the_offending_key() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("run", &fixture("malformed.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("trust_radius"), "{}", stderr(&o));
}

#[test]
fn unknown_nested_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    for (name, text, key) in [
        ("problem", r#"{ "problem": { "kind": "rosenbrock", "size": 4 }, "solver": "tr" }"#, "size"),
        ("solver", r#"{ "problem": { "kind": "rosenbrock" }, "solver": "tr", "config": { "trust_region": { "radius": 1 } } }"#, "radius"),
        ("start", r#"{ "problem": { "kind": "rosenbrock" }, "solver": "tr", "start": { "kind": "zeros", "value": 1 } }"#, "value"),
    ] {
        let config = write_config(&dir, &format!("{name}.json"), text);
        let o = run_cmd("run", &config, dir.path(), &[]);
        assert_eq!(o.status.code(), Some(2), "{name}");
        assert!(stderr(&o).contains(key), "{name}: {}", stderr(&o));
    }
}

#[test]
fn invalid_constants_are_configuration_errors() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "c.json",
        r#"{ "problem": { "kind": "rosenbrock" }, "solver": "gaspin-tr", "config": { "c1": 0.4, "c2": 0.5 } }"#,
    );
    let o = run_cmd("run", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("c2"));
}

#[test]
fn inverted_elasticity_start_is_infeasible() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("run", &fixture("elasticity_infeasible.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn unconverged_run_exits_with_one() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "short.json",
        r#"{ "problem": { "kind": "rosenbrock" }, "solver": "tr", "config": { "trust_region": { "max_iters": 2 } } }"#,
    );
    let o = run_cmd("run", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    assert!(dir.path().join("trace.csv").exists());
    assert_eq!(json(&dir.path().join("summary.json"))["converged"], Value::Bool(false));
}

#[test]
fn trust_region_and_gaspin_agree_on_rosenbrock() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("compare", &fixture("rosenbrock_compare.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = json(&dir.path().join("compare_summary.json"));
    assert_eq!(summary["agreement"], Value::Bool(true));
    assert_eq!(summary["pairs"].as_array().unwrap().len(), 3);
    for pair in summary["pairs"].as_array().unwrap() {
        assert!(pair["distance"].as_f64().unwrap() <= 1e-4);
    }
    let csv = fs::read_to_string(dir.path().join("compare.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "iter,J_tr,gnorm_tr,J_gaspin-tr,gnorm_gaspin-tr,J_gaspin-damping,gnorm_gaspin-damping"
    );
    for label in ["tr", "gaspin-tr", "gaspin-damping"] {
        assert!(dir.path().join(format!("trace_{label}.csv")).exists());
    }
}

#[test]
fn distinct_basins_report_disagreement_with_a_warning() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("compare", &fixture("multiwell_compare.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let summary = json(&dir.path().join("compare_summary.json"));
    assert_eq!(summary["agreement"], Value::Bool(false));
    assert!(summary["pairs"][0]["distance"].as_f64().unwrap() > 1.0);
}

#[test]
fn single_variant_compare_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("compare", &fixture("single_variant.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_suite_passes_on_all_builtin_problems() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("check", &fixture("check_all.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.matches("PASS").count(), 20);
    for kind in ["quadratic", "rosenbrock", "bratu", "elasticity", "tilted-cosine"] {
        assert!(out.contains(kind));
    }
}

#[test]
fn corrupted_gradient_fails_the_check_and_names_the_problem() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "corrupt.json",
        r#"{
            "checks": [ { "kind": "quadratic", "n": 8 }, { "kind": "rosenbrock", "n": 8 } ],
            "test_hooks": { "corrupt_gradient": ["rosenbrock"] }
        }"#,
    );
    let o = run_cmd("check", &config, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("rosenbrock (gradient-fd)"), "{err}");
    assert!(!err.contains("quadratic"), "{err}");
}

#[test]
fn empty_check_list_is_a_configuration_error() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("check", &fixture("check_empty.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn identical_config_and_seed_give_identical_traces() {
    let dir = TempDir::new().unwrap();
    let config = write_config(
        &dir,
        "random.json",
        r#"{
            "problem": { "kind": "rosenbrock", "n": 12 },
            "decomposition": { "blocks": 3 },
            "solver": "gaspin-damping",
            "start": { "kind": "random", "low": -1.0, "high": 2.0 }
        }"#,
    );
    let trace = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let o = run_cmd("run", &config, &out, extra);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read(out.join("trace.csv")).unwrap()
    };
    let a = trace("a", &["--seed", "5", "--workers", "1"]);
    let b = trace("b", &["--seed", "5", "--workers", "1"]);
    let c = trace("c", &["--seed", "5", "--workers", "4"]);
    let d = trace("d", &["--seed", "6", "--workers", "1"]);
    assert_eq!(a, b);
    assert_eq!(a, c);
    assert_ne!(a, d);
}

#[test]
fn dumped_schwarz_operator_is_the_block_diagonal_hessian() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("dump-schwarz", &fixture("schwarz_small.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("schwarz_c.csv")).unwrap();
    let c: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(c.len(), 8);
    for i in 0..8_usize {
        for j in 0..8 {
            let same_block = i / 4 == j / 4;
            let expected = if i == j {
                2.5
            } else if same_block && i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            };
            assert_eq!(c[i][j], expected, "entry ({i}, {j})");
        }
    }
}

#[test]
fn missing_config_file_exits_with_two() {
    let dir = TempDir::new().unwrap();
    let o = run_cmd("run", &dir.path().join("absent.json"), dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_fixtures_run_cleanly() {
    let dir = TempDir::new().unwrap();
    for (cmd, name) in [
        ("run", "quadratic_aspin_reduction.json"),
        ("run", "damping_overlap.json"),
        ("compare", "quadratic_compare.json"),
        ("compare", "bratu_compare.json"),
        ("compare", "elasticity_compare.json"),
    ] {
        let o = run_cmd(cmd, &fixture(name), &dir.path().join(name), &[]);
        assert_eq!(o.status.code(), Some(0), "{name}: {}", stderr(&o));
        if cmd == "compare" {
            let summary = json(&dir.path().join(name).join("compare_summary.json"));
            assert_eq!(summary["agreement"], Value::Bool(true), "{name}");
        }
    }
    let summary = json(&dir.path().join("quadratic_aspin_reduction.json").join("summary.json"));
    assert!(summary["iterations"].as_u64().unwrap() <= 3);
}
