use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use quadgen::cli::{read_csv, BenchmarkRow, SummaryRow};
use quadgen::orthopoly::gauss_legendre;
use quadgen::reduce::QuadratureRule;

fn quadgen(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quadgen")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn generate_gauss_legendre_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u1.json", r#"{"measure": {"type": "uniform", "dim": 1}}"#);
    let out = dir.path().join("rule.json");
    let o = quadgen(&["generate", "--measure", &cfg, "--degree", "9", "--seed", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rule = QuadratureRule::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rule.len(), 5);
    let gl = gauss_legendre(5).unwrap();
    let mut pairs: Vec<(f64, f64)> = rule.nodes.iter().map(|x| x[0]).zip(rule.weights.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for ((x, w), (gx, gw)) in pairs.iter().zip(gl.nodes.iter().zip(&gl.weights)) {
        assert!((x - gx).abs() < 1e-8 && (w - gw).abs() < 1e-8);
    }

    let o = quadgen(&["verify", "--rule", out.to_str().unwrap(), "--tol", "1e-8"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(report["residual_l2"].as_f64().unwrap() < 1e-8);
}

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "u2.json", r#"{"measure": {"type": "uniform", "dim": 2}, "degree": 6}"#);
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    let init = dir.path().join("init.json");
    for out in [&a, &b] {
        let o = quadgen(&[
            "generate",
            "--measure",
            &cfg,
            "--seed",
            "11",
            "--out",
            out.to_str().unwrap(),
            "--dump-initial",
            init.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let initial = QuadratureRule::from_json(&fs::read_to_string(&init).unwrap()).unwrap();
    assert_eq!(initial.metadata.method, "l1-initial");
}

#[test]
fn usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", r#"{"measure": {"type": "octagon", "dim": 2}}"#);
    let out = dir.path().join("rule.json");
    let o = quadgen(&["generate", "--measure", &cfg, "--degree", "4", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("octagon"));
    assert_eq!(quadgen(&["generate", "--degree", "4"]).status.code(), Some(2));
    assert_eq!(quadgen(&["indexset", "--dim", "x", "--degree", "2"]).status.code(), Some(2));
}

#[test]
fn indexset_reports_lower_bound() {
    let o = quadgen(&["indexset", "--dim", "2", "--degree", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["size"], 231);
    assert_eq!(v["lower_bound"], 66);
}

#[test]
fn gauss_and_baseline_commands() {
    let o = quadgen(&["gauss", "--points", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let x = v["nodes"][2].as_f64().unwrap();
    assert!((x - 0.6f64.sqrt()).abs() < 1e-14);

    let o = quadgen(&["baseline", "--kind", "stroud3", "--dim", "4"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["nodes"].as_array().unwrap().len(), 8);
}

#[test]
fn moments_then_generate_from_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "jac.json",
        r#"{"measure": {"type": "tensor", "factors": [
            {"family": "jacobi", "alpha": 1, "beta": 1, "lower": -1, "upper": 1},
            {"family": "uniform", "lower": 0, "upper": 2}]}}"#,
    );
    let problem = dir.path().join("problem.json");
    let o = quadgen(&["moments", "--measure", &cfg, "--degree", "4", "--out", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let rule = dir.path().join("rule.json");
    let o = quadgen(&["generate", "--problem", problem.to_str().unwrap(), "--out", rule.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let o = quadgen(&["verify", "--rule", rule.to_str().unwrap(), "--problem", problem.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn benchmark_writes_tidy_csv() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write(
        dir.path(),
        "spec.json",
        r#"{"integrand": {"name": "mcp", "dim": 3}, "methods": ["reduced", "sobol", "stroud2"],
            "degrees": [3], "sizes": [32, 128], "repetitions": 2}"#,
    );
    let out = dir.path().join("conv.csv");
    let o = quadgen(&["benchmark", "--spec", &spec, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# quadgen.benchmark.v1\nmethod,param,samples,n_points,rep,abs_error,success\n"));
    let rows: Vec<BenchmarkRow> = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 2 + 2 + 1);
    let summary: Vec<SummaryRow> = read_csv(&dir.path().join("conv.summary.csv")).unwrap();
    assert_eq!(summary.len(), 4);
    assert!(summary.iter().all(|s| s.min <= s.median && s.median <= s.max));
}
