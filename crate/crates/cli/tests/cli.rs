use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn run(dir: &Path, mut cfg: Value) -> (Output, std::path::PathBuf) {
    let out = dir.join("out");
    cfg["output_dir"] = out.to_string_lossy().into_owned().into();
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_string()).unwrap();
    let output = Command::new(env!("CARGO_BIN_EXE_mfg-newton"))
        .args(["run", "--config"])
        .arg(&path)
        .output()
        .unwrap();
    (output, out)
}

fn summary(out: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(out.join("summary.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

fn column(name: &str) -> usize {
    "run,experiment,method,epsilon,nx,nt,iterations,q,c,fit_points,final_residual,metric,metric_value,status,error_class"
        .split(',')
        .position(|c| c == name)
        .unwrap()
}

fn small(experiment: &str) -> Value {
    json!({
        "experiment": experiment,
        "grid": {"dim": 1, "nx": 32, "nt": 32, "T": 1.0},
        "hamiltonian": {"variant": "congestion", "alpha": 1.0, "h": "constant"},
        "coupling": {"type": "local", "variant": "sigmoid"},
        "newton": {"max_iter": 12, "residual_tol": 1e-11},
        "epsilons": [1e-2]
    })
}

#[test]
fn newton_rate_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (output, out) = run(dir.path(), small("newton-rate"));
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let rows = summary(&out);
    assert_eq!(rows.len(), 1);
    let q: f64 = rows[0][column("q")].parse().unwrap();
    assert!(q > 1.5, "{q}");
    assert_eq!(rows[0][column("status")], "ok");
    let history = fs::read_to_string(out.join("history.csv")).unwrap();
    assert!(history.starts_with("iter,res_u_sup,res_m_sup,err_c10_u,err_c0_m,err_sum,mass_min,mass_max,wall_ms\n"));
    assert!(history.contains("# run=newton_eps1e-2"));
    assert!(history.lines().any(|l| l.starts_with("# fit: q=")));
    assert!(out.join("fields_u_newton_eps1e-2.csv").exists());
    assert!(out.join("fields_m_newton_eps1e-2.csv").exists());
    // nothing written beside the output directory
    let entries: Vec<_> = fs::read_dir(dir.path()).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(entries.len(), 2, "{entries:?}");
}

#[test]
fn hessian_sweep_flags_strong_congestion() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("hessian-sweep");
    cfg["hamiltonian"]["alpha"] = 3.0.into();
    let (output, out) = run(dir.path(), cfg);
    assert!(output.status.success());
    let text = fs::read_to_string(out.join("hessian_sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("alpha,m,p,min_eig,satisfied"));
    let failing = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .any(|f| f[2].parse::<f64>().unwrap() != 0.0 && f[4] == "false");
    assert!(failing);
}

#[test]
fn tiny_grid_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("newton-rate");
    cfg["grid"]["nx"] = 2.into();
    let (output, out) = run(dir.path(), cfg);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("grid.nx") && stderr.contains("at least 4"), "{stderr}");
    assert!(!out.exists());
}

#[test]
fn unknown_key_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("newton-rate");
    cfg["newton"]["tolerance"] = 1e-9.into();
    let (output, _) = run(dir.path(), cfg);
    assert_eq!(output.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&output.stderr).contains("newton"));
}

#[test]
fn solver_failure_exits_three_with_class() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("newton-rate");
    cfg["newton"] = json!({"max_iter": 1, "residual_tol": 1e-14});
    let (output, out) = run(dir.path(), cfg);
    assert_eq!(output.status.code(), Some(3));
    let rows = summary(&out);
    assert_eq!(rows[0][column("status")], "error");
    assert_eq!(rows[0][column("error_class")], "MaxIterExceeded");
}

#[test]
fn fixed_point_needs_more_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("fixed-point-compare");
    cfg["newton"]["residual_tol"] = 1e-9.into();
    cfg["workers"] = 2.into();
    let (output, out) = run(dir.path(), cfg);
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    let rows = summary(&out);
    assert_eq!(rows[0][column("method")], "newton");
    assert_eq!(rows[1][column("method")], "fixed-point");
    let it = |r: &Vec<String>| r[column("iterations")].parse::<usize>().unwrap();
    assert!(it(&rows[0]) < it(&rows[1]));
}

#[test]
fn nonlocal_rate_and_verify() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("nonlocal-rate");
    cfg["hamiltonian"] = json!({"variant": "separable-quadratic"});
    cfg["coupling"] = json!({"type": "nonlocal", "sigma": 0.1});
    let (output, out) = run(dir.path(), cfg.clone());
    assert!(output.status.success(), "{}", String::from_utf8_lossy(&output.stderr));
    assert!(!summary(&out)[0][column("q")].is_empty());

    let dir = tempfile::tempdir().unwrap();
    cfg["experiment"] = "manufactured-verify".into();
    let (output, out) = run(dir.path(), cfg);
    assert!(output.status.success());
    let row = &summary(&out)[0];
    assert_eq!(row[column("metric")], "exact_residual");
    assert!(row[column("metric_value")].parse::<f64>().unwrap() <= 1e-13);
}

#[test]
fn identical_configs_give_identical_outputs() {
    let mut cfg = small("lemma-stability");
    cfg["lemma"] = json!({"draws": 4, "grids": [[16, 8], [16, 16]]});
    cfg["seed"] = 42.into();
    cfg["workers"] = 2.into();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (oa, out_a) = run(a.path(), cfg.clone());
    let (ob, out_b) = run(b.path(), cfg);
    assert!(oa.status.success() && ob.status.success());
    for name in ["summary.csv", "history.csv"] {
        assert_eq!(fs::read(out_a.join(name)).unwrap(), fs::read(out_b.join(name)).unwrap(), "{name}");
    }
    let rows = summary(&out_a);
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][column("metric")], "max_ratio");

    let mut cfg = small("newton-rate");
    cfg["epsilons"] = json!([1e-2, 2e-2]);
    cfg["workers"] = 2.into();
    let (_, out_a) = run(a.path(), cfg.clone());
    let (_, out_b) = run(b.path(), cfg);
    for name in ["summary.csv", "history.csv", "fields_u_newton_eps2e-2.csv"] {
        assert_eq!(fs::read(out_a.join(name)).unwrap(), fs::read(out_b.join(name)).unwrap(), "{name}");
    }
}
