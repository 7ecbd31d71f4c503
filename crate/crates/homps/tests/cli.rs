use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use homps::output::parse_series_csv;
use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_homps"))
}

fn mini_sbm() -> Value {
    json!({
        "model": {"type": "sbm", "epsilon": 1.0, "delta": 1.0},
        "bath": {"spectral_density": {"type": "debye", "eta": 0.5, "gamma": 0.25}, "temperature": 2.0, "modes": 1},
        "method": "homps",
        "nonlinear": true,
        "dt": 0.01,
        "t_final": 2.0,
        "record_every": 20,
        "hierarchy": {"n_max": 6},
        "homps": {"svd_tol": 1e-10},
        "trajectories": 10,
        "seed": 7,
        "output": {"prefix": "mini"}
    })
}

fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn run_to(dir: &Path, cfg: &Value, extra: &[&str]) -> Output {
    let path = write_config(dir, "cfg.json", cfg);
    let out_dir = dir.join("out");
    let mut args = vec!["--config", path.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    args.push("run");
    run(&args)
}

#[test]
fn malformed_json_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\n  \"model\": {\"type\": \"sbm\",\n").unwrap();
    let out = run(&["--config", p.to_str().unwrap(), "run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));
}

#[test]
fn unknown_fields_and_bad_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let mut unknown = mini_sbm();
    unknown["colour"] = json!("blue");
    let mut negative_dt = mini_sbm();
    negative_dt["dt"] = json!(-0.1);
    let mut zero_nmax = mini_sbm();
    zero_nmax["hierarchy"]["n_max"] = json!(0);
    for (i, cfg) in [unknown, negative_dt, zero_nmax].iter().enumerate() {
        let p = write_config(dir.path(), &format!("c{i}.json"), cfg);
        let out = run(&["--config", p.to_str().unwrap(), "run"]);
        assert_eq!(code(&out), 2, "case {i}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn missing_config_and_bad_flags_exit_with_two() {
    assert_eq!(code(&run(&["run"])), 2);
    assert_eq!(code(&run(&["--trajectories", "many", "run"])), 2);
}

#[test]
fn exhausted_failure_budget_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mini_sbm();
    cfg["homps"] = json!({"svd_tol": 0.3, "trunc_limit": 1e-9});
    let out = run_to(dir.path(), &cfg, &[]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn oracle_diff_against_a_zero_tolerance_fails_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mini_sbm();
    cfg["trajectories"] = json!(1);
    cfg["t_final"] = json!(0.5);
    let p = write_config(dir.path(), "c.json", &cfg);
    let ok = run(&["--config", p.to_str().unwrap(), "oracle-diff", "--tol", "1e-4"]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let strict = run(&["--config", p.to_str().unwrap(), "oracle-diff", "--tol", "0"]);
    assert_eq!(code(&strict), 3);
}

#[test]
fn decompose_prints_modes_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &mini_sbm());
    let out = run(&["--config", p.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "decompose"]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["modes"].as_array().unwrap().len(), 1);
    assert!((doc["modes"][0]["re_nu"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!(dir.path().join("mini.decomposition.json").exists());
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run_to(d.path(), &mini_sbm(), &[]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["mini.csv", "mini.meta.json", "mini.trace.csv"] {
        assert_eq!(read(&a.path().join("out").join(f)), read(&b.path().join("out").join(f)), "{f}");
    }
}

#[test]
fn worker_count_does_not_change_results() {
    let one = tempfile::tempdir().unwrap();
    let three = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_to(one.path(), &mini_sbm(), &["--workers", "1"])), 0);
    assert_eq!(code(&run_to(three.path(), &mini_sbm(), &["--workers", "3"])), 0);
    let parse = |d: &Path| parse_series_csv(&String::from_utf8(read(&d.join("out/mini.csv"))).unwrap()).unwrap();
    let (x, y) = (parse(one.path()), parse(three.path()));
    assert_eq!(x.labels, y.labels);
    for (rx, ry) in x.values.iter().zip(&y.values) {
        for (a, b) in rx.iter().zip(ry) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn fixed_seed_run_matches_the_golden_series() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run_to(dir.path(), &mini_sbm(), &[])), 0);
    let got = parse_series_csv(&String::from_utf8(read(&dir.path().join("out/mini.csv"))).unwrap()).unwrap();
    let golden_path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/mini.csv");
    let golden = parse_series_csv(&std::fs::read_to_string(golden_path).unwrap()).unwrap();
    assert_eq!(got.labels, golden.labels);
    assert_eq!(got.times, golden.times);
    for (rg, rw) in got.values.iter().chain(&got.stderr).zip(golden.values.iter().chain(&golden.stderr)) {
        for (a, b) in rg.iter().zip(rw) {
            assert!((a - b).abs() <= 1e-10, "{a} vs golden {b}");
        }
    }
    assert_eq!(got.bond_max, golden.bond_max);
}

#[test]
fn zero_duration_gives_the_initial_row_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mini_sbm();
    cfg["t_final"] = json!(0.0);
    assert_eq!(code(&run_to(dir.path(), &cfg, &[])), 0);
    let s = parse_series_csv(&String::from_utf8(read(&dir.path().join("out/mini.csv"))).unwrap()).unwrap();
    assert_eq!(s.times, vec![0.0]);
    let z = s.labels.iter().position(|l| l == "sigma_z_0").unwrap();
    assert_eq!(s.values[0][z], 1.0);
}

#[test]
fn standard_error_shrinks_with_the_square_root_of_the_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mini_sbm();
    cfg["method"] = json!("dense");
    cfg["observables"] = json!([{"type": "sigma_z", "site": 0}]);
    let mut mean_se = Vec::new();
    for n in [100, 1000] {
        cfg["trajectories"] = json!(n);
        cfg["output"]["prefix"] = json!(format!("n{n}"));
        assert_eq!(code(&run_to(dir.path(), &cfg, &[])), 0);
        let text = String::from_utf8(read(&dir.path().join(format!("out/n{n}.csv")))).unwrap();
        let s = parse_series_csv(&text).unwrap();
        let se: Vec<f64> = s.stderr.iter().skip(1).map(|r| r[0]).collect();
        mean_se.push(se.iter().sum::<f64>() / se.len() as f64);
    }
    let ratio = mean_se[0] / mean_se[1];
    let expected = 10f64.sqrt();
    assert!(ratio > expected / 1.5 && ratio < expected * 1.5, "ratio {ratio}");
}

#[test]
fn dense_and_tensor_train_observables_agree() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = mini_sbm();
    cfg["homps"] = json!({"svd_tol": 1e-12});
    cfg["trajectories"] = json!(4);
    let mut series = Vec::new();
    for m in ["dense", "homps"] {
        cfg["method"] = json!(m);
        cfg["output"]["prefix"] = json!(m);
        assert_eq!(code(&run_to(dir.path(), &cfg, &[])), 0);
        let text = String::from_utf8(read(&dir.path().join(format!("out/{m}.csv")))).unwrap();
        series.push(parse_series_csv(&text).unwrap());
    }
    let (d, h) = (&series[0], &series[1]);
    assert_eq!(d.labels, h.labels);
    for (rd, rh) in d.values.iter().zip(&h.values) {
        for (a, b) in rd.iter().zip(rh) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
    }
}

#[test]
fn noise_check_passes_for_a_moderate_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let p = write_config(dir.path(), "c.json", &mini_sbm());
    let dump = dir.path().join("path.csv");
    let out = run(&["--config", p.to_str().unwrap(), "noise-check", "--paths", "4000", "--dump", dump.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 5);
    assert!(dump.exists());
}
