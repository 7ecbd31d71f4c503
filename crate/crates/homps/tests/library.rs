use homps::output::{emit, parse_series_csv};
use homps::{run, Prepared, RunConfig};

const CHAIN: &str = r#"{
  "model": {"type": "chain", "sites": 3, "coupling": {"type": "nearest_neighbor", "v": -1.0}, "initial_site": 0},
  "bath": {"spectral_density": {"type": "two_peak_default"}, "temperature": 0.0, "modes": 2},
  "nonlinear": true,
  "dt": 0.02,
  "t_final": 1.0,
  "record_every": 5,
  "hierarchy": {"n_max": 2},
  "observables": [{"type": "occupation", "site": 0}, {"type": "occupation", "site": 2}, {"type": "bond_stats"}],
  "trajectories": 3,
  "seed": 11,
  "output": {"prefix": "chain", "trajectory_diagnostics": 2}
}"#;

#[test]
fn emitted_files_read_back_to_the_same_series() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_json(CHAIN).unwrap();
    let prepared = Prepared::new(cfg).unwrap();
    let result = run(&prepared).unwrap();
    let files = emit(&result, dir.path(), "chain").unwrap();
    let back = parse_series_csv(&std::fs::read_to_string(&files.series).unwrap()).unwrap();
    assert_eq!(back, result.series);
    assert_eq!(back.labels, vec!["n_0".to_string(), "n_2".to_string()]);
    assert_eq!(files.trajectories.len(), 2);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.metadata).unwrap()).unwrap();
    assert_eq!(meta["accepted"], 3);
    assert_eq!(meta["seed"], 11);
    assert!(meta.get("wall_time").is_none());
    // the excitation starts on the first site and spreads
    assert_eq!(result.series.values[0][0], 1.0);
    assert!(result.series.values.last().unwrap()[0] < 1.0);
}

#[test]
fn config_hash_ignores_workers_and_output() {
    let a = RunConfig::from_json(CHAIN).unwrap();
    let mut b = a.clone();
    b.workers = 4;
    b.output.prefix = "other".into();
    assert_eq!(a.hash(), b.hash());
    let mut c = a.clone();
    c.seed += 1;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn parse_errors_carry_a_position() {
    let err = RunConfig::from_json("{\n  \"model\": 3\n}").unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("line 2"), "{err}");
}
