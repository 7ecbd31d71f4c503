//! CSV and JSON result files.
//!
//! Floats are written with `{:e}`, the shortest representation that reads
//! back to the same value, so emitted files are byte-stable and round-trip.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use homps_core::bath::{BathMode, FitReport};
use homps_core::tensor::TensorTrain;
use serde::Serialize;

use crate::error::{DriverError, Result};
use crate::runner::{FitRecord, ModeRecord, RunResult, Series, TrajectoryDiagnostics};

/// Header `t, obs..., obs_stderr..., [bond_mean, bond_max]`.
pub fn series_csv(s: &Series) -> String {
    let mut out = String::from("t");
    for l in &s.labels {
        write!(out, ",{l}").unwrap();
    }
    for l in &s.labels {
        write!(out, ",{l}_stderr").unwrap();
    }
    let bonds = s.bond_mean.as_ref().zip(s.bond_max.as_ref());
    if bonds.is_some() {
        out.push_str(",bond_mean,bond_max");
    }
    out.push('\n');
    for (i, t) in s.times.iter().enumerate() {
        write!(out, "{t:e}").unwrap();
        for v in s.values[i].iter().chain(&s.stderr[i]) {
            write!(out, ",{v:e}").unwrap();
        }
        if let Some((mean, max)) = bonds {
            write!(out, ",{:e},{}", mean[i], max[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

/// Inverse of [`series_csv`].
pub fn parse_series_csv(text: &str) -> Result<Series> {
    let bad = |row: usize, msg: &str| DriverError::Check(format!("series csv row {row}: {msg}"));
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad(0, "missing header"))?.split(',').collect();
    if header.first() != Some(&"t") {
        return Err(bad(0, "first column must be t"));
    }
    let bonds = header.len() >= 3 && header[header.len() - 2..] == ["bond_mean", "bond_max"];
    let obs_cols = header.len() - 1 - if bonds { 2 } else { 0 };
    if !obs_cols.is_multiple_of(2) {
        return Err(bad(0, "observable and stderr columns must pair up"));
    }
    let n = obs_cols / 2;
    let labels: Vec<String> = header[1..=n].iter().map(|s| s.to_string()).collect();
    for (l, e) in labels.iter().zip(&header[1 + n..1 + 2 * n]) {
        if *e != format!("{l}_stderr") {
            return Err(bad(0, "stderr column out of order"));
        }
    }
    let mut s = Series {
        times: Vec::new(),
        labels,
        values: Vec::new(),
        stderr: Vec::new(),
        bond_mean: bonds.then(Vec::new),
        bond_max: bonds.then(Vec::new),
    };
    for (r, line) in lines.enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != header.len() {
            return Err(bad(r + 1, "wrong number of cells"));
        }
        let num = |c: &str| c.parse::<f64>().map_err(|_| bad(r + 1, "not a number"));
        s.times.push(num(cells[0])?);
        s.values.push(cells[1..=n].iter().map(|c| num(c)).collect::<Result<_>>()?);
        s.stderr.push(cells[1 + n..1 + 2 * n].iter().map(|c| num(c)).collect::<Result<_>>()?);
        if bonds {
            s.bond_mean.as_mut().unwrap().push(num(cells[1 + 2 * n])?);
            let max = cells[2 + 2 * n].parse::<usize>().map_err(|_| bad(r + 1, "bond_max is not an integer"))?;
            s.bond_max.as_mut().unwrap().push(max);
        }
    }
    Ok(s)
}

/// `t, raw_trace, raw_trace_stderr`.
pub fn trace_csv(r: &RunResult) -> String {
    let mut out = String::from("t,raw_trace,raw_trace_stderr\n");
    for ((t, tr), se) in r.series.times.iter().zip(&r.raw_trace).zip(&r.trace_stderr) {
        writeln!(out, "{t:e},{tr:e},{se:e}").unwrap();
    }
    out
}

/// `t, norm, max_bond, trunc_err` of one trajectory.
pub fn trajectory_csv(d: &TrajectoryDiagnostics) -> String {
    let mut out = String::from("t,norm,max_bond,trunc_err\n");
    for i in 0..d.times.len() {
        writeln!(out, "{:e},{:e},{},{:e}", d.times[i], d.norm[i], d.max_bond[i], d.trunc_err[i]).unwrap();
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionDoc {
    pub modes: Vec<ModeRecord>,
    pub fit: FitRecord,
}

pub fn decomposition_doc(modes: &[BathMode], report: &FitReport) -> DecompositionDoc {
    DecompositionDoc { modes: modes.iter().map(ModeRecord::from).collect(), fit: FitRecord::from(report) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct SiteDoc {
    shape: [usize; 3],
    data: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct TrainDoc {
    log_norm: f64,
    sites: Vec<SiteDoc>,
}

/// Debug dump of a tensor train: shapes and flattened `[re, im]` entries.
pub fn train_json(mps: &TensorTrain) -> String {
    let doc = TrainDoc {
        log_norm: mps.log_norm,
        sites: mps
            .sites
            .iter()
            .map(|a| SiteDoc { shape: [a.l, a.p, a.r], data: a.data.iter().map(|z| [z.re, z.im]).collect() })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("train serializes")
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    s
}

pub fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| DriverError::io(path, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Emitted {
    pub series: PathBuf,
    pub metadata: PathBuf,
    pub trace: PathBuf,
    pub timing: PathBuf,
    pub trajectories: Vec<PathBuf>,
}

/// Writes `<prefix>.csv`, `<prefix>.meta.json`, `<prefix>.trace.csv`,
/// `<prefix>.timing.json` and one `<prefix>.traj<i>.csv` per stored
/// trajectory. Wall time lives in the timing file only.
pub fn emit(r: &RunResult, dir: &Path, prefix: &str) -> Result<Emitted> {
    std::fs::create_dir_all(dir).map_err(|e| DriverError::io(dir, e))?;
    let path = |suffix: &str| dir.join(format!("{prefix}{suffix}"));
    let out = Emitted {
        series: path(".csv"),
        metadata: path(".meta.json"),
        trace: path(".trace.csv"),
        timing: path(".timing.json"),
        trajectories: r.diagnostics.iter().map(|d| path(&format!(".traj{}.csv", d.index))).collect(),
    };
    write_file(&out.series, &series_csv(&r.series))?;
    write_file(&out.metadata, &to_json(&r.metadata))?;
    write_file(&out.trace, &trace_csv(r))?;
    write_file(&out.timing, &to_json(&serde_json::json!({ "wall_time_s": r.wall_time })))?;
    for (p, d) in out.trajectories.iter().zip(&r.diagnostics) {
        write_file(p, &trajectory_csv(d))?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(bonds: bool) -> Series {
        Series {
            times: vec![0.0, 0.1, 0.2],
            labels: vec!["sigma_z_0".into(), "abs_rho_0_1".into()],
            values: vec![vec![1.0, 0.0], vec![0.98, 1.0 / 3.0], vec![-1e-17, 0.25]],
            stderr: vec![vec![0.0, 0.0], vec![1e-3, 2e-3], vec![f64::MIN_POSITIVE, 0.5]],
            bond_mean: bonds.then(|| vec![1.0, 1.5, 2.25]),
            bond_max: bonds.then(|| vec![1, 2, 3]),
        }
    }

    #[test]
    fn csv_round_trip() {
        for bonds in [false, true] {
            let s = series(bonds);
            assert_eq!(parse_series_csv(&series_csv(&s)).unwrap(), s);
        }
    }

    #[test]
    fn header_layout() {
        let text = series_csv(&series(true));
        assert_eq!(
            text.lines().next().unwrap(),
            "t,sigma_z_0,abs_rho_0_1,sigma_z_0_stderr,abs_rho_0_1_stderr,bond_mean,bond_max"
        );
    }

    #[test]
    fn empty_observables_give_time_column_only() {
        let s = Series {
            times: vec![0.0, 0.5],
            labels: vec![],
            values: vec![vec![], vec![]],
            stderr: vec![vec![], vec![]],
            bond_mean: None,
            bond_max: None,
        };
        let text = series_csv(&s);
        assert_eq!(text, "t\n0e0\n5e-1\n");
        assert_eq!(parse_series_csv(&text).unwrap(), s);
    }

    #[test]
    fn train_dump_lists_shapes() {
        let v = homps_core::linalg::Vector::from_vec(vec![homps_core::C64::new(1.0, 0.0); 4]);
        let t = TensorTrain::from_dense(&v, &[2, 2]).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&train_json(&t)).unwrap();
        assert_eq!(doc["sites"][0]["shape"], serde_json::json!([1, 2, 2]));
        assert_eq!(doc["sites"][1]["data"].as_array().unwrap().len(), 4);
        assert_eq!(doc["sites"].as_array().unwrap().len(), 2);
    }
}
