//! Ensemble orchestration: trajectories run on a worker pool and are reduced
//! in trajectory-index order.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use homps_core::bath::{BathMode, FitReport};
use homps_core::ensemble::EnsembleAccumulator;
use homps_core::hierarchy::{DenseHierarchy, DenseTrajectory, Truncation};
use homps_core::homps::{steps_for, HompsConfig, HompsSolver};
use homps_core::models::SystemModel;
use homps_core::noise::NoisePath;
use homps_core::trajectory::{run_trajectory, TrajectoryRecord};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Method, RunConfig};
use crate::error::{setup_error, DriverError, Result};
use crate::noise::NoiseGenerator;

pub enum Engine {
    Dense(DenseHierarchy),
    Homps(HompsSolver),
}

/// A validated run with everything shared between trajectories built.
pub struct Prepared {
    pub config: RunConfig,
    pub model: SystemModel,
    pub modes: Vec<BathMode>,
    pub fit: FitReport,
    pub engine: Engine,
    pub noise: Vec<NoiseGenerator>,
    pub steps: usize,
    pub times: Vec<f64>,
}

impl Prepared {
    pub fn new(config: RunConfig) -> Result<Self> {
        config.validate()?;
        let (modes, fit) = config.decomposition()?;
        let model = config.build_model(modes.clone())?;
        let n_max = config.n_max(&model)?;
        let steps = steps_for(config.t_final, config.dt);
        let engine = match config.method {
            Method::Dense => {
                let truncation = match config.hierarchy.triangular_depth {
                    Some(d) => Truncation::Triangular(d),
                    None => Truncation::Cuboid(n_max.concat()),
                };
                Engine::Dense(
                    DenseHierarchy::new(model.dense(), &truncation, config.nonlinear)
                        .map_err(|e| setup_error("hierarchy", e))?,
                )
            }
            Method::Homps => {
                let hc = HompsConfig {
                    n_max,
                    max_bond: config.homps.max_bond.unwrap_or(usize::MAX),
                    svd_tol: config.homps.svd_tol,
                    dt: config.dt,
                    t_final: config.t_final,
                    nonlinear: config.nonlinear,
                    trajectories: config.trajectories,
                    seed: config.seed,
                    trunc_limit: config.homps.trunc_limit,
                };
                Engine::Homps(HompsSolver::new(model.clone(), hc).map_err(|e| setup_error("homps", e))?)
            }
        };
        let noise = model
            .couplings
            .iter()
            .enumerate()
            .map(|(j, c)| NoiseGenerator::new(&c.bath.thermal, config.t_final, 0.5 * config.dt, j))
            .collect::<Result<Vec<_>>>()?;
        let every = config.record_every;
        let times = (0..=steps / every).map(|k| (k * every) as f64 * config.dt).collect();
        Ok(Self { config, model, modes, fit, engine, noise, steps, times })
    }

    pub fn noise_for(&self, trajectory: u64) -> Vec<NoisePath> {
        self.noise.iter().map(|g| g.generate(self.config.seed, trajectory)).collect()
    }

    pub fn trajectory(&self, index: u64) -> homps_core::Result<TrajectoryRecord> {
        let noise = self.noise_for(index);
        self.trajectory_with_noise(&noise)
    }

    pub fn trajectory_with_noise(&self, noise: &[NoisePath]) -> homps_core::Result<TrajectoryRecord> {
        let (dt, every) = (self.config.dt, self.config.record_every);
        match &self.engine {
            Engine::Dense(h) => run_trajectory(DenseTrajectory::new(h), noise, dt, self.steps, every),
            Engine::Homps(s) => run_trajectory(s.trajectory(), noise, dt, self.steps, every),
        }
    }
}

/// Observable time series in column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `values[t][obs]`.
    pub values: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub bond_mean: Option<Vec<f64>>,
    pub bond_max: Option<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRecord {
    pub re_d: f64,
    pub im_d: f64,
    pub re_nu: f64,
    pub im_nu: f64,
}

impl From<&BathMode> for ModeRecord {
    fn from(m: &BathMode) -> Self {
        Self { re_d: m.d.re, im_d: m.d.im, re_nu: m.nu.re, im_nu: m.nu.im }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord {
    pub t_max: f64,
    pub max_abs_error: f64,
    pub relative_error: f64,
    pub worst_time: f64,
    pub alpha0_abs: f64,
    pub error_at_zero: f64,
}

impl From<&FitReport> for FitRecord {
    fn from(r: &FitReport) -> Self {
        Self {
            t_max: r.t_max,
            max_abs_error: r.max_abs_error,
            relative_error: r.relative_error(),
            worst_time: r.worst_time,
            alpha0_abs: r.alpha0_abs,
            error_at_zero: r.error_at_zero,
        }
    }
}

/// Run description written next to the series. Contains nothing that
/// depends on timing, so identical runs give identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub method: Method,
    pub nonlinear: bool,
    pub workers: usize,
    pub trajectories: usize,
    pub accepted: u64,
    pub excluded: u64,
    pub failed: u64,
    pub dt: f64,
    pub steps: usize,
    pub record_every: usize,
    pub noise_fft_len: usize,
    pub modes: Vec<ModeRecord>,
    pub fit: FitRecord,
    pub failures: Vec<String>,
    pub config: serde_json::Value,
}

/// Per-trajectory diagnostics `(t, norm, max_bond, trunc_err)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDiagnostics {
    pub index: u64,
    pub times: Vec<f64>,
    pub norm: Vec<f64>,
    pub max_bond: Vec<usize>,
    pub trunc_err: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub series: Series,
    /// Mean trace of the averaged density matrix before normalization.
    pub raw_trace: Vec<f64>,
    pub trace_stderr: Vec<f64>,
    pub metadata: Metadata,
    pub diagnostics: Vec<TrajectoryDiagnostics>,
    pub wall_time: f64,
}

pub fn run(prepared: &Prepared) -> Result<RunResult> {
    let start = Instant::now();
    let cfg = &prepared.config;
    let mut acc = EnsembleAccumulator::new(
        &prepared.model.site_dims,
        prepared.times.clone(),
        cfg.observables(),
        cfg.nonlinear,
    )
    .map_err(|e| setup_error("observables", e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| DriverError::config("workers", e.to_string()))?;
    let total = cfg.trajectories;
    let budget = cfg.max_failure_fraction * total as f64;
    let batch = 16 * cfg.workers;
    let mut failures = Vec::new();
    let mut diagnostics = Vec::new();
    let mut start_index = 0;
    while start_index < total {
        let end = (start_index + batch).min(total);
        let results: Vec<std::result::Result<TrajectoryRecord, String>> = pool.install(|| {
            (start_index..end)
                .into_par_iter()
                .map(|i| match catch_unwind(AssertUnwindSafe(|| prepared.trajectory(i as u64))) {
                    Ok(Ok(rec)) => Ok(rec),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(_) => Err("worker panicked".to_string()),
                })
                .collect()
        });
        for (i, r) in (start_index..end).zip(results) {
            match r {
                Ok(rec) => {
                    acc.push(&rec).map_err(DriverError::Numerical)?;
                    if (i as u64) < cfg.output.trajectory_diagnostics as u64 {
                        diagnostics.push(TrajectoryDiagnostics {
                            index: i as u64,
                            times: prepared.times.clone(),
                            norm: rec.norm,
                            max_bond: rec.max_bond,
                            trunc_err: rec.trunc_err,
                        });
                    }
                }
                Err(msg) => {
                    acc.record_failure();
                    failures.push(format!("trajectory {i}: {msg}"));
                    if acc.failed as f64 > budget {
                        return Err(DriverError::TooManyFailures { failed: acc.failed, total, limit: cfg.max_failure_fraction });
                    }
                }
            }
        }
        start_index = end;
    }
    let times = prepared.times.clone();
    let labels = acc.labels();
    let n_obs = labels.len();
    let pairs: Vec<Vec<(f64, f64)>> = (0..times.len()).map(|t| (0..n_obs).map(|k| acc.observable(t, k)).collect()).collect();
    let bonds = acc.has_bond_stats();
    let series = Series {
        values: pairs.iter().map(|r| r.iter().map(|p| p.0).collect()).collect(),
        stderr: pairs.iter().map(|r| r.iter().map(|p| p.1).collect()).collect(),
        bond_mean: bonds.then(|| (0..times.len()).map(|t| acc.bond_mean(t)).collect()),
        bond_max: bonds.then(|| (0..times.len()).map(|t| acc.bond_max(t)).collect()),
        times,
        labels,
    };
    let mut embedded = serde_json::to_value(cfg).expect("config serializes");
    if let Some(m) = embedded.as_object_mut() {
        m.remove("output");
    }
    let metadata = Metadata {
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        method: cfg.method,
        nonlinear: cfg.nonlinear,
        workers: cfg.workers,
        trajectories: total,
        accepted: acc.accepted,
        excluded: acc.excluded,
        failed: acc.failed,
        dt: cfg.dt,
        steps: prepared.steps,
        record_every: cfg.record_every,
        noise_fft_len: prepared.noise.first().map_or(0, |g| g.fft_len()),
        modes: prepared.modes.iter().map(ModeRecord::from).collect(),
        fit: FitRecord::from(&prepared.fit),
        failures,
        config: embedded,
    };
    Ok(RunResult {
        raw_trace: (0..series.times.len()).map(|t| acc.raw_trace(t)).collect(),
        trace_stderr: (0..series.times.len()).map(|t| acc.trace_std_err(t)).collect(),
        series,
        metadata,
        diagnostics,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// Trajectory-wise deviation between the two methods on shared noise.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDiff {
    pub trajectories: usize,
    /// Maximum over trajectories, times and components of `|psi0_a - psi0_b|`.
    pub max_abs_diff: f64,
    pub worst_trajectory: u64,
    pub worst_time: f64,
    /// Whether the dense side ran in the single-excitation subspace.
    pub single_exciton: bool,
}

/// Runs every trajectory with both methods and compares the top vectors.
/// For chain models the dense side is the single-excitation subspace.
pub fn oracle_diff(config: &RunConfig) -> Result<OracleDiff> {
    let mut homps_cfg = config.clone();
    homps_cfg.method = Method::Homps;
    let homps = Prepared::new(homps_cfg)?;
    let chain = config.chain_params(homps.modes.clone());
    let dense = match &chain {
        Some(params) => {
            let system = homps_core::models::chain_single_exciton(params).map_err(|e| setup_error("model", e))?;
            let n_max = config.n_max(&homps.model)?;
            DenseHierarchy::new(system, &Truncation::Cuboid(n_max.concat()), config.nonlinear)
                .map_err(|e| setup_error("hierarchy", e))?
        }
        None => {
            let mut dense_cfg = config.clone();
            dense_cfg.method = Method::Dense;
            match Prepared::new(dense_cfg)?.engine {
                Engine::Dense(h) => h,
                Engine::Homps(_) => unreachable!("dense method requested"),
            }
        }
    };
    let mut out = OracleDiff {
        trajectories: config.trajectories,
        max_abs_diff: 0.0,
        worst_trajectory: 0,
        worst_time: 0.0,
        single_exciton: chain.is_some(),
    };
    for i in 0..config.trajectories as u64 {
        let noise = homps.noise_for(i);
        let a = homps.trajectory_with_noise(&noise).map_err(DriverError::Numerical)?;
        let b = run_trajectory(DenseTrajectory::new(&dense), &noise, config.dt, homps.steps, config.record_every)
            .map_err(DriverError::Numerical)?;
        let sites = homps.model.sites();
        for (t, (pa, pb)) in a.psi0.iter().zip(&b.psi0).enumerate() {
            let pa = if chain.is_some() { homps_core::models::single_exciton_amplitudes(pa, sites) } else { pa.clone() };
            let d = (pa - pb).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if d > out.max_abs_diff || d.is_nan() {
                out.max_abs_diff = d;
                out.worst_trajectory = i;
                out.worst_time = homps.times[t];
            }
        }
    }
    Ok(out)
}
