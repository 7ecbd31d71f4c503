//! Command-line front end.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{Method, Overrides, RunConfig};
use crate::error::{DriverError, Result};
use crate::noise::{check_statistics, NoiseGenerator};
use crate::output;
use crate::runner::{self, Prepared};

#[derive(Debug, Parser)]
#[command(name = "homps", version, about = "Stochastic hierarchy of pure states, dense and tensor-train")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// JSON run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub trajectories: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub method: Option<Method>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponential decomposition of the bath and its deviation from quadrature.
    Decompose,
    /// Monte-Carlo statistics of the generated noise.
    NoiseCheck {
        #[arg(long, default_value_t = 100_000)]
        paths: u64,
        /// Probe times, comma separated.
        #[arg(long, value_delimiter = ',', default_values_t = [0.0, 1.0, 2.0, 4.0])]
        probes: Vec<f64>,
        /// Largest accepted deviation in standard errors.
        #[arg(long, default_value_t = 3.0)]
        max_z: f64,
        /// Also write one path as CSV.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
    /// Ensemble run; writes the series, metadata and diagnostics.
    Run,
    /// Trajectory-wise comparison of the tensor-train and dense methods.
    OracleDiff {
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
    },
}

impl GlobalArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            trajectories: self.trajectories,
            method: self.method,
            out_dir: self.out_dir.clone(),
            workers: self.workers,
        }
    }

    fn load(&self) -> Result<RunConfig> {
        let path = self.config.as_ref().ok_or_else(|| DriverError::config("--config", "a configuration file is required"))?;
        let mut cfg = RunConfig::load(path)?;
        cfg.apply(&self.overrides());
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Executes the command and returns the text for standard output.
pub fn execute(cli: &Cli) -> Result<String> {
    let cfg = cli.global.load()?;
    match &cli.command {
        Command::Decompose => {
            let (modes, report) = cfg.decomposition()?;
            let text = output::to_json(&output::decomposition_doc(&modes, &report));
            if let Some(dir) = &cli.global.out_dir {
                std::fs::create_dir_all(dir).map_err(|e| DriverError::io(dir, e))?;
                output::write_file(&dir.join(format!("{}.decomposition.json", cfg.output.prefix)), &text)?;
            }
            Ok(text)
        }
        Command::NoiseCheck { paths, probes, max_z, dump } => {
            let bath = cfg.thermal_bath()?;
            let t_end = probes.iter().copied().fold(cfg.t_final, f64::max);
            let g = NoiseGenerator::new(&bath, t_end, 0.5 * cfg.dt, 0)?;
            if let Some(p) = dump {
                crate::noise::write_csv(p, &g.generate(cfg.seed, 0))?;
            }
            let stats = check_statistics(&g, cfg.seed, *paths, probes, |t| {
                bath.correlation(t).map_err(DriverError::Numerical)
            })?;
            let mut text = String::from("t,alpha_re,alpha_im,corr_re,corr_im,corr_se_re,corr_se_im,pseudo_re,pseudo_im,worst_z\n");
            let mut worst: f64 = 0.0;
            for s in &stats {
                worst = worst.max(s.worst_z());
                text.push_str(&format!(
                    "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:.3}\n",
                    s.t,
                    s.reference.re,
                    s.reference.im,
                    s.correlation.mean.re,
                    s.correlation.mean.im,
                    s.correlation.se_re,
                    s.correlation.se_im,
                    s.pseudo.mean.re,
                    s.pseudo.mean.im,
                    s.worst_z()
                ));
            }
            if worst > *max_z {
                return Err(DriverError::Check(format!("{text}noise statistics deviate by {worst:.3} standard errors")));
            }
            Ok(text)
        }
        Command::Run => {
            let prepared = Prepared::new(cfg)?;
            let result = runner::run(&prepared)?;
            let c = &prepared.config;
            let emitted = output::emit(&result, &c.output.dir, &c.output.prefix)?;
            Ok(format!(
                "{} trajectories ({} excluded, {} failed) in {:.2} s\nwrote {}\n",
                result.metadata.accepted,
                result.metadata.excluded,
                result.metadata.failed,
                result.wall_time,
                emitted.series.display()
            ))
        }
        Command::OracleDiff { tol } => {
            let diff = runner::oracle_diff(&cfg)?;
            let text = output::to_json(&diff);
            if !(diff.max_abs_diff <= *tol) {
                return Err(DriverError::Check(format!("{text}deviation {:e} exceeds {tol:e}", diff.max_abs_diff)));
            }
            Ok(text)
        }
    }
}
