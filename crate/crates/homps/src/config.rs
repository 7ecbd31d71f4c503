//! JSON run configuration.
//!
//! Precedence: command-line overrides, then the file, then the defaults
//! below. Unknown fields are rejected.

use std::path::{Path, PathBuf};

use homps_core::bath::{BathMode, BathSpec, FitOptions, FitReport, Lorentzian, SpectralDensity, ThermalBath};
use homps_core::ensemble::Observable;
use homps_core::linalg::Vector;
use homps_core::models::{self, ChainCoupling, ChainParams, SystemModel};
use homps_core::C64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{setup_error, DriverError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub bath: BathConfig,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub nonlinear: bool,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub hierarchy: HierarchyConfig,
    #[serde(default)]
    pub homps: HompsSection,
    /// `None` selects per-model defaults; an empty list emits only `t`.
    #[serde(default)]
    pub observables: Option<Vec<ObservableConfig>>,
    #[serde(default = "one")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default = "default_failure_fraction")]
    pub max_failure_fraction: f64,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_dt() -> f64 {
    1e-2
}

fn one() -> usize {
    1
}

fn default_failure_fraction() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Dense,
    #[default]
    Homps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Sbm {
        epsilon: f64,
        delta: f64,
        /// Amplitudes `[re, im]` of the initial state, normalized on load.
        #[serde(default)]
        initial: Option<Vec<[f64; 2]>>,
    },
    Chain {
        #[serde(default = "default_sites")]
        sites: usize,
        /// Site energies; zeros when absent.
        #[serde(default)]
        energies: Option<Vec<f64>>,
        #[serde(default)]
        coupling: CouplingConfig,
        #[serde(default)]
        initial_site: usize,
    },
}

fn default_sites() -> usize {
    5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    NearestNeighbor {
        #[serde(default = "default_v")]
        v: f64,
    },
    Dipole,
}

fn default_v() -> f64 {
    -1.0
}

impl Default for CouplingConfig {
    fn default() -> Self {
        CouplingConfig::NearestNeighbor { v: default_v() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathConfig {
    pub spectral_density: SpectralConfig,
    pub temperature: f64,
    #[serde(default = "one")]
    pub modes: usize,
    /// Maximum accepted deviation of the mode sum from the quadrature.
    #[serde(default)]
    pub fit_tolerance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectralConfig {
    Debye { eta: f64, gamma: f64 },
    LorentzianSum { peaks: Vec<PeakConfig> },
    TwoPeakDefault,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeakConfig {
    pub weight: f64,
    pub center: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NMax {
    Uniform(usize),
    PerMode(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HierarchyConfig {
    #[serde(default = "default_n_max")]
    pub n_max: NMax,
    /// Dense method only: triangular truncation instead of the cuboid one.
    #[serde(default)]
    pub triangular_depth: Option<usize>,
}

fn default_n_max() -> NMax {
    NMax::Uniform(4)
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self { n_max: default_n_max(), triangular_depth: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HompsSection {
    /// Unlimited when absent.
    #[serde(default)]
    pub max_bond: Option<usize>,
    #[serde(default = "default_svd_tol")]
    pub svd_tol: f64,
    #[serde(default = "default_trunc_limit")]
    pub trunc_limit: f64,
}

fn default_svd_tol() -> f64 {
    1e-12
}

fn default_trunc_limit() -> f64 {
    1e-3
}

impl Default for HompsSection {
    fn default() -> Self {
        Self { max_bond: None, svd_tol: default_svd_tol(), trunc_limit: default_trunc_limit() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableConfig {
    Population { index: usize },
    SigmaZ { site: usize },
    Occupation { site: usize },
    Coherence { i: usize, j: usize },
    BondStats,
}

impl From<ObservableConfig> for Observable {
    fn from(o: ObservableConfig) -> Self {
        match o {
            ObservableConfig::Population { index } => Observable::Population(index),
            ObservableConfig::SigmaZ { site } => Observable::SigmaZ(site),
            ObservableConfig::Occupation { site } => Observable::Occupation(site),
            ObservableConfig::Coherence { i, j } => Observable::Coherence(i, j),
            ObservableConfig::BondStats => Observable::BondStats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
    #[serde(default = "default_prefix")]
    pub prefix: String,
    /// Number of leading trajectories whose diagnostics are written out.
    #[serde(default)]
    pub trajectory_diagnostics: usize,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_prefix() -> String {
    "run".into()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: default_dir(), prefix: default_prefix(), trajectory_diagnostics: 0 }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trajectories: Option<usize>,
    pub method: Option<Method>,
    pub out_dir: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| DriverError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| DriverError::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(n) = o.trajectories {
            self.trajectories = n;
        }
        if let Some(m) = o.method {
            self.method = m;
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = d.clone();
        }
        if let Some(w) = o.workers {
            self.workers = w;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(DriverError::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("dt", self.dt)?;
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(DriverError::config("t_final", format!("must be non-negative, got {}", self.t_final)));
        }
        if self.record_every == 0 {
            return Err(DriverError::config("record_every", "must be at least 1"));
        }
        if self.trajectories == 0 {
            return Err(DriverError::config("trajectories", "must be at least 1"));
        }
        if self.workers == 0 {
            return Err(DriverError::config("workers", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.max_failure_fraction) {
            return Err(DriverError::config("max_failure_fraction", "must lie in [0, 1]"));
        }
        if self.homps.max_bond == Some(0) {
            return Err(DriverError::config("homps.max_bond", "must be at least 1"));
        }
        if !(self.homps.svd_tol >= 0.0 && self.homps.svd_tol < 1.0) {
            return Err(DriverError::config("homps.svd_tol", "must lie in [0, 1)"));
        }
        positive("homps.trunc_limit", self.homps.trunc_limit)?;
        if self.bath.modes == 0 {
            return Err(DriverError::config("bath.modes", "must be at least 1"));
        }
        if let Some(t) = self.bath.fit_tolerance {
            positive("bath.fit_tolerance", t)?;
        }
        match &self.hierarchy.n_max {
            NMax::Uniform(0) => return Err(DriverError::config("hierarchy.n_max", "must be at least 1")),
            NMax::PerMode(v) if v.contains(&0) => {
                return Err(DriverError::config("hierarchy.n_max", "every entry must be at least 1"))
            }
            _ => {}
        }
        if self.hierarchy.triangular_depth.is_some() && self.method == Method::Homps {
            return Err(DriverError::config("hierarchy.triangular_depth", "only the dense method supports triangular truncation"));
        }
        if self.output.prefix.is_empty() || self.output.prefix.contains(['/', '\\']) {
            return Err(DriverError::config("output.prefix", "must be a non-empty file name"));
        }
        if let ModelConfig::Chain { sites, energies, initial_site, .. } = &self.model {
            if *sites < 2 {
                return Err(DriverError::config("model.sites", "a chain needs at least two sites"));
            }
            if energies.as_ref().is_some_and(|e| e.len() != *sites) {
                return Err(DriverError::config("model.energies", "needs one entry per site"));
            }
            if initial_site >= sites {
                return Err(DriverError::config("model.initial_site", "outside the chain"));
            }
        }
        Ok(())
    }

    pub fn thermal_bath(&self) -> Result<ThermalBath> {
        let sd = match &self.bath.spectral_density {
            SpectralConfig::Debye { eta, gamma } => SpectralDensity::Debye { eta: *eta, gamma: *gamma },
            SpectralConfig::LorentzianSum { peaks } => SpectralDensity::LorentzianSum(
                peaks.iter().map(|p| Lorentzian { weight: p.weight, center: p.center, width: p.width }).collect(),
            ),
            SpectralConfig::TwoPeakDefault => SpectralDensity::two_peak_default(),
        };
        let bath = ThermalBath::new(sd, self.bath.temperature);
        bath.validate().map_err(|e| setup_error("bath", e))?;
        Ok(bath)
    }

    /// Mode table with its fit report, checking `fit_tolerance` if given.
    pub fn decomposition(&self) -> Result<(Vec<BathMode>, FitReport)> {
        let bath = self.thermal_bath()?;
        let opts = FitOptions { tolerance: self.bath.fit_tolerance, ..FitOptions::default() };
        let d = bath.decompose(self.bath.modes, opts).map_err(|e| setup_error("bath.modes", e))?;
        Ok((d.modes, d.report))
    }

    pub fn chain_params(&self, modes: Vec<BathMode>) -> Option<ChainParams> {
        match &self.model {
            ModelConfig::Chain { sites, energies, coupling, initial_site } => Some(ChainParams {
                energies: energies.clone().unwrap_or_else(|| vec![0.0; *sites]),
                coupling: match *coupling {
                    CouplingConfig::NearestNeighbor { v } => ChainCoupling::NearestNeighbor(v),
                    CouplingConfig::Dipole => ChainCoupling::Dipole,
                },
                bath: BathSpec::new(self.thermal_bath().ok()?, modes),
                initial_site: *initial_site,
            }),
            ModelConfig::Sbm { .. } => None,
        }
    }

    pub fn build_model(&self, modes: Vec<BathMode>) -> Result<SystemModel> {
        let thermal = self.thermal_bath()?;
        let model = match &self.model {
            ModelConfig::Sbm { epsilon, delta, initial } => {
                let m = models::build_sbm(*epsilon, *delta, BathSpec::new(thermal, modes));
                match initial {
                    Some(amps) => {
                        if amps.len() != 2 {
                            return Err(DriverError::config("model.initial", "needs two amplitudes"));
                        }
                        let v = Vector::from_iterator(2, amps.iter().map(|a| C64::new(a[0], a[1])));
                        let n = v.norm();
                        if !(n > 0.0 && n.is_finite()) {
                            return Err(DriverError::config("model.initial", "must have nonzero finite norm"));
                        }
                        m.with_initial(v.unscale(n))
                    }
                    None => m,
                }
            }
            ModelConfig::Chain { .. } => {
                let params = self.chain_params(modes).expect("chain model");
                models::build_chain(&params).map_err(|e| setup_error("model", e))?
            }
        };
        model.validate().map_err(|e| setup_error("model", e))?;
        Ok(model)
    }

    /// Pseudo-Fock cutoff per bath and mode.
    pub fn n_max(&self, model: &SystemModel) -> Result<Vec<Vec<usize>>> {
        model
            .couplings
            .iter()
            .map(|c| {
                let k = c.bath.modes.len();
                match &self.hierarchy.n_max {
                    NMax::Uniform(n) => Ok(vec![*n; k]),
                    NMax::PerMode(v) if v.len() == k => Ok(v.clone()),
                    NMax::PerMode(v) => Err(DriverError::config(
                        "hierarchy.n_max",
                        format!("has {} entries but the bath has {k} modes", v.len()),
                    )),
                }
            })
            .collect()
    }

    pub fn observables(&self) -> Vec<Observable> {
        match &self.observables {
            Some(list) => list.iter().map(|&o| o.into()).collect(),
            None => match &self.model {
                ModelConfig::Sbm { .. } => vec![Observable::SigmaZ(0), Observable::Population(0), Observable::BondStats],
                ModelConfig::Chain { sites, .. } => {
                    let mut v: Vec<_> = (0..*sites).map(Observable::Occupation).collect();
                    v.push(Observable::BondStats);
                    v
                }
            },
        }
    }

    /// SHA-256 of the canonical JSON of every field that influences the
    /// results (worker count and output location excluded).
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(m) = v.as_object_mut() {
            m.remove("workers");
            m.remove("output");
        }
        let text = serde_json::to_string(&v).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SBM: &str = r#"{
        "model": {"type": "sbm", "epsilon": 1.0, "delta": 1.0},
        "bath": {"spectral_density": {"type": "debye", "eta": 0.5, "gamma": 0.25}, "temperature": 2.0},
        "t_final": 1.0
    }"#;

    #[test]
    fn defaults_fill_missing_fields() {
        let c = RunConfig::from_json(SBM).unwrap();
        assert_eq!(c.method, Method::Homps);
        assert_eq!(c.dt, 1e-2);
        assert_eq!(c.trajectories, 1);
        assert_eq!(c.max_failure_fraction, 1e-3);
        assert_eq!(c.homps.svd_tol, 1e-12);
        assert_eq!(c.hierarchy.n_max, NMax::Uniform(4));
        c.validate().unwrap();
        let (modes, _) = c.decomposition().unwrap();
        let m = c.build_model(modes).unwrap();
        assert_eq!(c.n_max(&m).unwrap(), vec![vec![4]]);
    }

    #[test]
    fn unknown_field_reports_position() {
        let text = "{\n  \"model\": {\"type\": \"sbm\", \"epsilon\": 1, \"delta\": 1},\n  \"bogus\": 3\n}";
        match RunConfig::from_json(text) {
            Err(DriverError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn invalid_values_name_the_field() {
        let mut c = RunConfig::from_json(SBM).unwrap();
        c.dt = -1.0;
        match c.validate() {
            Err(DriverError::Config { field, .. }) => assert_eq!(field, "dt"),
            other => panic!("{other:?}"),
        }
        let mut c = RunConfig::from_json(SBM).unwrap();
        c.bath.spectral_density = SpectralConfig::Debye { eta: 0.5, gamma: -1.0 };
        assert_eq!(c.thermal_bath().unwrap_err().exit_code(), 2);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut c = RunConfig::from_json(SBM).unwrap();
        c.apply(&Overrides { seed: Some(9), trajectories: Some(3), method: Some(Method::Dense), out_dir: None, workers: Some(4) });
        assert_eq!((c.seed, c.trajectories, c.method, c.workers), (9, 3, Method::Dense, 4));
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = RunConfig::from_json(SBM).unwrap();
        let mut b = a.clone();
        b.workers = 8;
        b.output.dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn chain_defaults() {
        let text = r#"{
            "model": {"type": "chain"},
            "bath": {"spectral_density": {"type": "two_peak_default"}, "temperature": 0.0, "modes": 2},
            "t_final": 1.0
        }"#;
        let c = RunConfig::from_json(text).unwrap();
        c.validate().unwrap();
        let (modes, _) = c.decomposition().unwrap();
        let m = c.build_model(modes).unwrap();
        assert_eq!(m.site_dims, vec![2; 5]);
        assert_eq!(m.couplings.len(), 5);
        assert_eq!(c.observables().len(), 6);
    }

    #[test]
    fn sbm_initial_state_is_normalized() {
        let mut c = RunConfig::from_json(SBM).unwrap();
        c.model = ModelConfig::Sbm { epsilon: 1.0, delta: 0.0, initial: Some(vec![[1.0, 0.0], [1.0, 0.0]]) };
        let (modes, _) = c.decomposition().unwrap();
        let m = c.build_model(modes).unwrap();
        assert!((m.initial.norm() - 1.0).abs() < 1e-15);
    }
}
