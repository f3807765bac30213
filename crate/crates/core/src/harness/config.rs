//! TOML experiment configuration.
//!
//! ```toml
//! seed = 1
//! output_dir = "out"
//! methods = ["simulate", "cavity_global"]
//! noise = [0.1, 0.01]
//!
//! [ensemble]
//! kind = "poisson"
//! mean = 3.0
//!
//! [kernel]
//! a = 2.0
//! p = 10
//! normalization = "global"
//!
//! [nu]
//! min = 0.01
//! max = 10.0
//! count = 20
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cavity::population::SolverSettings;
use crate::ensembles::{DegreeDistribution, DegreeKind, DEFAULT_TAIL_MASS};
use crate::error::{Error, Result};
use crate::exact_gp::SimulationSettings;
use crate::kernel::{KernelParams, Normalization};
use crate::stats::log_grid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Simulate,
    CavityGlobal,
    CavityLocal,
    Histogram,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Simulate, Method::CavityGlobal, Method::CavityLocal, Method::Histogram];

    pub fn name(self) -> &'static str {
        match self {
            Method::Simulate => "simulate",
            Method::CavityGlobal => "cavity_global",
            Method::CavityLocal => "cavity_local",
            Method::Histogram => "histogram",
        }
    }

    /// Kernel normalization the method works with; `None` means the
    /// configured one.
    pub fn normalization(self) -> Option<Normalization> {
        match self {
            Method::Simulate => None,
            Method::CavityGlobal | Method::Histogram => Some(Normalization::Global),
            Method::CavityLocal => Some(Normalization::Local),
        }
    }

    pub(crate) fn tag(self) -> u64 {
        match self {
            Method::Simulate => 1,
            Method::CavityGlobal => 2,
            Method::CavityLocal => 3,
            Method::Histogram => 4,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}; expected one of simulate, cavity_global, cavity_local, histogram")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    #[serde(flatten)]
    pub kind: DegreeKind,
    #[serde(default = "default_tail_mass")]
    pub tail_mass: f64,
}

fn default_tail_mass() -> f64 {
    DEFAULT_TAIL_MASS
}

impl EnsembleConfig {
    pub fn distribution(&self) -> Result<DegreeDistribution> {
        DegreeDistribution::with_tail_mass(self.kind.clone(), self.tail_mass)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuGrid {
    pub min: f64,
    pub max: f64,
    pub count: usize,
    /// Prepend `ν = 0`.
    pub include_zero: bool,
    /// Explicit grid; overrides `min`/`max`/`count` when present.
    pub values: Option<Vec<f64>>,
}

impl Default for NuGrid {
    fn default() -> Self {
        Self { min: 0.01, max: 10.0, count: 20, include_zero: false, values: None }
    }
}

impl NuGrid {
    pub fn points(&self) -> Vec<f64> {
        let mut out = match &self.values {
            Some(v) => v.clone(),
            None => log_grid(self.min, self.max, self.count),
        };
        if self.include_zero && out.first() != Some(&0.0) {
            out.insert(0, 0.0);
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if self.values.is_none() {
            if !(self.min > 0.0 && self.max >= self.min && self.max.is_finite()) {
                return Err(Error::Config(format!("ν grid needs 0 < min ≤ max, got [{}, {}]", self.min, self.max)));
            }
            if self.count == 0 {
                return Err(Error::Config("ν grid count must be positive".into()));
            }
        }
        let pts = self.points();
        if pts.is_empty() {
            return Err(Error::Config("ν grid is empty".into()));
        }
        if pts.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config("ν values must be finite and nonnegative".into()));
        }
        if pts.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("ν grid must be strictly ascending".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub nu: Vec<f64>,
    pub bins: usize,
    /// Fresh `(d, γ, members)` draws for the posterior-variance proxy.
    pub draws: usize,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { nu: vec![1e-4, 1.0, 10.0], bins: 100, draws: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    pub kernel: KernelParams,
    /// Noise variances σ².
    #[serde(default = "default_noise")]
    pub noise: Vec<f64>,
    #[serde(default)]
    pub nu: NuGrid,
    #[serde(default = "default_simulation")]
    pub simulation: SimulationSettings,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
}

fn default_noise() -> Vec<f64> {
    vec![0.1, 0.01, 0.001, 0.0001]
}

fn default_simulation() -> SimulationSettings {
    SimulationSettings::new(500, 10, 10)
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_methods() -> Vec<Method> {
    vec![Method::Simulate, Method::CavityGlobal]
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: Self =
            toml::from_str(&text).map_err(|e| Error::Parse { path: path.to_path_buf(), message: e.to_string() })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.ensemble.distribution()?;
        self.kernel.validate()?;
        if self.noise.is_empty() || self.noise.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::Config("noise must list positive variances".into()));
        }
        self.nu.validate()?;
        self.simulation.validate()?;
        self.solver.validate()?;
        if self.methods.is_empty() {
            return Err(Error::Config("no methods requested".into()));
        }
        if self.methods.contains(&Method::Histogram) {
            let h = &self.histogram;
            if h.bins == 0 || h.draws == 0 || h.nu.is_empty() || h.nu.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return Err(Error::Config("histogram needs bins, draws and nonnegative ν values".into()));
            }
        }
        Ok(())
    }

    /// Kernel parameters as used by `method`.
    pub fn kernel_for(&self, method: Method) -> KernelParams {
        match method.normalization() {
            Some(n) => self.kernel.with_normalization(n),
            None => self.kernel,
        }
    }

    /// Canonical TOML form; what the hash is computed over.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always serializable")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn ensemble_label(&self) -> String {
        self.ensemble.kind.to_string()
    }
}
