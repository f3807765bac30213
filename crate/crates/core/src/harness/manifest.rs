//! `manifest.json`: enough to rerun an experiment bit for bit, plus solver
//! diagnostics. Contains no timestamps so reruns are byte-identical.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, Method};
use super::experiment::{Calibration, ExperimentResults, PointDiagnostics, PointFailure, RunStatus};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize)]
pub struct MethodRecord {
    pub method: Method,
    pub seed: u64,
    pub calibration: Option<Calibration>,
    pub isolated_fraction: Option<f64>,
    pub points: Vec<PointDiagnostics>,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramRecord {
    pub nu: f64,
    pub sigma2: f64,
    pub max_entry_std: f64,
    pub diagnostics: PointDiagnostics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub status: RunStatus,
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    pub methods: Vec<MethodRecord>,
    pub histograms: Vec<HistogramRecord>,
    pub failures: Vec<PointFailure>,
}

impl Manifest {
    pub fn new(results: &ExperimentResults, files: &[PathBuf]) -> Self {
        let config = &results.config;
        Manifest {
            version: concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION")).to_string(),
            config_hash: config.hash(),
            seed: config.seed,
            status: results.status(),
            config: config.clone(),
            files: files
                .iter()
                .map(|p| p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned()))
                .collect(),
            methods: results
                .outputs
                .iter()
                .map(|o| MethodRecord {
                    method: o.method,
                    seed: o.seed,
                    calibration: o.calibration.clone(),
                    isolated_fraction: o.isolated_fraction,
                    points: o.points.clone(),
                })
                .collect(),
            histograms: results
                .histograms
                .iter()
                .map(|h| HistogramRecord {
                    nu: h.nu,
                    sigma2: h.sigma2,
                    max_entry_std: h.max_entry_std,
                    diagnostics: h.diagnostics.clone(),
                })
                .collect(),
            failures: results.outputs.iter().flat_map(|o| o.failures.iter().cloned()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest is always serializable")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n").map_err(|e| Error::io(path, e))
    }
}
