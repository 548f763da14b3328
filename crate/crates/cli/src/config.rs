//! JSON run configuration: `run`, `model` and `analysis` sections. Every field
//! has a default, so `{}` is a valid configuration.

use std::path::Path;

use bellrm_core::model::{ModelKind, ModelSpec, OutcomeModel};
use bellrm_core::randommeter::BatteryConfig;
use bellrm_core::source::{ChshAngles, PulseGeometry, RunConfig, Station};
use bellrm_core::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub run: RunConfig,
    pub model: ModelSpec,
    pub analysis: AnalysisConfig,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            run: RunConfig::default(),
            model: ModelSpec::new(ModelKind::QmNonlocal),
            analysis: AnalysisConfig::default(),
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> CliResult<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| CliError::ConfigParse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Validates all sections; returns the pulse geometry and the model.
    pub fn resolve(&self) -> Result<(PulseGeometry, OutcomeModel)> {
        let geometry = self.run.validate()?;
        let model = self.model.build(geometry.rep_period_s)?;
        self.analysis.validate()?;
        Ok((geometry, model))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub n_slices: u32,
    /// Coincidence window half-width.
    pub window_ns: u64,
    pub angles: ChshAngles,
    /// Stations whose sequences feed the randommeter.
    pub stations: Vec<Station>,
    pub battery: BatteryConfig,
    /// Windows for the S-vs-window curve; empty disables it.
    pub window_scan_ns: Vec<u64>,
    pub ergodicity: ErgodicityConfig,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            n_slices: 2,
            window_ns: bellrm_core::timetag::DEFAULT_WINDOW_NS,
            angles: ChshAngles::default(),
            stations: vec![Station::A],
            battery: BatteryConfig::default(),
            window_scan_ns: vec![1, 2, 5, 10, 20, 50, 100, 200],
            ergodicity: ErgodicityConfig::default(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_slices < 2 {
            return Err(Error::config("analysis.n_slices", "need at least 2 slices"));
        }
        if self.window_ns == 0 {
            return Err(Error::config("analysis.window_ns", "window must be at least 1 ns"));
        }
        if self.stations.is_empty() {
            return Err(Error::config("analysis.stations", "list at least one station"));
        }
        if self.window_scan_ns.contains(&0) {
            return Err(Error::config("analysis.window_scan_ns", "windows must be at least 1 ns"));
        }
        if self.ergodicity.n_samples == 0 {
            return Err(Error::config("analysis.ergodicity.n_samples", "must be positive"));
        }
        self.battery.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::config(format!("analysis.battery.{field}"), message),
            other => other,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErgodicityConfig {
    /// Monte Carlo samples per average.
    pub n_samples: u64,
    /// `[start_s, length_s]` windows; empty picks windows from the model.
    pub windows_s: Vec<[f64; 2]>,
}

impl Default for ErgodicityConfig {
    fn default() -> Self {
        ErgodicityConfig {
            n_samples: 100_000,
            windows_s: Vec::new(),
        }
    }
}
