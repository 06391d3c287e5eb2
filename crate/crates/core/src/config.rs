//! TOML scenario files.
//!
//! A file has the sections `[constellation]`, `[link]`, `[time]`,
//! `[clusters]`, `[simulation]`, `[training]` and a top-level `algorithms`
//! list. Every section except `[constellation]` may be omitted; missing keys
//! take the defaults of the corresponding types.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::LinkParams;
use crate::geometry::{ConstellationSpec, WalkerPattern};
use crate::sim::{Algorithm, ClusterConfig, ScenarioConfig, SimError, SimulationConfig, TimeConfig, TrainingConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file not found: {}", .0.display())]
    NotFound(PathBuf),
    #[error("cannot read {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config {}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
    #[error("{0}")]
    Invalid(#[from] SimError),
}

/// `[constellation]` in Walker `total/planes/phasing` form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstellationSection {
    pub pattern: WalkerPattern,
    pub total_sats: u32,
    pub num_orbits: u32,
    #[serde(default = "default_phasing")]
    pub phasing_factor: u32,
    pub altitude_km: f64,
    pub inclination_deg: f64,
}

fn default_phasing() -> u32 {
    1
}

impl ConstellationSection {
    pub fn spec(&self) -> Result<ConstellationSpec<f64>, SimError> {
        ConstellationSpec::walker(
            self.total_sats,
            self.num_orbits,
            self.phasing_factor,
            self.altitude_km,
            self.inclination_deg,
            self.pattern,
        )
        .map_err(|e| SimError::Invalid {
            field: "constellation".into(),
            message: e.to_string(),
        })
    }
}

impl From<&ConstellationSpec<f64>> for ConstellationSection {
    fn from(s: &ConstellationSpec<f64>) -> Self {
        Self {
            pattern: s.pattern,
            total_sats: s.num_orbits * s.sats_per_orbit,
            num_orbits: s.num_orbits,
            phasing_factor: s.phasing_factor,
            altitude_km: s.altitude_km,
            inclination_deg: s.inclination_deg,
        }
    }
}

/// `[time]`: the scenario's time settings plus an optional frame length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    #[serde(flatten)]
    pub base: TimeConfig,
    /// Frame length; when set, frames per slot become `round(Δp / Δτ)`.
    pub frame_length_s: Option<f64>,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self {
            base: TimeConfig::default(),
            frame_length_s: Some(10.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    pub constellation: ConstellationSection,
    #[serde(default)]
    pub link: LinkParams<f64>,
    #[serde(default)]
    pub time: TimeSection,
    #[serde(default)]
    pub clusters: ClusterConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_algorithms() -> Vec<Algorithm> {
    Algorithm::ALL.to_vec()
}

impl Config {
    /// Parses TOML text; `origin` names the source in error messages.
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| {
            if source.kind() == std::io::ErrorKind::NotFound {
                ConfigError::NotFound(path.to_path_buf())
            } else {
                ConfigError::Io {
                    path: path.to_path_buf(),
                    source,
                }
            }
        })?;
        Self::from_toml_str(&text, path)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Resolved and validated scenario.
    pub fn scenario(&self) -> Result<ScenarioConfig, SimError> {
        let constellation = self.constellation.spec()?;
        let mut link = self.link.clone();
        if let Some(frame) = self.time.frame_length_s {
            if !(frame > 0.0) || !frame.is_finite() {
                return Err(SimError::Invalid {
                    field: "time.frame_length_s".into(),
                    message: format!("must be finite and > 0, got {frame}"),
                });
            }
            link.frames_per_slot = (self.time.base.slot_length_s / frame).round().max(1.0) as u32;
        }
        let cfg = ScenarioConfig {
            constellation,
            link,
            time: self.time.base.clone(),
            clusters: self.clusters.clone(),
            algorithms: self.algorithms.clone(),
            simulation: self.simulation.clone(),
        };
        cfg.validate()?;
        self.training.validate()?;
        Ok(cfg)
    }

    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        Self {
            algorithms: cfg.algorithms.clone(),
            constellation: (&cfg.constellation).into(),
            link: cfg.link.clone(),
            time: TimeSection {
                base: cfg.time.clone(),
                frame_length_s: None,
            },
            clusters: cfg.clusters.clone(),
            simulation: cfg.simulation.clone(),
            training: TrainingConfig::default(),
        }
    }

    /// 80/4/1 Walker-Delta, 500 km, 45°.
    pub fn walker_delta_80() -> Self {
        Self::with_defaults(ScenarioConfig::walker_delta_80())
    }

    /// 80/4/1 Walker-Star, 700 km, 99.5°.
    pub fn walker_star_80() -> Self {
        Self::with_defaults(ScenarioConfig::walker_star_80())
    }

    fn with_defaults(cfg: ScenarioConfig) -> Self {
        Self {
            time: TimeSection::default(),
            ..Self::from_scenario(&cfg)
        }
    }
}
